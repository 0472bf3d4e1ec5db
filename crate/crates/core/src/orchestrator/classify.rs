//! Failure taxonomy of a run, read off its trace.

use serde::{Deserialize, Serialize};

use crate::protocol::TraceLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureLabel {
    ParseError,
    ModelingLogicError,
    ToolRuntimeError,
    SchemaViolation,
    RoundLimit,
    SolverSingular,
    None,
}

impl FailureLabel {
    pub const FAILURES: [FailureLabel; 6] = [
        FailureLabel::ParseError,
        FailureLabel::ModelingLogicError,
        FailureLabel::ToolRuntimeError,
        FailureLabel::SchemaViolation,
        FailureLabel::RoundLimit,
        FailureLabel::SolverSingular,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureLabel::ParseError => "parse_error",
            FailureLabel::ModelingLogicError => "modeling_logic_error",
            FailureLabel::ToolRuntimeError => "tool_runtime_error",
            FailureLabel::SchemaViolation => "schema_violation",
            FailureLabel::RoundLimit => "round_limit",
            FailureLabel::SolverSingular => "solver_singular",
            FailureLabel::None => "none",
        }
    }

    /// Label for a failure kind recorded in a step end.
    pub fn from_kind(kind: &str) -> FailureLabel {
        match kind {
            "ExtractionError" | "DecompositionError" | "ExtractionFailed" => {
                FailureLabel::ParseError
            }
            "GeometryError" | "ModelError" | "ValidationError" => FailureLabel::ModelingLogicError,
            "SingularSystem" => FailureLabel::SolverSingular,
            "SchemaViolation" => FailureLabel::SchemaViolation,
            "RoundLimit" => FailureLabel::RoundLimit,
            _ => FailureLabel::ToolRuntimeError,
        }
    }
}

impl std::fmt::Display for FailureLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The first failed step decides the label. A trace with no failure is
/// `none` only if it reached a verdict; one that simply stops is a crash.
pub fn classify_failure(trace: &TraceLog) -> FailureLabel {
    if let Some(end) = trace.first_failure() {
        let kind = end.failure.as_ref().map_or("", |f| f.kind.as_str());
        return FailureLabel::from_kind(kind);
    }
    if trace.verdict().is_some() {
        FailureLabel::None
    } else {
        FailureLabel::ToolRuntimeError
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Failure, PipelineState, StepEnd, StepStatus};
    use serde_json::json;

    fn failed(kind: &str) -> TraceLog {
        let mut t = TraceLog::new();
        t.push_step_end(StepEnd {
            state: PipelineState::Decompose,
            status: StepStatus::Failed,
            rounds: 1,
            memory_count: 0,
            summary: json!(null),
            failure: Some(Failure {
                kind: kind.into(),
                message: "x".into(),
            }),
        });
        t
    }

    #[test]
    fn kinds_map_to_labels() {
        assert_eq!(
            classify_failure(&failed("ExtractionFailed")),
            FailureLabel::ParseError
        );
        assert_eq!(
            classify_failure(&failed("SingularSystem")),
            FailureLabel::SolverSingular
        );
        assert_eq!(
            classify_failure(&failed("RoundLimit")),
            FailureLabel::RoundLimit
        );
        assert_eq!(
            classify_failure(&failed("AdjustmentError")),
            FailureLabel::ToolRuntimeError
        );
    }

    #[test]
    fn empty_trace_is_not_a_success() {
        assert_eq!(
            classify_failure(&TraceLog::new()),
            FailureLabel::ToolRuntimeError
        );
    }
}
