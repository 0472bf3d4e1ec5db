//! JSON Lines trace of a pipeline run.
//!
//! One record per line, so a trace cut short by a crash still parses up to the
//! last complete line.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{Message, MessageKind, PipelineState, ToolCall, ToolResult};
use crate::memory::canonical_json;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    Failed,
}

/// Error that closed a step without success.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    /// Error category, e.g. `ExtractionError`, `RoundLimit`, `SingularSystem`.
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEnd {
    pub state: PipelineState,
    pub status: StepStatus,
    pub rounds: u32,
    /// Non-null memory entries once the step closed.
    pub memory_count: usize,
    pub summary: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Message {
        state: PipelineState,
        message: Message,
    },
    StepEnd(StepEnd),
}

impl TraceRecord {
    pub fn state(&self) -> PipelineState {
        match self {
            TraceRecord::Message { state, .. } => *state,
            TraceRecord::StepEnd(end) => end.state,
        }
    }

    pub fn message(&self) -> Option<&Message> {
        match self {
            TraceRecord::Message { message, .. } => Some(message),
            TraceRecord::StepEnd(_) => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceLog {
    pub records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_message(&mut self, state: PipelineState, message: Message) {
        self.records.push(TraceRecord::Message { state, message });
    }

    pub fn push_step_end(&mut self, end: StepEnd) {
        self.records.push(TraceRecord::StepEnd(end));
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn messages(&self) -> impl Iterator<Item = (PipelineState, &Message)> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Message { state, message } => Some((*state, message)),
            TraceRecord::StepEnd(_) => None,
        })
    }

    pub fn step_ends(&self) -> impl Iterator<Item = &StepEnd> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::StepEnd(end) => Some(end),
            TraceRecord::Message { .. } => None,
        })
    }

    pub fn step_end(&self, state: PipelineState) -> Option<&StepEnd> {
        self.step_ends().find(|e| e.state == state)
    }

    pub fn tool_calls(&self) -> impl Iterator<Item = (PipelineState, &Message, ToolCall)> {
        self.messages().filter_map(|(state, m)| {
            (m.kind == MessageKind::ToolCall)
                .then(|| serde_json::from_value(m.payload.clone()).ok())
                .flatten()
                .map(|call| (state, m, call))
        })
    }

    pub fn tool_results(&self) -> impl Iterator<Item = (PipelineState, ToolResult)> + '_ {
        self.messages().filter_map(|(state, m)| {
            (m.kind == MessageKind::ToolResult)
                .then(|| serde_json::from_value(m.payload.clone()).ok())
                .flatten()
                .map(|r| (state, r))
        })
    }

    /// Verdict text of the run, if it reached one.
    pub fn verdict(&self) -> Option<String> {
        self.messages()
            .filter(|(_, m)| m.kind == MessageKind::Verdict)
            .last()
            .and_then(|(_, m)| m.payload.as_str().map(str::to_string))
    }

    /// The first step that closed with a failure.
    pub fn first_failure(&self) -> Option<&StepEnd> {
        self.step_ends().find(|e| e.status == StepStatus::Failed)
    }

    /// JSON Lines text; each line is the canonical JSON of one record.
    pub fn render_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            let value = serde_json::to_value(record).expect("trace records serialize");
            out.push_str(&canonical_json(&value));
            out.push('\n');
        }
        out
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, TraceError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(line).map_err(|e| TraceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(record);
        }
        Ok(Self { records })
    }

    /// Checks step ordering and tool call/result pairing.
    pub fn check_invariants(&self) -> Result<(), TraceError> {
        let mut last_state = PipelineState::Init;
        let mut open_calls: Vec<String> = Vec::new();
        for (i, record) in self.records.iter().enumerate() {
            let state = record.state();
            if state < last_state {
                return Err(TraceError::Invariant(format!(
                    "record {i} goes back from {last_state:?} to {state:?}"
                )));
            }
            if state != last_state && !open_calls.is_empty() {
                return Err(TraceError::Invariant(format!(
                    "step {last_state:?} left tool calls unanswered: {open_calls:?}"
                )));
            }
            last_state = state;
            match record {
                TraceRecord::Message { message, .. } => match message.kind {
                    MessageKind::ToolCall => {
                        let call: ToolCall = serde_json::from_value(message.payload.clone())
                            .map_err(|e| {
                                TraceError::Invariant(format!("record {i}: bad tool call: {e}"))
                            })?;
                        open_calls.push(call.id);
                    }
                    MessageKind::ToolResult => {
                        let result: ToolResult = serde_json::from_value(message.payload.clone())
                            .map_err(|e| {
                                TraceError::Invariant(format!("record {i}: bad tool result: {e}"))
                            })?;
                        let pos = open_calls
                            .iter()
                            .position(|id| *id == result.call_id)
                            .ok_or_else(|| {
                                TraceError::Invariant(format!(
                                    "record {i}: result for unknown call {}",
                                    result.call_id
                                ))
                            })?;
                        open_calls.remove(pos);
                    }
                    _ => {}
                },
                TraceRecord::StepEnd(_) => {
                    if !open_calls.is_empty() {
                        return Err(TraceError::Invariant(format!(
                            "step {state:?} closed with unanswered calls {open_calls:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Participant, RoleName};
    use serde_json::json;

    fn msg(kind: MessageKind, payload: Value) -> Message {
        Message {
            sender: Participant::Agent(RoleName::DynamicAnalyst),
            recipient: Participant::UserProxy,
            kind,
            payload,
            round: 1,
            step: 5,
        }
    }

    fn sample() -> TraceLog {
        let mut t = TraceLog::new();
        t.push_message(
            PipelineState::LoadCalc,
            msg(MessageKind::Instruction, json!("Calculate seismic loads")),
        );
        t.push_message(
            PipelineState::LoadCalc,
            msg(
                MessageKind::ToolCall,
                json!({"id": "c1", "name": "get_memory_data", "args": {"key": "loads_lbs"}}),
            ),
        );
        t.push_message(
            PipelineState::LoadCalc,
            msg(
                MessageKind::ToolResult,
                json!({"call_id": "c1", "name": "get_memory_data", "ok": true,
                       "output": [1875.0, 1125.0, 750.0], "writes": []}),
            ),
        );
        t.push_step_end(StepEnd {
            state: PipelineState::LoadCalc,
            status: StepStatus::Ok,
            rounds: 2,
            memory_count: 15,
            summary: json!({"F": [0.395, 0.504, 0.514]}),
            failure: None,
        });
        t
    }

    #[test]
    fn render_then_parse_round_trips() {
        let t = sample();
        let text = t.render_jsonl();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(TraceLog::parse_jsonl(&text).unwrap(), t);
        t.check_invariants().unwrap();
    }

    #[test]
    fn truncated_trace_keeps_complete_lines() {
        let text = sample().render_jsonl();
        let cut = &text[..text.rfind('\n').unwrap()];
        let cut = &cut[..cut.rfind('\n').unwrap() + 1];
        assert_eq!(TraceLog::parse_jsonl(cut).unwrap().len(), 3);
    }

    #[test]
    fn unanswered_tool_call_is_rejected() {
        let mut t = sample();
        t.records.remove(2);
        assert!(matches!(
            t.check_invariants(),
            Err(TraceError::Invariant(_))
        ));
    }

    #[test]
    fn steps_must_not_go_backwards() {
        let mut t = sample();
        t.push_message(
            PipelineState::SeismicParams,
            msg(MessageKind::AssistantText, json!("x")),
        );
        assert!(t.check_invariants().is_err());
    }
}
