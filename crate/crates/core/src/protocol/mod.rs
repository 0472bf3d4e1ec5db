//! Message and trace formats, payload schemas, and the pipeline state machine.

mod extract;
mod schema;
mod state;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use extract::{extract_structured_payload, ExtractionFailed};
pub use schema::{validate_payload, SchemaError, SchemaId, SchemaRegistry, Violation, TOOLS_JSON};
pub use state::{advance, PipelineState, TerminalState};
pub use trace::{Failure, StepEnd, StepStatus, TraceError, TraceLog, TraceRecord};

/// The nine agent roles of the consulting-firm pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoleName {
    ProjectManager,
    DesignEngineer,
    LoadingAnalyst,
    SeismicAnalyst,
    DynamicAnalyst,
    StructuralAnalyst,
    ModelEngineer,
    VerificationEngineer,
    SafetyManager,
}

impl RoleName {
    pub const ALL: [RoleName; 9] = [
        RoleName::ProjectManager,
        RoleName::DesignEngineer,
        RoleName::LoadingAnalyst,
        RoleName::SeismicAnalyst,
        RoleName::DynamicAnalyst,
        RoleName::StructuralAnalyst,
        RoleName::ModelEngineer,
        RoleName::VerificationEngineer,
        RoleName::SafetyManager,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleName::ProjectManager => "ProjectManager",
            RoleName::DesignEngineer => "DesignEngineer",
            RoleName::LoadingAnalyst => "LoadingAnalyst",
            RoleName::SeismicAnalyst => "SeismicAnalyst",
            RoleName::DynamicAnalyst => "DynamicAnalyst",
            RoleName::StructuralAnalyst => "StructuralAnalyst",
            RoleName::ModelEngineer => "ModelEngineer",
            RoleName::VerificationEngineer => "VerificationEngineer",
            RoleName::SafetyManager => "SafetyManager",
        }
    }
}

impl fmt::Display for RoleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoleName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoleName::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role `{s}`"))
    }
}

/// Sender or recipient of a message: an agent, or the user proxy that relays
/// instructions and executes tools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Participant {
    UserProxy,
    Agent(RoleName),
}

impl From<Participant> for String {
    fn from(p: Participant) -> String {
        match p {
            Participant::UserProxy => "UserProxy".to_string(),
            Participant::Agent(r) => r.as_str().to_string(),
        }
    }
}

impl TryFrom<String> for Participant {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if s == "UserProxy" {
            Ok(Participant::UserProxy)
        } else {
            s.parse().map(Participant::Agent)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Instruction,
    ToolCall,
    ToolResult,
    AssistantText,
    Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: Participant,
    pub recipient: Participant,
    pub kind: MessageKind,
    pub payload: Value,
    pub round: u32,
    pub step: u32,
}

/// A named tool invocation requested by an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub args: serde_json::Map<String, Value>,
}

/// What the user proxy reports back for one [`ToolCall`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub call_id: String,
    pub name: String,
    pub ok: bool,
    pub output: Value,
    /// Memory writes performed by the tool, in write order.
    #[serde(default)]
    pub writes: Vec<(String, Value)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ToolErrorInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolErrorInfo {
    /// Stable error category name, e.g. `ExtractionError` or `SingularSystem`.
    pub kind: String,
    pub message: String,
}
