//! Agent roles, decision backends, the ten-step pipeline driver, failure
//! classification, and the benchmark scorer.

pub mod backend;
mod classify;
mod pipeline;
pub mod roles;
pub mod score;
pub mod tools;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::problem_parser::AdjustmentRule;
use crate::sections::CapacityConfig;
use crate::seismic_loads::ElfConfig;

pub use backend::{
    AgentReply, Backend, BackendConfig, BackendError, DeterministicBackend, RemoteBackend,
    RemoteConfig, RoundRecord, ScriptedBackend, StepView,
};
pub use classify::{classify_failure, FailureLabel};
pub use pipeline::{run_pipeline, run_pipeline_with, PipelineError, PipelineFailure, PipelineRun};
pub use roles::{builtin_roles, AgentRole};
pub use score::{inject_fault, score_trace, Fault, GroundTruth, ScoreError, Scores};
pub use tools::{register_tools, RegistryError, ToolRegistry};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    MultiAgent,
    /// All instructions in one prompt, one answer; scripted or remote only.
    SingleAgent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub backend: BackendConfig,
    pub max_rounds: u32,
    pub mode: RunMode,
    pub use_memory: bool,
    pub enforce_schemas: bool,
    pub elf: ElfConfig,
    pub capacity: CapacityConfig,
    pub adjustment: AdjustmentRule,
    /// Seismic table CSV; the shipped table when absent.
    pub seismic_table: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            backend: BackendConfig::Deterministic,
            max_rounds: 4,
            mode: RunMode::MultiAgent,
            use_memory: true,
            enforce_schemas: true,
            elf: ElfConfig::default(),
            capacity: CapacityConfig::builtin(),
            adjustment: AdjustmentRule::default(),
            seismic_table: None,
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl PipelineConfig {
    /// Parses a configuration document as overrides of the defaults: a field
    /// absent at any depth keeps its default value. Unknown fields are errors.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let over: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if !over.is_object() {
            return Err("configuration must be a JSON object".into());
        }
        let mut doc = serde_json::to_value(Self::default()).expect("config serializes");
        merge(&mut doc, over);
        let cfg: Self = serde_json::from_value(doc).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that do not need any input files.
    pub fn validate(&self) -> Result<(), String> {
        if self.max_rounds == 0 {
            return Err("max_rounds must be at least 1".into());
        }
        if self.mode == RunMode::SingleAgent && self.backend == BackendConfig::Deterministic {
            return Err("single_agent mode needs a scripted or remote backend".into());
        }
        self.elf.validate().map_err(|e| e.to_string())?;
        if !(self.capacity.capacity_scale.is_finite() && self.capacity.capacity_scale > 0.0) {
            return Err("capacity_scale must be positive".into());
        }
        Ok(())
    }
}
