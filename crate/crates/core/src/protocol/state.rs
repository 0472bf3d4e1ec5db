use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pipeline steps 0 through 10, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PipelineState {
    Init,
    Decompose,
    SectionDesign,
    BuildingInfo,
    SeismicParams,
    LoadCalc,
    UpdateSAA,
    ModelGen,
    FEAnalysis,
    Verify,
    FinalVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("FinalVerdict is terminal")]
pub struct TerminalState;

impl PipelineState {
    pub const ORDER: [PipelineState; 11] = [
        PipelineState::Init,
        PipelineState::Decompose,
        PipelineState::SectionDesign,
        PipelineState::BuildingInfo,
        PipelineState::SeismicParams,
        PipelineState::LoadCalc,
        PipelineState::UpdateSAA,
        PipelineState::ModelGen,
        PipelineState::FEAnalysis,
        PipelineState::Verify,
        PipelineState::FinalVerdict,
    ];

    pub fn index(self) -> u32 {
        self as u32
    }

    pub fn from_index(i: u32) -> Option<Self> {
        Self::ORDER.get(i as usize).copied()
    }

    pub fn title(self) -> &'static str {
        match self {
            PipelineState::Init => "System Initialization",
            PipelineState::Decompose => "Problem Decomposition and Setup",
            PipelineState::SectionDesign => "Section Design",
            PipelineState::BuildingInfo => "Building Information",
            PipelineState::SeismicParams => "Seismic Parameters",
            PipelineState::LoadCalc => "Load Calculations",
            PipelineState::UpdateSAA => "Update SAA Input",
            PipelineState::ModelGen => "Generate Structural Model",
            PipelineState::FEAnalysis => "Complete Structural Analysis",
            PipelineState::Verify => "Structural Verification",
            PipelineState::FinalVerdict => "Final Safety Assessment",
        }
    }
}

impl fmt::Display for PipelineState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Step {}: {}", self.index(), self.title())
    }
}

/// The unique successor of `state`.
pub fn advance(state: PipelineState) -> Result<PipelineState, TerminalState> {
    PipelineState::from_index(state.index() + 1).ok_or(TerminalState)
}
