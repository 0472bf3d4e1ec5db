//! Deterministic multi-agent structural-engineering pipeline for steel racking frames.

pub mod fem_solver;
pub mod memory;
pub mod model_builder;
pub mod orchestrator;
pub mod problem_parser;
pub mod protocol;
pub mod sections;
pub mod seismic_loads;
pub mod seismic_retrieval;
pub mod verification;
