//! The ten-step pipeline driver.
//!
//! Each step: the user proxy sends the step's role an instruction, then the
//! role takes turns (rounds) until it gives a final answer. Tool calls in a
//! turn run in order against memory; the first hard error closes the step.
//! A rejected payload gets one repair turn before the step fails.

use std::borrow::Cow;
use std::collections::BTreeMap;

use serde_json::{json, Map, Value};
use thiserror::Error;

use super::backend::{
    AgentReply, Backend, DeterministicBackend, RemoteBackend, RoundRecord, ScriptedBackend,
    StepView,
};
use super::classify::{classify_failure, FailureLabel};
use super::roles::{builtin_roles, check_toolsets, role, AgentRole};
use super::tools::{ToolContext, ToolFailure, ToolRegistry};
use super::{BackendConfig, PipelineConfig, RunMode};
use crate::memory::StructuralMemory;
use crate::protocol::{
    Failure, Message, MessageKind, Participant, PipelineState, RoleName, SchemaRegistry, StepEnd,
    StepStatus, ToolErrorInfo, ToolResult, TraceLog,
};
use crate::seismic_retrieval::{SeismicDatabase, SeismicTable};
use crate::verification::{
    final_assessment, SafetyAssessment, VERDICT_ADEQUATE, VERDICT_INADEQUATE,
};

/// A run that reached a verdict.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub assessment: SafetyAssessment,
    pub trace: TraceLog,
    pub memory: StructuralMemory,
    /// Files produced by tools, by file name.
    pub artifacts: BTreeMap<String, Value>,
}

/// A run that stopped at a failed step; the trace and memory are partial.
#[derive(Debug, Clone)]
pub struct PipelineFailure {
    pub label: FailureLabel,
    pub state: PipelineState,
    pub failure: Failure,
    pub trace: TraceLog,
    pub memory: StructuralMemory,
    pub artifacts: BTreeMap<String, Value>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{} failed ({}): {}: {}", .0.state, .0.label, .0.failure.kind, .0.failure.message)]
    Failed(Box<PipelineFailure>),
}

impl PipelineError {
    pub fn label(&self) -> Option<FailureLabel> {
        match self {
            PipelineError::Config(_) => None,
            PipelineError::Failed(f) => Some(f.label),
        }
    }
}

/// Runs with the backend named in the configuration.
pub fn run_pipeline(
    problem_text: &str,
    config: &PipelineConfig,
) -> Result<PipelineRun, PipelineError> {
    config.validate().map_err(PipelineError::Config)?;
    let mut backend: Box<dyn Backend> = match &config.backend {
        BackendConfig::Deterministic => Box::new(DeterministicBackend),
        BackendConfig::Scripted { trace } => {
            let text = std::fs::read_to_string(trace)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", trace.display())))?;
            let log =
                TraceLog::parse_jsonl(&text).map_err(|e| PipelineError::Config(e.to_string()))?;
            Box::new(ScriptedBackend::from_trace(&log))
        }
        BackendConfig::Remote(remote) => Box::new(
            RemoteBackend::new(remote.clone()).map_err(|e| PipelineError::Config(e.to_string()))?,
        ),
    };
    run_pipeline_with(problem_text, config, backend.as_mut())
}

fn step_role(state: PipelineState) -> RoleName {
    use PipelineState::*;
    match state {
        Init | Decompose | UpdateSAA => RoleName::ProjectManager,
        SectionDesign => RoleName::DesignEngineer,
        BuildingInfo => RoleName::LoadingAnalyst,
        SeismicParams => RoleName::SeismicAnalyst,
        LoadCalc => RoleName::DynamicAnalyst,
        ModelGen => RoleName::StructuralAnalyst,
        FEAnalysis => RoleName::ModelEngineer,
        Verify => RoleName::VerificationEngineer,
        FinalVerdict => RoleName::SafetyManager,
    }
}

fn step_task(state: PipelineState) -> &'static str {
    use PipelineState::*;
    match state {
        Init => "",
        Decompose => "Decompose the problem into section-design, loading and structural-analysis inputs, adjust the pallet weights, initialise the SAA update, and save the analysis results.",
        SectionDesign => "Extract the member sections and calculate their properties and capacities.",
        BuildingInfo => "Extract the building information: location, load elevations, loads and dimensions.",
        SeismicParams => "Retrieve the seismic parameters for the building location.",
        LoadCalc => "Read the elevations, adjusted loads and seismic parameters, then calculate the seismic story forces.",
        UpdateSAA => "Update the structural-analysis input with the section data and load data.",
        ModelGen => "Generate the structural model from the updated structural-analysis input.",
        FEAnalysis => "Run the complete structural analysis for all load combinations.",
        Verify => "Check member demands against capacities for tension, compression and bending.",
        FinalVerdict => "Review the full analysis context and state the final verdict line.",
    }
}

/// Memory keys a step's instruction carries as inputs.
fn step_inputs(state: PipelineState) -> &'static [&'static str] {
    use PipelineState::*;
    match state {
        SectionDesign => &["SDA_input"],
        BuildingInfo => &["LA_input"],
        SeismicParams => &["location"],
        UpdateSAA => &["SAA_input", "section_data", "load_data"],
        ModelGen => &["SAA_input_update"],
        Verify => &["section_data", "analysis_results"],
        _ => &[],
    }
}

struct Run<'a> {
    config: &'a PipelineConfig,
    registry: ToolRegistry,
    seismic: Cow<'static, SeismicDatabase>,
    memory: StructuralMemory,
    /// Values written so far, threaded into instructions when memory reads are off.
    threaded: BTreeMap<String, Value>,
    trace: TraceLog,
    artifacts: BTreeMap<String, Value>,
}

fn failure(kind: &str, message: impl Into<String>) -> Failure {
    Failure {
        kind: kind.to_string(),
        message: message.into(),
    }
}

/// Runs with a caller-supplied backend.
pub fn run_pipeline_with(
    problem_text: &str,
    config: &PipelineConfig,
    backend: &mut dyn Backend,
) -> Result<PipelineRun, PipelineError> {
    config.validate().map_err(PipelineError::Config)?;
    let seismic = match &config.seismic_table {
        Some(path) => SeismicTable::from_path(path)
            .and_then(SeismicDatabase::from_table)
            .map(Cow::Owned),
        None => Ok(Cow::Borrowed(SeismicDatabase::builtin())),
    }
    .map_err(|e| PipelineError::Config(e.to_string()))?;
    let registry = ToolRegistry::builtin();
    check_toolsets(builtin_roles(), &registry).map_err(|e| PipelineError::Config(e.to_string()))?;

    let mut run = Run {
        config,
        registry,
        seismic,
        memory: StructuralMemory::new(),
        threaded: BTreeMap::new(),
        trace: TraceLog::new(),
        artifacts: BTreeMap::new(),
    };
    run.trace.push_step_end(StepEnd {
        state: PipelineState::Init,
        status: StepStatus::Ok,
        rounds: 0,
        memory_count: 0,
        summary: json!({
            "agents": builtin_roles().iter().map(|r| r.name.as_str()).collect::<Vec<_>>(),
            "tools_registered": run.registry.len(),
            "backend": backend.name(),
            "max_rounds": config.max_rounds,
            "mode": config.mode,
            "use_memory": config.use_memory,
            "enforce_schemas": config.enforce_schemas,
        }),
        failure: None,
    });

    if config.mode == RunMode::SingleAgent {
        return run.single_agent(problem_text, backend);
    }

    let mut verdict_text = String::new();
    for state in &PipelineState::ORDER[1..] {
        let state = *state;
        let outcome = run.step(state, problem_text, backend);
        let (rounds, summary) = match outcome {
            Ok(ok) => ok,
            Err((rounds, f)) => return Err(run.fail(state, rounds, f)),
        };
        if state == PipelineState::FinalVerdict {
            verdict_text = summary["verdict"].as_str().unwrap_or_default().to_string();
        }
        run.trace.push_step_end(StepEnd {
            state,
            status: StepStatus::Ok,
            rounds,
            memory_count: run.memory.summary().count,
            summary,
            failure: None,
        });
    }

    let context = crate::verification::get_analysis_context(&run.memory).unwrap_or(Value::Null);
    let assessment = SafetyAssessment {
        checks: final_assessment(&context).checks,
        verdict: verdict_text,
    };
    Ok(PipelineRun {
        assessment,
        trace: run.trace,
        memory: run.memory,
        artifacts: run.artifacts,
    })
}

/// The verdict line in an answer, if it has exactly one kind of verdict.
fn find_verdict(text: &str) -> Option<&'static str> {
    let mut found = None;
    for line in text.lines().map(str::trim) {
        let v = match line {
            VERDICT_ADEQUATE => VERDICT_ADEQUATE,
            VERDICT_INADEQUATE => VERDICT_INADEQUATE,
            _ => continue,
        };
        if found.is_some_and(|f| f != v) {
            return None;
        }
        found = Some(v);
    }
    found
}

impl Run<'_> {
    fn fail(mut self, state: PipelineState, rounds: u32, f: Failure) -> PipelineError {
        self.trace.push_step_end(StepEnd {
            state,
            status: StepStatus::Failed,
            rounds,
            memory_count: self.memory.summary().count,
            summary: Value::Null,
            failure: Some(f.clone()),
        });
        let label = classify_failure(&self.trace);
        PipelineError::Failed(Box::new(PipelineFailure {
            label,
            state,
            failure: f,
            trace: self.trace,
            memory: self.memory,
            artifacts: self.artifacts,
        }))
    }

    fn message(
        &mut self,
        state: PipelineState,
        from: Participant,
        to: Participant,
        kind: MessageKind,
        payload: Value,
        round: u32,
    ) {
        self.trace.push_message(
            state,
            Message {
                sender: from,
                recipient: to,
                kind,
                payload,
                round,
                step: state.index(),
            },
        );
    }

    fn instruction(&self, state: PipelineState, problem_text: &str) -> Result<Value, Failure> {
        let mut inputs = Map::new();
        if state == PipelineState::Decompose {
            inputs.insert("problem_text".into(), json!(problem_text));
        }
        for key in step_inputs(state) {
            let v = if self.config.use_memory {
                self.memory.get_non_null(key).cloned()
            } else {
                self.threaded.get(*key).filter(|v| !v.is_null()).cloned()
            };
            let v =
                v.ok_or_else(|| failure("MissingInput", format!("`{key}` is not available")))?;
            inputs.insert(key.to_string(), v);
        }
        let mut doc = json!({
            "step": state.index(),
            "title": state.title(),
            "task": step_task(state),
            "inputs": inputs,
        });
        if state == PipelineState::LoadCalc && !self.config.use_memory {
            let keys = ["floor_elevations_ft", "loads_lbs", "seismic_parameters"];
            let ctx: Map<String, Value> = keys
                .iter()
                .map(|k| {
                    (
                        k.to_string(),
                        self.threaded.get(*k).cloned().unwrap_or(Value::Null),
                    )
                })
                .collect();
            doc["context"] = Value::Object(ctx);
        }
        Ok(doc)
    }

    fn step(
        &mut self,
        state: PipelineState,
        problem_text: &str,
        backend: &mut dyn Backend,
    ) -> Result<(u32, Value), (u32, Failure)> {
        let role: &'static AgentRole = role(step_role(state));
        let agent = Participant::Agent(role.name);
        let instruction = self.instruction(state, problem_text).map_err(|f| (0, f))?;
        self.message(
            state,
            Participant::UserProxy,
            agent,
            MessageKind::Instruction,
            instruction.clone(),
            1,
        );

        let mut rounds: Vec<RoundRecord> = Vec::new();
        let mut repairs = 0;
        let mut written: Vec<String> = Vec::new();
        loop {
            let round = rounds.len() as u32 + 1;
            if round > self.config.max_rounds {
                return Err((
                    rounds.len() as u32,
                    failure(
                        "RoundLimit",
                        format!("no final answer within {} rounds", self.config.max_rounds),
                    ),
                ));
            }
            let view = StepView {
                state,
                role,
                instruction: &instruction,
                rounds: &rounds,
                tools: &self.registry,
            };
            let text = backend
                .reply(&view)
                .map_err(|e| (round, failure("BackendError", e.to_string())))?;
            match AgentReply::parse(&text) {
                AgentReply::Final(answer) => {
                    self.message(
                        state,
                        agent,
                        Participant::UserProxy,
                        MessageKind::AssistantText,
                        json!(answer),
                        round,
                    );
                    let mut summary = json!({"answer": answer, "writes": written});
                    if state == PipelineState::FinalVerdict {
                        let verdict = find_verdict(&answer).ok_or_else(|| {
                            (
                                round,
                                failure(
                                    "ExtractionFailed",
                                    "answer carries no single verdict line",
                                ),
                            )
                        })?;
                        self.message(
                            state,
                            agent,
                            Participant::UserProxy,
                            MessageKind::Verdict,
                            json!(verdict),
                            round,
                        );
                        let context = crate::verification::get_analysis_context(&self.memory)
                            .unwrap_or(Value::Null);
                        let doc = json!({"verdict": verdict, "checks": final_assessment(&context).checks});
                        self.commit(state, role.name, "final_assessment", doc);
                        summary["verdict"] = json!(verdict);
                    }
                    return Ok((round, summary));
                }
                AgentReply::ToolCalls(calls) => {
                    let (results, hard, violated) =
                        self.execute(state, role, round, calls, &mut written);
                    rounds.push(RoundRecord {
                        reply: text,
                        results,
                    });
                    if let Some(f) = hard {
                        return Err((round, f));
                    }
                    if let Some(f) = violated {
                        repairs += 1;
                        if repairs > 1 {
                            return Err((round, f));
                        }
                    }
                }
            }
        }
    }

    /// Runs one turn's calls. Returns the results, the hard failure that
    /// stopped the turn if any, and the last schema violation if any.
    fn execute(
        &mut self,
        state: PipelineState,
        role: &AgentRole,
        round: u32,
        calls: Vec<(String, Map<String, Value>)>,
        written: &mut Vec<String>,
    ) -> (Vec<ToolResult>, Option<Failure>, Option<Failure>) {
        let agent = Participant::Agent(role.name);
        let mut results = Vec::new();
        let mut violated = None;
        if calls.is_empty() {
            return (
                results,
                Some(failure("EmptyTurn", "tool_calls list is empty")),
                None,
            );
        }
        for (i, (name, args)) in calls.into_iter().enumerate() {
            let id = format!("s{}r{}c{}", state.index(), round, i + 1);
            let call = json!({"id": id, "name": name, "args": args});
            self.message(
                state,
                agent,
                Participant::UserProxy,
                MessageKind::ToolCall,
                call,
                round,
            );
            let outcome = self.run_tool(role, &name, &args);
            let result = match outcome {
                Ok((output, writes)) => {
                    for (k, v) in &writes {
                        self.commit(state, role.name, k, v.clone());
                        written.push(k.clone());
                    }
                    ToolResult {
                        call_id: id,
                        name,
                        ok: true,
                        output,
                        writes,
                        error: None,
                    }
                }
                Err(f) => ToolResult {
                    call_id: id,
                    name,
                    ok: false,
                    output: f.output.clone().unwrap_or(Value::Null),
                    writes: vec![],
                    error: Some(ToolErrorInfo {
                        kind: f.kind.clone(),
                        message: f.message.clone(),
                    }),
                },
            };
            let payload = serde_json::to_value(&result).expect("tool results serialize");
            self.message(
                state,
                Participant::UserProxy,
                agent,
                MessageKind::ToolResult,
                payload,
                round,
            );
            let error = result.error.clone();
            results.push(result);
            if let Some(e) = error {
                let f = failure(&e.kind, e.message);
                if e.kind == "SchemaViolation" {
                    violated = Some(f);
                } else {
                    return (results, Some(f), violated);
                }
            }
        }
        (results, None, violated)
    }

    fn run_tool(
        &mut self,
        role: &AgentRole,
        name: &str,
        args: &Map<String, Value>,
    ) -> Result<(Value, Vec<(String, Value)>), ToolFailure> {
        let spec = self.registry.get(name).ok_or_else(|| {
            ToolFailure::new("UnknownTool", format!("`{name}` is not registered"))
        })?;
        if !role.may_call(name) {
            return Err(ToolFailure::new(
                "ToolNotPermitted",
                format!("{} may not call `{name}`", role.name),
            ));
        }
        let schemas = SchemaRegistry::builtin();
        let enforce = self.config.enforce_schemas;
        let check = |id: &str, what: &str, v: &Value| -> Result<(), ToolFailure> {
            if !enforce {
                return Ok(());
            }
            let violations = schemas
                .validate(id, v)
                .map_err(|e| ToolFailure::new("SchemaViolation", e.to_string()))?;
            if violations.is_empty() {
                return Ok(());
            }
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(ToolFailure::new(
                "SchemaViolation",
                format!("{what} against `{id}`: {}", list.join("; ")),
            ))
        };
        check(
            &format!("tool:{name}"),
            "arguments",
            &Value::Object(args.clone()),
        )?;
        let run = spec.run;
        let mut ctx = ToolContext {
            memory: &self.memory,
            config: self.config,
            seismic: &self.seismic,
            artifacts: &mut self.artifacts,
        };
        let out = run(&mut ctx, args)?;
        if let Some(id) = out.output_schema {
            check(id, "output", &out.output)?;
        }
        for w in &out.writes {
            if let Some(id) = w.schema {
                check(id, &format!("memory `{}`", w.key), &w.value)?;
            }
        }
        Ok((
            out.output,
            out.writes.into_iter().map(|w| (w.key, w.value)).collect(),
        ))
    }

    fn commit(&mut self, state: PipelineState, writer: RoleName, key: &str, value: Value) {
        self.threaded.insert(key.to_string(), value.clone());
        self.memory
            .put(key, value, writer, state.index())
            .expect("tool memory keys are non-empty");
    }

    /// One prompt with every step's task; the single answer must carry the verdict.
    fn single_agent(
        mut self,
        problem_text: &str,
        backend: &mut dyn Backend,
    ) -> Result<PipelineRun, PipelineError> {
        let state = PipelineState::Decompose;
        let role: &'static AgentRole = role(RoleName::ProjectManager);
        let agent = Participant::Agent(role.name);
        let tasks: Vec<String> = PipelineState::ORDER[1..]
            .iter()
            .map(|s| format!("{}. {}", s.index(), step_task(*s)))
            .collect();
        let instruction = json!({
            "mode": "single_agent",
            "task": "Solve the whole problem in one answer and end with the final verdict line.",
            "steps": tasks,
            "inputs": {"problem_text": problem_text},
        });
        self.message(
            state,
            Participant::UserProxy,
            agent,
            MessageKind::Instruction,
            instruction.clone(),
            1,
        );
        let view = StepView {
            state,
            role,
            instruction: &instruction,
            rounds: &[],
            tools: &self.registry,
        };
        let text = match backend.reply(&view) {
            Ok(t) => t,
            Err(e) => return Err(self.fail(state, 1, failure("BackendError", e.to_string()))),
        };
        let answer = match AgentReply::parse(&text) {
            AgentReply::Final(a) => a,
            AgentReply::ToolCalls(_) => text.clone(),
        };
        self.message(
            state,
            agent,
            Participant::UserProxy,
            MessageKind::AssistantText,
            json!(answer),
            1,
        );
        let Some(verdict) = find_verdict(&answer) else {
            return Err(self.fail(
                state,
                1,
                failure("ExtractionFailed", "answer carries no single verdict line"),
            ));
        };
        self.message(
            state,
            agent,
            Participant::UserProxy,
            MessageKind::Verdict,
            json!(verdict),
            1,
        );
        self.trace.push_step_end(StepEnd {
            state,
            status: StepStatus::Ok,
            rounds: 1,
            memory_count: 0,
            summary: json!({"answer": answer, "verdict": verdict}),
            failure: None,
        });
        Ok(PipelineRun {
            assessment: SafetyAssessment {
                checks: vec![],
                verdict: verdict.to_string(),
            },
            trace: self.trace,
            memory: self.memory,
            artifacts: self.artifacts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_line_must_be_unambiguous() {
        assert_eq!(
            find_verdict("ok\nFINAL RESULT: STRUCTURALLY ADEQUATE"),
            Some(VERDICT_ADEQUATE)
        );
        assert_eq!(find_verdict("FINAL RESULT: STRUCTURALLY ADEQUATE!"), None);
        assert_eq!(
            find_verdict(
                "FINAL RESULT: STRUCTURALLY ADEQUATE\nFINAL RESULT: STRUCTURALLY INADEQUATE"
            ),
            None
        );
    }
}
