//! Decision backends: what an agent says next, as text.
//!
//! Every backend returns raw text that goes through the same extraction and
//! validation path. A reply is either `{"tool_calls": [{"name", "args"}]}` or
//! `{"final": "<text>"}`; text with no JSON is taken as a final answer.

use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::roles::AgentRole;
use super::tools::ToolRegistry;
use crate::memory::canonical_json;
use crate::protocol::{
    extract_structured_payload, MessageKind, Participant, PipelineState, ToolCall, ToolResult,
    TraceLog,
};
use crate::verification::{final_assessment, DemandSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("no scripted reply left for {0}")]
    ScriptExhausted(String),
    #[error("HTTP request failed: {0}")]
    Http(String),
    #[error("malformed completion response: {0}")]
    Response(String),
    #[error("deterministic choreography has no move: {0}")]
    Choreography(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Environment variable holding the bearer token; never the token itself.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

fn default_max_tokens() -> u32 {
    2000
}

fn default_key_env() -> String {
    "MASSE_API_KEY".into()
}

fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    #[default]
    Deterministic,
    Scripted {
        trace: PathBuf,
    },
    Remote(RemoteConfig),
}

/// One agent turn inside a step and the tool results it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub reply: String,
    pub results: Vec<ToolResult>,
}

/// What an agent sees when asked for its next turn.
pub struct StepView<'a> {
    pub state: PipelineState,
    pub role: &'a AgentRole,
    pub instruction: &'a Value,
    pub rounds: &'a [RoundRecord],
    pub tools: &'a ToolRegistry,
}

pub trait Backend {
    fn name(&self) -> &'static str;
    fn reply(&mut self, view: &StepView<'_>) -> Result<String, BackendError>;
    /// `true` when the backend makes no network requests.
    fn is_offline(&self) -> bool {
        true
    }
}

/// A parsed agent turn.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentReply {
    ToolCalls(Vec<(String, Map<String, Value>)>),
    Final(String),
}

impl AgentReply {
    pub fn parse(text: &str) -> AgentReply {
        let Ok(doc) = extract_structured_payload(text) else {
            return AgentReply::Final(text.to_string());
        };
        if let Some(calls) = doc.get("tool_calls").and_then(Value::as_array) {
            let parsed = calls
                .iter()
                .map(|c| {
                    let name = c.get("name").and_then(Value::as_str).unwrap_or_default();
                    let args = c
                        .get("args")
                        .and_then(Value::as_object)
                        .cloned()
                        .unwrap_or_default();
                    (name.to_string(), args)
                })
                .collect();
            return AgentReply::ToolCalls(parsed);
        }
        match doc.get("final") {
            Some(Value::String(s)) => AgentReply::Final(s.clone()),
            _ => AgentReply::Final(text.to_string()),
        }
    }

    pub fn render(&self) -> String {
        match self {
            AgentReply::ToolCalls(calls) => canonical_json(&json!({
                "tool_calls": calls
                    .iter()
                    .map(|(n, a)| json!({"name": n, "args": a}))
                    .collect::<Vec<_>>()
            })),
            AgentReply::Final(text) => canonical_json(&json!({ "final": text })),
        }
    }
}

fn calls(list: Vec<(&str, Value)>) -> AgentReply {
    AgentReply::ToolCalls(
        list.into_iter()
            .map(|(n, a)| (n.to_string(), a.as_object().cloned().unwrap_or_default()))
            .collect(),
    )
}

/// The fixed call sequence of the reference run.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeterministicBackend;

impl DeterministicBackend {
    fn choose(&self, view: &StepView<'_>) -> Result<AgentReply, BackendError> {
        // a round with a rejected payload is retried once as the repair round
        if let Some(last) = view.rounds.last() {
            if last.results.iter().any(|r| !r.ok) {
                return Ok(AgentReply::parse(&last.reply));
            }
        }
        let n = view.rounds.len();
        let inputs = &view.instruction["inputs"];
        let out = |name: &str| -> Value {
            view.rounds
                .iter()
                .flat_map(|r| &r.results)
                .rfind(|r| r.ok && r.name == name)
                .map(|r| r.output.clone())
                .unwrap_or(Value::Null)
        };
        let stuck = || BackendError::Choreography(format!("{} after {n} rounds", view.state));
        use PipelineState::*;
        let reply = match (view.state, n) {
            (Decompose, 0) => calls(vec![(
                "split_problem_description",
                json!({"problem_text": inputs["problem_text"]}),
            )]),
            (Decompose, 1) => {
                let d = out("split_problem_description");
                calls(vec![(
                    "adjust_pallet_weights",
                    json!({
                        "la_input": d["LA_input"],
                        "num_bays": d["number_of_bays"],
                        "num_pallets": d["number_of_pallets"],
                    }),
                )])
            }
            (Decompose, 2) => {
                let d = out("split_problem_description");
                calls(vec![
                    (
                        "update_saa_input",
                        json!({"saa_input": d["SAA_input"], "section_data": null, "load_data": null}),
                    ),
                    ("save_analysis_results", json!({"filepath": "analysis_results.json"})),
                ])
            }
            (Decompose, 3) => AgentReply::Final(format!(
                "Problem decomposed into section, loading and structural inputs. Loads after update: {}",
                canonical_json(&out("adjust_pallet_weights")["loads_lbs"])
            )),
            (SectionDesign, 0) => calls(vec![(
                "extract_section_info",
                json!({"sda_input": inputs["SDA_input"]}),
            )]),
            (SectionDesign, 1) => calls(vec![(
                "calculate_section_capacities",
                json!({"section_info": out("extract_section_info")}),
            )]),
            (SectionDesign, 2) => AgentReply::Final(
                "Section properties and capacities calculated and stored.".into(),
            ),
            (BuildingInfo, 0) => calls(vec![(
                "extract_building_info",
                json!({"la_input": inputs["LA_input"]}),
            )]),
            (BuildingInfo, 1) => {
                let b = out("extract_building_info");
                AgentReply::Final(format!(
                    "Location: {}. Floor elevations (ft): {}",
                    b["location"].as_str().unwrap_or_default(),
                    canonical_json(&b["floor_elevations_ft"])
                ))
            }
            (SeismicParams, 0) => calls(vec![(
                "get_seismic_parameters",
                json!({"location": inputs["location"]}),
            )]),
            (SeismicParams, 1) => AgentReply::Final(format!(
                "Seismic parameters: {}",
                canonical_json(&out("get_seismic_parameters"))
            )),
            (LoadCalc, _) => self.load_calc(view, n, &out).ok_or_else(stuck)?,
            (UpdateSAA, 0) => calls(vec![(
                "update_saa_input",
                json!({
                    "saa_input": inputs["SAA_input"],
                    "section_data": inputs["section_data"],
                    "load_data": inputs["load_data"],
                }),
            )]),
            (UpdateSAA, 1) => AgentReply::Final(
                "SAA input updated with section and load data; brace coordinates preserved.".into(),
            ),
            (ModelGen, 0) => calls(vec![(
                "generate_structural_model",
                json!({"description": inputs["SAA_input_update"]}),
            )]),
            (ModelGen, 1) => {
                let r = out("generate_structural_model");
                AgentReply::Final(format!(
                    "Structural model generated: {} nodes, {} elements ({} truss braces).",
                    r["node_count"], r["element_count"], r["brace_count"]
                ))
            }
            (FEAnalysis, 0) => calls(vec![("run_complete_opensees_analysis", json!({}))]),
            (FEAnalysis, 1) => AgentReply::Final(format!(
                "Analysis complete. Envelope: {}",
                canonical_json(&out("run_complete_opensees_analysis")["envelope"])
            )),
            (Verify, 0) => {
                let sections = &inputs["section_data"]["members"];
                let envelope = serde_json::from_value(inputs["analysis_results"]["envelope"].clone())
                    .map_err(|e| BackendError::Choreography(format!("envelope: {e}")))?;
                let demands = DemandSet::from_envelope(&envelope);
                calls(vec![(
                    "verify_structural_safety",
                    json!({
                        "capacities": {
                            "post": sections["column"]["capacities"],
                            "brace": sections["brace"]["capacities"],
                        },
                        "demands": demands,
                    }),
                )])
            }
            (Verify, 1) => {
                let v = out("verify_structural_safety");
                let ratios: Vec<String> = v["reported_ratios"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .map(|r| {
                        format!(
                            "{} {} {:.2}",
                            r["category"].as_str().unwrap_or_default(),
                            r["mode"].as_str().unwrap_or_default(),
                            r["ratio"].as_f64().unwrap_or(f64::NAN)
                        )
                    })
                    .collect();
                AgentReply::Final(format!("Demand/capacity ratios: {}", ratios.join(", ")))
            }
            (FinalVerdict, 0) => calls(vec![("get_analysis_context", json!({}))]),
            (FinalVerdict, 1) => {
                let a = final_assessment(&out("get_analysis_context"));
                let failing = a.checks.iter().filter(|c| !c.pass).count();
                AgentReply::Final(format!(
                    "{} of {} checks pass.\n{}",
                    a.checks.len() - failing,
                    a.checks.len(),
                    a.verdict
                ))
            }
            _ => return Err(stuck()),
        };
        Ok(reply)
    }

    fn load_calc(
        &self,
        view: &StepView<'_>,
        n: usize,
        out: &dyn Fn(&str) -> Value,
    ) -> Option<AgentReply> {
        let context = view.instruction.get("context").filter(|c| c.is_object());
        let keys = ["floor_elevations_ft", "loads_lbs", "seismic_parameters"];
        let calc_round = if context.is_some() { 0 } else { 1 };
        if n == 0 && context.is_none() {
            let mut list = vec![("get_memory_summary", json!({}))];
            list.extend(
                keys.iter()
                    .map(|k| ("get_memory_data", json!({ "key": k }))),
            );
            return Some(calls(list));
        }
        if n == calc_round {
            let values: Vec<Value> = match context {
                Some(c) => keys.iter().map(|k| c[*k].clone()).collect(),
                None => view.rounds[0].results[1..=3]
                    .iter()
                    .map(|r| r.output.clone())
                    .collect(),
            };
            return Some(calls(vec![(
                "calculate_seismic_loads",
                json!({
                    "floor_elevations_ft": values[0],
                    "loads_lbs": values[1],
                    "seismic_parameters": values[2],
                }),
            )]));
        }
        if n == calc_round + 1 {
            let r = out("calculate_seismic_loads");
            let forces: Vec<String> = r["forces"]
                .as_array()?
                .iter()
                .map(|f| format!("{:.3}", f["force_kip"].as_f64().unwrap_or(f64::NAN)))
                .collect();
            return Some(AgentReply::Final(format!(
                "Base shear V = {:.3} kip; story forces F = [{}] kip.",
                r["base_shear_kip"].as_f64().unwrap_or(f64::NAN),
                forces.join(", ")
            )));
        }
        None
    }
}

impl Backend for DeterministicBackend {
    fn name(&self) -> &'static str {
        "deterministic"
    }

    fn reply(&mut self, view: &StepView<'_>) -> Result<String, BackendError> {
        self.choose(view).map(|r| r.render())
    }
}

/// Replays agent turns recorded in a trace, step by step, ignoring the view.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    replies: BTreeMap<PipelineState, VecDeque<String>>,
}

type PendingTurn = (PipelineState, u32, Vec<(String, Map<String, Value>)>);

impl ScriptedBackend {
    pub fn new(replies: BTreeMap<PipelineState, VecDeque<String>>) -> Self {
        Self { replies }
    }

    /// Rebuilds each agent turn: the tool calls of one round become one reply,
    /// and assistant text becomes a final answer.
    pub fn from_trace(trace: &TraceLog) -> Self {
        let mut replies: BTreeMap<PipelineState, VecDeque<String>> = BTreeMap::new();
        let mut pending: Option<PendingTurn> = None;
        let flush = |p: &mut Option<PendingTurn>,
                     replies: &mut BTreeMap<PipelineState, VecDeque<String>>| {
            if let Some((state, _, list)) = p.take() {
                replies
                    .entry(state)
                    .or_default()
                    .push_back(AgentReply::ToolCalls(list).render());
            }
        };
        for (state, m) in trace.messages() {
            if !matches!(m.sender, Participant::Agent(_)) {
                continue;
            }
            match m.kind {
                MessageKind::ToolCall => {
                    let Ok(call) = serde_json::from_value::<ToolCall>(m.payload.clone()) else {
                        continue;
                    };
                    let same = matches!(&pending, Some((s, r, _)) if *s == state && *r == m.round);
                    if !same {
                        flush(&mut pending, &mut replies);
                        pending = Some((state, m.round, Vec::new()));
                    }
                    if let Some((_, _, list)) = pending.as_mut() {
                        list.push((call.name, call.args));
                    }
                }
                MessageKind::AssistantText => {
                    flush(&mut pending, &mut replies);
                    let text = m.payload.as_str().unwrap_or_default().to_string();
                    replies
                        .entry(state)
                        .or_default()
                        .push_back(AgentReply::Final(text).render());
                }
                _ => {}
            }
        }
        flush(&mut pending, &mut replies);
        Self { replies }
    }
}

impl Backend for ScriptedBackend {
    fn name(&self) -> &'static str {
        "scripted"
    }

    fn reply(&mut self, view: &StepView<'_>) -> Result<String, BackendError> {
        self.replies
            .get_mut(&view.state)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| BackendError::ScriptExhausted(view.state.to_string()))
    }
}

const REPLY_PROTOCOL: &str = "Reply with one JSON object and nothing else. To call tools: \
{\"tool_calls\": [{\"name\": <tool>, \"args\": {...}}]}. When the task is done: \
{\"final\": <your answer>}.";

/// Chat-completions client. The conversation for each turn is rebuilt from
/// the view, so the backend keeps no state between calls.
pub struct RemoteBackend {
    config: RemoteConfig,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let token = std::env::var(&config.api_key_env)
            .ok()
            .filter(|t| !t.is_empty());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| BackendError::Http(e.to_string()))?;
        Ok(Self {
            config,
            token,
            client,
        })
    }

    /// Request body for one turn.
    pub fn request_body(&self, view: &StepView<'_>) -> Value {
        json!({
            "model": self.config.model,
            "messages": conversation(view),
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        })
    }
}

/// System prompt, instruction, then alternating agent turns and tool results.
pub fn conversation(view: &StepView<'_>) -> Vec<Value> {
    let tools: Vec<Value> = view
        .role
        .toolset
        .iter()
        .filter_map(|t| view.tools.get(t))
        .map(|t| json!({"name": t.name, "description": t.description, "parameters": t.parameters}))
        .collect();
    let system = format!(
        "{}\n\nTools:\n{}\n\n{}",
        view.role.system_message,
        canonical_json(&Value::Array(tools)),
        REPLY_PROTOCOL
    );
    let mut messages = vec![
        json!({"role": "system", "content": system}),
        json!({"role": "user", "content": canonical_json(view.instruction)}),
    ];
    for r in view.rounds {
        messages.push(json!({"role": "assistant", "content": r.reply}));
        messages.push(json!({
            "role": "user",
            "content": canonical_json(&json!({ "tool_results": r.results })),
        }));
    }
    messages
}

impl Backend for RemoteBackend {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn is_offline(&self) -> bool {
        false
    }

    fn reply(&mut self, view: &StepView<'_>) -> Result<String, BackendError> {
        let mut req = self
            .client
            .post(&self.config.endpoint)
            .json(&self.request_body(view));
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| BackendError::Http(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::Http(format!("status {status}")));
        }
        let body: Value = resp
            .json()
            .map_err(|e| BackendError::Response(e.to_string()))?;
        body["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Response("no choices[0].message.content".into()))
    }
}
