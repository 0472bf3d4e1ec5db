//! Benchmark scorer: four rubrics computed from a trace alone.
//!
//! Every component is all-or-nothing. Memory values are rebuilt from the
//! writes recorded in tool results, so a trace file is enough to score a run.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::problem_parser::read_annotations;
use crate::protocol::{MessageKind, PipelineState, StepStatus, TraceLog, TraceRecord};
use crate::verification::{VERDICT_ADEQUATE, VERDICT_INADEQUATE};

pub const GROUND_TRUTH_JSON: &str = include_str!("../../data/golden/ground_truth.json");
pub const TOLERANCES_JSON: &str = include_str!("../../data/scoring_tolerances.json");

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("ground truth: {0}")]
    GroundTruth(serde_json::Error),
    #[error("tolerances: {0}")]
    Tolerances(serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    #[serde(default)]
    pub abs: f64,
    #[serde(default)]
    pub rel: f64,
}

impl Tolerance {
    pub fn accepts(&self, got: f64, want: f64) -> bool {
        got.is_finite() && (got - want).abs() <= self.abs.max(self.rel * want.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub dimensions_in: Tolerance,
    pub section_properties: Tolerance,
    pub elastic_modulus_ksi: Tolerance,
    pub capacities: Tolerance,
    pub elevations_ft: Tolerance,
    pub loads_lbs: Tolerance,
    pub seismic_parameters: Tolerance,
    pub seismic_forces_kip: Tolerance,
    pub live_forces_kip: Tolerance,
    pub envelope: Tolerance,
    /// Trace-length budget as a multiple of the reference trace length.
    pub efficiency_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryTruth {
    pub nodes: usize,
    pub elements: usize,
    pub trusses: usize,
    pub beam_columns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub verdict: String,
    pub geometry: GeometryTruth,
    /// Member name to dimension or property name to value.
    pub sections: BTreeMap<String, BTreeMap<String, f64>>,
    pub elastic_modulus_ksi: f64,
    pub capacities: BTreeMap<String, BTreeMap<String, f64>>,
    pub floor_elevations_ft: Vec<f64>,
    pub loads_lbs: Vec<f64>,
    pub adjusted_loads_lbs: Vec<f64>,
    pub location: String,
    pub seismic_parameters: BTreeMap<String, f64>,
    pub seismic_forces_kip: Vec<f64>,
    pub live_forces_kip: Vec<f64>,
    /// Group ("beams", "trusses") to envelope field to value.
    pub envelope: BTreeMap<String, BTreeMap<String, f64>>,
    /// Record count of the reference trace.
    pub trace_records: usize,
    #[serde(skip)]
    pub tolerances: Option<Tolerances>,
}

impl GroundTruth {
    pub fn from_json(truth: &str, tolerances: &str) -> Result<Self, ScoreError> {
        let mut t: GroundTruth = serde_json::from_str(truth).map_err(ScoreError::GroundTruth)?;
        t.tolerances = Some(serde_json::from_str(tolerances).map_err(ScoreError::Tolerances)?);
        Ok(t)
    }

    /// The shipped golden problem's truth with the shipped tolerances.
    pub fn builtin() -> Result<Self, ScoreError> {
        Self::from_json(GROUND_TRUTH_JSON, TOLERANCES_JSON)
    }

    fn tol(&self) -> &Tolerances {
        self.tolerances
            .as_ref()
            .expect("constructed through from_json")
    }
}

/// Points per rubric plus the per-component breakdown.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scores {
    pub saab: u32,
    pub sdab: u32,
    pub lab: u32,
    pub maseb: u32,
    /// "RUBRIC.component" to points awarded.
    pub components: BTreeMap<String, u32>,
}

impl fmt::Display for Scores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SAAB {} SDAB {} LAB {} MASEB {}",
            self.saab, self.sdab, self.lab, self.maseb
        )
    }
}

impl Scores {
    fn award(&mut self, rubric: &str, component: &str, points: u32, ok: bool) {
        let got = if ok { points } else { 0 };
        self.components.insert(format!("{rubric}.{component}"), got);
        match rubric {
            "SAAB" => self.saab += got,
            "SDAB" => self.sdab += got,
            "LAB" => self.lab += got,
            _ => self.maseb += got,
        }
    }
}

/// Latest committed value per key, with the step that wrote it.
struct Written {
    values: BTreeMap<String, (PipelineState, Value)>,
}

impl Written {
    fn from_trace(trace: &TraceLog) -> Self {
        let mut values = BTreeMap::new();
        for (state, result) in trace.tool_results() {
            for (k, v) in result.writes {
                values.insert(k, (state, v));
            }
        }
        Written { values }
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.values
            .get(key)
            .map(|(_, v)| v)
            .filter(|v| !v.is_null())
    }

    fn state(&self, key: &str) -> Option<PipelineState> {
        self.values.get(key).map(|(s, _)| *s)
    }
}

fn num(v: Option<&Value>) -> Option<f64> {
    v.and_then(Value::as_f64)
}

fn close(tol: Tolerance, got: Option<&Value>, want: f64) -> bool {
    num(got).is_some_and(|g| tol.accepts(g, want))
}

fn close_all(tol: Tolerance, got: Option<&Value>, want: &[f64]) -> bool {
    let Some(items) = got.and_then(Value::as_array) else {
        return false;
    };
    items.len() == want.len() && items.iter().zip(want).all(|(g, w)| close(tol, Some(g), *w))
}

fn close_map(tol: Tolerance, got: Option<&Value>, want: &BTreeMap<String, f64>) -> bool {
    let Some(obj) = got else {
        return false;
    };
    want.iter().all(|(k, w)| close(tol, obj.get(k), *w))
}

/// Forces of a `load_data` case as a list, ordered by elevation.
fn case_forces(load_data: Option<&Value>, case: &str) -> Option<Value> {
    let items = load_data?.get(case)?.as_array()?;
    Some(Value::Array(
        items.iter().map(|p| p["force_kip"].clone()).collect(),
    ))
}

pub fn score_trace(trace: &TraceLog, truth: &GroundTruth) -> Scores {
    let tol = truth.tol();
    let w = Written::from_trace(trace);
    let mut s = Scores::default();

    // Structural analysis.
    let model = w.get("structural_model");
    let elements = model.and_then(|m| m["elements"].as_array());
    let count = |kind: &str| elements.map(|e| e.iter().filter(|x| x["type"] == kind).count());
    let g = &truth.geometry;
    let geometry_ok = model.and_then(|m| m["nodes"].as_array()).map(Vec::len) == Some(g.nodes)
        && elements.map(Vec::len) == Some(g.elements)
        && count("truss") == Some(g.trusses)
        && count("elasticBeamColumn") == Some(g.beam_columns);
    s.award("SAAB", "geometry", 30, geometry_ok);

    let integration_ok = model.is_some_and(|m| {
        let col = &truth.sections["column"];
        let brace = &truth.sections["brace"];
        let sec = &m["sections"];
        close(tol.section_properties, sec["column"].get("A"), col["A"])
            && close(tol.section_properties, sec["column"].get("I"), col["I"])
            && close(tol.section_properties, sec["brace"].get("A"), brace["A"])
            && close(
                tol.elastic_modulus_ksi,
                m["materials"].get("E"),
                truth.elastic_modulus_ksi,
            )
    });
    s.award("SAAB", "integration", 20, integration_ok);

    let analysis_ok = w.state("analysis_results") == Some(PipelineState::FEAnalysis)
        && w.get("analysis_results").is_some_and(|a| {
            truth
                .envelope
                .iter()
                .all(|(group, want)| close_map(tol.envelope, a["envelope"].get(group), want))
        });
    s.award("SAAB", "analysis_executed", 30, analysis_ok);

    let retrieval_ok = model.is_some_and(|m| {
        let fx: Vec<Value> = m["loads"]
            .as_array()
            .map(|l| l.iter().map(|p| p["fx"].clone()).collect())
            .unwrap_or_default();
        close_all(
            tol.seismic_forces_kip,
            Some(&Value::Array(fx)),
            &truth.seismic_forces_kip,
        )
    });
    s.award("SAAB", "retrieval", 20, retrieval_ok);

    // Section design.
    let extraction_ok = w
        .get("section_info")
        .and_then(Value::as_array)
        .is_some_and(|specs| {
            ["column", "brace"].iter().all(|member| {
                let want = &truth.sections[*member];
                specs.iter().any(|spec| {
                    spec["member"] == *member
                        && ["depth_in", "flange_in", "thickness_in"]
                            .iter()
                            .all(|k| close(tol.dimensions_in, spec.get(*k), want[*k]))
                })
            })
        });
    s.award("SDAB", "extraction", 30, extraction_ok);

    let section_data = w.get("section_data");
    let capacity_ok = section_data.is_some_and(|d| {
        truth.capacities.iter().all(|(member, want)| {
            close_map(tol.capacities, d["members"][member].get("capacities"), want)
        })
    });
    s.award("SDAB", "capacity", 30, capacity_ok);

    let storage_ok =
        w.state("section_data") == Some(PipelineState::SectionDesign) && section_data.is_some();
    s.award("SDAB", "storage", 20, storage_ok);

    let annotations = w
        .get("SAA_input_update")
        .and_then(Value::as_str)
        .map(read_annotations);
    let transfer_ok =
        matches!((&annotations, section_data), (Some((Some(a), _)), Some(d)) if a == d);
    s.award("SDAB", "transfer", 20, transfer_ok);

    // Loading.
    let info = w.get("building_info");
    let load_extraction_ok = close_all(
        tol.elevations_ft,
        w.get("floor_elevations_ft"),
        &truth.floor_elevations_ft,
    ) && close_all(
        tol.loads_lbs,
        info.and_then(|i| i.get("loads_lbs")),
        &truth.loads_lbs,
    ) && w.get("location").and_then(Value::as_str)
        == Some(truth.location.as_str());
    s.award("LAB", "load_extraction", 25, load_extraction_ok);

    let adjustment_ok = close_all(tol.loads_lbs, w.get("loads_lbs"), &truth.adjusted_loads_lbs);
    s.award("LAB", "adjustment", 25, adjustment_ok);

    let seismic_ok = close_map(
        tol.seismic_parameters,
        w.get("seismic_parameters"),
        &truth.seismic_parameters,
    );
    s.award("LAB", "retrieval", 25, seismic_ok);

    let load_data = w.get("load_data");
    let calculation_ok = close_all(
        tol.seismic_forces_kip,
        case_forces(load_data, "seismic").as_ref(),
        &truth.seismic_forces_kip,
    ) && close_all(
        tol.live_forces_kip,
        case_forces(load_data, "live").as_ref(),
        &truth.live_forces_kip,
    );
    s.award("LAB", "calculation", 25, calculation_ok);

    // Whole system.
    let completion_ok = PipelineState::ORDER[1..].iter().all(|state| {
        trace
            .step_end(*state)
            .is_some_and(|e| e.status == StepStatus::Ok)
    });
    s.award("MASEB", "completion", 30, completion_ok);

    s.award(
        "MASEB",
        "consistency",
        30,
        !trace.is_empty() && inputs_consistent(trace),
    );

    let accurate = trace.verdict().as_deref() == Some(truth.verdict.as_str());
    s.award("MASEB", "final_accuracy", 20, accurate);

    let budget = truth.trace_records as f64 * tol.efficiency_factor;
    let efficient = completion_ok && (trace.len() as f64) <= budget;
    s.award("MASEB", "efficiency", 20, efficient);

    s
}

/// Masks the values an instruction input may legitimately lag behind on.
fn masked(key: &str, v: &Value) -> Value {
    let mut v = v.clone();
    if key == "load_data" {
        if let Some(obj) = v.as_object_mut() {
            obj.remove("seismic");
        }
    }
    v
}

/// Every instruction input equals the latest write of that key before it.
fn inputs_consistent(trace: &TraceLog) -> bool {
    let mut latest: BTreeMap<String, Value> = BTreeMap::new();
    for (_, msg) in trace.messages() {
        match msg.kind {
            MessageKind::Instruction => {
                let Some(inputs) = msg.payload.get("inputs").and_then(Value::as_object) else {
                    continue;
                };
                for (k, v) in inputs {
                    if k == "problem_text" {
                        continue;
                    }
                    match latest.get(k) {
                        Some(w) if masked(k, w) == masked(k, v) => {}
                        _ => return false,
                    }
                }
            }
            MessageKind::ToolResult => {
                if let Some(writes) = msg.payload.get("writes").and_then(Value::as_array) {
                    for pair in writes {
                        if let (Some(k), Some(v)) = (pair[0].as_str(), pair.get(1)) {
                            latest.insert(k.to_string(), v.clone());
                        }
                    }
                }
            }
            _ => {}
        }
    }
    true
}

/// Single faults planted in a trace to check that the scorer notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// The verdict line is flipped.
    WrongVerdict,
    /// The last truss element is dropped from the written structural model.
    MissingBrace,
    /// The written seismic story forces are doubled.
    WrongLoadVector,
}

impl Fault {
    pub const ALL: [Fault; 3] = [
        Fault::WrongVerdict,
        Fault::MissingBrace,
        Fault::WrongLoadVector,
    ];
}

fn flip_verdict(text: &str) -> String {
    text.lines()
        .map(|l| match l.trim() {
            VERDICT_ADEQUATE => VERDICT_INADEQUATE,
            VERDICT_INADEQUATE => VERDICT_ADEQUATE,
            _ => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Copy of `trace` with `fault` applied to every place it shows up.
pub fn inject_fault(trace: &TraceLog, fault: Fault) -> TraceLog {
    let mut out = trace.clone();
    for record in &mut out.records {
        let TraceRecord::Message { message, .. } = record else {
            continue;
        };
        match (fault, message.kind) {
            (Fault::WrongVerdict, MessageKind::Verdict | MessageKind::AssistantText) => {
                if let Some(text) = message.payload.as_str() {
                    message.payload = Value::String(flip_verdict(text));
                }
            }
            (Fault::MissingBrace | Fault::WrongLoadVector, MessageKind::ToolResult) => {
                let Some(writes) = message
                    .payload
                    .get_mut("writes")
                    .and_then(Value::as_array_mut)
                else {
                    continue;
                };
                for pair in writes {
                    let key = pair[0].as_str().unwrap_or_default().to_string();
                    let value = &mut pair[1];
                    if fault == Fault::MissingBrace && key == "structural_model" {
                        if let Some(elements) = value["elements"].as_array_mut() {
                            if let Some(i) = elements.iter().rposition(|e| e["type"] == "truss") {
                                elements.remove(i);
                            }
                        }
                    }
                    if fault == Fault::WrongLoadVector && key == "load_data" {
                        if let Some(levels) = value["seismic"].as_array_mut() {
                            for level in levels {
                                let f = level["force_kip"].as_f64().unwrap_or(0.0);
                                level["force_kip"] = Value::from(2.0 * f);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    out
}
