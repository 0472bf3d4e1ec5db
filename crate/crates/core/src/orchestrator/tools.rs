//! The fifteen registered tools.
//!
//! Tools read memory but never write it: each returns the writes it wants,
//! and the pipeline validates and commits them, so a rejected payload never
//! reaches the store.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::PipelineConfig;
use crate::fem_solver::{default_combinations, run_complete_analysis};
use crate::memory::StructuralMemory;
use crate::model_builder::{
    generate_structural_model, BraceSection, ColumnSection, StructuralModel,
};
use crate::problem_parser::{
    self, extract_level_loads, read_annotations, strip_annotations, BuildingInfo, Dimensions,
    Member, SectionSpec,
};
use crate::protocol::TOOLS_JSON;
use crate::sections::{design_sections, SectionData};
use crate::seismic_loads::{build_load_data, LoadData};
use crate::seismic_retrieval::{
    city_not_found_document, RetrievalError, SeismicDatabase, SeismicParameters,
};
use crate::verification::{self, checks_document, Category, DemandSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("tool `{0}` is already registered")]
    Duplicate(String),
    #[error("tool `{0}` is not registered")]
    Unknown(String),
    #[error("role table: {0}")]
    Roles(String),
}

/// What a tool call needs besides its arguments.
pub struct ToolContext<'a> {
    pub memory: &'a StructuralMemory,
    pub config: &'a PipelineConfig,
    pub seismic: &'a SeismicDatabase,
    /// Files the run produces, by file name.
    pub artifacts: &'a mut BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedWrite {
    pub key: String,
    pub value: Value,
    /// Schema the value must satisfy before it is committed.
    pub schema: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolOutput {
    pub output: Value,
    /// Schema the output itself must satisfy.
    pub output_schema: Option<&'static str>,
    pub writes: Vec<PlannedWrite>,
}

impl ToolOutput {
    fn new(output: Value, writes: Vec<PlannedWrite>) -> Self {
        Self {
            output,
            output_schema: None,
            writes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind}: {message}")]
pub struct ToolFailure {
    pub kind: String,
    pub message: String,
    /// Document returned to the agent alongside the error, if any.
    pub output: Option<Value>,
}

impl ToolFailure {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.to_string(),
            message: message.into(),
            output: None,
        }
    }
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for ToolFailure {
            fn from(e: $t) -> Self {
                ToolFailure::new(e.kind(), e.to_string())
            }
        }
    )*};
}

failure_from!(
    problem_parser::ParseError,
    crate::seismic_loads::LoadError,
    crate::sections::SectionError,
    crate::model_builder::ModelError,
    crate::fem_solver::FemError
);

impl From<RetrievalError> for ToolFailure {
    fn from(e: RetrievalError) -> Self {
        let mut f = ToolFailure::new(e.kind(), e.to_string());
        if matches!(e, RetrievalError::CityNotFound { .. }) {
            f.output = Some(city_not_found_document());
        }
        f
    }
}

impl From<verification::VerificationError> for ToolFailure {
    fn from(e: verification::VerificationError) -> Self {
        ToolFailure::new("VerificationError", e.to_string())
    }
}

impl From<verification::ContextError> for ToolFailure {
    fn from(e: verification::ContextError) -> Self {
        ToolFailure::new("ContextError", e.to_string())
    }
}

pub type ToolFn = fn(&mut ToolContext<'_>, &Map<String, Value>) -> Result<ToolOutput, ToolFailure>;

#[derive(Clone)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Value,
    pub run: ToolFn,
}

impl std::fmt::Debug for ToolSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolSpec")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, ToolSpec>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: ToolSpec) -> Result<(), RegistryError> {
        if self.tools.contains_key(&spec.name) {
            return Err(RegistryError::Duplicate(spec.name));
        }
        self.tools.insert(spec.name.clone(), spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.get(name)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }

    /// A registry with every built-in tool.
    pub fn builtin() -> Self {
        let mut r = Self::new();
        register_tools(&mut r).expect("built-in tool names are distinct");
        r
    }
}

const BUILTIN: [(&str, ToolFn); 15] = [
    ("split_problem_description", split_problem_description),
    ("adjust_pallet_weights", adjust_pallet_weights),
    ("update_saa_input", update_saa_input),
    ("save_analysis_results", save_analysis_results),
    ("extract_section_info", extract_section_info),
    ("calculate_section_capacities", calculate_section_capacities),
    ("extract_building_info", extract_building_info),
    ("get_seismic_parameters", get_seismic_parameters),
    ("get_memory_summary", get_memory_summary),
    ("get_memory_data", get_memory_data),
    ("calculate_seismic_loads", calculate_seismic_loads),
    ("generate_structural_model", generate_model),
    ("run_complete_opensees_analysis", run_analysis),
    ("get_analysis_context", get_analysis_context),
    ("verify_structural_safety", verify_structural_safety),
];

/// Registers the built-in tools and returns how many were added.
pub fn register_tools(registry: &mut ToolRegistry) -> Result<usize, RegistryError> {
    let defs: Map<String, Value> = serde_json::from_str(TOOLS_JSON).expect("tools.json parses");
    for (name, run) in BUILTIN {
        let def = defs
            .get(name)
            .ok_or_else(|| RegistryError::Unknown(name.to_string()))?;
        registry.register(ToolSpec {
            name: name.to_string(),
            description: def["description"].as_str().unwrap_or_default().to_string(),
            parameters: def["parameters"].clone(),
            run,
        })?;
    }
    Ok(BUILTIN.len())
}

fn arg<T: DeserializeOwned>(args: &Map<String, Value>, name: &str) -> Result<T, ToolFailure> {
    let v = args
        .get(name)
        .ok_or_else(|| ToolFailure::new("InputError", format!("missing argument `{name}`")))?;
    serde_json::from_value(v.clone())
        .map_err(|e| ToolFailure::new("InputError", format!("argument `{name}`: {e}")))
}

fn stored<T: DeserializeOwned>(memory: &StructuralMemory, key: &str) -> Result<T, ToolFailure> {
    let v = memory
        .get_non_null(key)
        .ok_or_else(|| ToolFailure::new("MissingMemoryKey", format!("memory has no `{key}`")))?;
    serde_json::from_value(v.clone())
        .map_err(|e| ToolFailure::new("InputError", format!("memory `{key}`: {e}")))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("tool documents serialize")
}

fn write(key: &str, value: Value, schema: Option<&'static str>) -> PlannedWrite {
    PlannedWrite {
        key: key.to_string(),
        value,
        schema,
    }
}

fn split_problem_description(
    _: &mut ToolContext<'_>,
    args: &Map<String, Value>,
) -> Result<ToolOutput, ToolFailure> {
    let text: String = arg(args, "problem_text")?;
    let d = problem_parser::split_problem_description(&text)?;
    let doc = to_value(&d);
    let mut writes = vec![write("problem_description", json!(text), None)];
    for key in [
        "SDA_input",
        "LA_input",
        "SAA_input",
        "number_of_bays",
        "number_of_pallets",
    ] {
        writes.push(write(key, doc[key].clone(), None));
    }
    Ok(ToolOutput {
        output: doc,
        output_schema: Some("decomposition"),
        writes,
    })
}

fn adjust_pallet_weights(
    ctx: &mut ToolContext<'_>,
    args: &Map<String, Value>,
) -> Result<ToolOutput, ToolFailure> {
    let la: String = arg(args, "la_input")?;
    let bays: u32 = arg(args, "num_bays")?;
    let pallets: u32 = arg(args, "num_pallets")?;
    let (elevations, loads) = extract_level_loads(&la)?;
    let info = BuildingInfo {
        location: String::new(),
        building_type: String::new(),
        floor_elevations_ft: elevations,
        loads_lbs: loads.clone(),
        dimensions: Dimensions {
            width_ft: None,
            height_ft: None,
            beam_length_ft: None,
        },
        structural_info: String::new(),
    };
    let rule = &ctx.config.adjustment;
    let adjusted = problem_parser::adjust_pallet_weights(&info, bays, pallets, rule)?;
    Ok(ToolOutput::new(
        json!({"original_lbs": loads, "loads_lbs": adjusted, "rule": rule.describe()}),
        vec![write("loads_lbs", json!(adjusted), None)],
    ))
}

fn update_saa_input(
    _: &mut ToolContext<'_>,
    args: &Map<String, Value>,
) -> Result<ToolOutput, ToolFailure> {
    let saa: String = arg(args, "saa_input")?;
    let section: Value = arg(args, "section_data")?;
    let load: Value = arg(args, "load_data")?;
    let text = problem_parser::update_saa_input(&saa, &section, &load);
    Ok(ToolOutput::new(
        json!({"SAA_input_update": text}),
        vec![write("SAA_input_update", json!(text), None)],
    ))
}

fn save_analysis_results(
    ctx: &mut ToolContext<'_>,
    args: &Map<String, Value>,
) -> Result<ToolOutput, ToolFailure> {
    let path: String = arg(args, "filepath")?;
    let name = std::path::Path::new(&path)
        .file_name()
        .and_then(|n| n.to_str())
        .filter(|n| !n.is_empty())
        .ok_or_else(|| ToolFailure::new("InputError", format!("`{path}` names no file")))?
        .to_string();
    let summary = ctx.memory.summary();
    ctx.artifacts.insert(name.clone(), ctx.memory.to_snapshot());
    Ok(ToolOutput::new(
        json!({"filepath": name, "entries": summary.count}),
        vec![],
    ))
}

fn extract_section_info(
    _: &mut ToolContext<'_>,
    args: &Map<String, Value>,
) -> Result<ToolOutput, ToolFailure> {
    let sda: String = arg(args, "sda_input")?;
    let specs = problem_parser::extract_section_info(&sda)?;
    let doc = to_value(&specs);
    Ok(ToolOutput::new(
        doc.clone(),
        vec![write("section_info", doc, None)],
    ))
}

fn calculate_section_capacities(
    ctx: &mut ToolContext<'_>,
    args: &Map<String, Value>,
) -> Result<ToolOutput, ToolFailure> {
    let specs: Vec<SectionSpec> = arg(args, "section_info")?;
    let data = design_sections(&specs, &ctx.config.capacity)?;
    let doc = to_value(&data);
    Ok(ToolOutput::new(
        doc.clone(),
        vec![write("section_data", doc, Some("section_data"))],
    ))
}

fn extract_building_info(
    _: &mut ToolContext<'_>,
    args: &Map<String, Value>,
) -> Result<ToolOutput, ToolFailure> {
    let la: String = arg(args, "la_input")?;
    let info = problem_parser::extract_building_info(&la)?;
    let doc = to_value(&info);
    Ok(ToolOutput::new(
        doc.clone(),
        vec![
            write("building_info", doc, Some("building_info")),
            write("floor_elevations_ft", json!(info.floor_elevations_ft), None),
            write("location", json!(info.location), None),
        ],
    ))
}

fn get_seismic_parameters(
    ctx: &mut ToolContext<'_>,
    args: &Map<String, Value>,
) -> Result<ToolOutput, ToolFailure> {
    let location: String = arg(args, "location")?;
    let (params, _) = ctx.seismic.get_seismic_parameters(&location)?;
    let doc = to_value(&params);
    Ok(ToolOutput::new(
        doc.clone(),
        vec![write("seismic_parameters", doc, Some("seismic_params"))],
    ))
}

fn get_memory_summary(
    ctx: &mut ToolContext<'_>,
    _: &Map<String, Value>,
) -> Result<ToolOutput, ToolFailure> {
    Ok(ToolOutput::new(to_value(&ctx.memory.summary()), vec![]))
}

fn get_memory_data(
    ctx: &mut ToolContext<'_>,
    args: &Map<String, Value>,
) -> Result<ToolOutput, ToolFailure> {
    let key: String = arg(args, "key")?;
    Ok(ToolOutput::new(
        ctx.memory.get(&key).cloned().unwrap_or(Value::Null),
        vec![],
    ))
}

fn calculate_seismic_loads(
    ctx: &mut ToolContext<'_>,
    args: &Map<String, Value>,
) -> Result<ToolOutput, ToolFailure> {
    let elevations: Vec<f64> = arg(args, "floor_elevations_ft")?;
    let loads: Vec<f64> = arg(args, "loads_lbs")?;
    let params: SeismicParameters = arg(args, "seismic_parameters")?;
    let result = crate::seismic_loads::calculate_seismic_loads(
        &elevations,
        &loads,
        &params,
        &ctx.config.elf,
    )?;
    let load_data = build_load_data(&elevations, &loads, &result);
    let ld = to_value(&load_data);
    let mut output = to_value(&result);
    output["load_data"] = ld.clone();
    Ok(ToolOutput {
        output,
        output_schema: None,
        writes: vec![write("load_data", ld, Some("load_data"))],
    })
}

fn generate_model(
    ctx: &mut ToolContext<'_>,
    args: &Map<String, Value>,
) -> Result<ToolOutput, ToolFailure> {
    let description: String = arg(args, "description")?;
    let geom = problem_parser::extract_geometry(strip_annotations(&description))?;
    // prefer the documents carried in the description; fall back to memory
    let (section_note, load_note) = read_annotations(&description);
    let sections: SectionData = match section_note.filter(|v| !v.is_null()) {
        Some(v) => serde_json::from_value(v)
            .map_err(|e| ToolFailure::new("InputError", format!("section annotation: {e}")))?,
        None => stored(ctx.memory, "section_data")?,
    };
    let load_data: LoadData = match load_note.filter(|v| !v.is_null()) {
        Some(v) => serde_json::from_value(v)
            .map_err(|e| ToolFailure::new("InputError", format!("load annotation: {e}")))?,
        None => stored(ctx.memory, "load_data")?,
    };
    let missing =
        |m: &str| ToolFailure::new("ModelError", format!("{m} section has no properties"));
    let column = sections
        .properties(Member::Column)
        .ok_or_else(|| missing("column"))?;
    let brace = sections
        .properties(Member::Brace)
        .ok_or_else(|| missing("brace"))?;
    let e_ksi = sections
        .member(Member::Column)
        .and_then(|m| m.spec.elastic_modulus_ksi)
        .unwrap_or(sections.material.E);
    let (model, report) = generate_structural_model(
        &geom,
        ColumnSection {
            A: column.A,
            I: column.I,
        },
        BraceSection { A: brace.A },
        &load_data,
        e_ksi,
    )?;
    let doc = to_value(&model);
    ctx.artifacts
        .insert("structural_model.json".into(), doc.clone());
    Ok(ToolOutput::new(
        to_value(&report),
        vec![write("structural_model", doc, Some("structural_model"))],
    ))
}

fn run_analysis(
    ctx: &mut ToolContext<'_>,
    _: &Map<String, Value>,
) -> Result<ToolOutput, ToolFailure> {
    let model: StructuralModel = stored(ctx.memory, "structural_model")?;
    let load_data: LoadData = stored(ctx.memory, "load_data")?;
    let elf = &ctx.config.elf;
    let combos = default_combinations(elf.seismic_factor, elf.live_factor);
    let analysis = run_complete_analysis(&model, &load_data, &combos)?;
    ctx.artifacts.insert(
        "internal_forces.json".into(),
        analysis.internal_forces_document(),
    );
    let reactions: BTreeMap<&str, Value> = analysis
        .results
        .iter()
        .map(|r| {
            let fx: f64 = r.reactions.iter().map(|x| x.fx).sum();
            let fy: f64 = r.reactions.iter().map(|x| x.fy).sum();
            (r.case.as_str(), json!({"sum_fx": fx, "sum_fy": fy}))
        })
        .collect();
    let max_disp = analysis
        .results
        .iter()
        .flat_map(|r| &r.displacements)
        .fold(0.0f64, |m, d| m.max(d.ux.hypot(d.uy)));
    let doc = json!({
        "combinations": combos,
        "per_combination": analysis.per_combination,
        "envelope": analysis.envelope,
        "reactions": reactions,
        "max_displacement_in": max_disp,
    });
    Ok(ToolOutput::new(
        json!({
            "envelope": analysis.envelope,
            "per_combination": analysis.per_combination,
            "reactions": reactions,
        }),
        vec![write("analysis_results", doc, None)],
    ))
}

fn verify_structural_safety(
    _: &mut ToolContext<'_>,
    args: &Map<String, Value>,
) -> Result<ToolOutput, ToolFailure> {
    let capacities: BTreeMap<Category, crate::sections::SectionCapacities> =
        arg(args, "capacities")?;
    let demands: DemandSet = arg(args, "demands")?;
    let checks = verification::verify_structural_safety(&capacities, &demands)?;
    let doc = checks_document(&checks);
    let reported: Vec<Value> = checks
        .iter()
        .map(|c| json!({"category": c.category, "mode": c.mode, "ratio": c.reported_ratio()}))
        .collect();
    let mut output = doc.clone();
    output["reported_ratios"] = json!(reported);
    Ok(ToolOutput {
        output,
        output_schema: None,
        writes: vec![write("verification_results", doc, Some("check_result"))],
    })
}

fn get_analysis_context(
    ctx: &mut ToolContext<'_>,
    _: &Map<String, Value>,
) -> Result<ToolOutput, ToolFailure> {
    Ok(ToolOutput::new(
        verification::get_analysis_context(ctx.memory)?,
        vec![],
    ))
}
