//! Payload schemas and their validator.
//!
//! Schemas are JSON files under `data/schemas/v1/` written in a subset of JSON
//! Schema: `type`, `required`, `properties`, `additionalProperties`, `items`,
//! `minItems`, `maxItems`, `minLength`, `minimum`, `exclusiveMinimum`,
//! `maximum`, `enum`, `const`, and local `$ref` into `$defs`. Tool parameter
//! schemas from `data/tools.json` are registered as `tool:<name>`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("unknown schema `{0}`")]
    UnknownSchema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaId {
    Decomposition,
    BuildingInfo,
    SeismicParams,
    StructuralModel,
    LoadData,
    SectionData,
    CheckResult,
}

impl SchemaId {
    pub const ALL: [SchemaId; 7] = [
        SchemaId::Decomposition,
        SchemaId::BuildingInfo,
        SchemaId::SeismicParams,
        SchemaId::StructuralModel,
        SchemaId::LoadData,
        SchemaId::SectionData,
        SchemaId::CheckResult,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemaId::Decomposition => "decomposition",
            SchemaId::BuildingInfo => "building_info",
            SchemaId::SeismicParams => "seismic_params",
            SchemaId::StructuralModel => "structural_model",
            SchemaId::LoadData => "load_data",
            SchemaId::SectionData => "section_data",
            SchemaId::CheckResult => "check_result",
        }
    }

    fn source(self) -> &'static str {
        match self {
            SchemaId::Decomposition => include_str!("../../data/schemas/v1/decomposition.json"),
            SchemaId::BuildingInfo => include_str!("../../data/schemas/v1/building_info.json"),
            SchemaId::SeismicParams => include_str!("../../data/schemas/v1/seismic_params.json"),
            SchemaId::StructuralModel => {
                include_str!("../../data/schemas/v1/structural_model.json")
            }
            SchemaId::LoadData => include_str!("../../data/schemas/v1/load_data.json"),
            SchemaId::SectionData => include_str!("../../data/schemas/v1/section_data.json"),
            SchemaId::CheckResult => include_str!("../../data/schemas/v1/check_result.json"),
        }
    }
}

impl fmt::Display for SchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One failed constraint; `path` is in `.field[index].field` form, `.` for the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

pub const TOOLS_JSON: &str = include_str!("../../data/tools.json");

pub struct SchemaRegistry {
    schemas: BTreeMap<String, Value>,
}

impl SchemaRegistry {
    /// The schemas shipped with the crate.
    pub fn builtin() -> &'static SchemaRegistry {
        static REGISTRY: OnceLock<SchemaRegistry> = OnceLock::new();
        REGISTRY.get_or_init(|| {
            let mut schemas = BTreeMap::new();
            for id in SchemaId::ALL {
                let schema: Value =
                    serde_json::from_str(id.source()).expect("shipped schema is valid JSON");
                schemas.insert(id.as_str().to_string(), schema);
            }
            let tools: Value = serde_json::from_str(TOOLS_JSON).expect("tools.json is valid");
            for (name, def) in tools.as_object().expect("tools.json is an object") {
                schemas.insert(format!("tool:{name}"), def["parameters"].clone());
            }
            SchemaRegistry { schemas }
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.schemas.keys().map(String::as_str)
    }

    pub fn get(&self, id: &str) -> Option<&Value> {
        self.schemas.get(id)
    }

    /// All violations of `payload` against schema `id`; empty means valid.
    pub fn validate(&self, id: &str, payload: &Value) -> Result<Vec<Violation>, SchemaError> {
        let schema = self
            .schemas
            .get(id)
            .ok_or_else(|| SchemaError::UnknownSchema(id.to_string()))?;
        let mut v = Validator {
            root: schema,
            out: Vec::new(),
        };
        v.check(schema, payload, &mut Vec::new());
        let mut violations = v.out;
        if id == SchemaId::StructuralModel.as_str() {
            violations.extend(model_reference_checks(payload));
        }
        Ok(violations)
    }
}

/// Validates against a built-in schema. An empty list means the payload is valid.
pub fn validate_payload(schema_id: &str, payload: &Value) -> Result<Vec<Violation>, SchemaError> {
    SchemaRegistry::builtin().validate(schema_id, payload)
}

#[derive(Clone)]
enum Seg {
    Key(String),
    Index(usize),
}

fn render_path(path: &[Seg]) -> String {
    if path.is_empty() {
        return ".".to_string();
    }
    let mut s = String::new();
    for seg in path {
        match seg {
            Seg::Key(k) => {
                s.push('.');
                s.push_str(k);
            }
            Seg::Index(i) => s.push_str(&format!("[{i}]")),
        }
    }
    s
}

struct Validator<'a> {
    root: &'a Value,
    out: Vec<Violation>,
}

impl<'a> Validator<'a> {
    fn fail(&mut self, path: &[Seg], message: impl Into<String>) {
        self.out.push(Violation {
            path: render_path(path),
            message: message.into(),
        });
    }

    fn resolve<'s>(&self, schema: &'s Value) -> &'s Value
    where
        'a: 's,
    {
        if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
            let name = r.trim_start_matches("#/$defs/");
            if let Some(target) = self.root.get("$defs").and_then(|d| d.get(name)) {
                return target;
            }
        }
        schema
    }

    fn check(&mut self, schema: &Value, value: &Value, path: &mut Vec<Seg>) {
        let schema = self.resolve(schema);
        if let Some(ty) = schema.get("type") {
            let allowed: Vec<&str> = match ty {
                Value::String(s) => vec![s.as_str()],
                Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
                _ => vec![],
            };
            if !allowed.iter().any(|t| type_matches(t, value)) {
                self.fail(
                    path,
                    format!(
                        "expected {}, found {}",
                        allowed.join(" or "),
                        type_name(value)
                    ),
                );
                return;
            }
        }
        if let Some(c) = schema.get("const") {
            if !json_eq(c, value) {
                self.fail(path, format!("expected constant {c}"));
            }
        }
        if let Some(options) = schema.get("enum").and_then(Value::as_array) {
            if !options.iter().any(|o| json_eq(o, value)) {
                self.fail(
                    path,
                    format!("{value} is not one of {}", Value::Array(options.clone())),
                );
            }
        }
        match value {
            Value::Object(map) => self.check_object(schema, map, path),
            Value::Array(items) => self.check_array(schema, items, path),
            Value::Number(n) => self.check_number(schema, n.as_f64().unwrap_or(f64::NAN), path),
            Value::String(s) => {
                if let Some(min) = schema.get("minLength").and_then(Value::as_u64) {
                    if (s.chars().count() as u64) < min {
                        self.fail(path, format!("string shorter than {min}"));
                    }
                }
            }
            _ => {}
        }
    }

    fn check_object(
        &mut self,
        schema: &Value,
        map: &serde_json::Map<String, Value>,
        path: &mut Vec<Seg>,
    ) {
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for key in required.iter().filter_map(Value::as_str) {
                if !map.contains_key(key) {
                    path.push(Seg::Key(key.to_string()));
                    self.fail(path, "required key missing");
                    path.pop();
                }
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (key, child) in map {
            path.push(Seg::Key(key.clone()));
            match props.and_then(|p| p.get(key)) {
                Some(child_schema) => self.check(child_schema, child, path),
                None => match schema.get("additionalProperties") {
                    Some(Value::Bool(false)) => self.fail(path, "unexpected key"),
                    Some(extra @ Value::Object(_)) => self.check(extra, child, path),
                    _ => {}
                },
            }
            path.pop();
        }
    }

    fn check_array(&mut self, schema: &Value, items: &[Value], path: &mut Vec<Seg>) {
        if let Some(min) = schema.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < min {
                self.fail(
                    path,
                    format!("expected at least {min} items, found {}", items.len()),
                );
            }
        }
        if let Some(max) = schema.get("maxItems").and_then(Value::as_u64) {
            if (items.len() as u64) > max {
                self.fail(
                    path,
                    format!("expected at most {max} items, found {}", items.len()),
                );
            }
        }
        if let Some(item_schema) = schema.get("items") {
            for (i, item) in items.iter().enumerate() {
                path.push(Seg::Index(i));
                self.check(item_schema, item, path);
                path.pop();
            }
        }
    }

    fn check_number(&mut self, schema: &Value, x: f64, path: &[Seg]) {
        if let Some(min) = schema.get("minimum").and_then(Value::as_f64) {
            if x < min {
                self.fail(path, format!("{x} is below the minimum {min}"));
            }
        }
        if let Some(min) = schema.get("exclusiveMinimum").and_then(Value::as_f64) {
            if x <= min {
                self.fail(path, format!("{x} must be greater than {min}"));
            }
        }
        if let Some(max) = schema.get("maximum").and_then(Value::as_f64) {
            if x > max {
                self.fail(path, format!("{x} is above the maximum {max}"));
            }
        }
    }
}

fn type_matches(ty: &str, value: &Value) -> bool {
    match ty {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "boolean" => value.is_boolean(),
        "null" => value.is_null(),
        "number" => value.is_number(),
        "integer" => match value {
            Value::Number(n) => {
                n.is_i64() || n.is_u64() || n.as_f64().is_some_and(|f| f.fract() == 0.0)
            }
            _ => false,
        },
        _ => false,
    }
}

fn type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Equality that treats `1` and `1.0` as the same number.
fn json_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        _ => a == b,
    }
}

/// Referential integrity of a structural model: node ids unique, every element,
/// support, and load refers to an existing node.
fn model_reference_checks(model: &Value) -> Vec<Violation> {
    let mut out = Vec::new();
    let Some(nodes) = model.get("nodes").and_then(Value::as_array) else {
        return out;
    };
    let mut ids = BTreeSet::new();
    for (i, node) in nodes.iter().enumerate() {
        if let Some(id) = node.get("id").and_then(Value::as_u64) {
            if !ids.insert(id) {
                out.push(Violation {
                    path: format!(".nodes[{i}].id"),
                    message: format!("duplicate node id {id}"),
                });
            }
        }
    }
    let mut check_ref = |section: &str, field: &str| {
        if let Some(items) = model.get(section).and_then(Value::as_array) {
            for (i, item) in items.iter().enumerate() {
                let refs: Vec<u64> = match item.get(field) {
                    Some(Value::Array(a)) => a.iter().filter_map(Value::as_u64).collect(),
                    Some(v) => v.as_u64().into_iter().collect(),
                    None => vec![],
                };
                for r in refs {
                    if !ids.contains(&r) {
                        out.push(Violation {
                            path: format!(".{section}[{i}].{field}"),
                            message: format!("node {r} does not exist"),
                        });
                    }
                }
            }
        }
    };
    check_ref("elements", "nodes");
    check_ref("supports", "node");
    check_ref("loads", "node");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn building_info_requires_location() {
        let payload = json!({
            "building_type": "racking_system",
            "floor_elevations_ft": [4.0, 8.5, 13.0],
            "loads_lbs": [1750, 1250, 1000],
            "dimensions": {"width_ft": 3.5, "height_ft": 16.0, "beam_length_ft": 8.0},
            "structural_info": ""
        });
        let v = validate_payload("building_info", &payload).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, ".location");
    }

    #[test]
    fn logged_seismic_payload_is_valid() {
        let payload = json!({"Sa_02": 1.02, "Sa_05": 0.942, "Sa_10": 0.037,
                             "Sa_20": 0.328, "PGA": 0.446, "PGV": 0.684});
        assert!(validate_payload("seismic_params", &payload)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn negative_seismic_value_is_flagged() {
        let payload = json!({"Sa_02": 1.02, "Sa_05": 0.942, "Sa_10": 0.037,
                             "Sa_20": 0.328, "PGA": -0.1, "PGV": 0.684});
        let v = validate_payload("seismic_params", &payload).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, ".PGA");
    }

    #[test]
    fn dangling_element_node_is_flagged() {
        let nodes: Vec<Value> = (1..=15)
            .map(|i| json!({"id": i, "x": 0.0, "y": i as f64}))
            .collect();
        let model = json!({
            "units": {"length": "ft (feet)", "force": "kip", "stiffness": "kip/in^2"},
            "materials": {"E": 29000.0},
            "sections": {"column": {"A": 0.705, "I": 1.144}, "brace": {"A": 0.162}},
            "nodes": nodes,
            "elements": [
                {"id": 1, "type": "elasticBeamColumn", "nodes": [1, 2], "section": "column", "matTag": 1, "transfTag": 1},
                {"id": 2, "type": "truss", "nodes": [3, 99], "section": "brace", "matTag": 1}
            ],
            "supports": [{"node": 1, "fixity": [1, 1, 1]}],
            "loads": []
        });
        let v = validate_payload("structural_model", &model).unwrap();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].path, ".elements[1].nodes");
    }

    #[test]
    fn type_mismatch_reports_nested_path() {
        let payload = json!({"seismic": [{"elevation_ft": 4.0, "force_kip": "big"}], "live": []});
        let v = validate_payload("load_data", &payload).unwrap();
        assert_eq!(v[0].path, ".seismic[0].force_kip");
    }

    #[test]
    fn unknown_schema_is_an_error() {
        assert_eq!(
            validate_payload("nope", &json!({})),
            Err(SchemaError::UnknownSchema("nope".into()))
        );
    }

    #[test]
    fn tool_parameter_schemas_are_registered() {
        let reg = SchemaRegistry::builtin();
        assert_eq!(reg.ids().filter(|id| id.starts_with("tool:")).count(), 15);
        let v = reg
            .validate("tool:get_memory_data", &json!({"key": 3}))
            .unwrap();
        assert_eq!(v[0].path, ".key");
    }
}
