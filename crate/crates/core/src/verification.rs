//! Demand/capacity checks and the final adequacy verdict.
//!
//! Ratios keep full precision for pass/fail; rounding to two decimals is a
//! reporting concern only. A ratio of exactly 1.0 passes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::fem_solver::ForceEnvelope;
use crate::memory::StructuralMemory;
use crate::sections::SectionCapacities;

pub const VERDICT_ADEQUATE: &str = "FINAL RESULT: STRUCTURALLY ADEQUATE";
pub const VERDICT_INADEQUATE: &str = "FINAL RESULT: STRUCTURALLY INADEQUATE";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerificationError {
    #[error("no {mode} capacity for {category}")]
    MissingCapacity { category: Category, mode: CheckMode },
    #[error("{category} {mode} capacity must be positive, got {value}")]
    NonPositiveCapacity {
        category: Category,
        mode: CheckMode,
        value: f64,
    },
    #[error("{category} {mode} demand must be a finite magnitude, got {value}")]
    InvalidDemand {
        category: Category,
        mode: CheckMode,
        value: f64,
    },
    #[error("torsion checks are not supported by a planar model")]
    TorsionUnsupported,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContextError {
    #[error("analysis context requires memory key `{0}`")]
    MissingKey(String),
    #[error("memory key `{key}` is malformed: {message}")]
    Malformed { key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Post,
    Brace,
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Category::Post => "post",
            Category::Brace => "brace",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    Tension,
    Compression,
    Bending,
    Deflection,
}

impl std::fmt::Display for CheckMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CheckMode::Tension => "tension",
            CheckMode::Compression => "compression",
            CheckMode::Bending => "bending",
            CheckMode::Deflection => "deflection",
        })
    }
}

/// Force magnitudes for one member category; `moment` in kip*in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryDemand {
    pub tension: f64,
    pub compression: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DemandSet {
    pub post: CategoryDemand,
    pub brace: CategoryDemand,
    /// Largest nodal translation, in; checked only against a configured limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_displacement_in: Option<f64>,
}

impl DemandSet {
    /// Posts are the beam-column elements and braces the trusses.
    pub fn from_envelope(env: &ForceEnvelope) -> Self {
        Self {
            post: CategoryDemand {
                tension: env.beams.max_tension,
                compression: env.beams.max_compression,
                moment: Some(env.beams.max_abs_moment),
            },
            brace: CategoryDemand {
                tension: env.trusses.max_tension,
                compression: env.trusses.max_compression,
                moment: None,
            },
            max_displacement_in: None,
        }
    }

    pub fn category(&self, c: Category) -> &CategoryDemand {
        match c {
            Category::Post => &self.post,
            Category::Brace => &self.brace,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationOptions {
    /// Enables a serviceability check of `max_displacement_in` when set.
    #[serde(default)]
    pub deflection_limit_in: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub category: Category,
    pub mode: CheckMode,
    pub demand: f64,
    pub capacity: f64,
    pub ratio: f64,
    pub pass: bool,
}

impl CheckResult {
    fn new(category: Category, mode: CheckMode, demand: f64, capacity: f64) -> Self {
        let ratio = demand / capacity;
        Self {
            category,
            mode,
            demand,
            capacity,
            ratio,
            pass: ratio <= 1.0,
        }
    }

    /// Ratio as reported, two decimals.
    pub fn reported_ratio(&self) -> f64 {
        (self.ratio * 100.0).round() / 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyAssessment {
    pub checks: Vec<CheckResult>,
    pub verdict: String,
}

impl SafetyAssessment {
    pub fn is_adequate(&self) -> bool {
        self.verdict == VERDICT_ADEQUATE
    }
}

pub fn verify_structural_safety(
    capacities: &BTreeMap<Category, SectionCapacities>,
    demands: &DemandSet,
) -> Result<Vec<CheckResult>, VerificationError> {
    verify_with_options(capacities, demands, &VerificationOptions::default())
}

/// One check per category and mode with a demand; the deflection check is
/// reported under `post` because it is a frame-level quantity.
pub fn verify_with_options(
    capacities: &BTreeMap<Category, SectionCapacities>,
    demands: &DemandSet,
    options: &VerificationOptions,
) -> Result<Vec<CheckResult>, VerificationError> {
    let mut checks = Vec::new();
    for category in [Category::Post, Category::Brace] {
        let d = demands.category(category);
        let cap = capacities.get(&category);
        let mut modes = vec![
            (CheckMode::Tension, d.tension, cap.map(|c| c.Pt)),
            (CheckMode::Compression, d.compression, cap.map(|c| c.Pc)),
        ];
        if let Some(m) = d.moment {
            modes.push((CheckMode::Bending, m, cap.and_then(|c| c.Mc)));
        }
        for (mode, demand, capacity) in modes {
            checks.push(check(category, mode, demand, capacity)?);
        }
    }
    if let (Some(limit), Some(disp)) = (options.deflection_limit_in, demands.max_displacement_in) {
        checks.push(check(
            Category::Post,
            CheckMode::Deflection,
            disp,
            Some(limit),
        )?);
    }
    Ok(checks)
}

fn check(
    category: Category,
    mode: CheckMode,
    demand: f64,
    capacity: Option<f64>,
) -> Result<CheckResult, VerificationError> {
    if !(demand.is_finite() && demand >= 0.0) {
        return Err(VerificationError::InvalidDemand {
            category,
            mode,
            value: demand,
        });
    }
    let capacity = capacity.ok_or(VerificationError::MissingCapacity { category, mode })?;
    if !(capacity > 0.0 && capacity.is_finite()) {
        return Err(VerificationError::NonPositiveCapacity {
            category,
            mode,
            value: capacity,
        });
    }
    Ok(CheckResult::new(category, mode, demand, capacity))
}

/// Document stored under `verification_results`; matches the `check_result` schema.
pub fn checks_document(checks: &[CheckResult]) -> Value {
    json!({
        "checks": checks,
        "all_pass": checks.iter().all(|c| c.pass),
    })
}

pub const CONTEXT_KEYS: [&str; 5] = [
    "seismic_parameters",
    "structural_model",
    "analysis_results",
    "section_data",
    "verification_results",
];

/// Everything the final assessment looks at, gathered from memory.
pub fn get_analysis_context(memory: &StructuralMemory) -> Result<Value, ContextError> {
    let mut doc = serde_json::Map::new();
    for key in CONTEXT_KEYS {
        let v = memory
            .get_non_null(key)
            .ok_or_else(|| ContextError::MissingKey(key.to_string()))?;
        doc.insert(key.to_string(), v.clone());
    }
    let forces = doc["analysis_results"]
        .get("envelope")
        .cloned()
        .ok_or_else(|| ContextError::Malformed {
            key: "analysis_results".into(),
            message: "no `envelope` field".into(),
        })?;
    doc.insert("processed_forces".into(), forces);
    if doc["verification_results"].get("checks").is_none() {
        return Err(ContextError::Malformed {
            key: "verification_results".into(),
            message: "no `checks` field".into(),
        });
    }
    Ok(Value::Object(doc))
}

/// Verdict from the checks carried in an analysis context. A context whose
/// checks cannot be read yields the inadequate verdict with no checks.
pub fn final_assessment(context: &Value) -> SafetyAssessment {
    let checks: Vec<CheckResult> = context
        .get("verification_results")
        .and_then(|v| v.get("checks"))
        .and_then(|c| serde_json::from_value(c.clone()).ok())
        .unwrap_or_default();
    let adequate = !checks.is_empty() && checks.iter().all(|c| c.pass && c.ratio <= 1.0);
    SafetyAssessment {
        checks,
        verdict: if adequate {
            VERDICT_ADEQUATE
        } else {
            VERDICT_INADEQUATE
        }
        .to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn golden_caps() -> BTreeMap<Category, SectionCapacities> {
        BTreeMap::from([
            (
                Category::Post,
                SectionCapacities {
                    Pt: 25.69,
                    Pc: 20.09,
                    Mc: Some(33.44),
                },
            ),
            (
                Category::Brace,
                SectionCapacities {
                    Pt: 7.50,
                    Pc: 5.09,
                    Mc: None,
                },
            ),
        ])
    }

    fn golden_demands() -> DemandSet {
        DemandSet {
            post: CategoryDemand {
                tension: 3.34,
                compression: 5.625,
                moment: Some(7.72),
            },
            brace: CategoryDemand {
                tension: 1.35,
                compression: 1.727,
                moment: None,
            },
            max_displacement_in: None,
        }
    }

    #[test]
    fn golden_ratios() {
        let checks = verify_structural_safety(&golden_caps(), &golden_demands()).unwrap();
        let r: Vec<(Category, CheckMode, f64)> = checks
            .iter()
            .map(|c| (c.category, c.mode, c.reported_ratio()))
            .collect();
        assert_eq!(
            r,
            vec![
                (Category::Post, CheckMode::Tension, 0.13),
                (Category::Post, CheckMode::Compression, 0.28),
                (Category::Post, CheckMode::Bending, 0.23),
                (Category::Brace, CheckMode::Tension, 0.18),
                (Category::Brace, CheckMode::Compression, 0.34),
            ]
        );
        assert!(checks.iter().all(|c| c.pass));
    }

    #[test]
    fn zero_demand_passes_everything() {
        let d = DemandSet {
            post: CategoryDemand {
                moment: Some(0.0),
                ..Default::default()
            },
            ..Default::default()
        };
        let checks = verify_structural_safety(&golden_caps(), &d).unwrap();
        assert!(checks.iter().all(|c| c.ratio == 0.0 && c.pass));
    }

    #[test]
    fn boundary_ratio_passes() {
        let mut d = golden_demands();
        d.brace.compression = 5.09;
        let checks = verify_structural_safety(&golden_caps(), &d).unwrap();
        let c = checks
            .iter()
            .find(|c| c.category == Category::Brace && c.mode == CheckMode::Compression)
            .unwrap();
        assert_eq!(c.ratio, 1.0);
        assert!(c.pass);
    }

    #[test]
    fn missing_moment_capacity_is_named() {
        let mut caps = golden_caps();
        caps.get_mut(&Category::Post).unwrap().Mc = None;
        let err = verify_structural_safety(&caps, &golden_demands()).unwrap_err();
        assert_eq!(
            err,
            VerificationError::MissingCapacity {
                category: Category::Post,
                mode: CheckMode::Bending
            }
        );
        assert_eq!(err.to_string(), "no bending capacity for post");
    }

    #[test]
    fn deflection_only_with_a_limit() {
        let mut d = golden_demands();
        d.max_displacement_in = Some(0.8);
        assert_eq!(
            verify_structural_safety(&golden_caps(), &d).unwrap().len(),
            5
        );
        let opts = VerificationOptions {
            deflection_limit_in: Some(0.5),
        };
        let checks = verify_with_options(&golden_caps(), &d, &opts).unwrap();
        let last = checks.last().unwrap();
        assert_eq!((last.mode, last.pass), (CheckMode::Deflection, false));
    }

    #[test]
    fn checks_document_is_schema_valid() {
        let checks = verify_structural_safety(&golden_caps(), &golden_demands()).unwrap();
        let doc = checks_document(&checks);
        assert!(crate::protocol::validate_payload("check_result", &doc)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn verdict_strings_are_exact() {
        let checks = verify_structural_safety(&golden_caps(), &golden_demands()).unwrap();
        let ctx = json!({"verification_results": checks_document(&checks)});
        let a = final_assessment(&ctx);
        assert_eq!(a.verdict.as_bytes(), b"FINAL RESULT: STRUCTURALLY ADEQUATE");
        let mut bad = checks.clone();
        bad[0].pass = false;
        bad[0].ratio = 1.5;
        let ctx = json!({"verification_results": checks_document(&bad)});
        assert_eq!(
            final_assessment(&ctx).verdict,
            "FINAL RESULT: STRUCTURALLY INADEQUATE"
        );
    }

    #[test]
    fn context_requires_keys() {
        let mut m = StructuralMemory::new();
        m.put(
            "seismic_parameters",
            json!({"Sa_02": 1.02}),
            crate::protocol::RoleName::SeismicAnalyst,
            4,
        )
        .unwrap();
        assert_eq!(
            get_analysis_context(&m).unwrap_err(),
            ContextError::MissingKey("structural_model".into())
        );
    }

    fn caps_strategy() -> impl Strategy<Value = [f64; 5]> {
        [
            0.5f64..50.0,
            0.5f64..50.0,
            0.5f64..50.0,
            0.5f64..50.0,
            0.5f64..50.0,
        ]
    }

    proptest! {
        #[test]
        fn homogeneous_in_common_scale(c in 0.01f64..100.0, d in [0.0f64..30.0, 0.0f64..30.0, 0.0f64..30.0, 0.0f64..10.0, 0.0f64..10.0], caps in caps_strategy()) {
            let build = |s: f64| {
                let caps = BTreeMap::from([
                    (Category::Post, SectionCapacities { Pt: caps[0] * s, Pc: caps[1] * s, Mc: Some(caps[2] * s) }),
                    (Category::Brace, SectionCapacities { Pt: caps[3] * s, Pc: caps[4] * s, Mc: None }),
                ]);
                let dem = DemandSet {
                    post: CategoryDemand { tension: d[0] * s, compression: d[1] * s, moment: Some(d[2] * s) },
                    brace: CategoryDemand { tension: d[3] * s, compression: d[4] * s, moment: None },
                    max_displacement_in: None,
                };
                verify_structural_safety(&caps, &dem).unwrap()
            };
            let (a, b) = (build(1.0), build(c));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.ratio - y.ratio).abs() <= 1e-12 * x.ratio.max(1.0));
            }
            let verdict = |v: &[CheckResult]| final_assessment(&json!({"verification_results": checks_document(v)})).verdict;
            // pass flags can differ only for ratios within rounding of 1.0
            if a.iter().all(|x| (x.ratio - 1.0).abs() > 1e-9) {
                prop_assert_eq!(verdict(&a), verdict(&b));
            }
        }

        #[test]
        fn more_demand_never_helps(bump in [0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0], scale in 0.1f64..8.0) {
            let base = golden_demands();
            let mut d = base;
            d.post.tension = base.post.tension * scale;
            d.post.compression = base.post.compression * scale;
            let mut up = d;
            up.post.tension += bump[0];
            up.post.compression += bump[1];
            up.post.moment = d.post.moment.map(|m| m + bump[2]);
            up.brace.tension += bump[3];
            up.brace.compression += bump[4];
            let v = |d: &DemandSet| {
                let checks = verify_structural_safety(&golden_caps(), d).unwrap();
                final_assessment(&json!({"verification_results": checks_document(&checks)})).is_adequate()
            };
            prop_assert!(v(&d) || !v(&up));
        }
    }
}
