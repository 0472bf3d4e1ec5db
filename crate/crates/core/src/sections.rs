//! Thin-walled section properties and member capacities.
//!
//! Properties use the centerline idealization `A = (d + 2b) t`,
//! `I = t d^3 / 12 + 2 b t (d/2)^2`, `S = 2I/d`, which serves both lipless
//! U-channels and Z-sections about the web-normal axis.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem_parser::{Member, SectionSpec};

pub const BUILTIN_CAPACITY_CONFIG: &str = include_str!("../data/capacity_config.json");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SectionError {
    #[error("invalid section dimensions d={d}, b={b}, t={t}: {reason}")]
    Geometry {
        d: f64,
        b: f64,
        t: f64,
        reason: &'static str,
    },
    #[error("capacity calculation for {member}: {reason}")]
    Capacity { member: String, reason: String },
    #[error("capacity config: {0}")]
    Config(String),
}

impl SectionError {
    pub fn kind(&self) -> &'static str {
        match self {
            SectionError::Geometry { .. } => "SectionError",
            SectionError::Capacity { .. } => "CapacityError",
            SectionError::Config(_) => "ConfigError",
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionProperties {
    pub A: f64,
    pub I: f64,
    pub S: f64,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub E: f64,
    pub Fy: f64,
    pub phi_t: f64,
    pub phi_c: f64,
    pub phi_b: f64,
}

impl Default for MaterialSpec {
    fn default() -> Self {
        Self {
            E: 29000.0,
            Fy: 50.0,
            phi_t: 0.9,
            phi_c: 0.9,
            phi_b: 0.9,
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionCapacities {
    /// kip
    pub Pt: f64,
    /// kip
    pub Pc: f64,
    /// kip*in
    #[serde(default)]
    pub Mc: Option<f64>,
}

impl SectionCapacities {
    pub fn scaled(self, c: f64) -> Self {
        Self {
            Pt: self.Pt * c,
            Pc: self.Pc * c,
            Mc: self.Mc.map(|m| m * c),
        }
    }
}

fn thin_walled(d: f64, b: f64, t: f64) -> Result<SectionProperties, SectionError> {
    let err = |reason| Err(SectionError::Geometry { d, b, t, reason });
    if !(d.is_finite() && b.is_finite() && t.is_finite()) {
        return err("dimensions must be finite");
    }
    if d <= 0.0 || t <= 0.0 || b < 0.0 {
        return err("depth and thickness must be positive, flange non-negative");
    }
    if 2.0 * t >= d || (b > 0.0 && 2.0 * t >= b) {
        return err("thickness must be under half of depth and flange");
    }
    let a = (d + 2.0 * b) * t;
    let i = t * d.powi(3) / 12.0 + 2.0 * b * t * (d / 2.0).powi(2);
    Ok(SectionProperties {
        A: a,
        I: i,
        S: 2.0 * i / d,
    })
}

/// Lipless U-channel, centerline model. A flange of 0 gives the web rectangle.
pub fn channel_properties(d: f64, b: f64, t: f64) -> Result<SectionProperties, SectionError> {
    thin_walled(d, b, t)
}

/// Z-section, centerline model; same strong-axis values as the channel.
pub fn zsection_properties(d: f64, b: f64, t: f64) -> Result<SectionProperties, SectionError> {
    thin_walled(d, b, t)
}

/// How a member's capacities are obtained.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CapacityMode {
    /// `Pt = phi_t A Fy`, `Pc = phi_c min(A Fy, pi^2 E I / (K L)^2)`, `Mc = phi_b S Fy`.
    Formula,
    /// Values used verbatim.
    Direct {
        Pt: f64,
        Pc: f64,
        #[serde(default)]
        Mc: Option<f64>,
    },
}

impl CapacityMode {
    pub fn name(&self) -> &'static str {
        match self {
            CapacityMode::Formula => "formula",
            CapacityMode::Direct { .. } => "direct",
        }
    }
}

/// `length_in` and `k` are only read in formula mode.
pub fn calculate_section_capacities(
    props: &SectionProperties,
    mat: &MaterialSpec,
    length_in: f64,
    k: f64,
    mode: &CapacityMode,
) -> Result<SectionCapacities, SectionError> {
    let cap_err = |reason: String| SectionError::Capacity {
        member: String::from("section"),
        reason,
    };
    match *mode {
        CapacityMode::Direct { Pt, Pc, Mc } => {
            if !(Pt > 0.0 && Pc > 0.0 && Mc.is_none_or(|m| m > 0.0)) {
                return Err(cap_err("direct capacities must be positive".into()));
            }
            Ok(SectionCapacities { Pt, Pc, Mc })
        }
        CapacityMode::Formula => {
            if !(length_in.is_finite() && length_in > 0.0) {
                return Err(cap_err(format!(
                    "unbraced length {length_in} in is not positive"
                )));
            }
            if !(k.is_finite() && k > 0.0) {
                return Err(cap_err(format!(
                    "effective length factor {k} is not positive"
                )));
            }
            let squash = props.A * mat.Fy;
            let pe = PI * PI * mat.E * props.I / (k * length_in).powi(2);
            Ok(SectionCapacities {
                Pt: mat.phi_t * squash,
                Pc: mat.phi_c * squash.min(pe),
                Mc: Some(mat.phi_b * props.S * mat.Fy),
            })
        }
    }
}

/// Where section properties come from.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PropertySource {
    /// Thin-walled formulas over the extracted dimensions.
    ThinWalled,
    /// Given values; `S` defaults to `2I/d`.
    Direct {
        A: f64,
        I: f64,
        #[serde(default)]
        S: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberCapacityConfig {
    #[serde(default = "thin_walled_source")]
    pub properties: PropertySource,
    #[serde(default = "formula_mode")]
    pub capacity: CapacityMode,
    #[serde(default = "unit_k")]
    pub k_factor: f64,
    /// Overrides the length written in the problem.
    #[serde(default)]
    pub length_ft: Option<f64>,
}

fn thin_walled_source() -> PropertySource {
    PropertySource::ThinWalled
}
fn formula_mode() -> CapacityMode {
    CapacityMode::Formula
}
fn unit_k() -> f64 {
    1.0
}
fn unit_scale() -> f64 {
    1.0
}

impl Default for MemberCapacityConfig {
    fn default() -> Self {
        Self {
            properties: PropertySource::ThinWalled,
            capacity: CapacityMode::Formula,
            k_factor: 1.0,
            length_ft: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    #[serde(default)]
    pub material: MaterialSpec,
    /// Multiplies every capacity after it is computed or read.
    #[serde(default = "unit_scale")]
    pub capacity_scale: f64,
    #[serde(default)]
    pub members: BTreeMap<Member, MemberCapacityConfig>,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self {
            material: MaterialSpec::default(),
            capacity_scale: 1.0,
            members: BTreeMap::new(),
        }
    }
}

impl CapacityConfig {
    /// The shipped configuration for the reference rack.
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN_CAPACITY_CONFIG).expect("shipped capacity config parses")
    }

    pub fn from_json(text: &str) -> Result<Self, SectionError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| SectionError::Config(e.to_string()))?;
        let m = cfg.material;
        if [m.E, m.Fy, m.phi_t, m.phi_c, m.phi_b, cfg.capacity_scale]
            .iter()
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(SectionError::Config(
                "material values and capacity_scale must be positive".into(),
            ));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSection {
    pub spec: SectionSpec,
    pub properties: Option<SectionProperties>,
    /// `direct`, `thin_walled`, or `none` when the dimensions are incomplete.
    pub property_source: String,
    pub capacities: Option<SectionCapacities>,
    /// `direct`, `formula`, or `none`.
    pub capacity_mode: String,
}

/// The section-design document shared with the other roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionData {
    pub material: MaterialSpec,
    pub members: BTreeMap<Member, MemberSection>,
}

impl SectionData {
    pub fn member(&self, m: Member) -> Option<&MemberSection> {
        self.members.get(&m)
    }

    pub fn properties(&self, m: Member) -> Option<SectionProperties> {
        self.member(m).and_then(|s| s.properties)
    }

    pub fn capacities(&self, m: Member) -> Option<SectionCapacities> {
        self.member(m).and_then(|s| s.capacities)
    }
}

/// Properties and capacities for every extracted member.
///
/// A member whose dimensions are incomplete and that has no direct values
/// (the beam given only as "4 in Z-section") is carried with null
/// properties and capacities rather than failing the whole step.
pub fn design_sections(
    specs: &[SectionSpec],
    cfg: &CapacityConfig,
) -> Result<SectionData, SectionError> {
    let mut members = BTreeMap::new();
    for spec in specs {
        let member_cfg = cfg.members.get(&spec.member).cloned().unwrap_or_default();
        let name = spec.member.as_str();
        let with_member = |e: SectionError| match e {
            SectionError::Capacity { reason, .. } => SectionError::Capacity {
                member: name.to_string(),
                reason,
            },
            other => other,
        };
        let (properties, property_source) = match member_cfg.properties {
            PropertySource::Direct { A, I, S } => {
                if !(A > 0.0 && I > 0.0 && S.is_none_or(|s| s > 0.0)) {
                    return Err(SectionError::Config(format!(
                        "direct properties for {name} must be positive"
                    )));
                }
                let s = S.unwrap_or(2.0 * I / spec.depth_in);
                (Some(SectionProperties { A, I, S: s }), "direct")
            }
            PropertySource::ThinWalled => match spec.dims() {
                Some((d, b, t)) => (Some(thin_walled(d, b, t)?), "thin_walled"),
                None => (None, "none"),
            },
        };
        let length_in = member_cfg.length_ft.or(spec.length_ft).unwrap_or(f64::NAN) * 12.0;
        let capacities = match (&properties, &member_cfg.capacity) {
            (_, mode @ CapacityMode::Direct { .. }) => Some(
                calculate_section_capacities(
                    &SectionProperties {
                        A: 1.0,
                        I: 1.0,
                        S: 1.0,
                    },
                    &cfg.material,
                    length_in,
                    member_cfg.k_factor,
                    mode,
                )
                .map_err(with_member)?,
            ),
            (Some(p), mode @ CapacityMode::Formula) => Some(
                calculate_section_capacities(
                    p,
                    &cfg.material,
                    length_in,
                    member_cfg.k_factor,
                    mode,
                )
                .map_err(with_member)?,
            ),
            (None, CapacityMode::Formula) => None,
        };
        let capacity_mode = if capacities.is_some() {
            member_cfg.capacity.name()
        } else {
            "none"
        };
        members.insert(
            spec.member,
            MemberSection {
                spec: spec.clone(),
                properties,
                property_source: property_source.to_string(),
                capacities: capacities.map(|c| c.scaled(cfg.capacity_scale)),
                capacity_mode: capacity_mode.to_string(),
            },
        );
    }
    Ok(SectionData {
        material: cfg.material,
        members,
    })
}
