//! Equivalent lateral force procedure and the seismic/live load cases.
//!
//! `V = S * Mv * IE / (Rd*Ro) * sum(W)` with weights in kip, distributed as
//! `F_i = V * W_i * h_i / sum(W_j * h_j)`. There is no concentrated top force.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seismic_retrieval::SeismicParameters;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoadError {
    #[error("invalid load input: {0}")]
    Input(String),
    #[error("sum of W*h is zero; story forces are undefined")]
    DegenerateDistribution,
    #[error("invalid ELF configuration: {0}")]
    Config(String),
}

impl LoadError {
    pub fn kind(&self) -> &'static str {
        match self {
            LoadError::Input(_) => "InputError",
            LoadError::DegenerateDistribution => "DegenerateDistribution",
            LoadError::Config(_) => "ConfigError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodRule {
    /// Short-period plateau: S = Sa(0.2).
    #[default]
    Plateau,
    /// Ta = 0.05 * h_m^0.75, with Sa interpolated linearly in ln(T) and clamped
    /// to the end values outside 0.2..2.0 s.
    Formula,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElfConfig {
    #[serde(rename = "Rd_Ro")]
    pub rd_ro: f64,
    #[serde(rename = "IE")]
    pub ie: f64,
    #[serde(rename = "Mv")]
    pub mv: f64,
    pub period_rule: PeriodRule,
    pub live_factor: f64,
    pub seismic_factor: f64,
    /// Height used by the period formula; the top load elevation when absent.
    pub structure_height_ft: Option<f64>,
}

impl Default for ElfConfig {
    fn default() -> Self {
        Self {
            rd_ro: 2.7,
            ie: 1.0,
            mv: 1.0,
            period_rule: PeriodRule::Plateau,
            live_factor: 1.5,
            seismic_factor: 1.0,
            structure_height_ft: None,
        }
    }
}

impl ElfConfig {
    pub fn validate(&self) -> Result<(), LoadError> {
        let factors = [
            ("Rd_Ro", self.rd_ro),
            ("IE", self.ie),
            ("Mv", self.mv),
            ("live_factor", self.live_factor),
            ("seismic_factor", self.seismic_factor),
            (
                "structure_height_ft",
                self.structure_height_ft.unwrap_or(1.0),
            ),
        ];
        match factors.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            Some((name, v)) => Err(LoadError::Config(format!("{name} = {v} must be positive"))),
            None => Ok(()),
        }
    }
}

const FT_TO_M: f64 = 0.3048;
const PERIODS_S: [f64; 4] = [0.2, 0.5, 1.0, 2.0];

pub fn fundamental_period_s(height_ft: f64) -> f64 {
    0.05 * (height_ft * FT_TO_M).powf(0.75)
}

/// Design spectral acceleration in g.
pub fn design_spectral_acceleration(
    params: &SeismicParameters,
    cfg: &ElfConfig,
    height_ft: f64,
) -> f64 {
    match cfg.period_rule {
        PeriodRule::Plateau => params.Sa_02,
        PeriodRule::Formula => {
            let sa = [params.Sa_02, params.Sa_05, params.Sa_10, params.Sa_20];
            let t = fundamental_period_s(height_ft);
            if t <= PERIODS_S[0] {
                return sa[0];
            }
            if t >= PERIODS_S[3] {
                return sa[3];
            }
            let k = PERIODS_S.windows(2).position(|w| t <= w[1]).unwrap_or(2);
            let (t0, t1) = (PERIODS_S[k], PERIODS_S[k + 1]);
            let r = (t / t0).ln() / (t1 / t0).ln();
            sa[k] + r * (sa[k + 1] - sa[k])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelForce {
    pub elevation_ft: f64,
    pub force_kip: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeismicLoadResult {
    pub spectral_acceleration_g: f64,
    pub total_weight_kip: f64,
    pub base_shear_kip: f64,
    /// Ascending elevation.
    pub forces: Vec<LevelForce>,
}

impl SeismicLoadResult {
    pub fn force_values(&self) -> Vec<f64> {
        self.forces.iter().map(|f| f.force_kip).collect()
    }
}

/// Story forces for the given levels. Levels are sorted by elevation first, so
/// the result does not depend on input order.
pub fn calculate_seismic_loads(
    elevations_ft: &[f64],
    loads_lbs: &[f64],
    params: &SeismicParameters,
    cfg: &ElfConfig,
) -> Result<SeismicLoadResult, LoadError> {
    cfg.validate()?;
    if elevations_ft.len() != loads_lbs.len() {
        return Err(LoadError::Input(format!(
            "{} elevations but {} loads",
            elevations_ft.len(),
            loads_lbs.len()
        )));
    }
    if elevations_ft.is_empty() {
        return Err(LoadError::Input("no levels".into()));
    }
    if let Some(field) = params.invalid_field() {
        return Err(LoadError::Input(format!(
            "seismic parameter {field} must be a non-negative number"
        )));
    }
    let mut levels: Vec<(f64, f64)> = elevations_ft
        .iter()
        .zip(loads_lbs)
        .map(|(&h, &w)| (h, w / 1000.0))
        .collect();
    if levels
        .iter()
        .any(|&(h, w)| !(h.is_finite() && h >= 0.0 && w.is_finite() && w >= 0.0))
    {
        return Err(LoadError::Input(
            "elevations and loads must be finite and non-negative".into(),
        ));
    }
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    if levels.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(LoadError::Input("elevations must be distinct".into()));
    }

    let top = levels.last().map_or(0.0, |l| l.0);
    let s = design_spectral_acceleration(params, cfg, cfg.structure_height_ft.unwrap_or(top));
    let total_weight_kip: f64 = levels.iter().map(|l| l.1).sum();
    let base_shear_kip = s * cfg.mv * cfg.ie / cfg.rd_ro * total_weight_kip;
    let sum_wh: f64 = levels.iter().map(|&(h, w)| w * h).sum();
    if sum_wh <= 0.0 {
        return Err(LoadError::DegenerateDistribution);
    }
    let forces = levels
        .iter()
        .map(|&(h, w)| LevelForce {
            elevation_ft: h,
            force_kip: base_shear_kip * (w * h) / sum_wh,
        })
        .collect();
    Ok(SeismicLoadResult {
        spectral_acceleration_g: s,
        total_weight_kip,
        base_shear_kip,
        forces,
    })
}

/// Lateral (seismic) and vertical (live) cases per level, unfactored, in kip.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadData {
    pub seismic: Vec<LevelForce>,
    pub live: Vec<LevelForce>,
}

/// Live loads come from the adjusted weights (kip, acting downward when
/// applied); seismic forces are taken from `seismic` as computed.
pub fn build_load_data(
    elevations_ft: &[f64],
    adjusted_lbs: &[f64],
    seismic: &SeismicLoadResult,
) -> LoadData {
    let mut live: Vec<LevelForce> = elevations_ft
        .iter()
        .zip(adjusted_lbs)
        .map(|(&h, &w)| LevelForce {
            elevation_ft: h,
            force_kip: w / 1000.0,
        })
        .collect();
    live.sort_by(|a, b| a.elevation_ft.total_cmp(&b.elevation_ft));
    LoadData {
        seismic: seismic.forces.clone(),
        live,
    }
}
