use masse_core::fem_solver::assemble_and_solve;
use masse_core::memory::StructuralMemory;
use masse_core::model_builder::{
    BraceSection, ColumnSection, Element, ElementType, Materials, ModelSections, NodalLoad, Node,
    StructuralModel, Support, Units,
};
use masse_core::protocol::RoleName;
use masse_core::sections::channel_properties;
use masse_core::seismic_loads::{calculate_seismic_loads, ElfConfig};
use masse_core::seismic_retrieval::SeismicParameters;
use proptest::prelude::*;
use serde_json::Value;

const E: f64 = 29000.0;

/// Midpoint quadrature of the centerline channel: web strips plus two flange strips.
fn channel_oracle(d: f64, b: f64, t: f64) -> (f64, f64) {
    let n = 4000;
    let h = d / n as f64;
    let (mut area, mut inertia) = (0.0, 0.0);
    for k in 0..n {
        let y = -d / 2.0 + (k as f64 + 0.5) * h;
        area += t * h;
        inertia += y * y * t * h;
    }
    let flange = b * t;
    (
        area + 2.0 * flange,
        inertia + 2.0 * flange * (d / 2.0).powi(2),
    )
}

proptest! {
    #[test]
    fn channel_properties_match_strip_integration(
        d in 2.0f64..10.0,
        b in 0.5f64..4.0,
        t in 0.03f64..0.2,
    ) {
        let p = channel_properties(d, b, t).unwrap();
        let (a, i) = channel_oracle(d, b, t);
        prop_assert!((p.A - a).abs() <= 1e-9 * a);
        prop_assert!((p.I - i).abs() <= 1e-6 * i);
        prop_assert!((p.S - i / (d / 2.0)).abs() <= 1e-6 * p.S);
    }
}

#[test]
fn degenerate_channels_are_rejected() {
    assert!(channel_properties(1.0, 1.0, 0.5).is_err());
    assert!(channel_properties(0.0, 1.0, 0.1).is_err());
    assert!(channel_properties(f64::NAN, 1.0, 0.1).is_err());
}

fn levels() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::btree_map(1u32..400, 1.0f64..5000.0, 1..6).prop_map(|m| {
        m.into_iter()
            .map(|(h, w)| (f64::from(h) / 8.0, w))
            .collect()
    })
}

proptest! {
    #[test]
    fn story_forces_follow_the_weight_height_distribution(
        lv in levels(),
        sa in 0.05f64..2.0,
        rd_ro in 1.0f64..6.0,
    ) {
        let params = SeismicParameters::from_values([sa, sa * 0.8, sa * 0.4, sa * 0.2, 0.4, 0.6]);
        let cfg = ElfConfig { rd_ro, ..ElfConfig::default() };
        let mut hs: Vec<f64> = lv.iter().map(|l| l.0).collect();
        let mut ws: Vec<f64> = lv.iter().map(|l| l.1).collect();
        hs.reverse();
        ws.reverse();
        let r = calculate_seismic_loads(&hs, &ws, &params, &cfg).unwrap();

        let w_kip: f64 = lv.iter().map(|l| l.1 / 1000.0).sum();
        let v = sa * w_kip / rd_ro;
        let sum_wh: f64 = lv.iter().map(|l| l.1 / 1000.0 * l.0).sum();
        prop_assert!((r.base_shear_kip - v).abs() <= 1e-12 * v.max(1.0));
        prop_assert_eq!(r.forces.len(), lv.len());
        for (f, &(h, w)) in r.forces.iter().zip(&lv) {
            prop_assert_eq!(f.elevation_ft, h);
            let expected = v * (w / 1000.0 * h) / sum_wh;
            prop_assert!((f.force_kip - expected).abs() <= 1e-12 * v.max(1.0));
        }
    }
}

fn beam_model(span_ft: f64, a: f64, i: f64) -> StructuralModel {
    let half = span_ft / 2.0;
    StructuralModel {
        units: Units::default(),
        materials: Materials { E },
        sections: ModelSections {
            column: ColumnSection { A: a, I: i },
            brace: BraceSection { A: a },
        },
        nodes: [0.0, half, span_ft]
            .iter()
            .enumerate()
            .map(|(k, &x)| Node {
                id: k as u32 + 1,
                x,
                y: 0.0,
            })
            .collect(),
        elements: (1..=2)
            .map(|k| Element {
                id: k,
                kind: ElementType::ElasticBeamColumn,
                nodes: [k, k + 1],
                section: "column".into(),
                mat_tag: 1,
                transf_tag: Some(1),
            })
            .collect(),
        supports: vec![
            Support {
                node: 1,
                fixity: [1, 1, 1],
            },
            Support {
                node: 3,
                fixity: [1, 1, 1],
            },
        ],
        loads: vec![],
    }
}

proptest! {
    #[test]
    fn fixed_fixed_beam_matches_closed_form(
        span_ft in 2.0f64..30.0,
        p in 0.1f64..20.0,
        i in 0.5f64..50.0,
    ) {
        let model = beam_model(span_ft, 2.0, i);
        let load = NodalLoad { node: 2, fx: 0.0, fy: -p, mz: 0.0 };
        let r = assemble_and_solve(&model, &[load], "point").unwrap();
        let l = span_ft * 12.0;

        let mid = r.displacements.iter().find(|d| d.node == 2).unwrap();
        let delta = p * l.powi(3) / (192.0 * E * i);
        prop_assert!((mid.uy + delta).abs() <= 1e-9 * delta);
        prop_assert!(mid.rz.abs() <= 1e-12);

        let end_moment = p * l / 8.0;
        for node in [1, 3] {
            let rx = r.reactions.iter().find(|x| x.node == node).unwrap();
            prop_assert!((rx.fy - p / 2.0).abs() <= 1e-9 * p);
            prop_assert!((rx.mz.abs() - end_moment).abs() <= 1e-9 * end_moment);
        }
    }
}

fn two_bar_truss(half_span_ft: f64, rise_ft: f64, a: f64) -> StructuralModel {
    StructuralModel {
        units: Units::default(),
        materials: Materials { E },
        sections: ModelSections {
            column: ColumnSection { A: a, I: 1.0 },
            brace: BraceSection { A: a },
        },
        nodes: vec![
            Node {
                id: 1,
                x: 0.0,
                y: 0.0,
            },
            Node {
                id: 2,
                x: half_span_ft,
                y: rise_ft,
            },
            Node {
                id: 3,
                x: 2.0 * half_span_ft,
                y: 0.0,
            },
        ],
        elements: (1..=2)
            .map(|k| Element {
                id: k,
                kind: ElementType::Truss,
                nodes: [k, k + 1],
                section: "brace".into(),
                mat_tag: 1,
                transf_tag: None,
            })
            .collect(),
        supports: vec![
            Support {
                node: 1,
                fixity: [1, 1, 0],
            },
            Support {
                node: 3,
                fixity: [1, 1, 0],
            },
        ],
        loads: vec![],
    }
}

proptest! {
    #[test]
    fn symmetric_two_bar_truss_matches_statics(
        half in 1.0f64..10.0,
        rise in 1.0f64..10.0,
        p in 0.1f64..10.0,
        a in 0.1f64..2.0,
    ) {
        let model = two_bar_truss(half, rise, a);
        let load = NodalLoad { node: 2, fx: 0.0, fy: -p, mz: 0.0 };
        let r = assemble_and_solve(&model, &[load], "apex").unwrap();

        let l = (half * half + rise * rise).sqrt() * 12.0;
        let sin = rise / (half * half + rise * rise).sqrt();
        let axial = p / (2.0 * sin);
        for f in &r.element_forces {
            prop_assert!((f.i.n.abs() - axial).abs() <= 1e-9 * axial);
        }
        let apex = r.displacements.iter().find(|d| d.node == 2).unwrap();
        let delta = p * l / (2.0 * E * a * sin * sin);
        prop_assert!((apex.uy + delta).abs() <= 1e-9 * delta);
        prop_assert!(apex.ux.abs() <= 1e-9 * delta);
    }
}

proptest! {
    #[test]
    fn memory_keeps_the_last_write_and_a_full_audit(
        writes in prop::collection::vec(("[a-c]{1,2}", -1000i64..1000), 1..30),
    ) {
        let mut memory = StructuralMemory::new();
        let mut expected = std::collections::BTreeMap::new();
        for (n, (key, v)) in writes.iter().enumerate() {
            let seq = memory.put(key, Value::from(*v), RoleName::ProjectManager, 1).unwrap();
            prop_assert_eq!(seq, n as u64);
            expected.insert(key.clone(), Value::from(*v));
        }
        prop_assert_eq!(memory.audit().len(), writes.len());
        prop_assert_eq!(memory.values(), expected);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snapshot.json");
        memory.save_snapshot(&path).unwrap();
        let restored = StructuralMemory::load_snapshot(&path).unwrap();
        prop_assert_eq!(restored.to_snapshot(), memory.to_snapshot());
    }
}
