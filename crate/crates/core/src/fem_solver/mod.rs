//! Linear-elastic 2D frame and truss analysis by the direct stiffness method.
//!
//! Model coordinates are in feet and converted to inches here; forces are kip,
//! moments kip*in. End forces use local axes with tension-positive `N`.

pub mod linalg;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model_builder::{ElementType, NodalLoad, StructuralModel};
use crate::seismic_loads::LoadData;
use linalg::{cholesky, DenseMatrix};

const FT_TO_IN: f64 = 12.0;
/// Relative pivot threshold for declaring the constrained system singular.
const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FemError {
    #[error("stiffness matrix is singular (mechanism); deficient DOFs: {}", .dofs.join(", "))]
    SingularSystem { dofs: Vec<String> },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("load combination {combo}: unknown case `{case}` (expected `seismic` or `live`)")]
    Combo { combo: String, case: String },
    #[error("cannot write internal forces to {path}: {message}")]
    Io { path: String, message: String },
}

impl FemError {
    pub fn kind(&self) -> &'static str {
        match self {
            FemError::SingularSystem { .. } => "SingularSystem",
            FemError::InvalidModel(_) => "ModelError",
            FemError::Combo { .. } => "ComboError",
            FemError::Io { .. } => "IoError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dof {
    Free(usize),
    Fixed,
    /// Rotation at a node touched only by trusses; carries no stiffness.
    Inactive,
}

/// Equation numbering: `dofs[node_index] = [ux, uy, rz]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub dofs: Vec<[Dof; 3]>,
    pub free_count: usize,
}

impl DofMap {
    pub fn build(model: &StructuralModel) -> Result<Self, FemError> {
        let index = node_index(model)?;
        let mut has_frame = vec![false; model.nodes.len()];
        for e in model.beam_columns() {
            for id in e.nodes {
                has_frame[index[&id]] = true;
            }
        }
        let mut fixed = vec![[false; 3]; model.nodes.len()];
        for s in &model.supports {
            let i = *index.get(&s.node).ok_or_else(|| {
                FemError::InvalidModel(format!("support at missing node {}", s.node))
            })?;
            for (f, &code) in fixed[i].iter_mut().zip(&s.fixity) {
                *f |= code == 1;
            }
        }
        let mut next = 0;
        let mut dofs = Vec::with_capacity(model.nodes.len());
        for i in 0..model.nodes.len() {
            let mut d = [Dof::Fixed; 3];
            for k in 0..3 {
                d[k] = if fixed[i][k] {
                    Dof::Fixed
                } else if k == 2 && !has_frame[i] {
                    Dof::Inactive
                } else {
                    next += 1;
                    Dof::Free(next - 1)
                };
            }
            dofs.push(d);
        }
        Ok(Self {
            dofs,
            free_count: next,
        })
    }
}

fn node_index(model: &StructuralModel) -> Result<BTreeMap<u32, usize>, FemError> {
    let mut index = BTreeMap::new();
    for (i, n) in model.nodes.iter().enumerate() {
        if index.insert(n.id, i).is_some() {
            return Err(FemError::InvalidModel(format!(
                "duplicate node id {}",
                n.id
            )));
        }
    }
    Ok(index)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndForce {
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementEndForces {
    pub element_id: u32,
    pub kind: ElementType,
    pub i: EndForce,
    pub j: EndForce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeDisplacement {
    pub node: u32,
    /// in
    pub ux: f64,
    /// in
    pub uy: f64,
    /// rad
    pub rz: f64,
}

/// Reaction at a supported node; components at unrestrained DOFs are 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub node: u32,
    pub fx: f64,
    pub fy: f64,
    /// kip*in
    pub mz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub case: String,
    pub displacements: Vec<NodeDisplacement>,
    pub reactions: Vec<Reaction>,
    pub element_forces: Vec<ElementEndForces>,
}

struct Geometry {
    /// element length, in
    l: f64,
    c: f64,
    s: f64,
}

fn element_geometry(
    model: &StructuralModel,
    ids: [u32; 2],
    index: &BTreeMap<u32, usize>,
) -> Result<Geometry, FemError> {
    let a = &model.nodes[index[&ids[0]]];
    let b = &model.nodes[index[&ids[1]]];
    let dx = (b.x - a.x) * FT_TO_IN;
    let dy = (b.y - a.y) * FT_TO_IN;
    let l = dx.hypot(dy);
    if !(l > 0.0 && l.is_finite()) {
        return Err(FemError::InvalidModel(format!(
            "zero-length element between nodes {} and {}",
            ids[0], ids[1]
        )));
    }
    Ok(Geometry {
        l,
        c: dx / l,
        s: dy / l,
    })
}

/// Local 6x6 stiffness of an Euler-Bernoulli beam-column.
fn frame_local(e: f64, a: f64, i: f64, l: f64) -> [[f64; 6]; 6] {
    let ea = e * a / l;
    let k1 = 12.0 * e * i / l.powi(3);
    let k2 = 6.0 * e * i / l.powi(2);
    let k3 = 4.0 * e * i / l;
    let k4 = 2.0 * e * i / l;
    [
        [ea, 0.0, 0.0, -ea, 0.0, 0.0],
        [0.0, k1, k2, 0.0, -k1, k2],
        [0.0, k2, k3, 0.0, -k2, k4],
        [-ea, 0.0, 0.0, ea, 0.0, 0.0],
        [0.0, -k1, -k2, 0.0, k1, -k2],
        [0.0, k2, k4, 0.0, -k2, k3],
    ]
}

/// Global-to-local rotation for a 6-DOF frame element.
fn rotation(c: f64, s: f64) -> [[f64; 6]; 6] {
    let mut t = [[0.0; 6]; 6];
    for b in [0, 3] {
        t[b][b] = c;
        t[b][b + 1] = s;
        t[b + 1][b] = -s;
        t[b + 1][b + 1] = c;
        t[b + 2][b + 2] = 1.0;
    }
    t
}

struct ElementMatrices {
    /// Global DOF slots `[ux_i, uy_i, rz_i, ux_j, uy_j, rz_j]`.
    slots: [Dof; 6],
    k_global: [[f64; 6]; 6],
    t: [[f64; 6]; 6],
    k_local: [[f64; 6]; 6],
}

fn element_matrices(
    model: &StructuralModel,
    dof_map: &DofMap,
    index: &BTreeMap<u32, usize>,
) -> Result<Vec<ElementMatrices>, FemError> {
    let e_mod = model.materials.E;
    let mut out = Vec::with_capacity(model.elements.len());
    for el in &model.elements {
        for id in el.nodes {
            if !index.contains_key(&id) {
                return Err(FemError::InvalidModel(format!(
                    "element {} references missing node {id}",
                    el.id
                )));
            }
        }
        let g = element_geometry(model, el.nodes, index)?;
        let (di, dj) = (
            dof_map.dofs[index[&el.nodes[0]]],
            dof_map.dofs[index[&el.nodes[1]]],
        );
        let k_local = match el.kind {
            ElementType::ElasticBeamColumn => {
                let sec = model.sections.column;
                frame_local(e_mod, sec.A, sec.I, g.l)
            }
            ElementType::Truss => {
                let ea = e_mod * model.sections.brace.A / g.l;
                let mut k = [[0.0; 6]; 6];
                k[0][0] = ea;
                k[0][3] = -ea;
                k[3][0] = -ea;
                k[3][3] = ea;
                k
            }
        };
        let t = rotation(g.c, g.s);
        // K = T^T k T
        let mut kt = [[0.0; 6]; 6];
        for r in 0..6 {
            for c in 0..6 {
                kt[r][c] = (0..6).map(|m| k_local[r][m] * t[m][c]).sum();
            }
        }
        let mut k_global = [[0.0; 6]; 6];
        for r in 0..6 {
            for c in 0..6 {
                k_global[r][c] = (0..6).map(|m| t[m][r] * kt[m][c]).sum();
            }
        }
        out.push(ElementMatrices {
            slots: [di[0], di[1], di[2], dj[0], dj[1], dj[2]],
            k_global,
            t,
            k_local,
        });
    }
    Ok(out)
}

/// Global stiffness over the free DOFs.
pub fn assemble_free_stiffness(model: &StructuralModel) -> Result<(DenseMatrix, DofMap), FemError> {
    let dof_map = DofMap::build(model)?;
    let index = node_index(model)?;
    let mut k = DenseMatrix::zeros(dof_map.free_count);
    for em in element_matrices(model, &dof_map, &index)? {
        for (r, sr) in em.slots.iter().enumerate() {
            let Dof::Free(gr) = *sr else { continue };
            for (c, sc) in em.slots.iter().enumerate() {
                if let Dof::Free(gc) = *sc {
                    k.add(gr, gc, em.k_global[r][c]);
                }
            }
        }
    }
    Ok((k, dof_map))
}

fn dof_label(model: &StructuralModel, dof_map: &DofMap, eq: usize) -> String {
    for (i, d) in dof_map.dofs.iter().enumerate() {
        for (k, name) in ["ux", "uy", "rz"].iter().enumerate() {
            if d[k] == Dof::Free(eq) {
                return format!("node {} {name}", model.nodes[i].id);
            }
        }
    }
    format!("equation {eq}")
}

/// Solves one load case. Load `mz` is read in kip*ft and applied in kip*in.
pub fn assemble_and_solve(
    model: &StructuralModel,
    nodal_loads: &[NodalLoad],
    case: &str,
) -> Result<AnalysisResult, FemError> {
    let (k, dof_map) = assemble_free_stiffness(model)?;
    let index = node_index(model)?;
    let n_nodes = model.nodes.len();

    // full nodal load vector, 3 per node
    let mut f_full = vec![0.0; 3 * n_nodes];
    for l in nodal_loads {
        let i = *index
            .get(&l.node)
            .ok_or_else(|| FemError::InvalidModel(format!("load at missing node {}", l.node)))?;
        f_full[3 * i] += l.fx;
        f_full[3 * i + 1] += l.fy;
        f_full[3 * i + 2] += l.mz * FT_TO_IN;
    }
    let mut f = vec![0.0; dof_map.free_count];
    for (i, d) in dof_map.dofs.iter().enumerate() {
        for kk in 0..3 {
            if let Dof::Free(eq) = d[kk] {
                f[eq] += f_full[3 * i + kk];
            }
        }
    }

    let chol = cholesky(&k, PIVOT_TOL).map_err(|eqs| FemError::SingularSystem {
        dofs: eqs.iter().map(|&e| dof_label(model, &dof_map, e)).collect(),
    })?;
    let u = chol.solve(&f);

    let value = |d: Dof| match d {
        Dof::Free(eq) => u[eq],
        _ => 0.0,
    };
    let displacements = model
        .nodes
        .iter()
        .zip(&dof_map.dofs)
        .map(|(n, d)| NodeDisplacement {
            node: n.id,
            ux: value(d[0]),
            uy: value(d[1]),
            rz: value(d[2]),
        })
        .collect();

    // internal nodal forces K_e u_e summed per node, for reactions
    let mut internal = vec![0.0; 3 * n_nodes];
    let mut element_forces = Vec::with_capacity(model.elements.len());
    let matrices = element_matrices(model, &dof_map, &index)?;
    for (el, em) in model.elements.iter().zip(&matrices) {
        let ug: Vec<f64> = em.slots.iter().map(|&d| value(d)).collect();
        let ends = [index[&el.nodes[0]], index[&el.nodes[1]]];
        for r in 0..6 {
            let fr: f64 = (0..6).map(|c| em.k_global[r][c] * ug[c]).sum();
            internal[3 * ends[r / 3] + r % 3] += fr;
        }
        let ul: Vec<f64> = (0..6)
            .map(|r| (0..6).map(|c| em.t[r][c] * ug[c]).sum())
            .collect();
        let q: Vec<f64> = (0..6)
            .map(|r| (0..6).map(|c| em.k_local[r][c] * ul[c]).sum())
            .collect();
        let (i, j) = match el.kind {
            ElementType::ElasticBeamColumn => (
                EndForce {
                    n: -q[0],
                    v: q[1],
                    m: q[2],
                },
                EndForce {
                    n: q[3],
                    v: q[4],
                    m: q[5],
                },
            ),
            ElementType::Truss => (
                EndForce {
                    n: -q[0],
                    v: 0.0,
                    m: 0.0,
                },
                EndForce {
                    n: q[3],
                    v: 0.0,
                    m: 0.0,
                },
            ),
        };
        element_forces.push(ElementEndForces {
            element_id: el.id,
            kind: el.kind,
            i,
            j,
        });
    }

    let mut reactions = Vec::new();
    for (i, d) in dof_map.dofs.iter().enumerate() {
        if !d.contains(&Dof::Fixed) {
            continue;
        }
        let comp = |k: usize| {
            if d[k] == Dof::Fixed {
                internal[3 * i + k] - f_full[3 * i + k]
            } else {
                0.0
            }
        };
        reactions.push(Reaction {
            node: model.nodes[i].id,
            fx: comp(0),
            fy: comp(1),
            mz: comp(2),
        });
    }

    Ok(AnalysisResult {
        case: case.to_string(),
        displacements,
        reactions,
        element_forces,
    })
}

/// Named factored combination of the `seismic` and `live` cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadCombination {
    pub name: String,
    pub factors: BTreeMap<String, f64>,
}

impl LoadCombination {
    pub fn new(name: &str, factors: &[(&str, f64)]) -> Self {
        Self {
            name: name.to_string(),
            factors: factors.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

/// `seismic = seismic_factor * E`, `live = live_factor * L`.
pub fn default_combinations(seismic_factor: f64, live_factor: f64) -> Vec<LoadCombination> {
    vec![
        LoadCombination::new("seismic", &[("seismic", seismic_factor)]),
        LoadCombination::new("live", &[("live", live_factor)]),
    ]
}

/// Node receiving level loads at `elevation_ft`: the model load node at that
/// height if there is one, otherwise the leftmost node at that height.
fn level_node(model: &StructuralModel, elevation_ft: f64) -> Option<u32> {
    let at_height = |id: u32| {
        model
            .node(id)
            .is_some_and(|n| (n.y - elevation_ft).abs() <= 1e-9)
    };
    model
        .loads
        .iter()
        .map(|l| l.node)
        .find(|&id| at_height(id))
        .or_else(|| {
            model
                .nodes
                .iter()
                .filter(|n| (n.y - elevation_ft).abs() <= 1e-9)
                .min_by(|a, b| a.x.total_cmp(&b.x))
                .map(|n| n.id)
        })
}

/// Nodal loads of a combination: seismic forces act in +x, live loads in -y.
pub fn combination_loads(
    model: &StructuralModel,
    load_data: &LoadData,
    combo: &LoadCombination,
) -> Result<Vec<NodalLoad>, FemError> {
    let mut loads = Vec::new();
    for (case, &factor) in &combo.factors {
        let (levels, lateral) = match case.as_str() {
            "seismic" => (&load_data.seismic, true),
            "live" => (&load_data.live, false),
            other => {
                return Err(FemError::Combo {
                    combo: combo.name.clone(),
                    case: other.to_string(),
                })
            }
        };
        for lf in levels {
            let node = level_node(model, lf.elevation_ft).ok_or_else(|| {
                FemError::InvalidModel(format!("no node at load elevation {} ft", lf.elevation_ft))
            })?;
            let p = factor * lf.force_kip;
            loads.push(NodalLoad {
                node,
                fx: if lateral { p } else { 0.0 },
                fy: if lateral { 0.0 } else { -p },
                mz: 0.0,
            });
        }
    }
    Ok(loads)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BeamEnvelope {
    pub max_tension: f64,
    pub max_compression: f64,
    /// kip*in
    pub max_abs_moment: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrussEnvelope {
    pub max_tension: f64,
    pub max_compression: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ForceEnvelope {
    pub beams: BeamEnvelope,
    pub trusses: TrussEnvelope,
}

/// Extremes over every element end of every result. Tension is the largest
/// positive `N`, compression the largest magnitude of a negative `N`.
pub fn extract_envelope(results: &[AnalysisResult]) -> ForceEnvelope {
    let mut env = ForceEnvelope::default();
    for r in results {
        for ef in &r.element_forces {
            for end in [ef.i, ef.j] {
                let (t, c) = (end.n.max(0.0), (-end.n).max(0.0));
                match ef.kind {
                    ElementType::ElasticBeamColumn => {
                        env.beams.max_tension = env.beams.max_tension.max(t);
                        env.beams.max_compression = env.beams.max_compression.max(c);
                        env.beams.max_abs_moment = env.beams.max_abs_moment.max(end.m.abs());
                    }
                    ElementType::Truss => {
                        env.trusses.max_tension = env.trusses.max_tension.max(t);
                        env.trusses.max_compression = env.trusses.max_compression.max(c);
                    }
                }
            }
        }
    }
    env
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteAnalysis {
    pub results: Vec<AnalysisResult>,
    pub per_combination: BTreeMap<String, ForceEnvelope>,
    pub envelope: ForceEnvelope,
}

impl CompleteAnalysis {
    /// Largest beam-column axial force magnitude per combination and overall.
    pub fn governing_axial(&self) -> BTreeMap<String, f64> {
        let axial = |e: &ForceEnvelope| e.beams.max_tension.max(e.beams.max_compression);
        let mut out: BTreeMap<String, f64> = self
            .per_combination
            .iter()
            .map(|(k, e)| (k.clone(), axial(e)))
            .collect();
        out.insert("envelope".into(), axial(&self.envelope));
        out
    }

    /// Document written to `internal_forces.json`.
    pub fn internal_forces_document(&self) -> Value {
        let mut combos = serde_json::Map::new();
        for r in &self.results {
            let records: Vec<Value> = r
                .element_forces
                .iter()
                .flat_map(|ef| {
                    [("i", ef.i), ("j", ef.j)].map(|(end, f)| {
                        json!({"element_id": ef.element_id, "end": end, "N": f.n, "V": f.v, "M": f.m})
                    })
                })
                .collect();
            combos.insert(r.case.clone(), Value::Array(records));
        }
        json!({
            "note": "Braces are linear truss elements (axial only). N is tension-positive; V and M are in element local axes.",
            "units": {"force": "kip", "moment": "kip*in"},
            "combinations": combos,
        })
    }

    pub fn write_internal_forces(&self, path: &Path) -> Result<(), FemError> {
        let text = crate::memory::canonical_json(&self.internal_forces_document());
        std::fs::write(path, text).map_err(|e| FemError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

pub fn run_complete_analysis(
    model: &StructuralModel,
    load_data: &LoadData,
    combos: &[LoadCombination],
) -> Result<CompleteAnalysis, FemError> {
    if combos.is_empty() {
        return Err(FemError::Combo {
            combo: String::new(),
            case: "(no combinations)".into(),
        });
    }
    let mut results = Vec::with_capacity(combos.len());
    let mut per_combination = BTreeMap::new();
    for combo in combos {
        let loads = combination_loads(model, load_data, combo)?;
        let r = assemble_and_solve(model, &loads, &combo.name)?;
        per_combination.insert(
            combo.name.clone(),
            extract_envelope(std::slice::from_ref(&r)),
        );
        results.push(r);
    }
    let envelope = extract_envelope(&results);
    Ok(CompleteAnalysis {
        results,
        per_combination,
        envelope,
    })
}
