//! Side-elevation frame model from the extracted geometry.
//!
//! Node order: load nodes on the loaded column line, then brace endpoints in
//! the order written, then column-line ends; coincident points are merged.
//! Each column line is split into beam-column segments at every node it
//! carries; each brace becomes one truss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem_parser::{GeometrySpec, Point, COORD_TOL_FT};
use crate::seismic_loads::LoadData;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("geometry has no column lines")]
    NoColumns,
    #[error("load elevation {elevation_ft} ft lies outside the loaded column line")]
    LoadOffColumn { elevation_ft: f64 },
    #[error("support at ({x}, {y}) does not coincide with a column node")]
    SupportOffFrame { x: f64, y: f64 },
    #[error("{} model check(s) failed: {}", .0.len(), .0.join("; "))]
    Validation(Vec<String>),
}

impl ModelError {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelError::Validation(_) => "ValidationError",
            _ => "ModelError",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub length: String,
    pub force: String,
    pub stiffness: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            length: "ft (feet)".into(),
            force: "kip".into(),
            stiffness: "kip/in^2".into(),
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Materials {
    pub E: f64,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnSection {
    pub A: f64,
    pub I: f64,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BraceSection {
    pub A: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSections {
    pub column: ColumnSection,
    pub brace: BraceSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementType {
    #[serde(rename = "elasticBeamColumn")]
    ElasticBeamColumn,
    #[serde(rename = "truss")]
    Truss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: u32,
    #[serde(rename = "type")]
    pub kind: ElementType,
    pub nodes: [u32; 2],
    pub section: String,
    #[serde(rename = "matTag")]
    pub mat_tag: u32,
    #[serde(rename = "transfTag", default, skip_serializing_if = "Option::is_none")]
    pub transf_tag: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub node: u32,
    pub fixity: [u8; 3],
}

/// Nodal load; `mz` in kip*ft like the coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodalLoad {
    pub node: u32,
    pub fx: f64,
    pub fy: f64,
    pub mz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralModel {
    pub units: Units,
    pub materials: Materials,
    pub sections: ModelSections,
    pub nodes: Vec<Node>,
    pub elements: Vec<Element>,
    pub supports: Vec<Support>,
    /// The seismic case; live loads are attached at analysis time.
    pub loads: Vec<NodalLoad>,
}

impl StructuralModel {
    pub fn node(&self, id: u32) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_at(&self, p: Point) -> Option<&Node> {
        self.nodes
            .iter()
            .find(|n| same_point(Point::new(n.x, n.y), p))
    }

    pub fn trusses(&self) -> impl Iterator<Item = &Element> {
        self.elements
            .iter()
            .filter(|e| e.kind == ElementType::Truss)
    }

    pub fn beam_columns(&self) -> impl Iterator<Item = &Element> {
        self.elements
            .iter()
            .filter(|e| e.kind == ElementType::ElasticBeamColumn)
    }

    /// Model file text, fields in declaration order.
    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub node_count: usize,
    pub element_count: usize,
    pub brace_count: usize,
    /// Beam-column segments after splitting at intermediate nodes.
    pub beamcolumn_count: usize,
    pub column_line_count: usize,
    pub load_nodes: Vec<u32>,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
}

fn same_point(a: Point, b: Point) -> bool {
    (a.x - b.x).abs() <= COORD_TOL_FT && (a.y - b.y).abs() <= COORD_TOL_FT
}

fn on_line(p: Point, line: &crate::problem_parser::Segment) -> bool {
    let (lo, hi) = (line.start.y.min(line.end.y), line.start.y.max(line.end.y));
    (p.x - line.start.x).abs() <= COORD_TOL_FT
        && p.y >= lo - COORD_TOL_FT
        && p.y <= hi + COORD_TOL_FT
}

/// Index of the column line that receives the level loads: the leftmost.
fn loaded_line(geom: &GeometrySpec) -> Option<usize> {
    (0..geom.column_lines.len()).min_by(|&a, &b| {
        geom.column_lines[a]
            .start
            .x
            .total_cmp(&geom.column_lines[b].start.x)
    })
}

pub fn generate_structural_model(
    geom: &GeometrySpec,
    column: ColumnSection,
    brace: BraceSection,
    load_data: &LoadData,
    e_ksi: f64,
) -> Result<(StructuralModel, ModelReport), ModelError> {
    let line = &geom.column_lines[loaded_line(geom).ok_or(ModelError::NoColumns)?];
    let line_x = line.start.x;

    let mut points: Vec<Point> = Vec::new();
    let add = |p: Point, points: &mut Vec<Point>| -> u32 {
        match points.iter().position(|q| same_point(*q, p)) {
            Some(i) => i as u32 + 1,
            None => {
                points.push(p);
                points.len() as u32
            }
        }
    };

    let mut load_nodes = Vec::new();
    for &h in &geom.load_elevations_ft {
        let p = Point::new(line_x, h);
        if !on_line(p, line) {
            return Err(ModelError::LoadOffColumn { elevation_ft: h });
        }
        load_nodes.push(add(p, &mut points));
    }
    let mut brace_ends = Vec::new();
    for b in &geom.brace_segments {
        brace_ends.push([add(b.start, &mut points), add(b.end, &mut points)]);
    }
    for c in &geom.column_lines {
        add(c.start, &mut points);
        add(c.end, &mut points);
    }
    let nodes: Vec<Node> = points
        .iter()
        .enumerate()
        .map(|(i, p)| Node {
            id: i as u32 + 1,
            x: p.x,
            y: p.y,
        })
        .collect();

    let mut elements = Vec::new();
    for c in &geom.column_lines {
        let mut on: Vec<&Node> = nodes
            .iter()
            .filter(|n| on_line(Point::new(n.x, n.y), c))
            .collect();
        on.sort_by(|a, b| a.y.total_cmp(&b.y));
        for pair in on.windows(2) {
            elements.push(Element {
                id: elements.len() as u32 + 1,
                kind: ElementType::ElasticBeamColumn,
                nodes: [pair[0].id, pair[1].id],
                section: "column".into(),
                mat_tag: 1,
                transf_tag: Some(1),
            });
        }
    }
    let beamcolumn_count = elements.len();
    for ends in &brace_ends {
        elements.push(Element {
            id: elements.len() as u32 + 1,
            kind: ElementType::Truss,
            nodes: *ends,
            section: "brace".into(),
            mat_tag: 1,
            transf_tag: None,
        });
    }

    let mut supports = Vec::new();
    for &s in &geom.supports {
        let node = nodes
            .iter()
            .find(|n| same_point(Point::new(n.x, n.y), s))
            .ok_or(ModelError::SupportOffFrame { x: s.x, y: s.y })?;
        supports.push(Support {
            node: node.id,
            fixity: [1, 1, 1],
        });
    }

    let mut loads = Vec::new();
    for f in &load_data.seismic {
        let node = nodes
            .iter()
            .find(|n| same_point(Point::new(n.x, n.y), Point::new(line_x, f.elevation_ft)))
            .ok_or(ModelError::LoadOffColumn {
                elevation_ft: f.elevation_ft,
            })?;
        loads.push(NodalLoad {
            node: node.id,
            fx: f.force_kip,
            fy: 0.0,
            mz: 0.0,
        });
    }

    let model = StructuralModel {
        units: Units::default(),
        materials: Materials { E: e_ksi },
        sections: ModelSections { column, brace },
        nodes,
        elements,
        supports,
        loads,
    };
    validate_model(&model, geom).map_err(ModelError::Validation)?;

    let xs = model.nodes.iter().map(|n| n.x);
    let ys = model.nodes.iter().map(|n| n.y);
    let range = |it: &mut dyn Iterator<Item = f64>| {
        it.fold([f64::INFINITY, f64::NEG_INFINITY], |r, v| {
            [r[0].min(v), r[1].max(v)]
        })
    };
    let report = ModelReport {
        node_count: model.nodes.len(),
        element_count: model.elements.len(),
        brace_count: model.trusses().count(),
        beamcolumn_count,
        column_line_count: geom.column_lines.len(),
        load_nodes,
        x_range: range(&mut xs.clone()),
        y_range: range(&mut ys.clone()),
    };
    Ok((model, report))
}

/// Structural checks of a model against the geometry it should represent.
/// Returns every violation found rather than stopping at the first.
pub fn validate_model(model: &StructuralModel, geom: &GeometrySpec) -> Result<(), Vec<String>> {
    let mut v = Vec::new();
    let pos = |id: u32| model.node(id).map(|n| Point::new(n.x, n.y));

    for (i, n) in model.nodes.iter().enumerate() {
        if n.id != i as u32 + 1 {
            v.push(format!(
                "node ids not sequential at position {i} (id {})",
                n.id
            ));
        }
        for m in &model.nodes[i + 1..] {
            if same_point(Point::new(n.x, n.y), Point::new(m.x, m.y)) {
                v.push(format!("nodes {} and {} share coordinates", n.id, m.id));
            }
        }
    }
    for e in &model.elements {
        let ends = [pos(e.nodes[0]), pos(e.nodes[1])];
        match ends {
            [Some(a), Some(b)] => {
                if same_point(a, b) {
                    v.push(format!("element {} has zero length", e.id));
                }
            }
            _ => v.push(format!("element {} references a missing node", e.id)),
        }
        match (e.kind, e.transf_tag) {
            (ElementType::Truss, Some(_)) => v.push(format!("truss {} carries a transfTag", e.id)),
            (ElementType::ElasticBeamColumn, None) => {
                v.push(format!("beam-column {} lacks a transfTag", e.id))
            }
            _ => {}
        }
    }

    let trusses: Vec<&Element> = model.trusses().collect();
    if trusses.len() != geom.brace_segments.len() {
        v.push(format!(
            "brace count {} ≠ {}",
            trusses.len(),
            geom.brace_segments.len()
        ));
    }
    for b in &geom.brace_segments {
        let matches = trusses
            .iter()
            .filter(|t| match (pos(t.nodes[0]), pos(t.nodes[1])) {
                (Some(p), Some(q)) => {
                    (same_point(p, b.start) && same_point(q, b.end))
                        || (same_point(p, b.end) && same_point(q, b.start))
                }
                _ => false,
            })
            .count();
        if matches != 1 {
            v.push(format!(
                "brace ({},{})->({},{}) appears {matches} times",
                b.start.x, b.start.y, b.end.x, b.end.y
            ));
        }
    }

    for &h in &geom.load_elevations_ft {
        let nodded = model.nodes.iter().any(|n| {
            (n.y - h).abs() <= COORD_TOL_FT
                && geom
                    .column_lines
                    .iter()
                    .any(|c| on_line(Point::new(n.x, n.y), c))
        });
        if !nodded {
            v.push(format!("load elevation {h} unnodded"));
        }
    }
    for s in &geom.supports {
        let ok = model
            .supports
            .iter()
            .any(|sup| pos(sup.node).is_some_and(|p| same_point(p, *s)));
        if !ok {
            v.push(format!("no support at ({}, {})", s.x, s.y));
        }
    }
    for sup in &model.supports {
        if pos(sup.node).is_none() {
            v.push(format!("support references missing node {}", sup.node));
        }
    }
    for l in &model.loads {
        if pos(l.node).is_none() {
            v.push(format!("load references missing node {}", l.node));
        }
    }

    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem_parser::{extract_geometry, split_problem_description, Segment};
    use crate::seismic_loads::LevelForce;
    use std::collections::BTreeSet;

    fn golden_geom() -> GeometrySpec {
        let d = split_problem_description(include_str!("../data/golden/problem.txt")).unwrap();
        extract_geometry(&d.saa_input).unwrap()
    }

    fn loads() -> LoadData {
        let lf = |h, f| LevelForce {
            elevation_ft: h,
            force_kip: f,
        };
        LoadData {
            seismic: vec![lf(4.0, 0.396), lf(8.5, 0.505), lf(13.0, 0.515)],
            live: vec![lf(4.0, 1.875), lf(8.5, 1.125), lf(13.0, 0.75)],
        }
    }

    fn build(g: &GeometrySpec) -> Result<(StructuralModel, ModelReport), ModelError> {
        generate_structural_model(
            g,
            ColumnSection { A: 0.705, I: 1.144 },
            BraceSection { A: 0.162 },
            &loads(),
            29000.0,
        )
    }

    #[test]
    fn golden_counts_and_ranges() {
        let (m, r) = build(&golden_geom()).unwrap();
        assert_eq!(r.node_count, 15);
        assert_eq!(r.brace_count, 8);
        assert_eq!(r.column_line_count, 2);
        assert_eq!(r.x_range, [0.0, 3.5]);
        assert_eq!(r.y_range, [0.0, 16.0]);
        assert_eq!(r.load_nodes, vec![1, 2, 3]);
        assert_eq!(
            m.nodes[0],
            Node {
                id: 1,
                x: 0.0,
                y: 4.0
            }
        );
        validate_model(&m, &golden_geom()).unwrap();
    }

    #[test]
    fn golden_segmentation_matches_node_gaps() {
        let g = golden_geom();
        let (m, r) = build(&g).unwrap();
        // oracle: distinct y values on each line from the written coordinates
        let mut per_line = [BTreeSet::new(), BTreeSet::new()];
        for (k, line) in g.column_lines.iter().enumerate() {
            per_line[k].insert((line.start.y * 1000.0) as i64);
            per_line[k].insert((line.end.y * 1000.0) as i64);
            for b in &g.brace_segments {
                for p in [b.start, b.end] {
                    if p.x == line.start.x {
                        per_line[k].insert((p.y * 1000.0) as i64);
                    }
                }
            }
        }
        for h in &g.load_elevations_ft {
            per_line[0].insert((h * 1000.0) as i64);
        }
        assert_eq!(per_line[0].len(), 9);
        assert_eq!(per_line[1].len(), 6);
        assert_eq!(r.beamcolumn_count, 8 + 5);
        assert_eq!(m.beam_columns().count(), 13);
    }

    #[test]
    fn every_brace_is_one_truss_with_exact_coordinates() {
        let g = golden_geom();
        let (m, _) = build(&g).unwrap();
        for (b, t) in g.brace_segments.iter().zip(m.trusses()) {
            let p = m.node(t.nodes[0]).unwrap();
            let q = m.node(t.nodes[1]).unwrap();
            assert_eq!(
                (p.x, p.y, q.x, q.y),
                (b.start.x, b.start.y, b.end.x, b.end.y)
            );
            assert_eq!(t.transf_tag, None);
        }
    }

    #[test]
    fn generation_is_byte_identical() {
        let a = build(&golden_geom()).unwrap().0.to_pretty_json();
        let b = build(&golden_geom()).unwrap().0.to_pretty_json();
        assert_eq!(a, b);
        let keys: Vec<&str> = [
            "\"units\"",
            "\"materials\"",
            "\"sections\"",
            "\"nodes\"",
            "\"elements\"",
            "\"supports\"",
            "\"loads\"",
        ]
        .to_vec();
        let positions: Vec<usize> = keys.iter().map(|k| a.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn deleted_brace_is_reported() {
        let g = golden_geom();
        let (mut m, _) = build(&g).unwrap();
        let idx = m
            .elements
            .iter()
            .position(|e| e.kind == ElementType::Truss)
            .unwrap();
        m.elements.remove(idx);
        let v = validate_model(&m, &g).unwrap_err();
        assert!(v.iter().any(|s| s == "brace count 7 ≠ 8"), "{v:?}");
    }

    #[test]
    fn missing_load_node_is_reported() {
        let g = golden_geom();
        let (mut m, _) = build(&g).unwrap();
        m.nodes.retain(|n| !(n.x == 0.0 && n.y == 8.5));
        let v = validate_model(&m, &g).unwrap_err();
        assert!(
            v.iter().any(|s| s == "load elevation 8.5 unnodded"),
            "{v:?}"
        );
    }

    #[test]
    fn load_above_column_top_is_a_model_error() {
        let mut g = golden_geom();
        g.load_elevations_ft = vec![4.0, 8.5, 18.0];
        let err = build(&g).unwrap_err();
        assert_eq!(err, ModelError::LoadOffColumn { elevation_ft: 18.0 });
        assert_eq!(err.kind(), "ModelError");
    }

    #[test]
    fn duplicate_brace_trips_count_check() {
        let mut g = golden_geom();
        let first = g.brace_segments[0];
        g.brace_segments.push(Segment::new(first.end, first.start));
        let err = build(&g).unwrap_err();
        assert_eq!(err.kind(), "ValidationError");
    }
}
