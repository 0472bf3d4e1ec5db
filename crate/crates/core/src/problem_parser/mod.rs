//! Racking problem text to structured engineering inputs.
//!
//! The extractors target the controlled problem grammar used by the corpus
//! (location sentence, layout sentence, beam elevations, member sections, column
//! centerlines, brace sequence, supports, pallet weights). Plain text and
//! LaTeX-style inline math are both accepted; see [`text::normalize`].

mod adjust;
mod building;
mod decompose;
mod geometry;
mod section_info;
pub mod text;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adjust::{adjust_pallet_weights, AdjustmentRule};
pub use building::{extract_building_info, extract_level_loads};
pub use decompose::{brace_pair_literals, split_problem_description};
pub use geometry::{extract_geometry, read_annotations, strip_annotations, update_saa_input};
pub use section_info::extract_section_info;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("decomposition failed: no `{field}` found in the problem text")]
    Decomposition { field: &'static str },
    #[error("could not extract {field}: {message}")]
    Extraction {
        field: String,
        message: String,
        /// Byte range of the offending text in the input, when known.
        span: Option<(usize, usize)>,
    },
    #[error("adjusted weight at level {index} is {value} lb; must be positive")]
    Adjustment { index: usize, value: f64 },
    #[error("geometry error: {message}")]
    Geometry {
        message: String,
        segment: Option<Segment>,
    },
}

impl ParseError {
    /// Stable category name used in traces and failure classification.
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::Decomposition { .. } => "DecompositionError",
            ParseError::Extraction { .. } => "ExtractionError",
            ParseError::Adjustment { .. } => "AdjustmentError",
            ParseError::Geometry { .. } => "GeometryError",
        }
    }

    pub(crate) fn extraction(field: &str, message: impl Into<String>) -> Self {
        ParseError::Extraction {
            field: field.to_string(),
            message: message.into(),
            span: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    #[serde(rename = "SDA_input")]
    pub sda_input: String,
    #[serde(rename = "LA_input")]
    pub la_input: String,
    #[serde(rename = "SAA_input")]
    pub saa_input: String,
    pub number_of_bays: u32,
    pub number_of_pallets: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub width_ft: Option<f64>,
    pub height_ft: Option<f64>,
    pub beam_length_ft: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingInfo {
    pub location: String,
    pub building_type: String,
    pub floor_elevations_ft: Vec<f64>,
    pub loads_lbs: Vec<f64>,
    pub dimensions: Dimensions,
    pub structural_info: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Member {
    Column,
    Brace,
    Beam,
}

impl Member {
    pub fn as_str(self) -> &'static str {
        match self {
            Member::Column => "column",
            Member::Brace => "brace",
            Member::Beam => "beam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    UChannel,
    ZSection,
}

/// Member section as written in the problem. Beams are often given by depth
/// only ("4 in Z-sections"), so flange and thickness are optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub member: Member,
    pub shape: Shape,
    pub depth_in: f64,
    pub flange_in: Option<f64>,
    pub thickness_in: Option<f64>,
    pub length_ft: Option<f64>,
    pub elastic_modulus_ksi: Option<f64>,
}

impl SectionSpec {
    /// `(d, b, t)` when all three dimensions are known.
    pub fn dims(&self) -> Option<(f64, f64, f64)> {
        Some((self.depth_in, self.flange_in?, self.thickness_in?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Point,
    pub end: Point,
}

impl Segment {
    pub fn new(start: Point, end: Point) -> Self {
        Self { start, end }
    }

    pub fn length(&self) -> f64 {
        (self.end.x - self.start.x).hypot(self.end.y - self.start.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub column_lines: Vec<Segment>,
    pub brace_segments: Vec<Segment>,
    pub supports: Vec<Point>,
    pub load_elevations_ft: Vec<f64>,
}

/// Tolerance for "this point lies on that line" comparisons, in feet.
pub const COORD_TOL_FT: f64 = 1e-9;
