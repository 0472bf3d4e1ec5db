use std::sync::OnceLock;

use regex::Regex;

use super::text::{normalize, parse_number, sentences, NUMBER};
use super::{BuildingInfo, Dimensions, ParseError};

fn re(cell: &'static OnceLock<Regex>, pattern: impl FnOnce() -> String) -> &'static Regex {
    cell.get_or_init(|| Regex::new(&pattern()).unwrap())
}

fn location(text: &str) -> Result<String, ParseError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let r = re(&RE, || {
        r"located in ([A-Z][A-Za-z .'-]*?,\s*[A-Z]{2})\b".to_string()
    });
    r.captures(text)
        .map(|c| c[1].trim().to_string())
        .ok_or_else(|| ParseError::extraction("location", "no `located in <City>, <PR>` phrase"))
}

fn number_at(text: &str, start: usize, end: usize, field: &str) -> Result<f64, ParseError> {
    parse_number(&text[start..end]).ok_or_else(|| ParseError::Extraction {
        field: field.to_string(),
        message: format!("`{}` is not a number", &text[start..end]),
        span: Some((start, end)),
    })
}

/// Beam elevations in text order, from the first sentence that mentions them.
fn elevations(text: &str) -> Result<Vec<f64>, ParseError> {
    static FT: OnceLock<Regex> = OnceLock::new();
    let ft = re(&FT, || format!(r"({NUMBER})\s*ft\b"));
    let sentence = sentences(text)
        .into_iter()
        .find(|s| s.to_ascii_lowercase().contains("elevations"))
        .ok_or_else(|| ParseError::extraction("floor_elevations_ft", "no elevation sentence"))?;
    let offset = sentence.as_ptr() as usize - text.as_ptr() as usize;
    let at = sentence.find(" at ").map_or(0, |i| i + 4);
    let mut out = Vec::new();
    for caps in ft.captures_iter(&sentence[at..]) {
        let m = caps.get(1).unwrap();
        out.push(number_at(
            text,
            offset + at + m.start(),
            offset + at + m.end(),
            "floor_elevations_ft",
        )?);
    }
    if out.is_empty() {
        return Err(ParseError::Extraction {
            field: "floor_elevations_ft".into(),
            message: "elevation sentence lists no values in ft".into(),
            span: Some((offset, offset + sentence.len())),
        });
    }
    Ok(out)
}

/// `(elevation_ft, load_lb)` pairs from `P_<h> ft = <kip> kip (<lb> lb)` terms.
/// The pound figure wins when present; otherwise kip is converted.
fn level_loads(text: &str) -> Result<Vec<(f64, f64)>, ParseError> {
    static P: OnceLock<Regex> = OnceLock::new();
    let p = re(&P, || {
        format!(r"P_\s*({NUMBER})\s*ft\s*=\s*({NUMBER})\s*kip(?:\s*\(\s*({NUMBER})\s*lbs?\s*\))?")
    });
    let mut out = Vec::new();
    for caps in p.captures_iter(text) {
        let h = caps.get(1).unwrap();
        let h = number_at(text, h.start(), h.end(), "loads_lbs")?;
        let load = match caps.get(3) {
            Some(lb) => number_at(text, lb.start(), lb.end(), "loads_lbs")?,
            None => {
                let kip = caps.get(2).unwrap();
                number_at(text, kip.start(), kip.end(), "loads_lbs")? * 1000.0
            }
        };
        out.push((h, load));
    }
    if out.is_empty() {
        return Err(ParseError::extraction(
            "loads_lbs",
            "no `P_<h> ft = <w> kip` load terms",
        ));
    }
    Ok(out)
}

fn optional_ft(text: &str, cell: &'static OnceLock<Regex>, lead: &'static str) -> Option<f64> {
    let r = re(cell, || format!(r"(?i){lead}\s*({NUMBER})\s*ft\b"));
    r.captures(text).and_then(|c| parse_number(&c[1]))
}

/// Elevations and their per-level loads, sorted by ascending elevation.
///
/// Elevations come from the beam-elevation sentence; each must have exactly one
/// `P_` load term at the same height.
pub fn extract_level_loads(la_input: &str) -> Result<(Vec<f64>, Vec<f64>), ParseError> {
    let text = normalize(la_input);
    let elevs = elevations(&text)?;
    let loads = level_loads(&text)?;
    if loads.len() != elevs.len() {
        return Err(ParseError::extraction(
            "loads_lbs",
            format!("{} load terms for {} elevations", loads.len(), elevs.len()),
        ));
    }
    let mut pairs = Vec::with_capacity(elevs.len());
    for &h in &elevs {
        let matching: Vec<f64> = loads
            .iter()
            .filter(|(lh, _)| (lh - h).abs() < 1e-9)
            .map(|&(_, w)| w)
            .collect();
        match matching.as_slice() {
            [w] => pairs.push((h, *w)),
            [] => {
                return Err(ParseError::extraction(
                    "loads_lbs",
                    format!("no load term at elevation {h} ft"),
                ))
            }
            _ => {
                return Err(ParseError::extraction(
                    "loads_lbs",
                    format!("several load terms at elevation {h} ft"),
                ))
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in pairs.windows(2) {
        if w[1].0 - w[0].0 <= 0.0 {
            return Err(ParseError::extraction(
                "floor_elevations_ft",
                format!("elevation {} ft listed twice", w[0].0),
            ));
        }
    }
    if let Some(&(h, _)) = pairs.iter().find(|(h, _)| *h <= 0.0) {
        return Err(ParseError::extraction(
            "floor_elevations_ft",
            format!("elevation {h} ft is not above the base"),
        ));
    }
    Ok(pairs.into_iter().unzip())
}

pub fn extract_building_info(la_input: &str) -> Result<BuildingInfo, ParseError> {
    static WIDTH: OnceLock<Regex> = OnceLock::new();
    static HEIGHT: OnceLock<Regex> = OnceLock::new();
    static BEAM: OnceLock<Regex> = OnceLock::new();
    let text = normalize(la_input);
    let location = location(&text)?;
    let (floor_elevations_ft, loads_lbs) = extract_level_loads(&text)?;
    let dimensions = Dimensions {
        width_ft: optional_ft(&text, &WIDTH, r"frame width of"),
        height_ft: optional_ft(&text, &HEIGHT, r"(?:post|column) height of"),
        beam_length_ft: optional_ft(&text, &BEAM, r"beam length (?:being|of|is)"),
    };
    let building_type = if text.to_ascii_lowercase().contains("racking") {
        "racking system"
    } else {
        "frame"
    };
    let structural_info = format!(
        "{building_type}, {} floors, {} load points",
        floor_elevations_ft.len(),
        loads_lbs.len()
    );
    Ok(BuildingInfo {
        location,
        building_type: building_type.to_string(),
        floor_elevations_ft,
        loads_lbs,
        dimensions,
        structural_info,
    })
}
