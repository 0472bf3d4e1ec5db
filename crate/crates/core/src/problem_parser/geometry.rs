use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;

use super::text::{normalize, parse_number, sentences, NUMBER};
use super::{GeometrySpec, ParseError, Point, Segment, COORD_TOL_FT};
use crate::memory::canonical_json;

const SECTION_TAG: &str = "\n[section_data] ";
const LOAD_TAG: &str = "\n[load_data] ";

fn point_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!(r"\(\s*({NUMBER})\s*,\s*({NUMBER})\s*\)")).unwrap())
}

fn point(caps: &regex::Captures<'_>, first: usize) -> Point {
    let n = |i: usize| parse_number(&caps[i]).unwrap_or(f64::NAN);
    Point::new(n(first), n(first + 1))
}

/// Removes the `[section_data]` / `[load_data]` annotation added by
/// [`update_saa_input`], returning the original description.
pub fn strip_annotations(saa: &str) -> &str {
    match saa.find(SECTION_TAG) {
        Some(i) => &saa[..i],
        None => saa,
    }
}

/// Appends section and load documents to a structural-analysis description.
/// Any earlier annotation is replaced, so repeated updates do not pile up and
/// the original text, brace coordinates included, is kept byte for byte.
pub fn update_saa_input(saa: &str, section_data: &Value, load_data: &Value) -> String {
    format!(
        "{}{SECTION_TAG}{}{LOAD_TAG}{}",
        strip_annotations(saa),
        canonical_json(section_data),
        canonical_json(load_data)
    )
}

/// The `(section_data, load_data)` documents appended by [`update_saa_input`];
/// `None` for a part that is absent or not valid JSON.
pub fn read_annotations(saa: &str) -> (Option<Value>, Option<Value>) {
    let Some(i) = saa.find(SECTION_TAG) else {
        return (None, None);
    };
    let rest = &saa[i + SECTION_TAG.len()..];
    let (section, load) = match rest.find(LOAD_TAG) {
        Some(j) => (&rest[..j], Some(&rest[j + LOAD_TAG.len()..])),
        None => (rest, None),
    };
    let parse = |t: &str| serde_json::from_str::<Value>(t.trim()).ok();
    (parse(section), load.and_then(parse))
}

fn geometry_error(message: String, segment: Option<Segment>) -> ParseError {
    ParseError::Geometry { message, segment }
}

fn on_column_line(p: Point, columns: &[Segment]) -> bool {
    columns.iter().any(|c| {
        let (lo, hi) = (c.start.y.min(c.end.y), c.start.y.max(c.end.y));
        (p.x - c.start.x).abs() <= COORD_TOL_FT
            && p.y >= lo - COORD_TOL_FT
            && p.y <= hi + COORD_TOL_FT
    })
}

pub fn extract_geometry(saa_input: &str) -> Result<GeometrySpec, ParseError> {
    static COLUMN: OnceLock<Regex> = OnceLock::new();
    static BRACE: OnceLock<Regex> = OnceLock::new();
    static FT: OnceLock<Regex> = OnceLock::new();
    let column = COLUMN.get_or_init(|| {
        Regex::new(&format!(
            r"from\s*\(\s*({NUMBER})\s*,\s*({NUMBER})\s*\)\s*to\s*\(\s*({NUMBER})\s*,\s*({NUMBER})\s*\)"
        ))
        .unwrap()
    });
    let brace = BRACE.get_or_init(|| {
        Regex::new(&format!(
            r"\(\s*({NUMBER})\s*,\s*({NUMBER})\s*\)\s*->\s*\(\s*({NUMBER})\s*,\s*({NUMBER})\s*\)"
        ))
        .unwrap()
    });
    let ft = FT.get_or_init(|| Regex::new(&format!(r"({NUMBER})\s*ft\b")).unwrap());

    let text = normalize(strip_annotations(saa_input));

    let column_lines: Vec<Segment> = column
        .captures_iter(&text)
        .map(|c| Segment::new(point(&c, 1), point(&c, 3)))
        .collect();
    if column_lines.is_empty() {
        return Err(geometry_error(
            "no column centerlines (`from (x,y) to (x,y)`)".into(),
            None,
        ));
    }
    for c in &column_lines {
        if (c.start.x - c.end.x).abs() > COORD_TOL_FT || c.length() <= COORD_TOL_FT {
            return Err(geometry_error(
                "column line is not a vertical segment".into(),
                Some(*c),
            ));
        }
    }

    let brace_segments: Vec<Segment> = brace
        .captures_iter(&text)
        .map(|c| Segment::new(point(&c, 1), point(&c, 3)))
        .collect();
    for b in &brace_segments {
        if b.length() <= COORD_TOL_FT {
            return Err(geometry_error("zero-length brace".into(), Some(*b)));
        }
        for p in [b.start, b.end] {
            if !on_column_line(p, &column_lines) {
                return Err(geometry_error(
                    format!("brace endpoint ({}, {}) lies on no column line", p.x, p.y),
                    Some(*b),
                ));
            }
        }
    }

    let mut supports = Vec::new();
    let mut load_elevations_ft = Vec::new();
    for sentence in sentences(&text) {
        let lower = sentence.to_ascii_lowercase();
        if lower.contains("support") {
            for c in point_re().captures_iter(sentence) {
                let p = point(&c, 1);
                if p.y.abs() > COORD_TOL_FT {
                    return Err(geometry_error(
                        format!("support at ({}, {}) is not at the base", p.x, p.y),
                        None,
                    ));
                }
                if !supports.contains(&p) {
                    supports.push(p);
                }
            }
        }
        if lower.contains("elevations") && load_elevations_ft.is_empty() {
            let at = sentence.find(" at ").map_or(0, |i| i + 4);
            load_elevations_ft = ft
                .captures_iter(&sentence[at..])
                .filter_map(|c| parse_number(&c[1]))
                .collect();
        }
    }

    Ok(GeometrySpec {
        column_lines,
        brace_segments,
        supports,
        load_elevations_ft,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem_parser::{brace_pair_literals, split_problem_description};
    use serde_json::json;

    const PROBLEM: &str = include_str!("../../data/golden/problem.txt");

    fn golden() -> GeometrySpec {
        extract_geometry(&split_problem_description(PROBLEM).unwrap().saa_input).unwrap()
    }

    #[test]
    fn golden_braces_in_written_order() {
        let g = golden();
        assert_eq!(g.brace_segments.len(), 8);
        assert_eq!(
            g.brace_segments[0],
            Segment::new(Point::new(0.0, 0.5), Point::new(3.5, 0.5))
        );
        assert_eq!(
            g.brace_segments[7],
            Segment::new(Point::new(3.5, 15.5), Point::new(0.0, 15.5))
        );
    }

    #[test]
    fn golden_columns_supports_levels() {
        let g = golden();
        assert_eq!(
            g.column_lines,
            vec![
                Segment::new(Point::new(0.0, 0.0), Point::new(0.0, 16.0)),
                Segment::new(Point::new(3.5, 0.0), Point::new(3.5, 16.0)),
            ]
        );
        assert_eq!(g.supports, vec![Point::new(0.0, 0.0), Point::new(3.5, 0.0)]);
        assert_eq!(g.load_elevations_ft, vec![4.0, 8.5, 13.0]);
    }

    #[test]
    fn latex_form_matches_plain_form() {
        let latex = include_str!("../../data/golden/problem_latex.txt");
        let g = extract_geometry(&split_problem_description(latex).unwrap().saa_input).unwrap();
        assert_eq!(g, golden());
    }

    #[test]
    fn brace_off_column_lines_is_rejected() {
        let saa = "Columns from (0,0) to (0,16) and from (3.5,0) to (3.5,16). Braces (1.0,2.0)->(3.5,5.5).";
        let err = extract_geometry(saa).unwrap_err();
        assert_eq!(err.kind(), "GeometryError");
        match err {
            ParseError::Geometry { segment, .. } => assert_eq!(
                segment,
                Some(Segment::new(Point::new(1.0, 2.0), Point::new(3.5, 5.5)))
            ),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn update_preserves_pairs_and_is_idempotent() {
        let saa = split_problem_description(PROBLEM).unwrap().saa_input;
        let sections = json!({"members": {"column": {"A": 0.705}}});
        let loads = json!({"seismic": [], "live": []});
        let once = update_saa_input(&saa, &sections, &loads);
        for pair in brace_pair_literals(&saa) {
            assert!(once.contains(pair.as_str()));
        }
        let twice = update_saa_input(&once, &sections, &loads);
        assert_eq!(once, twice);
        assert_eq!(extract_geometry(&twice).unwrap(), golden());
    }

    #[test]
    fn empty_documents_annotate_only() {
        let out = update_saa_input("text", &json!({}), &json!({}));
        assert_eq!(out, "text\n[section_data] {}\n[load_data] {}");
        assert_eq!(strip_annotations(&out), "text");
    }

    #[test]
    fn annotations_read_back() {
        let sections = json!({"members": {"column": {"A": 0.705}}});
        let out = update_saa_input("text", &sections, &Value::Null);
        assert_eq!(read_annotations(&out), (Some(sections), Some(Value::Null)));
        assert_eq!(read_annotations("text"), (None, None));
    }
}
