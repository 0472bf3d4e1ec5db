use std::sync::OnceLock;

use regex::Regex;

use super::text::{normalize, parse_number, sentences, NUMBER};
use super::{DecompositionResult, ParseError};

fn brace_pair_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let p = format!(r"\(\s*(?:{NUMBER})\s*,\s*(?:{NUMBER})\s*\)\s*->\s*\(\s*(?:{NUMBER})\s*,\s*(?:{NUMBER})\s*\)");
        Regex::new(&p).unwrap()
    })
}

/// Every `(x,y)->(x,y)` literal in `text`, in order, exactly as written.
pub fn brace_pair_literals(text: &str) -> Vec<String> {
    brace_pair_re()
        .find_iter(text)
        .map(|m| m.as_str().to_string())
        .collect()
}

#[derive(Clone, Copy)]
enum Topic {
    Section,
    Loading,
    Structure,
}

fn topics(sentence: &str) -> Vec<Topic> {
    static SECTION: OnceLock<Regex> = OnceLock::new();
    static LOADING: OnceLock<Regex> = OnceLock::new();
    static STRUCTURE: OnceLock<Regex> = OnceLock::new();
    let section =
        SECTION.get_or_init(|| Regex::new(r"(?i)z-sections?|channels?\b|\bsections?\b").unwrap());
    let loading = LOADING.get_or_init(|| {
        Regex::new(r"(?i)located in|\bbays?\b|pallets?|elevations?\b|\bP_|\bweights?\b").unwrap()
    });
    let structure = STRUCTURE.get_or_init(|| {
        Regex::new(r"(?i)centerlines?|->|supports?\b|elevations? are|side elevation|coordinates")
            .unwrap()
    });
    let mut out = Vec::new();
    if section.is_match(sentence) {
        out.push(Topic::Section);
    }
    if loading.is_match(sentence) {
        out.push(Topic::Loading);
    }
    if structure.is_match(sentence) {
        out.push(Topic::Structure);
    }
    out
}

fn count_after(text: &str, patterns: &[&Regex]) -> Option<u32> {
    for re in patterns {
        for caps in re.captures_iter(text) {
            if let Some(n) = parse_number(&caps[1]) {
                if n >= 1.0 && n.fract() == 0.0 {
                    return Some(n as u32);
                }
            }
        }
    }
    None
}

fn bay_count(text: &str) -> Option<u32> {
    static WORDY: OnceLock<Regex> = OnceLock::new();
    static KEYED: OnceLock<Regex> = OnceLock::new();
    let wordy =
        WORDY.get_or_init(|| Regex::new(r"(?i)\b(\w+)\s+(?:longitudinal\s+)?bays?\b").unwrap());
    let keyed = KEYED.get_or_init(|| Regex::new(r"(?i)\bbays?\s*[=:]\s*(\d+)").unwrap());
    count_after(text, &[keyed, wordy])
}

fn pallet_count(text: &str) -> Option<u32> {
    static CARRIES: OnceLock<Regex> = OnceLock::new();
    static PER_BEAM: OnceLock<Regex> = OnceLock::new();
    static KEYED: OnceLock<Regex> = OnceLock::new();
    let carries = CARRIES.get_or_init(|| Regex::new(r"(?i)\bcarries\s+(\w+)\s+pallets?").unwrap());
    let per_beam = PER_BEAM
        .get_or_init(|| Regex::new(r"(?i)\b(\w+)\s+pallets?\s+(?:per|on each)\s+beam").unwrap());
    let keyed = KEYED.get_or_init(|| Regex::new(r"(?i)\bpallets?\s*[=:]\s*(\d+)").unwrap());
    count_after(text, &[keyed, carries, per_beam])
}

/// Splits a problem into section-design, loading, and structural-analysis
/// sub-descriptions and pulls out the bay and pallet counts.
///
/// A sentence can feed more than one sub-description (the beam elevations are
/// needed for both loading and geometry). Sentences matching no topic, such as
/// the closing question, are dropped.
pub fn split_problem_description(text: &str) -> Result<DecompositionResult, ParseError> {
    let text = normalize(text);
    if text.trim().is_empty() {
        return Err(ParseError::Decomposition {
            field: "problem_text",
        });
    }
    let number_of_bays = bay_count(&text).ok_or(ParseError::Decomposition {
        field: "number_of_bays",
    })?;
    let number_of_pallets = pallet_count(&text).ok_or(ParseError::Decomposition {
        field: "number_of_pallets",
    })?;

    let (mut sda, mut la, mut saa) = (Vec::new(), Vec::new(), Vec::new());
    for sentence in sentences(&text) {
        for topic in topics(sentence) {
            match topic {
                Topic::Section => sda.push(sentence),
                Topic::Loading => la.push(sentence),
                Topic::Structure => saa.push(sentence),
            }
        }
    }
    let saa_input = format!("Structural analysis: {}", saa.join(" "));

    // Brace pairs inside a sentence that no topic rule caught are carried over
    // so the structural input never loses a coordinate.
    let missing: Vec<String> = brace_pair_literals(&text)
        .into_iter()
        .filter(|pair| !saa_input.contains(pair.as_str()))
        .collect();
    let saa_input = if missing.is_empty() {
        saa_input
    } else {
        format!("{saa_input} Brace sequence: {}.", missing.join(", "))
    };

    Ok(DecompositionResult {
        sda_input: format!("Section design: {}", sda.join(" ")),
        la_input: format!("Loading analysis: {}", la.join(" ")),
        saa_input,
        number_of_bays,
        number_of_pallets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PROBLEM: &str = include_str!("../../data/golden/problem.txt");

    #[test]
    fn golden_counts() {
        let d = split_problem_description(PROBLEM).unwrap();
        assert_eq!(d.number_of_bays, 2);
        assert_eq!(d.number_of_pallets, 3);
    }

    #[test]
    fn golden_brace_pairs_survive_verbatim() {
        let d = split_problem_description(PROBLEM).unwrap();
        let pairs = brace_pair_literals(PROBLEM);
        assert_eq!(pairs.len(), 8);
        assert_eq!(pairs[0], "(0,0.5)->(3.5,0.5)");
        for p in &pairs {
            assert!(d.saa_input.contains(p.as_str()), "{p} missing");
        }
    }

    #[test]
    fn topics_are_routed() {
        let d = split_problem_description(PROBLEM).unwrap();
        assert!(d.sda_input.contains("0.0787"));
        assert!(!d.sda_input.contains("Nanaimo"));
        assert!(d.la_input.contains("Nanaimo, BC"));
        assert!(d.la_input.contains("1750 lb"));
        assert!(d.saa_input.contains("supports"));
        assert!(d.saa_input.contains("13.0 ft"));
        assert!(d.la_input.contains("13.0 ft"));
    }

    #[test]
    fn missing_bays_names_the_field() {
        let err = split_problem_description("Each beam carries two pallets.").unwrap_err();
        assert_eq!(
            err,
            ParseError::Decomposition {
                field: "number_of_bays"
            }
        );
    }

    #[test]
    fn missing_pallets_names_the_field() {
        let err = split_problem_description("The layout has two bays.").unwrap_err();
        assert_eq!(
            err,
            ParseError::Decomposition {
                field: "number_of_pallets"
            }
        );
    }

    #[test]
    fn orphan_brace_pairs_are_appended() {
        let d = split_problem_description(
            "There are two bays. Each beam carries one pallet. Then go (0,1)->(3,2).",
        )
        .unwrap();
        assert!(d.saa_input.contains("(0,1)->(3,2)"));
    }
}
