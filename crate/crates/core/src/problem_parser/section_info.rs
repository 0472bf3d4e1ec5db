use std::sync::OnceLock;

use regex::Regex;

use super::text::{normalize, parse_number, NUMBER};
use super::{Member, ParseError, SectionSpec, Shape};

fn clause_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(beams|columns|posts|uprights|braces|bracing)\s+are\b").unwrap()
    })
}

fn member_of(word: &str) -> Member {
    match word.to_ascii_lowercase().as_str() {
        "beams" => Member::Beam,
        "braces" | "bracing" => Member::Brace,
        _ => Member::Column,
    }
}

fn parse_clause(member: Member, clause: &str, offset: usize) -> Result<SectionSpec, ParseError> {
    static DIMS3: OnceLock<Regex> = OnceLock::new();
    static DEPTH: OnceLock<Regex> = OnceLock::new();
    static LENGTH: OnceLock<Regex> = OnceLock::new();
    static MODULUS: OnceLock<Regex> = OnceLock::new();
    let dims3 = DIMS3.get_or_init(|| {
        Regex::new(&format!(
            r"({NUMBER})\s*in\s*x\s*({NUMBER})\s*in\s*x\s*({NUMBER})\s*in\b"
        ))
        .unwrap()
    });
    let depth = DEPTH.get_or_init(|| Regex::new(&format!(r"({NUMBER})\s*in\b")).unwrap());
    let length = LENGTH.get_or_init(|| {
        Regex::new(&format!(
            r"(?i)(?:height|length) of (?:approximately |about |roughly )?({NUMBER})\s*ft\b"
        ))
        .unwrap()
    });
    let modulus = MODULUS.get_or_init(|| Regex::new(&format!(r"\bE\s*=\s*({NUMBER})")).unwrap());

    let lower = clause.to_ascii_lowercase();
    let shape = if lower.contains("z-section") || lower.contains("z section") {
        Shape::ZSection
    } else if lower.contains("channel") {
        Shape::UChannel
    } else {
        return Err(ParseError::Extraction {
            field: member.as_str().to_string(),
            message: "no recognised section shape (U-channel or Z-section)".into(),
            span: Some((offset, offset + clause.len())),
        });
    };
    let num = |s: &str| parse_number(s).unwrap_or(f64::NAN);
    let (depth_in, flange_in, thickness_in) = if let Some(c) = dims3.captures(clause) {
        (num(&c[1]), Some(num(&c[2])), Some(num(&c[3])))
    } else if let Some(c) = depth.captures(clause) {
        (num(&c[1]), None, None)
    } else {
        return Err(ParseError::Extraction {
            field: member.as_str().to_string(),
            message: "member section has no dimensions".into(),
            span: Some((offset, offset + clause.len())),
        });
    };
    let dims_ok = depth_in > 0.0
        && flange_in.is_none_or(|b| b > 0.0)
        && match (flange_in, thickness_in) {
            (Some(b), Some(t)) => t > 0.0 && t < depth_in.min(b),
            _ => true,
        };
    if !dims_ok {
        return Err(ParseError::Extraction {
            field: member.as_str().to_string(),
            message: "section dimensions must be positive with thickness below depth and flange"
                .into(),
            span: Some((offset, offset + clause.len())),
        });
    }
    Ok(SectionSpec {
        member,
        shape,
        depth_in,
        flange_in,
        thickness_in,
        length_ft: length.captures(clause).and_then(|c| parse_number(&c[1])),
        elastic_modulus_ksi: modulus.captures(clause).and_then(|c| parse_number(&c[1])),
    })
}

/// One [`SectionSpec`] per member clause ("the columns are ..."), in text order.
pub fn extract_section_info(sda_input: &str) -> Result<Vec<SectionSpec>, ParseError> {
    let text = normalize(sda_input);
    let starts: Vec<(usize, Member)> = clause_re()
        .captures_iter(&text)
        .map(|c| (c.get(0).unwrap().start(), member_of(&c[1])))
        .collect();
    if starts.is_empty() {
        return Err(ParseError::extraction(
            "sections",
            "no member clause such as `the columns are ...`",
        ));
    }
    let mut specs: Vec<SectionSpec> = Vec::new();
    for (k, &(start, member)) in starts.iter().enumerate() {
        let end = starts.get(k + 1).map_or(text.len(), |&(s, _)| s);
        let spec = parse_clause(member, &text[start..end], start)?;
        if specs.iter().any(|s| s.member == member) {
            return Err(ParseError::Extraction {
                field: member.as_str().to_string(),
                message: "member described twice".into(),
                span: Some((start, end)),
            });
        }
        specs.push(spec);
    }
    Ok(specs)
}
