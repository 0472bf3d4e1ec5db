//! Lexical helpers shared by the extractors.

use std::sync::OnceLock;

use regex::Regex;

/// Rewrites LaTeX-style markup and typographic symbols into the plain grammar:
/// `\(3.079~\text{in}\times 2.795~\text{in}\)` becomes `3.079 in x 2.795 in`,
/// `\rightarrow` and `→` become `->`, `29{,}000` becomes `29,000`.
pub fn normalize(text: &str) -> String {
    static TEXT_CMD: OnceLock<Regex> = OnceLock::new();
    static SUBSCRIPT: OnceLock<Regex> = OnceLock::new();
    static SPACES: OnceLock<Regex> = OnceLock::new();
    let text_cmd = TEXT_CMD.get_or_init(|| Regex::new(r"\\(?:text|mathrm)\{([^}]*)\}").unwrap());
    let subscript = SUBSCRIPT.get_or_init(|| Regex::new(r"_\{([^}]*)\}").unwrap());
    let spaces = SPACES.get_or_init(|| Regex::new(r"[ \t]+").unwrap());

    let mut s = text.replace("{,}", ",");
    s = text_cmd.replace_all(&s, "$1").into_owned();
    for (from, to) in [
        ("\\rightarrow", "->"),
        ("\\to ", "->"),
        ("→", "->"),
        ("\\times", " x "),
        ("×", " x "),
        ("\\(", ""),
        ("\\)", ""),
        ("\\ ", " "),
        ("~", " "),
        ("^{2}", "^2"),
        ("²", "^2"),
        ("–", "-"),
        ("—", "-"),
    ] {
        s = s.replace(from, to);
    }
    s = subscript.replace_all(&s, "_$1").into_owned();
    spaces.replace_all(&s, " ").into_owned()
}

/// Splits prose into sentences at `.`, `?`, or `!` followed by whitespace and
/// an uppercase letter. Decimal points never qualify because no whitespace follows them.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '?' | '!') {
            continue;
        }
        let mut j = k + 1;
        let mut saw_space = false;
        while j < chars.len() && chars[j].1.is_whitespace() {
            saw_space = true;
            j += 1;
        }
        if saw_space && j < chars.len() && chars[j].1.is_uppercase() {
            let sentence = text[start..i + c.len_utf8()].trim();
            if !sentence.is_empty() {
                out.push(sentence);
            }
            start = chars[j].0;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Parses `29,000`, `4.0`, or a number word (`one` to `twelve`).
pub fn parse_number(token: &str) -> Option<f64> {
    let t = token.trim().to_ascii_lowercase();
    if let Ok(x) = t.replace(',', "").parse::<f64>() {
        return Some(x);
    }
    const WORDS: [&str; 13] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
        "eleven", "twelve",
    ];
    WORDS.iter().position(|w| *w == t).map(|i| i as f64)
}

/// Decimal literal; a comma is accepted only as a thousands separator.
pub const NUMBER: &str = r"-?\d{1,3}(?:,\d{3})+(?:\.\d+)?|-?\d+(?:\.\d+)?|-?\.\d+";
