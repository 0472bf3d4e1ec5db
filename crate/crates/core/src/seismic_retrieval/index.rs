//! Paragraph chunking and token-overlap ranking.

use std::collections::HashMap;

use super::RetrievalError;

pub const DEFAULT_MAX_CHUNK_CHARS: usize = 800;

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentChunk {
    pub chunk_id: usize,
    pub text: String,
    pub source: String,
    /// Token multiset of `text`.
    pub tokens: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkIndex {
    pub chunks: Vec<DocumentChunk>,
}

/// Lowercase alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn bag(text: &str) -> HashMap<String, usize> {
    let mut out = HashMap::new();
    for t in tokenize(text) {
        *out.entry(t).or_insert(0) += 1;
    }
    out
}

/// Splits on blank lines; a paragraph longer than `max_chars` characters is cut
/// into `ceil(len / max_chars)` consecutive pieces.
pub fn build_index(
    doc_text: &str,
    source: &str,
    max_chars: usize,
) -> Result<ChunkIndex, RetrievalError> {
    if doc_text.trim().is_empty() {
        return Err(RetrievalError::EmptyDocument);
    }
    let max_chars = max_chars.max(1);
    let mut pieces: Vec<String> = Vec::new();
    let mut paragraph: Vec<&str> = Vec::new();
    let flush = |paragraph: &mut Vec<&str>, pieces: &mut Vec<String>| {
        if paragraph.is_empty() {
            return;
        }
        let text = paragraph.join("\n");
        paragraph.clear();
        let chars: Vec<char> = text.chars().collect();
        for piece in chars.chunks(max_chars) {
            pieces.push(piece.iter().collect());
        }
    };
    for line in doc_text.lines() {
        if line.trim().is_empty() {
            flush(&mut paragraph, &mut pieces);
        } else {
            paragraph.push(line.trim_end());
        }
    }
    flush(&mut paragraph, &mut pieces);

    let chunks = pieces
        .into_iter()
        .enumerate()
        .map(|(chunk_id, text)| DocumentChunk {
            chunk_id,
            tokens: bag(&text),
            text,
            source: source.to_string(),
        })
        .collect();
    Ok(ChunkIndex { chunks })
}

impl ChunkIndex {
    /// Fraction of query tokens (counted with multiplicity) present in the chunk,
    /// each chunk token occurrence matching at most one query occurrence.
    pub fn score(&self, chunk: &DocumentChunk, query_tokens: &HashMap<String, usize>) -> f64 {
        let total: usize = query_tokens.values().sum();
        if total == 0 {
            return 0.0;
        }
        let hits: usize = query_tokens
            .iter()
            .map(|(t, &n)| n.min(chunk.tokens.get(t).copied().unwrap_or(0)))
            .sum();
        hits as f64 / total as f64
    }

    /// The `min(k, len)` best chunks, by descending score then ascending id.
    pub fn retrieve(&self, query: &str, k: usize) -> Vec<(&DocumentChunk, f64)> {
        let q = bag(query);
        let mut scored: Vec<(&DocumentChunk, f64)> =
            self.chunks.iter().map(|c| (c, self.score(c, &q))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.chunk_id.cmp(&b.0.chunk_id)));
        scored.truncate(k.max(1));
        scored
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_paragraphs_two_chunks() {
        let idx = build_index("alpha beta\ngamma\n\n\ndelta", "doc", 800).unwrap();
        assert_eq!(idx.len(), 2);
        assert_eq!(
            idx.chunks.iter().map(|c| c.chunk_id).collect::<Vec<_>>(),
            vec![0, 1]
        );
        assert_eq!(idx.chunks[0].text, "alpha beta\ngamma");
    }

    #[test]
    fn long_paragraph_is_cut_by_ceiling_division() {
        let doc = "x".repeat(2000);
        let idx = build_index(&doc, "doc", 800).unwrap();
        assert_eq!(idx.len(), 3);
        assert!(idx.chunks.iter().all(|c| c.text.chars().count() <= 800));
    }

    #[test]
    fn empty_document_is_rejected() {
        assert!(matches!(
            build_index(" \n\n ", "doc", 800),
            Err(RetrievalError::EmptyDocument)
        ));
    }

    #[test]
    fn exact_text_query_ranks_first_with_full_score() {
        let idx = build_index("one two three\n\nfour five six\n\nseven", "doc", 800).unwrap();
        let hits = idx.retrieve("four five six", 2);
        assert_eq!(hits[0].0.chunk_id, 1);
        assert_eq!(hits[0].1, 1.0);
    }

    #[test]
    fn no_overlap_keeps_id_order() {
        let idx = build_index("a\n\nb\n\nc", "doc", 800).unwrap();
        let hits = idx.retrieve("zzz", 5);
        assert_eq!(hits.len(), 3);
        assert!(hits.iter().all(|h| h.1 == 0.0));
        assert_eq!(
            hits.iter().map(|h| h.0.chunk_id).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    proptest! {
        #[test]
        fn adding_a_matching_token_keeps_matches_above_non_matches(
            words in prop::collection::vec("[a-e]{1,3}", 1..8),
            extra in "[a-e]{1,3}",
            base in prop::collection::vec("[a-e]{1,3}", 1..4),
        ) {
            let doc = words.join("\n\n");
            let idx = build_index(&doc, "doc", 800).unwrap();
            let query = format!("{} {extra}", base.join(" "));
            let q = bag(&query);
            let hits = idx.retrieve(&query, idx.len());
            for (i, (c, s)) in hits.iter().enumerate() {
                prop_assert_eq!(*s, idx.score(c, &q));
                if c.tokens.contains_key(&extra) {
                    for (d, _) in &hits[..i] {
                        prop_assert!(
                            idx.score(d, &q) >= *s,
                            "chunk {} outranks a better match", d.chunk_id
                        );
                    }
                    prop_assert!(*s > 0.0);
                }
            }
        }

        #[test]
        fn rebuild_is_stable(doc in "[a-z \n]{1,300}") {
            prop_assume!(!doc.trim().is_empty());
            let a = build_index(&doc, "d", 50).unwrap();
            let b = build_index(&doc, "d", 50).unwrap();
            prop_assert_eq!(a.retrieve("a b c", 4).iter().map(|h| h.0.chunk_id).collect::<Vec<_>>(),
                            b.retrieve("a b c", 4).iter().map(|h| h.0.chunk_id).collect::<Vec<_>>());
        }
    }
}
