//! Seismic hazard lookup: a city table rendered into a text corpus, indexed by
//! token overlap, and parsed back from the best-ranked chunks.

mod index;

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use index::{build_index, tokenize, ChunkIndex, DocumentChunk, DEFAULT_MAX_CHUNK_CHARS};

pub const BUILTIN_TABLE_CSV: &str = include_str!("../../data/seismic_table.csv");
pub const BUILTIN_DOC: &str = include_str!("../../data/seismic_doc.txt");
pub const DEFAULT_TOP_K: usize = 6;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot index an empty document")]
    EmptyDocument,
    #[error("City not found: {location}")]
    CityNotFound { location: String },
    #[error("row for {city} has no usable `{field}` value")]
    MalformedRow { city: String, field: &'static str },
    #[error("seismic table: {0}")]
    Table(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl RetrievalError {
    pub fn kind(&self) -> &'static str {
        match self {
            RetrievalError::EmptyDocument => "IndexError",
            RetrievalError::CityNotFound { .. } => "CityNotFound",
            RetrievalError::MalformedRow { .. } => "MalformedRow",
            RetrievalError::Table(_) | RetrievalError::Io { .. } => "TableError",
        }
    }
}

/// The literal document returned to agents for an unknown city.
pub fn city_not_found_document() -> Value {
    json!({"error": "City not found"})
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeismicParameters {
    pub Sa_02: f64,
    pub Sa_05: f64,
    pub Sa_10: f64,
    pub Sa_20: f64,
    pub PGA: f64,
    pub PGV: f64,
}

pub const FIELDS: [&str; 6] = ["Sa_02", "Sa_05", "Sa_10", "Sa_20", "PGA", "PGV"];

impl SeismicParameters {
    pub fn values(&self) -> [f64; 6] {
        [
            self.Sa_02, self.Sa_05, self.Sa_10, self.Sa_20, self.PGA, self.PGV,
        ]
    }

    pub fn from_values(v: [f64; 6]) -> Self {
        Self {
            Sa_02: v[0],
            Sa_05: v[1],
            Sa_10: v[2],
            Sa_20: v[3],
            PGA: v[4],
            PGV: v[5],
        }
    }

    /// Name of the first field that is negative or not finite.
    pub fn invalid_field(&self) -> Option<&'static str> {
        FIELDS
            .iter()
            .zip(self.values())
            .find(|(_, v)| !(v.is_finite() && *v >= 0.0))
            .map(|(f, _)| *f)
    }
}

pub fn normalize_city(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeismicTable {
    pub rows: Vec<(String, SeismicParameters)>,
}

impl SeismicTable {
    /// Parses `city,Sa_02,Sa_05,Sa_10,Sa_20,PGA,PGV`; lines starting with `#` are comments.
    pub fn from_csv(text: &str) -> Result<Self, RetrievalError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| RetrievalError::Table(e.to_string()))?
            .clone();
        let expected = ["city", "Sa_02", "Sa_05", "Sa_10", "Sa_20", "PGA", "PGV"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(RetrievalError::Table(format!(
                "header must be `{}`",
                expected.join(",")
            )));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| RetrievalError::Table(e.to_string()))?;
            let city = record.get(0).unwrap_or_default().to_string();
            let mut v = [0.0; 6];
            for (i, field) in FIELDS.iter().enumerate() {
                v[i] = record
                    .get(i + 1)
                    .and_then(|s| s.parse::<f64>().ok())
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| RetrievalError::MalformedRow {
                        city: city.clone(),
                        field,
                    })?;
            }
            rows.push((city, SeismicParameters::from_values(v)));
        }
        Ok(Self { rows })
    }

    pub fn from_path(path: &Path) -> Result<Self, RetrievalError> {
        let text = std::fs::read_to_string(path).map_err(|source| RetrievalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv(&text)
    }

    /// Direct lookup, bypassing retrieval.
    pub fn lookup(&self, city: &str) -> Option<SeismicParameters> {
        let key = normalize_city(city);
        self.rows
            .iter()
            .find(|(c, _)| normalize_city(c) == key)
            .map(|(_, p)| *p)
    }

    /// Retrieval corpus: an introductory paragraph, then one paragraph per city.
    pub fn render_document(&self) -> String {
        let mut out = String::from(
            "Site hazard values for racking design by city. Spectral accelerations Sa(T) are \
             in g at periods of 0.2, 0.5, 1.0 and 2.0 s; PGA is in g and PGV in m/s.\n",
        );
        for (city, p) in &self.rows {
            out.push('\n');
            out.push_str(&format!("Seismic parameters for {city}:"));
            for (field, v) in FIELDS.iter().zip(p.values()) {
                out.push_str(&format!(" {field} = {v},"));
            }
            out.pop();
            out.push('\n');
        }
        out
    }
}

/// Table plus the chunk index built over its rendered document.
#[derive(Debug, Clone)]
pub struct SeismicDatabase {
    pub table: SeismicTable,
    pub index: ChunkIndex,
    pub top_k: usize,
}

impl SeismicDatabase {
    pub fn from_table(table: SeismicTable) -> Result<Self, RetrievalError> {
        let index = build_index(
            &table.render_document(),
            "seismic_doc.txt",
            DEFAULT_MAX_CHUNK_CHARS,
        )?;
        Ok(Self {
            table,
            index,
            top_k: DEFAULT_TOP_K,
        })
    }

    pub fn builtin() -> &'static SeismicDatabase {
        static DB: OnceLock<SeismicDatabase> = OnceLock::new();
        DB.get_or_init(|| {
            Self::from_table(SeismicTable::from_csv(BUILTIN_TABLE_CSV).expect("shipped table"))
                .expect("shipped table renders")
        })
    }

    /// Ranks chunks for `location`, then parses the first chunk whose row names
    /// that city. Returns the parameters and the number of chunks consulted.
    pub fn get_seismic_parameters(
        &self,
        location: &str,
    ) -> Result<(SeismicParameters, usize), RetrievalError> {
        static ROW: OnceLock<Regex> = OnceLock::new();
        let row =
            ROW.get_or_init(|| Regex::new(r"(?m)^Seismic parameters for (.+?):(.*)$").unwrap());
        let wanted = normalize_city(location);
        let hits = self
            .index
            .retrieve(&format!("{location} seismic parameters"), self.top_k);
        for (chunk, _) in &hits {
            for caps in row.captures_iter(&chunk.text) {
                if normalize_city(&caps[1]) != wanted {
                    continue;
                }
                return parse_row(&caps[1], &caps[2]).map(|p| (p, hits.len()));
            }
        }
        Err(RetrievalError::CityNotFound {
            location: location.to_string(),
        })
    }
}

fn parse_row(city: &str, body: &str) -> Result<SeismicParameters, RetrievalError> {
    let mut v = [0.0; 6];
    for (i, field) in FIELDS.iter().enumerate() {
        let re = Regex::new(&format!(
            r"\b{field}\s*=\s*(-?[0-9]+(?:\.[0-9]+)?(?:[eE]-?[0-9]+)?)"
        ))
        .expect("field pattern");
        v[i] = re
            .captures(body)
            .and_then(|c| c[1].parse::<f64>().ok())
            .ok_or_else(|| RetrievalError::MalformedRow {
                city: city.to_string(),
                field,
            })?;
    }
    Ok(SeismicParameters::from_values(v))
}

/// Lookup against the shipped table.
pub fn get_seismic_parameters(location: &str) -> Result<SeismicParameters, RetrievalError> {
    SeismicDatabase::builtin()
        .get_seismic_parameters(location)
        .map(|(p, _)| p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nanaimo() -> SeismicParameters {
        SeismicParameters {
            Sa_02: 1.02,
            Sa_05: 0.942,
            Sa_10: 0.037,
            Sa_20: 0.328,
            PGA: 0.446,
            PGV: 0.684,
        }
    }

    #[test]
    fn nanaimo_exact() {
        assert_eq!(get_seismic_parameters("Nanaimo, BC").unwrap(), nanaimo());
    }

    #[test]
    fn case_and_space_folding() {
        assert_eq!(
            get_seismic_parameters("  nanaimo,   bc ").unwrap(),
            nanaimo()
        );
    }

    #[test]
    fn unknown_city() {
        let err = get_seismic_parameters("Atlantis, BC").unwrap_err();
        assert_eq!(err.kind(), "CityNotFound");
        assert_eq!(
            city_not_found_document(),
            json!({"error": "City not found"})
        );
    }

    #[test]
    fn shipped_document_matches_table_rendering() {
        let table = SeismicTable::from_csv(BUILTIN_TABLE_CSV).unwrap();
        assert_eq!(BUILTIN_DOC, table.render_document());
    }

    #[test]
    fn nanaimo_query_returns_six_chunks_with_row_on_top() {
        let db = SeismicDatabase::builtin();
        let hits = db.index.retrieve("Nanaimo seismic parameters", 6);
        assert_eq!(hits.len(), 6);
        assert!(hits[0].0.text.contains("Nanaimo"));
        // linear-scan oracle: the only chunk holding the city name
        let holders: Vec<usize> = db
            .index
            .chunks
            .iter()
            .filter(|c| c.text.contains("Nanaimo"))
            .map(|c| c.chunk_id)
            .collect();
        assert_eq!(holders, vec![hits[0].0.chunk_id]);
    }

    #[test]
    fn row_missing_a_field_is_malformed() {
        let table = SeismicTable::from_csv(
            "city,Sa_02,Sa_05,Sa_10,Sa_20,PGA,PGV\n\"Test, BC\",1,1,1,1,1,1\n",
        )
        .unwrap();
        let mut db = SeismicDatabase::from_table(table).unwrap();
        let doc = "Seismic parameters for Test, BC: Sa_02 = 1, Sa_05 = 1, Sa_10 = 1, Sa_20 = 1, PGA = 1\n";
        db.index = build_index(doc, "doc", 800).unwrap();
        let err = db.get_seismic_parameters("Test, BC").unwrap_err();
        assert!(matches!(
            err,
            RetrievalError::MalformedRow { field: "PGV", .. }
        ));
    }

    #[test]
    fn invalid_field_detection() {
        let mut p = nanaimo();
        assert_eq!(p.invalid_field(), None);
        p.PGA = -0.1;
        assert_eq!(p.invalid_field(), Some("PGA"));
    }
}
