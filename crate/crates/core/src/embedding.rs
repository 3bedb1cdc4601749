//! Concept embeddings, pair features and the cosine threshold used to pick
//! candidate pairs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::graph::{ConceptId, Taxonomy};
use crate::io::{read_text, ConceptTable, LoadError};

/// Embedding width used for the published experiments.
pub const DEFAULT_DIM: usize = 250;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line 1: malformed header, expected `count dim`: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate token `{token}`")]
    DuplicateToken { line: usize, token: String },
    #[error("line {line}: bad value `{value}`")]
    BadValue { line: usize, value: String },
    #[error("header announces {expected} rows, file has {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("no embedding for `{0}`")]
    MissingEmbedding(String),
    #[error("embedding of `{0}` is the zero vector")]
    ZeroVector(String),
    #[error("taxonomy has no edges")]
    EmptyTaxonomy,
    #[error(transparent)]
    Load(#[from] LoadError),
}

/// Immutable table of equal-length, finite vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    table: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    /// Returns `None` when `dim` is zero or a vector has the wrong length or
    /// a non-finite entry.
    pub fn from_vectors(dim: usize, vectors: impl IntoIterator<Item = (String, Vec<f64>)>) -> Option<Self> {
        if dim == 0 {
            return None;
        }
        let mut table = BTreeMap::new();
        for (k, v) in vectors {
            if v.len() != dim || v.iter().any(|x| !x.is_finite()) {
                return None;
            }
            table.insert(k, v);
        }
        Some(EmbeddingStore { dim, table })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> + '_ {
        self.table.keys().map(String::as_str)
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.table.get(key).map(Vec::as_slice)
    }

    pub fn contains(&self, id: &ConceptId) -> bool {
        self.table.contains_key(id.as_str())
    }

    pub fn vector(&self, id: &ConceptId) -> Result<&[f64], EmbeddingError> {
        self.get(id.as_str())
            .ok_or_else(|| EmbeddingError::MissingEmbedding(id.to_string()))
    }

    /// Re-keys a surface-name store by concept id. Concepts whose surface
    /// name has no vector are returned in the second slot.
    pub fn by_concept_id(&self, concepts: &ConceptTable) -> (EmbeddingStore, Vec<ConceptId>) {
        let mut table = BTreeMap::new();
        let mut missing = Vec::new();
        for (id, c) in concepts {
            match self.table.get(c.surface_name()) {
                Some(v) => {
                    table.insert(id.to_string(), v.clone());
                }
                None => missing.push(id.clone()),
            }
        }
        (
            EmbeddingStore {
                dim: self.dim,
                table,
            },
            missing,
        )
    }

    pub fn cosine(&self, a: &ConceptId, c: &ConceptId) -> Result<f64, EmbeddingError> {
        let va = self.vector(a)?;
        let vc = self.vector(c)?;
        let na = norm(va);
        if na == 0.0 {
            return Err(EmbeddingError::ZeroVector(a.to_string()));
        }
        let nc = norm(vc);
        if nc == 0.0 {
            return Err(EmbeddingError::ZeroVector(c.to_string()));
        }
        Ok((dot(va, vc) / (na * nc)).clamp(-1.0, 1.0))
    }

    /// `[a ‖ c ‖ a − c ‖ a ⊙ c]`, length `4 · dim`.
    pub fn feature(&self, a: &ConceptId, c: &ConceptId) -> Result<PairFeature, EmbeddingError> {
        Ok(pair_feature(self.vector(a)?, self.vector(c)?))
    }
}

/// Concatenated features of an ordered concept pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeature(pub Vec<f64>);

impl PairFeature {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn pair_feature(a: &[f64], c: &[f64]) -> PairFeature {
    debug_assert_eq!(a.len(), c.len());
    let mut v = Vec::with_capacity(4 * a.len());
    v.extend_from_slice(a);
    v.extend_from_slice(c);
    v.extend(a.iter().zip(c).map(|(x, y)| x - y));
    v.extend(a.iter().zip(c).map(|(x, y)| x * y));
    PairFeature(v)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Mean cosine over all edges of the taxonomy.
pub fn edge_similarity_threshold(t: &Taxonomy, store: &EmbeddingStore) -> Result<f64, EmbeddingError> {
    if t.edge_count() == 0 {
        return Err(EmbeddingError::EmptyTaxonomy);
    }
    let mut sum = 0.0;
    for (p, c) in t.edges() {
        sum += store.cosine(p, c)?;
    }
    Ok(sum / t.edge_count() as f64)
}

fn token_to_key(token: &str) -> String {
    token.replace('_', " ")
}

fn key_to_token(key: &str) -> String {
    key.replace(' ', "_")
}

/// Parses the `count dim` header followed by `token v1 … v_dim` rows.
/// Tokens are surface names with spaces written as underscores.
pub fn parse_embeddings(text: &str) -> Result<EmbeddingStore, EmbeddingError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| EmbeddingError::MalformedHeader(String::new()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match fields.as_slice() {
        [c, d] => match (c.parse::<usize>(), d.parse::<usize>()) {
            (Ok(c), Ok(d)) if d >= 1 => (c, d),
            _ => return Err(EmbeddingError::MalformedHeader(header.to_string())),
        },
        _ => return Err(EmbeddingError::MalformedHeader(header.to_string())),
    };

    let mut table = BTreeMap::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-blank line has a token");
        let values = parts
            .map(|s| match s.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(EmbeddingError::BadValue {
                    line: line_no,
                    value: s.to_string(),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                line: line_no,
                expected: dim,
                found: values.len(),
            });
        }
        let key = token_to_key(token);
        if table.insert(key, values).is_some() {
            return Err(EmbeddingError::DuplicateToken {
                line: line_no,
                token: token.to_string(),
            });
        }
    }
    if table.len() != count {
        return Err(EmbeddingError::CountMismatch {
            expected: count,
            found: table.len(),
        });
    }
    Ok(EmbeddingStore { dim, table })
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore, EmbeddingError> {
    parse_embeddings(&read_text(path)?)
}

pub fn format_embeddings(store: &EmbeddingStore) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", store.len(), store.dim);
    for (k, v) in &store.table {
        out.push_str(&key_to_token(k));
        for x in v {
            let _ = write!(out, " {x}");
        }
        out.push('\n');
    }
    out
}
