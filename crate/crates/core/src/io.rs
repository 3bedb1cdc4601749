//! Plain-text file formats.
//!
//! * taxonomy: `parent<TAB>child` per line; a line holding a single id
//!   declares an isolated node; `#` lines and blank lines are ignored.
//! * concepts: `id<TAB>surface name` per line.
//! * id lists (new concepts, orders): one id per line.
//! * ground truth: `query<TAB>parent` per line, one line per true parent.
//! * weighted edges: `parent<TAB>child<TAB>weight`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::graph::{Concept, ConceptId, DirectedGraph, GraphError, Taxonomy};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
    Graph {
        path: PathBuf,
        #[source]
        source: GraphError,
    },
}

impl LoadError {
    fn parse(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        LoadError::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), LoadError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| LoadError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

pub fn parse_taxonomy(text: &str, path: &Path) -> Result<Taxonomy, LoadError> {
    let mut g = DirectedGraph::new();
    for (no, line) in content_lines(text) {
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        match fields.as_slice() {
            [n] if !n.is_empty() => {
                g.add_node(ConceptId::new(n));
            }
            [p, c] if !p.is_empty() && !c.is_empty() => {
                let (p, c) = (ConceptId::new(p), ConceptId::new(c));
                g.add_node(p.clone());
                g.add_node(c.clone());
                g.add_edge(p, c)
                    .map_err(|e| LoadError::parse(path, no, e.to_string()))?;
            }
            _ => return Err(LoadError::parse(path, no, "expected `parent<TAB>child`")),
        }
    }
    Taxonomy::new(g).map_err(|source| LoadError::Graph {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_taxonomy(path: &Path) -> Result<Taxonomy, LoadError> {
    parse_taxonomy(&read_text(path)?, path)
}

/// Edges in id order, then isolated nodes as single-id lines.
pub fn format_taxonomy(g: &DirectedGraph) -> String {
    let mut out = String::new();
    for (p, c) in g.edges() {
        let _ = writeln!(out, "{p}\t{c}");
    }
    for n in g.nodes() {
        if g.in_degree(n) == 0 && g.out_degree(n) == 0 {
            let _ = writeln!(out, "{n}");
        }
    }
    out
}

pub fn format_weighted_edges(g: &DirectedGraph) -> String {
    let mut out = String::new();
    for (p, c, w) in g.weighted_edges() {
        let _ = writeln!(out, "{p}\t{c}\t{w}");
    }
    out
}

/// Concept table keyed by id.
pub type ConceptTable = BTreeMap<ConceptId, Concept>;

pub fn parse_concepts(text: &str, path: &Path) -> Result<ConceptTable, LoadError> {
    let mut table = ConceptTable::new();
    let mut names = BTreeSet::new();
    for (no, line) in content_lines(text) {
        let Some((id, name)) = line.split_once('\t') else {
            return Err(LoadError::parse(path, no, "expected `id<TAB>surface_name`"));
        };
        let id = id.trim();
        if id.is_empty() {
            return Err(LoadError::parse(path, no, "empty concept id"));
        }
        let concept = Concept::new(id, name)
            .ok_or_else(|| LoadError::parse(path, no, "empty surface name"))?;
        if !names.insert(concept.surface_name().to_string()) {
            return Err(LoadError::parse(
                path,
                no,
                format!("duplicate surface name `{}`", concept.surface_name()),
            ));
        }
        if table.insert(concept.id.clone(), concept).is_some() {
            return Err(LoadError::parse(path, no, format!("duplicate concept id `{id}`")));
        }
    }
    Ok(table)
}

pub fn load_concepts(path: &Path) -> Result<ConceptTable, LoadError> {
    parse_concepts(&read_text(path)?, path)
}

pub fn format_concepts<'a>(concepts: impl IntoIterator<Item = &'a Concept>) -> String {
    let mut out = String::new();
    for c in concepts {
        let _ = writeln!(out, "{}\t{}", c.id, c.surface_name());
    }
    out
}

/// One id per line, order preserved, duplicates rejected.
pub fn parse_id_list(text: &str, path: &Path) -> Result<Vec<ConceptId>, LoadError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (no, line) in content_lines(text) {
        let id = line.trim();
        if id.contains('\t') {
            return Err(LoadError::parse(path, no, "expected a single id per line"));
        }
        if !seen.insert(id.to_string()) {
            return Err(LoadError::parse(path, no, format!("duplicate id `{id}`")));
        }
        out.push(ConceptId::new(id));
    }
    Ok(out)
}

pub fn load_id_list(path: &Path) -> Result<Vec<ConceptId>, LoadError> {
    parse_id_list(&read_text(path)?, path)
}

pub fn format_id_list<'a>(ids: impl IntoIterator<Item = &'a ConceptId>) -> String {
    let mut out = String::new();
    for id in ids {
        let _ = writeln!(out, "{id}");
    }
    out
}

/// `query<TAB>parent` pairs.
pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<(ConceptId, ConceptId)>, LoadError> {
    content_lines(text)
        .map(|(no, line)| match line.split('\t').collect::<Vec<_>>().as_slice() {
            [a, b] if !a.trim().is_empty() && !b.trim().is_empty() => {
                Ok((ConceptId::new(a.trim()), ConceptId::new(b.trim())))
            }
            _ => Err(LoadError::parse(path, no, "expected two tab-separated ids")),
        })
        .collect()
}

pub fn load_pairs(path: &Path) -> Result<Vec<(ConceptId, ConceptId)>, LoadError> {
    parse_pairs(&read_text(path)?, path)
}

pub fn format_pairs<'a>(pairs: impl IntoIterator<Item = (&'a ConceptId, &'a ConceptId)>) -> String {
    let mut out = String::new();
    for (a, b) in pairs {
        let _ = writeln!(out, "{a}\t{b}");
    }
    out
}
