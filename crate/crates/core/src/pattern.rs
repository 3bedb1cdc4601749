//! Hypernym edges mined from surface names: `a` is taken as a hypernym of
//! `c` when `c`'s name strictly ends with `a`'s name ("science" ->
//! "computer science", "text mining" -> "biotext mining").

use crate::graph::{Concept, DirectedGraph};

pub const PATTERN_WEIGHT: f64 = 1.0;

pub fn surface_match(a: &Concept, c: &Concept) -> bool {
    let (a, c) = (a.surface_name(), c.surface_name());
    c.len() > a.len() && c.ends_with(a)
}

/// All concepts as nodes, one weight-1 edge per matching ordered pair.
pub fn build_pattern_graph(concepts: &[Concept]) -> DirectedGraph {
    let mut g = DirectedGraph::new();
    for c in concepts {
        g.add_node(c.id.clone());
    }
    for a in concepts {
        for c in concepts {
            if a.id != c.id && surface_match(a, c) {
                g.add_weighted_edge(a.id.clone(), c.id.clone(), PATTERN_WEIGHT)
                    .expect("both endpoints were added");
            }
        }
    }
    g
}

/// The pattern graph with any cycles cut. Strict suffix matching cannot
/// produce a cycle, so the cut is a no-op for [`surface_match`].
pub fn build_pattern_dag(concepts: &[Concept]) -> DirectedGraph {
    build_pattern_graph(concepts).cut_cycles()
}
