//! Insertion-order construction for new concepts.
//!
//! The main method merges learned pseudo-edges into the pattern DAG in
//! descending weight order, discarding any edge that would close a cycle,
//! and topologically sorts the result. Four baselines (random, affinity,
//! spanning-forest, pattern-only) share the same output type.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingStore};
use crate::expansion::{ExpansionError, ExpansionModel};
use crate::graph::{Concept, ConceptId, DirectedGraph, GraphError, Taxonomy};
use crate::pattern::build_pattern_dag;
use crate::scorer::{ScorerError, ScorerParams};
use crate::seed;

#[derive(Debug, Error)]
pub enum SortError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
}

/// A permutation of the new-concept set; first element is inserted first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptOrder(pub Vec<ConceptId>);

impl ConceptOrder {
    pub fn as_slice(&self) -> &[ConceptId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_permutation_of<'a>(&self, ids: impl IntoIterator<Item = &'a ConceptId>) -> bool {
        let mut a: Vec<&ConceptId> = self.0.iter().collect();
        let mut b: Vec<&ConceptId> = ids.into_iter().collect();
        a.sort();
        b.sort();
        a == b
    }

    /// True if every edge of `g` between ordered concepts points forward.
    pub fn respects(&self, g: &DirectedGraph) -> bool {
        let pos: BTreeMap<&ConceptId, usize> = self.0.iter().enumerate().map(|(i, c)| (c, i)).collect();
        g.edges()
            .all(|(p, c)| match (pos.get(p), pos.get(c)) {
                (Some(i), Some(j)) => i < j,
                _ => true,
            })
    }
}

/// Unordered pair with `a < c`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePair {
    pub a: ConceptId,
    pub c: ConceptId,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoEdge {
    pub parent: ConceptId,
    pub child: ConceptId,
    pub weight: f64,
}

fn sorted_ids<'a>(ids: impl IntoIterator<Item = &'a ConceptId>) -> Vec<ConceptId> {
    let set: BTreeSet<&ConceptId> = ids.into_iter().collect();
    set.into_iter().cloned().collect()
}

/// Every unordered pair whose cosine is at least `alpha`, in id order.
pub fn candidate_pairs(ids: &[ConceptId], store: &EmbeddingStore, alpha: f64) -> Result<Vec<CandidatePair>, SortError> {
    let ids = sorted_ids(ids);
    for id in &ids {
        store.vector(id)?;
    }
    let rows = (0..ids.len())
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::new();
            for j in i + 1..ids.len() {
                let sim = store.cosine(&ids[i], &ids[j])?;
                if sim >= alpha {
                    row.push(CandidatePair {
                        a: ids[i].clone(),
                        c: ids[j].clone(),
                        similarity: sim,
                    });
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, EmbeddingError>>()?;
    Ok(rows.into_iter().flatten().collect())
}

fn sort_edges(edges: &mut [PseudoEdge]) {
    edges.sort_by(|x, y| {
        y.weight
            .total_cmp(&x.weight)
            .then_with(|| (&x.parent, &x.child).cmp(&(&y.parent, &y.child)))
    });
}

/// Both directions of every pair, weighted by the scorer, strongest first.
pub fn pseudo_edges(pairs: &[CandidatePair], params: &ScorerParams, store: &EmbeddingStore) -> Result<Vec<PseudoEdge>, SortError> {
    let scored = pairs
        .par_iter()
        .map(|p| {
            let fwd = params.score_pair(store, &p.a, &p.c)?;
            let back = params.score_pair(store, &p.c, &p.a)?;
            Ok([
                PseudoEdge { parent: p.a.clone(), child: p.c.clone(), weight: fwd },
                PseudoEdge { parent: p.c.clone(), child: p.a.clone(), weight: back },
            ])
        })
        .collect::<Result<Vec<_>, ScorerError>>()?;
    let mut edges: Vec<PseudoEdge> = scored.into_iter().flatten().collect();
    sort_edges(&mut edges);
    Ok(edges)
}

/// Greedily appends pseudo-edges to the pattern DAG in descending weight
/// order, skipping any that would close a cycle or already exist.
pub fn merge_into_dag(t_concept: &DirectedGraph, edges: &[PseudoEdge]) -> DirectedGraph {
    let mut edges = edges.to_vec();
    sort_edges(&mut edges);
    let mut g = t_concept.clone();
    for e in edges {
        g.add_node(e.parent.clone());
        g.add_node(e.child.clone());
        if e.parent == e.child || g.has_edge(&e.parent, &e.child) || g.reaches(&e.child, &e.parent) {
            continue;
        }
        // sigmoid can underflow to exactly 0 for extreme logits
        let w = e.weight.clamp(f64::MIN_POSITIVE, 1.0);
        g.add_weighted_edge(e.parent, e.child, w)
            .expect("endpoints present and weight in range");
    }
    g
}

pub fn sort_concepts(t_order: &DirectedGraph) -> Result<ConceptOrder, SortError> {
    Ok(ConceptOrder(t_order.topological_sort()?))
}

/// Uniform permutation, deterministic per seed.
pub fn random_order(ids: &[ConceptId], seed: u64) -> ConceptOrder {
    let mut v = sorted_ids(ids);
    v.shuffle(&mut seed::stream(seed, "random-order"));
    ConceptOrder(v)
}

/// Queries sorted by their best affinity against the initial taxonomy,
/// highest first.
pub fn affinity_order(ids: &[ConceptId], t0: &Taxonomy, model: &dyn ExpansionModel) -> Result<ConceptOrder, SortError> {
    let mut scored = Vec::with_capacity(ids.len());
    for q in sorted_ids(ids) {
        let ranked = model.rank_parents(t0, &q)?;
        let best = ranked.candidates.first().map_or(f64::NEG_INFINITY, |(_, s)| *s);
        scored.push((q, best));
    }
    scored.sort_by(|(qa, sa), (qb, sb)| sb.total_cmp(sa).then_with(|| qa.cmp(qb)));
    Ok(ConceptOrder(scored.into_iter().map(|(q, _)| q).collect()))
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Maximum-weight spanning forest over candidate pairs (edge weight = the
/// larger directional score), each kept edge oriented toward its higher
/// score, then topologically sorted.
pub fn mlp_forest(ids: &[ConceptId], store: &EmbeddingStore, params: &ScorerParams, alpha: f64) -> Result<DirectedGraph, SortError> {
    let ids = sorted_ids(ids);
    let pairs = candidate_pairs(&ids, store, alpha)?;
    let mut weighted = pairs
        .par_iter()
        .map(|p| {
            let fwd = params.score_pair(store, &p.a, &p.c)?;
            let back = params.score_pair(store, &p.c, &p.a)?;
            // ties orient from the smaller id, which is `a`
            let (parent, child) = if fwd >= back { (&p.a, &p.c) } else { (&p.c, &p.a) };
            Ok((fwd.max(back), parent.clone(), child.clone(), p.a.clone(), p.c.clone()))
        })
        .collect::<Result<Vec<_>, ScorerError>>()?;
    weighted.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| (&x.3, &x.4).cmp(&(&y.3, &y.4))));

    let index: BTreeMap<&ConceptId, usize> = ids.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut dsu = DisjointSet::new(ids.len());
    let mut g = DirectedGraph::build(ids.iter().cloned(), [])?;
    for (w, parent, child, a, c) in weighted {
        if dsu.union(index[&a], index[&c]) {
            g.add_weighted_edge(parent, child, w.clamp(f64::MIN_POSITIVE, 1.0))?;
        }
    }
    Ok(g)
}

pub fn mlp_order(ids: &[ConceptId], store: &EmbeddingStore, params: &ScorerParams, alpha: f64) -> Result<ConceptOrder, SortError> {
    sort_concepts(&mlp_forest(ids, store, params, alpha)?)
}

/// Topological order of the pattern DAG alone.
pub fn pattern_order(concepts: &[Concept]) -> Result<ConceptOrder, SortError> {
    sort_concepts(&build_pattern_dag(concepts))
}

/// Ordering together with the merged DAG it was read from.
#[derive(Debug, Clone)]
pub struct TaxoOrder {
    pub order: ConceptOrder,
    pub t_order: DirectedGraph,
}

/// Pattern DAG + pseudo-edges from candidate pairs, merged and sorted.
pub fn taxoorder(concepts: &[Concept], store: &EmbeddingStore, params: &ScorerParams, alpha: f64) -> Result<TaxoOrder, SortError> {
    let t_concept = build_pattern_dag(concepts);
    let ids: Vec<ConceptId> = concepts.iter().map(|c| c.id.clone()).collect();
    let pairs = candidate_pairs(&ids, store, alpha)?;
    let edges = pseudo_edges(&pairs, params, store)?;
    let t_order = merge_into_dag(&t_concept, &edges);
    let order = sort_concepts(&t_order)?;
    Ok(TaxoOrder { order, t_order })
}

/// Topological order of the ground-truth subgraph induced on the new
/// concepts. Every query follows all of its new-concept parents.
pub fn groundtruth_order(ids: &[ConceptId], full: &DirectedGraph) -> Result<ConceptOrder, SortError> {
    let keep: BTreeSet<ConceptId> = ids.iter().cloned().collect();
    let mut sub = full.induced_subgraph(&keep);
    for id in ids {
        sub.add_node(id.clone());
    }
    sort_concepts(&sub)
}
