#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng as _;
use taxoorder::embedding::EmbeddingStore;
use taxoorder::expansion::{ExpansionError, ExpansionModel, RankedParents};
use taxoorder::graph::{ConceptId, DirectedGraph, Taxonomy};
use taxoorder::seed;

pub fn id(s: &str) -> ConceptId {
    ConceptId::from(s)
}

pub fn ids(n: usize) -> Vec<ConceptId> {
    (0..n).map(|i| ConceptId::from(format!("n{i:02}"))).collect()
}

/// `reach[i][j]`: a non-empty path from `nodes[i]` to `nodes[j]`.
pub fn reach_matrix(g: &DirectedGraph) -> (Vec<ConceptId>, Vec<Vec<bool>>) {
    let nodes: Vec<ConceptId> = g.nodes().cloned().collect();
    let index: BTreeMap<&ConceptId, usize> = nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let n = nodes.len();
    let mut r = vec![vec![false; n]; n];
    for (p, c) in g.edges() {
        r[index[p]][index[c]] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                let via = r[k].clone();
                for (dst, &v) in r[i].iter_mut().zip(&via) {
                    *dst |= v;
                }
            }
        }
    }
    (nodes, r)
}

pub fn brute_acyclic(g: &DirectedGraph) -> bool {
    let (_, r) = reach_matrix(g);
    (0..r.len()).all(|i| !r[i][i])
}

/// Components of mutual reachability with two or more members.
pub fn brute_sccs(g: &DirectedGraph) -> Vec<BTreeSet<ConceptId>> {
    let (nodes, r) = reach_matrix(g);
    let mut seen = vec![false; nodes.len()];
    let mut out = Vec::new();
    for i in 0..nodes.len() {
        if seen[i] {
            continue;
        }
        let comp: BTreeSet<ConceptId> = (0..nodes.len())
            .filter(|&j| j == i || (r[i][j] && r[j][i]))
            .inspect(|&j| seen[j] = true)
            .map(|j| nodes[j].clone())
            .collect();
        if comp.len() >= 2 {
            out.push(comp);
        }
    }
    out
}

/// Replays the cycle-cutting policy with brute-force SCCs.
pub fn brute_cut_cycles(g: &DirectedGraph) -> DirectedGraph {
    let mut g = g.clone();
    loop {
        let mut comps = brute_sccs(&g);
        if comps.is_empty() {
            return g;
        }
        comps.sort_by_key(|c| (std::cmp::Reverse(c.len()), c.iter().next().cloned()));
        let scc = &comps[0];
        let mut internal: Vec<(f64, ConceptId, ConceptId)> = g
            .weighted_edges()
            .filter(|(p, c, _)| scc.contains(*p) && scc.contains(*c))
            .map(|(p, c, w)| (w, p.clone(), c.clone()))
            .collect();
        internal.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| (&a.1, &a.2).cmp(&(&b.1, &b.2))));
        let (_, p, c) = internal.swap_remove(0);
        g.remove_edge(&p, &c);
    }
}

/// Edges lying on no cycle: `c` cannot get back to `p`.
pub fn non_cycle_edges(g: &DirectedGraph) -> BTreeSet<(ConceptId, ConceptId)> {
    let (nodes, r) = reach_matrix(g);
    let index: BTreeMap<&ConceptId, usize> = nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
    g.edges()
        .filter(|(p, c)| !r[index[c]][index[p]])
        .map(|(p, c)| (p.clone(), c.clone()))
        .collect()
}

/// Random directed graph, cycles allowed, weights from a small grid so
/// ties happen.
pub fn random_digraph(rng: &mut seed::Rng, max_nodes: usize) -> DirectedGraph {
    let n = rng.random_range(1..=max_nodes);
    let nodes = ids(n);
    let mut g = DirectedGraph::new();
    for v in &nodes {
        g.add_node(v.clone());
    }
    let p = rng.random_range(0.05..0.45);
    for a in &nodes {
        for b in &nodes {
            if a != b && rng.random_bool(p) {
                let w = rng.random_range(1..=4) as f64 / 4.0;
                g.add_weighted_edge(a.clone(), b.clone(), w).unwrap();
            }
        }
    }
    g
}

/// Random DAG whose edges follow a hidden random node order; nodes may
/// have several parents.
pub fn random_dag(rng: &mut seed::Rng, n: usize, p: f64) -> DirectedGraph {
    use rand::seq::SliceRandom;
    let mut nodes = ids(n);
    nodes.shuffle(rng);
    let mut g = DirectedGraph::new();
    for v in &nodes {
        g.add_node(v.clone());
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                g.add_edge(nodes[i].clone(), nodes[j].clone()).unwrap();
            }
        }
    }
    g
}

/// Ranks every candidate with a pseudo-random score derived from the query
/// and candidate names; a true parent, if present, is pushed to the top
/// with probability one half.
pub struct NoisyModel {
    pub seed: u64,
    pub parents: BTreeMap<ConceptId, BTreeSet<ConceptId>>,
}

impl ExpansionModel for NoisyModel {
    fn rank_parents(&self, current: &Taxonomy, query: &ConceptId) -> Result<RankedParents, ExpansionError> {
        let mut rng = seed::stream(self.seed, query.as_str());
        let boost = rng.random_bool(0.5);
        let truth = self.parents.get(query);
        let scored = current
            .nodes()
            .map(|c| {
                let mut s: f64 = rng.random();
                if boost && truth.is_some_and(|t| t.contains(c)) {
                    s += 1.0;
                }
                (c.clone(), s)
            })
            .collect();
        Ok(RankedParents::new(query.clone(), scored))
    }
}

pub fn unit_store(dim: usize, keys: &[ConceptId], rng: &mut seed::Rng) -> EmbeddingStore {
    let vectors = keys.iter().map(|k| {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        (k.as_str().to_string(), v)
    });
    EmbeddingStore::from_vectors(dim, vectors).expect("dimensions agree")
}
