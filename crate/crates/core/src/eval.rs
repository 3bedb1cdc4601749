//! Metrics for ordered expansion, dataset splits, and a synthetic
//! taxonomy/embedding generator for desk-scale experiments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::embedding::{norm, EmbeddingStore};
use crate::expansion::ExpansionTrace;
use crate::graph::{Concept, ConceptId, DirectedGraph, GraphError, Taxonomy};
use crate::io::ConceptTable;
use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("`{0}` is not a query of the ground truth")]
    UnknownQuery(ConceptId),
    #[error("fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("cannot mask {target} of {total} nodes: only {available} are maskable")]
    FractionUnreachable {
        target: usize,
        total: usize,
        available: usize,
    },
    #[error("order does not match the query set: {0}")]
    OrderMismatch(String),
    #[error("invalid generator settings: {0}")]
    InvalidSynthetic(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// The full taxonomy plus, for each masked query, its true parents.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub full: Taxonomy,
    pub parents: BTreeMap<ConceptId, BTreeSet<ConceptId>>,
}

impl GroundTruth {
    /// Records the parents of `queries` in `full`.
    pub fn from_full(full: &Taxonomy, queries: &BTreeSet<ConceptId>) -> Self {
        let parents = queries
            .iter()
            .map(|q| (q.clone(), full.parents(q).cloned().collect()))
            .collect();
        GroundTruth {
            full: full.clone(),
            parents,
        }
    }

    pub fn queries(&self) -> impl Iterator<Item = &ConceptId> + '_ {
        self.parents.keys()
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    /// Ground-truth edges whose child is a query.
    pub fn new_edges(&self) -> BTreeSet<(ConceptId, ConceptId)> {
        self.parents
            .iter()
            .flat_map(|(q, ps)| ps.iter().map(move |p| (p.clone(), q.clone())))
            .collect()
    }

    pub fn pairs(&self) -> Vec<(ConceptId, ConceptId)> {
        self.parents
            .iter()
            .flat_map(|(q, ps)| ps.iter().map(move |p| (q.clone(), p.clone())))
            .collect()
    }
}

/// Number of queries none of whose true parents is present at their turn.
pub fn enc(order: &[ConceptId], t0: &Taxonomy, gt: &GroundTruth) -> Result<usize, EvalError> {
    let mut inserted: BTreeSet<&ConceptId> = BTreeSet::new();
    let mut errors = 0;
    for q in order {
        let parents = gt.parents.get(q).ok_or_else(|| EvalError::UnknownQuery(q.clone()))?;
        if !parents.iter().any(|p| t0.contains(p) || inserted.contains(p)) {
            errors += 1;
        }
        inserted.insert(q);
    }
    Ok(errors)
}

/// Checks that `order` is a permutation of the ground-truth queries.
pub fn check_order(order: &[ConceptId], gt: &GroundTruth) -> Result<(), EvalError> {
    let got: BTreeSet<&ConceptId> = order.iter().collect();
    if got.len() != order.len() {
        return Err(EvalError::OrderMismatch("order repeats a concept".into()));
    }
    let want: BTreeSet<&ConceptId> = gt.queries().collect();
    if let Some(x) = got.difference(&want).next() {
        return Err(EvalError::OrderMismatch(format!("`{x}` is not a new concept")));
    }
    if let Some(x) = want.difference(&got).next() {
        return Err(EvalError::OrderMismatch(format!("`{x}` is missing from the order")));
    }
    Ok(())
}

/// Share of queries with any true parent in the top `k` of their ranking.
pub fn hit_at_k(trace: &ExpansionTrace, gt: &GroundTruth, k: usize) -> f64 {
    assert!(k >= 1, "k must be positive");
    if gt.is_empty() {
        return 0.0;
    }
    let hits = gt
        .parents
        .iter()
        .filter(|(q, ps)| {
            trace.ranks.get(*q).is_some_and(|r| {
                r.candidates
                    .iter()
                    .take(k)
                    .any(|(c, _)| ps.contains(c))
            })
        })
        .count();
    hits as f64 / gt.len() as f64
}

/// Mean over queries of the mean over true parents of `1 / ceil(rank / 10)`;
/// a parent missing from the ranking contributes 0.
pub fn scaled_mrr(trace: &ExpansionTrace, gt: &GroundTruth) -> f64 {
    if gt.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (q, ps) in &gt.parents {
        if ps.is_empty() {
            continue;
        }
        let Some(ranked) = trace.ranks.get(q) else {
            continue;
        };
        let mut sum = 0.0;
        for p in ps {
            if let Some(r) = ranked.rank_of(p) {
                sum += 1.0 / r.div_ceil(10) as f64;
            }
        }
        total += sum / ps.len() as f64;
    }
    total / gt.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision/recall/F1 of `pred` against `truth`. Two empty sets score
/// (1, 1, 1); an empty side otherwise scores 0.
pub fn prf<T: Ord>(pred: &BTreeSet<T>, truth: &BTreeSet<T>) -> Prf {
    if pred.is_empty() && truth.is_empty() {
        return Prf { precision: 1.0, recall: 1.0, f1: 1.0 };
    }
    let overlap = pred.intersection(truth).count() as f64;
    let precision = if pred.is_empty() { 0.0 } else { overlap / pred.len() as f64 };
    let recall = if truth.is_empty() { 0.0 } else { overlap / truth.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf { precision, recall, f1 }
}

pub fn pred_f1(trace: &ExpansionTrace, gt: &GroundTruth) -> Prf {
    let pred: BTreeSet<_> = trace.predicted.iter().cloned().collect();
    prf(&pred, &gt.new_edges())
}

pub fn edge_f1(trace: &ExpansionTrace, gt: &GroundTruth) -> Prf {
    prf(&trace.final_taxonomy.edge_set(), &gt.full.edge_set())
}

pub fn ancestor_f1(trace: &ExpansionTrace, gt: &GroundTruth) -> Result<Prf, EvalError> {
    let pred = trace.final_taxonomy.ancestor_closure()?;
    let truth = gt.full.ancestor_closure()?;
    Ok(prf(&pred.edge_set(), &truth.edge_set()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub enc: usize,
    /// `(k, Hit@k)` in the order requested.
    pub hits: Vec<(usize, f64)>,
    pub mrr: f64,
    pub pred: Prf,
    pub edge: Prf,
    pub ancestor: Prf,
}

impl MetricsReport {
    pub fn compute(
        order: &[ConceptId],
        t0: &Taxonomy,
        trace: &ExpansionTrace,
        gt: &GroundTruth,
        ks: &[usize],
    ) -> Result<Self, EvalError> {
        Ok(MetricsReport {
            enc: enc(order, t0, gt)?,
            hits: ks.iter().map(|&k| (k, hit_at_k(trace, gt, k))).collect(),
            mrr: scaled_mrr(trace, gt),
            pred: pred_f1(trace, gt),
            edge: edge_f1(trace, gt),
            ancestor: ancestor_f1(trace, gt)?,
        })
    }

    pub fn hit(&self, k: usize) -> Option<f64> {
        self.hits.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }
}

/// Aligned text table, one row per method.
pub fn format_table(rows: &[(String, MetricsReport)]) -> String {
    let ks: Vec<usize> = rows
        .first()
        .map(|(_, r)| r.hits.iter().map(|(k, _)| *k).collect())
        .unwrap_or_else(|| vec![1, 3]);
    let mut header = vec!["Method".to_string(), "ENC".into(), "MRR".into()];
    header.extend(ks.iter().map(|k| format!("Hit@{k}")));
    header.extend(["Pred F1".into(), "Edge F1".into(), "Ancestor F1".into()]);

    let mut cells: Vec<Vec<String>> = vec![header];
    for (name, r) in rows {
        let mut row = vec![name.clone(), r.enc.to_string(), format!("{:.4}", r.mrr)];
        row.extend(ks.iter().map(|k| format!("{:.4}", r.hit(*k).unwrap_or(f64::NAN))));
        row.extend([r.pred.f1, r.edge.f1, r.ancestor.f1].map(|v| format!("{v:.4}")));
        cells.push(row);
    }
    let widths: Vec<usize> = (0..cells[0].len())
        .map(|i| cells.iter().map(|r| r[i].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (n, row) in cells.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if n == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}

/// `method.key=value` lines.
pub fn format_kv(rows: &[(String, MetricsReport)]) -> String {
    let mut out = String::new();
    for (name, r) in rows {
        let _ = writeln!(out, "{name}.enc={}", r.enc);
        let _ = writeln!(out, "{name}.mrr={}", r.mrr);
        for (k, v) in &r.hits {
            let _ = writeln!(out, "{name}.hit_at_{k}={v}");
        }
        for (label, p) in [("pred", r.pred), ("edge", r.edge), ("ancestor", r.ancestor)] {
            let _ = writeln!(out, "{name}.{label}_precision={}", p.precision);
            let _ = writeln!(out, "{name}.{label}_recall={}", p.recall);
            let _ = writeln!(out, "{name}.{label}_f1={}", p.f1);
        }
    }
    out
}

fn check_fraction(fraction: f64) -> Result<(), EvalError> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(EvalError::InvalidFraction(fraction))
    }
}

/// Masks `ceil(fraction · |leaves|)` uniformly chosen leaves. Only leaves
/// that have a parent are eligible.
pub fn make_validation_split(t: &Taxonomy, fraction: f64, seed: u64) -> Result<(Taxonomy, GroundTruth), EvalError> {
    check_fraction(fraction)?;
    let leaves: Vec<ConceptId> = t.leaves().into_iter().filter(|l| t.in_degree(l) > 0).collect();
    let want = (fraction * leaves.len() as f64).ceil() as usize;
    let mut rng = seed::stream(seed, "split-validation");
    let masked: BTreeSet<ConceptId> = index::sample(&mut rng, leaves.len(), want.min(leaves.len()))
        .into_iter()
        .map(|i| leaves[i].clone())
        .collect();
    Ok((t.without(&masked), GroundTruth::from_full(t, &masked)))
}

/// Masks whole descendant-closed subtrees under uniformly chosen non-root
/// nodes until at least `ceil(fraction · |nodes|)` nodes are masked.
pub fn make_test_split(t: &Taxonomy, fraction: f64, seed: u64) -> Result<(Taxonomy, GroundTruth), EvalError> {
    check_fraction(fraction)?;
    let total = t.node_count();
    let target = (fraction * total as f64).ceil() as usize;
    let non_roots: Vec<ConceptId> = t.nodes().filter(|n| t.in_degree(n) > 0).cloned().collect();
    if non_roots.len() < target {
        return Err(EvalError::FractionUnreachable {
            target,
            total,
            available: non_roots.len(),
        });
    }
    let mut rng = seed::stream(seed, "split-test");
    let mut masked: BTreeSet<ConceptId> = BTreeSet::new();
    while masked.len() < target {
        let pool: Vec<&ConceptId> = non_roots.iter().filter(|n| !masked.contains(*n)).collect();
        let c = (*pool.choose(&mut rng).expect("target <= non-root count")).clone();
        masked.extend(t.descendants(&c)?);
        masked.insert(c);
    }
    Ok((t.without(&masked), GroundTruth::from_full(t, &masked)))
}

/// Settings for [`gen_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub nodes: usize,
    /// Maximum number of children per node.
    pub branching: usize,
    /// Standard deviation of the per-coordinate noise added to a parent's
    /// vector to form a child's.
    pub noise: f64,
    pub dim: usize,
    /// Probability that a child's name extends its parent's name
    /// ("x" -> "tok x"), which the surface-pattern matcher can detect.
    pub pattern_rate: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(nodes: usize, branching: usize, noise: f64, dim: usize, seed: u64) -> Self {
        SyntheticConfig {
            nodes,
            branching,
            noise,
            dim,
            pattern_rate: 0.5,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub taxonomy: Taxonomy,
    pub concepts: ConceptTable,
    /// Keyed by surface name, as read from an embedding file.
    pub store: EmbeddingStore,
}

impl SyntheticCorpus {
    /// The store re-keyed by concept id.
    pub fn id_store(&self) -> EmbeddingStore {
        self.store.by_concept_id(&self.concepts).0
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Distinct fixed-width tokens; equal widths mean one token can never be a
/// proper suffix of another.
fn token(mut i: usize, syllables: usize) -> String {
    let mut s = String::with_capacity(2 * syllables);
    for _ in 0..syllables {
        let k = i % (CONSONANTS.len() * VOWELS.len());
        i /= CONSONANTS.len() * VOWELS.len();
        s.push(CONSONANTS[k / VOWELS.len()] as char);
        s.push(VOWELS[k % VOWELS.len()] as char);
    }
    s
}

/// Random tree (each node has at most `branching` children) with
/// hierarchy-correlated unit embeddings: the root is a random unit vector
/// and each child is `normalize(parent + noise · N(0, I))`.
///
/// Concept ids are a random relabeling, so id order carries no hierarchy
/// information.
pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticCorpus, EvalError> {
    let bad = |m: &str| Err(EvalError::InvalidSynthetic(m.to_string()));
    if cfg.nodes < 2 {
        return bad("need at least 2 nodes");
    }
    if cfg.dim < 2 {
        return bad("dimension must be at least 2");
    }
    if !(cfg.noise > 0.0 && cfg.noise.is_finite()) {
        return bad("noise must be positive");
    }
    if cfg.branching == 0 {
        return bad("branching must be positive");
    }
    if !(0.0..=1.0).contains(&cfg.pattern_rate) {
        return bad("pattern rate must lie in [0, 1]");
    }
    let mut rng = seed::stream(cfg.seed, "synthetic");
    let n = cfg.nodes;

    let mut labels: Vec<usize> = (0..n).collect();
    labels.shuffle(&mut rng);
    let width = (n - 1).to_string().len();
    let ids: Vec<ConceptId> = labels.iter().map(|l| ConceptId::new(format!("c{l:0width$}"))).collect();

    let mut syllables = 1;
    while (CONSONANTS.len() * VOWELS.len()).pow(syllables as u32) < n {
        syllables += 1;
    }
    let mut tokens: Vec<usize> = (0..n).collect();
    tokens.shuffle(&mut rng);

    let gaussian = |rng: &mut seed::Rng| -> f64 { StandardNormal.sample(rng) };
    let unit = |v: Vec<f64>| {
        let l = norm(&v);
        v.into_iter().map(|x| x / l).collect::<Vec<f64>>()
    };

    let mut parent_of: Vec<Option<usize>> = vec![None; n];
    let mut open: Vec<usize> = vec![0];
    let mut kids = vec![0usize; n];
    let mut names: Vec<String> = Vec::with_capacity(n);
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n);

    names.push(token(tokens[0], syllables));
    vecs.push(unit((0..cfg.dim).map(|_| gaussian(&mut rng)).collect()));
    for i in 1..n {
        let slot = rng.random_range(0..open.len());
        let p = open[slot];
        kids[p] += 1;
        if kids[p] == cfg.branching {
            open.swap_remove(slot);
        }
        open.push(i);
        parent_of[i] = Some(p);

        let tok = token(tokens[i], syllables);
        let name = if rng.random_bool(cfg.pattern_rate) {
            format!("{tok} {}", names[p])
        } else {
            tok
        };
        names.push(name);
        let v: Vec<f64> = vecs[p]
            .iter()
            .map(|x| x + cfg.noise * gaussian(&mut rng))
            .collect();
        vecs.push(if norm(&v) > 0.0 { unit(v) } else { vecs[p].clone() });
    }

    let graph = DirectedGraph::build(
        ids.iter().cloned(),
        parent_of
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|p| (ids[p].clone(), ids[i].clone()))),
    )?;
    let taxonomy = Taxonomy::new(graph)?;
    let concepts: ConceptTable = ids
        .iter()
        .zip(&names)
        .map(|(id, name)| (id.clone(), Concept::new(id.clone(), name).expect("non-empty name")))
        .collect();
    let store = EmbeddingStore::from_vectors(cfg.dim, names.into_iter().zip(vecs))
        .expect("finite unit vectors of the configured width");
    Ok(SyntheticCorpus {
        taxonomy,
        concepts,
        store,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::RankedParents;

    fn id(s: &str) -> ConceptId {
        ConceptId::new(s)
    }

    fn ids(xs: &[&str]) -> Vec<ConceptId> {
        xs.iter().map(|x| id(x)).collect()
    }

    fn tax(nodes: &[&str], edges: &[(&str, &str)]) -> Taxonomy {
        Taxonomy::new(
            DirectedGraph::build(nodes.iter().map(|n| id(n)), edges.iter().map(|(p, c)| (id(p), id(c)))).unwrap(),
        )
        .unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn enc_counts_missing_parents() {
        let full = tax(&["r", "x", "y", "z"], &[("r", "x"), ("x", "y"), ("y", "z")]);
        let masked: BTreeSet<_> = ids(&["x", "y", "z"]).into_iter().collect();
        let gt = GroundTruth::from_full(&full, &masked);
        let t0 = full.without(&masked);
        assert_eq!(enc(&ids(&["x", "y", "z"]), &t0, &gt).unwrap(), 0);
        assert_eq!(enc(&ids(&["z", "y", "x"]), &t0, &gt).unwrap(), 2);
        assert_eq!(enc(&ids(&["q"]), &t0, &gt), Err(EvalError::UnknownQuery(id("q"))));
        assert!(check_order(&ids(&["x", "y"]), &gt).is_err());
        assert!(check_order(&ids(&["x", "y", "z"]), &gt).is_ok());
    }

    fn trace_with_ranks(ranks: &[(&str, usize)]) -> (ExpansionTrace, GroundTruth) {
        // query qi has the single true parent "p", placed at the given rank
        let mut parents = BTreeMap::new();
        let mut trace = ExpansionTrace::new(&tax(&["p"], &[]));
        for (q, rank) in ranks {
            let mut cands: Vec<(ConceptId, f64)> = (1..rank + 5)
                .filter(|i| i != rank)
                .map(|i| (id(&format!("n{i:03}")), -(i as f64)))
                .collect();
            cands.push((id("p"), -(*rank as f64)));
            trace.ranks.insert(id(q), RankedParents::new(id(q), cands));
            parents.insert(id(q), [id("p")].into_iter().collect());
        }
        (trace, GroundTruth { full: tax(&["p"], &[]), parents })
    }

    #[test]
    fn hit_at_k_counts_top_k() {
        let (trace, gt) = trace_with_ranks(&[("a", 1), ("b", 2), ("c", 4), ("d", 11)]);
        assert!(close(hit_at_k(&trace, &gt, 3), 0.5));
        assert!(close(hit_at_k(&trace, &gt, 1), 0.25));
    }

    #[test]
    fn scaled_mrr_buckets_by_ten() {
        let (trace, gt) = trace_with_ranks(&[("a", 1)]);
        assert!(close(scaled_mrr(&trace, &gt), 1.0));
        let (trace, gt) = trace_with_ranks(&[("a", 11)]);
        assert!(close(scaled_mrr(&trace, &gt), 0.5));

        let mut cands: Vec<(ConceptId, f64)> = (0..20).map(|i| (id(&format!("n{i:02}")), -(i as f64))).collect();
        cands[0].0 = id("p1");
        cands[14].0 = id("p2");
        let mut trace = ExpansionTrace::new(&tax(&["p1"], &[]));
        trace.ranks.insert(id("q"), RankedParents::new(id("q"), cands));
        let gt = GroundTruth {
            full: tax(&["p1"], &[]),
            parents: [(id("q"), [id("p1"), id("p2")].into_iter().collect())].into_iter().collect(),
        };
        assert!(close(scaled_mrr(&trace, &gt), 0.75));
    }

    #[test]
    fn prf_arithmetic() {
        let s = |xs: &[u32]| xs.iter().copied().collect::<BTreeSet<_>>();
        let p = prf(&s(&[1, 2, 3]), &s(&[1, 2, 3]));
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p = prf(&s(&[1]), &s(&[2]));
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
        let p = prf(&s(&[1, 9]), &s(&[1, 2, 3]));
        assert!(close(p.precision, 0.5) && close(p.recall, 1.0 / 3.0) && close(p.f1, 0.4));
        assert_eq!(prf::<u32>(&s(&[]), &s(&[])).f1, 1.0);
    }

    #[test]
    fn edge_and_ancestor_f1() {
        // pred = chain a->b->c, truth = a->b plus a->c
        let mut trace = ExpansionTrace::new(&tax(&["a", "b"], &[("a", "b")]));
        trace.final_taxonomy.insert_in_place(&id("b"), &id("c")).unwrap();
        trace.predicted.push((id("b"), id("c")));
        let full = tax(&["a", "b", "c"], &[("a", "b"), ("a", "c")]);
        let gt = GroundTruth::from_full(&full, &[id("c")].into_iter().collect());
        let e = edge_f1(&trace, &gt);
        assert!(close(e.precision, 0.5) && close(e.recall, 0.5));
        // closures: {a->b, b->c, a->c} vs {a->b, a->c}
        let a = ancestor_f1(&trace, &gt).unwrap();
        assert!(close(a.precision, 2.0 / 3.0) && close(a.recall, 1.0));
        assert!(a.f1 > e.f1);
        assert_eq!(pred_f1(&trace, &gt).f1, 0.0);
    }

    #[test]
    fn chain_vs_shortcut_closure() {
        let pred = tax(&["a", "b", "c"], &[("a", "b"), ("b", "c")]);
        let truth = tax(&["a", "b", "c"], &[("a", "c")]);
        let p = prf(
            &pred.ancestor_closure().unwrap().edge_set(),
            &truth.ancestor_closure().unwrap().edge_set(),
        );
        assert!(close(p.precision, 1.0 / 3.0) && close(p.recall, 1.0));
    }

    #[test]
    fn validation_split_masks_leaves() {
        let star = tax(&["r", "a", "b", "c"], &[("r", "a"), ("r", "b"), ("r", "c")]);
        let (reduced, gt) = make_validation_split(&star, 0.99, 1).unwrap();
        assert_eq!(reduced.nodes().cloned().collect::<Vec<_>>(), ids(&["r"]));
        assert_eq!(gt.len(), 3);
        assert!(gt.parents.values().all(|ps| ps == &[id("r")].into_iter().collect()));
        assert_eq!(make_validation_split(&star, 1.5, 1), Err(EvalError::InvalidFraction(1.5)));
    }

    #[test]
    fn test_split_masks_subtrees() {
        let chain = tax(&["a", "b", "c", "d"], &[("a", "b"), ("b", "c"), ("c", "d")]);
        for s in 0..10 {
            let (reduced, gt) = make_test_split(&chain, 0.5, s).unwrap();
            let masked: BTreeSet<_> = gt.queries().cloned().collect();
            for m in &masked {
                assert!(chain.descendants(m).unwrap().is_subset(&masked));
            }
            assert!(masked.len() >= 2);
            assert_eq!(reduced.node_count() + masked.len(), 4);
        }
        let tiny = tax(&["a", "b"], &[]);
        assert!(matches!(make_test_split(&tiny, 0.5, 0), Err(EvalError::FractionUnreachable { .. })));
    }

    #[test]
    fn synthetic_is_seeded_tree() {
        let cfg = SyntheticConfig::new(60, 3, 0.3, 8, 5);
        let a = gen_synthetic(&cfg).unwrap();
        let b = gen_synthetic(&cfg).unwrap();
        assert_eq!(a.taxonomy, b.taxonomy);
        assert_eq!(a.store, b.store);
        assert_eq!(a.taxonomy.edge_count(), 59);
        assert_eq!(a.taxonomy.roots().len(), 1);
        assert!(a.taxonomy.nodes().all(|n| a.taxonomy.out_degree(n) <= 3));
        assert_eq!(a.concepts.len(), 60);
        assert_eq!(a.id_store().len(), 60);

        let tight = gen_synthetic(&SyntheticConfig { noise: 1e-9, ..cfg.clone() }).unwrap();
        let s = tight.id_store();
        for (p, c) in tight.taxonomy.edges() {
            assert!(s.cosine(p, c).unwrap() > 1.0 - 1e-9);
        }
        assert!(gen_synthetic(&SyntheticConfig::new(1, 3, 0.3, 8, 0)).is_err());
    }

    #[test]
    fn table_layout() {
        let prf1 = Prf { precision: 1.0, recall: 1.0, f1: 1.0 };
        let r = MetricsReport { enc: 3, hits: vec![(1, 0.5), (3, 0.75)], mrr: 0.25, pred: prf1, edge: prf1, ancestor: prf1 };
        let t = format_table(&[("random".into(), r.clone())]);
        assert!(t.starts_with("Method"));
        assert!(t.contains("Hit@3") && t.contains("Ancestor F1"));
        let kv = format_kv(&[("random".into(), r)]);
        assert!(kv.contains("random.enc=3\n") && kv.contains("random.hit_at_3=0.75\n"));
    }
}
