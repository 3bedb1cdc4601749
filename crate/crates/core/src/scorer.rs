//! Pair order scorer: a one-hidden-layer network over pair features,
//! trained contrastively on parent/child pairs sampled from an existing
//! taxonomy.
//!
//! `f(a, c) = sigmoid(w2 · relu(W1 · feature(a, c) + b1) + b2)`; a higher
//! score means `a` should be inserted before `c`.

use std::fmt::Write as _;
use std::path::Path;

use log::{debug, info};
use rand::seq::index;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rayon::prelude::*;
use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingStore, PairFeature};
use crate::graph::{ConceptId, GraphError, Taxonomy};
use crate::io::{read_text, LoadError};
use crate::seed::{self, Rng};

/// Hidden width used for the published experiments.
pub const DEFAULT_HIDDEN: usize = 512;
pub const CHECKPOINT_VERSION: u32 = 1;

/// Instances per parallel work unit. Gradients are summed per chunk and
/// then across chunks in index order, so the result does not depend on the
/// number of threads.
const CHUNK: usize = 8;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("`{0}` has no parent")]
    NoParent(ConceptId),
    #[error("`{child}` has {available} eligible negatives, {needed} needed")]
    InsufficientNegatives {
        child: ConceptId,
        available: usize,
        needed: usize,
    },
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Load(#[from] LoadError),
}

/// Network weights. `w1` is `hidden × 4·dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub dim: usize,
    pub hidden: usize,
    pub seed: u64,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Same layout as [`ScorerParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(dim: usize, hidden: usize, seed: u64) -> ScorerParams {
    assert!(dim >= 1 && hidden >= 1, "dim and hidden must be positive");
    let mut rng = seed::stream(seed, "init");
    let input = 4 * dim;
    let l1 = (6.0 / (input + hidden) as f64).sqrt();
    let l2 = (6.0 / (hidden + 1) as f64).sqrt();
    let w1 = (0..hidden * input).map(|_| rng.random_range(-l1..=l1)).collect();
    let w2 = (0..hidden).map(|_| rng.random_range(-l2..=l2)).collect();
    ScorerParams {
        dim,
        hidden,
        seed,
        w1,
        b1: vec![0.0; hidden],
        w2,
        b2: 0.0,
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))` without underflow.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

struct Forward {
    z: Vec<f64>,
    logit: f64,
}

impl ScorerParams {
    pub fn input_len(&self) -> usize {
        4 * self.dim
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .all(|x| x.is_finite())
            && self.b2.is_finite()
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let n = self.input_len();
        let mut z = self.b1.clone();
        let mut logit = self.b2;
        for (j, zj) in z.iter_mut().enumerate() {
            let row = &self.w1[j * n..(j + 1) * n];
            *zj += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            if *zj > 0.0 {
                logit += self.w2[j] * *zj;
            }
        }
        Forward { z, logit }
    }

    fn check_len(&self, len: usize) -> Result<(), ScorerError> {
        if len != self.input_len() {
            return Err(ScorerError::ShapeMismatch {
                expected: self.input_len(),
                got: len,
            });
        }
        Ok(())
    }

    /// Pre-sigmoid output.
    pub fn logit(&self, x: &PairFeature) -> Result<f64, ScorerError> {
        self.check_len(x.len())?;
        Ok(self.forward(x.as_slice()).logit)
    }

    /// Score in (0, 1).
    pub fn score(&self, x: &PairFeature) -> Result<f64, ScorerError> {
        self.logit(x).map(sigmoid)
    }

    /// Scores the ordered pair `(a, c)` using `store`.
    pub fn score_pair(&self, store: &EmbeddingStore, a: &ConceptId, c: &ConceptId) -> Result<f64, ScorerError> {
        self.score(&store.feature(a, c)?)
    }

    /// Flat coordinate view: `w1`, `b1`, `w2`, then `b2`.
    pub fn get(&self, i: usize) -> f64 {
        flat_get(&self.w1, &self.b1, &self.w2, self.b2, i)
    }

    pub fn set(&mut self, i: usize, v: f64) {
        *flat_get_mut(&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, i) = v;
    }

    /// `self -= lr * g`
    pub fn step(&mut self, g: &Gradient, lr: f64) {
        for (p, d) in self.w1.iter_mut().zip(&g.w1) {
            *p -= lr * d;
        }
        for (p, d) in self.b1.iter_mut().zip(&g.b1) {
            *p -= lr * d;
        }
        for (p, d) in self.w2.iter_mut().zip(&g.w2) {
            *p -= lr * d;
        }
        self.b2 -= lr * g.b2;
    }
}

fn flat_get(w1: &[f64], b1: &[f64], w2: &[f64], b2: f64, mut i: usize) -> f64 {
    for part in [w1, b1, w2] {
        if i < part.len() {
            return part[i];
        }
        i -= part.len();
    }
    assert_eq!(i, 0, "parameter index out of range");
    b2
}

fn flat_get_mut<'a>(
    w1: &'a mut [f64],
    b1: &'a mut [f64],
    w2: &'a mut [f64],
    b2: &'a mut f64,
    mut i: usize,
) -> &'a mut f64 {
    for part in [w1, b1, w2] {
        if i < part.len() {
            return &mut part[i];
        }
        i -= part.len();
    }
    assert_eq!(i, 0, "parameter index out of range");
    b2
}

impl Gradient {
    pub fn zeros_like(p: &ScorerParams) -> Self {
        Gradient {
            w1: vec![0.0; p.w1.len()],
            b1: vec![0.0; p.b1.len()],
            w2: vec![0.0; p.w2.len()],
            b2: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, i: usize) -> f64 {
        flat_get(&self.w1, &self.b1, &self.w2, self.b2, i)
    }

    pub fn set(&mut self, i: usize, v: f64) {
        *flat_get_mut(&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, i) = v;
    }

    fn add(&mut self, other: &Gradient) {
        for (a, b) in self.w1.iter_mut().zip(&other.w1) {
            *a += b;
        }
        for (a, b) in self.b1.iter_mut().zip(&other.b1) {
            *a += b;
        }
        for (a, b) in self.w2.iter_mut().zip(&other.w2) {
            *a += b;
        }
        self.b2 += other.b2;
    }
}

/// One positive pair and `N` negative pairs, all sharing `child`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInstance {
    pub child: ConceptId,
    pub parent: ConceptId,
    pub negatives: Vec<ConceptId>,
}

impl TrainingInstance {
    /// `(candidate parent, child)` pairs, positive first.
    pub fn pairs(&self) -> impl Iterator<Item = (&ConceptId, &ConceptId)> + '_ {
        std::iter::once(&self.parent)
            .chain(&self.negatives)
            .map(move |p| (p, &self.child))
    }
}

/// Nodes that may serve as negatives for `child`: neither the child nor
/// one of its ancestors. Descendants are eligible.
pub fn eligible_negatives(t: &Taxonomy, child: &ConceptId) -> Result<Vec<ConceptId>, GraphError> {
    let anc = t.ancestors(child)?;
    Ok(t.nodes()
        .filter(|n| *n != child && !anc.contains(*n))
        .cloned()
        .collect())
}

fn sample_negatives(
    t: &Taxonomy,
    child: &ConceptId,
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<ConceptId>, ScorerError> {
    let pool = eligible_negatives(t, child)?;
    if pool.len() < n {
        return Err(ScorerError::InsufficientNegatives {
            child: child.clone(),
            available: pool.len(),
            needed: n,
        });
    }
    Ok(index::sample(rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

/// Draws one parent of `child` uniformly and `n` eligible negatives
/// without replacement.
pub fn sample_instance(
    t: &Taxonomy,
    child: &ConceptId,
    n: usize,
    rng: &mut Rng,
) -> Result<TrainingInstance, ScorerError> {
    if !t.contains(child) {
        return Err(GraphError::UnknownConcept(child.clone()).into());
    }
    let parents: Vec<&ConceptId> = t.parents(child).collect();
    let parent = (*parents
        .choose(rng)
        .ok_or_else(|| ScorerError::NoParent(child.clone()))?)
    .clone();
    let negatives = sample_negatives(t, child, n, rng)?;
    Ok(TrainingInstance {
        child: child.clone(),
        parent,
        negatives,
    })
}

/// Loss of one instance and, if requested, its gradient added into `grad`
/// scaled by `weight`.
fn instance_loss(
    p: &ScorerParams,
    inst: &TrainingInstance,
    store: &EmbeddingStore,
    grad: Option<(&mut Gradient, f64)>,
) -> Result<f64, ScorerError> {
    let mut feats = Vec::with_capacity(inst.negatives.len() + 1);
    for (a, c) in inst.pairs() {
        let f = store.feature(a, c)?;
        p.check_len(f.len())?;
        feats.push(f);
    }
    let fwd: Vec<Forward> = feats.iter().map(|x| p.forward(x.as_slice())).collect();
    let log_f: Vec<f64> = fwd.iter().map(|f| log_sigmoid(f.logit)).collect();
    let max = log_f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = max + log_f.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let loss = log_sum - log_f[0];

    if let Some((g, weight)) = grad {
        let n = p.input_len();
        for (j, (x, f)) in feats.iter().zip(&fwd).enumerate() {
            // d loss / d logit_j = (f_j / S)(1 - f_j) - [j = pos](1 - f_pos)
            let one_minus = sigmoid(-f.logit);
            let mut d_logit = (log_f[j] - log_sum).exp() * one_minus;
            if j == 0 {
                d_logit -= one_minus;
            }
            d_logit *= weight;
            g.b2 += d_logit;
            for (k, &zk) in f.z.iter().enumerate() {
                if zk <= 0.0 {
                    continue;
                }
                g.w2[k] += d_logit * zk;
                let dz = d_logit * p.w2[k];
                g.b1[k] += dz;
                let row = &mut g.w1[k * n..(k + 1) * n];
                for (gw, xv) in row.iter_mut().zip(x.as_slice()) {
                    *gw += dz * xv;
                }
            }
        }
    }
    Ok(loss)
}

/// Mean InfoNCE loss over the batch.
pub fn infonce_loss(p: &ScorerParams, batch: &[TrainingInstance], store: &EmbeddingStore) -> Result<f64, ScorerError> {
    if batch.is_empty() {
        return Err(ScorerError::EmptyBatch);
    }
    let mut sum = 0.0;
    for inst in batch {
        sum += instance_loss(p, inst, store, None)?;
    }
    Ok(sum / batch.len() as f64)
}

/// Mean loss and its exact gradient.
pub fn loss_and_gradient(
    p: &ScorerParams,
    batch: &[TrainingInstance],
    store: &EmbeddingStore,
) -> Result<(f64, Gradient), ScorerError> {
    if batch.is_empty() {
        return Err(ScorerError::EmptyBatch);
    }
    let weight = 1.0 / batch.len() as f64;
    let parts = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = Gradient::zeros_like(p);
            let mut loss = 0.0;
            for inst in chunk {
                loss += instance_loss(p, inst, store, Some((&mut g, weight)))?;
            }
            Ok((loss, g))
        })
        .collect::<Result<Vec<_>, ScorerError>>()?;
    let mut total = Gradient::zeros_like(p);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add(g);
    }
    Ok((loss * weight, total))
}

pub fn gradient(p: &ScorerParams, batch: &[TrainingInstance], store: &EmbeddingStore) -> Result<Gradient, ScorerError> {
    loss_and_gradient(p, batch, store).map(|(_, g)| g)
}

/// Largest relative error between `analytic` and central differences of
/// the loss. Models with more than `max_coords` parameters are checked on
/// a seeded random subset of that size. A coordinate where both sides are
/// zero counts as exact.
pub fn grad_check_against(
    p: &ScorerParams,
    batch: &[TrainingInstance],
    store: &EmbeddingStore,
    analytic: &Gradient,
    epsilon: f64,
    max_coords: usize,
) -> Result<f64, ScorerError> {
    assert!(epsilon > 0.0);
    let total = p.param_count();
    let coords: Vec<usize> = if total <= max_coords {
        (0..total).collect()
    } else {
        let mut rng = seed::stream(p.seed, "grad-check");
        let mut v = index::sample(&mut rng, total, max_coords).into_vec();
        v.sort_unstable();
        v
    };
    let mut probe = p.clone();
    let mut worst: f64 = 0.0;
    for i in coords {
        let orig = p.get(i);
        probe.set(i, orig + epsilon);
        let up = infonce_loss(&probe, batch, store)?;
        probe.set(i, orig - epsilon);
        let down = infonce_loss(&probe, batch, store)?;
        probe.set(i, orig);
        let numeric = (up - down) / (2.0 * epsilon);
        worst = worst.max(relative_error(analytic.get(i), numeric));
    }
    Ok(worst)
}

/// Denominators below 1e-7 are floored so that coordinates whose true
/// gradient is (numerically) zero are judged on their absolute error.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / a.abs().max(b.abs()).max(1e-7)
}

pub fn grad_check(p: &ScorerParams, batch: &[TrainingInstance], store: &EmbeddingStore, epsilon: f64) -> Result<f64, ScorerError> {
    let g = gradient(p, batch, store)?;
    grad_check_against(p, batch, store, &g, epsilon, 1000)
}

/// How training instances are enumerated per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Every node with a parent, one uniformly chosen parent per epoch.
    PerNode,
    /// Every edge as its own positive pair.
    PerEdge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub negative_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub convergence_tol: f64,
    /// Consecutive epochs below `convergence_tol` before stopping.
    pub patience: usize,
    pub hidden: usize,
    pub sampling: Sampling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            negative_size: 15,
            batch_size: 256,
            learning_rate: 0.01,
            max_epochs: 100,
            seed: 0,
            convergence_tol: 1e-4,
            patience: 5,
            hidden: DEFAULT_HIDDEN,
            sampling: Sampling::PerNode,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ScorerError> {
        let bad = |m: &str| Err(ScorerError::InvalidConfig(m.to_string()));
        if self.negative_size == 0 {
            return bad("negative size must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return bad("convergence tolerance must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden width must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ScorerParams,
    /// Mean batch loss per completed epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch SGD over self-supervised instances drawn from `t`.
pub fn train(t: &Taxonomy, store: &EmbeddingStore, cfg: &TrainConfig) -> Result<TrainOutcome, ScorerError> {
    cfg.validate()?;
    let mut params = init_params(store.dim(), cfg.hidden, cfg.seed);
    let mut epoch_losses = Vec::new();
    if cfg.max_epochs == 0 {
        return Ok(TrainOutcome { params, epoch_losses });
    }
    if t.edge_count() == 0 {
        return Err(EmbeddingError::EmptyTaxonomy.into());
    }
    for n in t.nodes() {
        store.vector(n)?;
    }

    let mut rng = seed::stream(cfg.seed, "train");
    let mut units: Vec<(ConceptId, Option<ConceptId>)> = match cfg.sampling {
        Sampling::PerNode => t
            .nodes()
            .filter(|n| t.in_degree(n) > 0)
            .map(|n| (n.clone(), None))
            .collect(),
        Sampling::PerEdge => t
            .edges()
            .map(|(p, c)| (c.clone(), Some(p.clone())))
            .collect(),
    };

    let mut stalled = 0;
    for epoch in 1..=cfg.max_epochs {
        units.shuffle(&mut rng);
        let mut sum = 0.0;
        for (b, chunk) in units.chunks(cfg.batch_size).enumerate() {
            let batch = chunk
                .iter()
                .map(|(child, parent)| match parent {
                    None => sample_instance(t, child, cfg.negative_size, &mut rng),
                    Some(p) => Ok(TrainingInstance {
                        child: child.clone(),
                        parent: p.clone(),
                        negatives: sample_negatives(t, child, cfg.negative_size, &mut rng)?,
                    }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let (loss, grad) = loss_and_gradient(&params, &batch, store)?;
            if !loss.is_finite() {
                return Err(ScorerError::NonFiniteLoss { epoch, batch: b, loss });
            }
            params.step(&grad, cfg.learning_rate);
            sum += loss * chunk.len() as f64;
        }
        let mean = sum / units.len() as f64;
        debug!("epoch={epoch} loss={mean:.6}");
        if let Some(&prev) = epoch_losses.last() {
            if prev - mean < cfg.convergence_tol {
                stalled += 1;
            } else {
                stalled = 0;
            }
        }
        epoch_losses.push(mean);
        if stalled >= cfg.patience.max(1) {
            break;
        }
    }
    if !params.is_finite() {
        let loss = epoch_losses.last().copied().unwrap_or(f64::NAN);
        return Err(ScorerError::NonFiniteLoss {
            epoch: epoch_losses.len(),
            batch: 0,
            loss,
        });
    }
    info!(
        "trained epochs={} first_loss={:.6} last_loss={:.6}",
        epoch_losses.len(),
        epoch_losses.first().copied().unwrap_or(f64::NAN),
        epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(TrainOutcome { params, epoch_losses })
}

/// Text checkpoint: a versioned header followed by row-major `W1`, `B1`,
/// `W2` and `B2` in shortest round-trip decimal form.
pub fn format_checkpoint(p: &ScorerParams) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "taxoorder-scorer {CHECKPOINT_VERSION}");
    let _ = writeln!(out, "dim {}", p.dim);
    let _ = writeln!(out, "hidden {}", p.hidden);
    let _ = writeln!(out, "seed {}", p.seed);
    let row = |out: &mut String, xs: &[f64]| {
        let line: Vec<String> = xs.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    };
    out.push_str("W1\n");
    for r in p.w1.chunks(p.input_len()) {
        row(&mut out, r);
    }
    out.push_str("B1\n");
    row(&mut out, &p.b1);
    out.push_str("W2\n");
    row(&mut out, &p.w2);
    out.push_str("B2\n");
    row(&mut out, &[p.b2]);
    out
}

pub fn parse_checkpoint(text: &str) -> Result<ScorerParams, ScorerError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| ScorerError::Checkpoint {
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })
    };
    let err = |line: usize, msg: String| ScorerError::Checkpoint { line, msg };

    let (no, magic) = next("header")?;
    match magic.split_once(' ') {
        Some(("taxoorder-scorer", v)) if v == CHECKPOINT_VERSION.to_string() => {}
        _ => return Err(err(no, format!("unsupported header `{magic}`"))),
    }
    let mut header = |key: &str| -> Result<u64, ScorerError> {
        let (no, line) = next(key)?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => v.parse().map_err(|_| err(no, format!("bad {key} `{v}`"))),
            _ => Err(err(no, format!("expected `{key} <value>`"))),
        }
    };
    let dim = header("dim")? as usize;
    let hidden = header("hidden")? as usize;
    let seed = header("seed")?;
    if dim == 0 || hidden == 0 {
        return Err(err(2, "dim and hidden must be positive".into()));
    }

    let mut block = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>, ScorerError> {
        let (no, tag) = next(name)?;
        if tag != name {
            return Err(err(no, format!("expected `{name}`, found `{tag}`")));
        }
        let mut out = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (no, line) = next(name)?;
            let vals = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| err(no, format!("bad value in {name}")))?;
            if vals.len() != cols {
                return Err(err(no, format!("{name} row has {} values, expected {cols}", vals.len())));
            }
            out.extend(vals);
        }
        Ok(out)
    };
    let w1 = block("W1", hidden, 4 * dim)?;
    let b1 = block("B1", 1, hidden)?;
    let w2 = block("W2", 1, hidden)?;
    let b2 = block("B2", 1, 1)?[0];
    Ok(ScorerParams {
        dim,
        hidden,
        seed,
        w1,
        b1,
        w2,
        b2,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<ScorerParams, ScorerError> {
    parse_checkpoint(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DirectedGraph;

    fn id(s: &str) -> ConceptId {
        ConceptId::new(s)
    }

    fn taxonomy(nodes: &[&str], edges: &[(&str, &str)]) -> Taxonomy {
        Taxonomy::new(
            DirectedGraph::build(
                nodes.iter().map(|n| id(n)),
                edges.iter().map(|(p, c)| (id(p), id(c))),
            )
            .unwrap(),
        )
        .unwrap()
    }

    fn random_store(names: &[&str], dim: usize, seed: u64) -> EmbeddingStore {
        let mut rng = seed::rng(seed);
        EmbeddingStore::from_vectors(
            dim,
            names
                .iter()
                .map(|n| (n.to_string(), (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())),
        )
        .unwrap()
    }

    #[test]
    fn param_counts() {
        assert_eq!(init_params(250, 512, 0).param_count(), 513_025);
        assert_eq!(init_params(2, 3, 0).param_count(), 31);
        assert_eq!(init_params(5, 7, 42), init_params(5, 7, 42));
        assert_ne!(init_params(5, 7, 42), init_params(5, 7, 43));
    }

    #[test]
    fn init_respects_glorot_bounds() {
        let p = init_params(3, 4, 1);
        let l1 = (6.0f64 / 16.0).sqrt();
        let l2 = (6.0f64 / 5.0).sqrt();
        assert!(p.w1.iter().all(|w| w.abs() <= l1));
        assert!(p.w2.iter().all(|w| w.abs() <= l2));
        assert!(p.b1.iter().all(|b| *b == 0.0) && p.b2 == 0.0);
    }

    #[test]
    fn score_fixed_params() {
        let p = ScorerParams {
            dim: 1,
            hidden: 1,
            seed: 0,
            w1: vec![1.0; 4],
            b1: vec![0.0],
            w2: vec![1.0],
            b2: 0.0,
        };
        let s = p.score(&crate::embedding::pair_feature(&[1.0], &[1.0])).unwrap();
        assert!((s - 1.0 / (1.0 + (-3.0f64).exp())).abs() < 1e-15);
        assert!((s - 0.9526).abs() < 1e-4);
        assert!(matches!(
            p.score(&PairFeature(vec![0.0; 3])),
            Err(ScorerError::ShapeMismatch { expected: 4, got: 3 })
        ));

        let mut z = init_params(3, 5, 9);
        z.w2.iter_mut().for_each(|w| *w = 0.0);
        assert_eq!(z.score(&PairFeature(vec![3.0; 12])).unwrap(), 0.5);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
        assert!(log_sigmoid(800.0) <= 0.0);
    }

    #[test]
    fn loss_of_known_scores() {
        // logits chosen so f(pos)=0.8 and both negatives 0.2
        let logit = |f: f64| (f / (1.0 - f)).ln();
        let log_f = [logit(0.8), logit(0.2), logit(0.2)].map(log_sigmoid);
        let max = log_f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + log_f.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        assert!((lse - log_f[0] - 1.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_scorer_gives_log_n_plus_one() {
        let names = ["r", "a", "b", "c", "d", "e", "f"];
        let store = random_store(&names, 3, 4);
        let mut p = init_params(3, 4, 1);
        p.w2.iter_mut().for_each(|w| *w = 0.0);
        let inst = TrainingInstance {
            child: id("a"),
            parent: id("r"),
            negatives: ["b", "c", "d", "e", "f"].iter().map(|n| id(n)).collect(),
        };
        let l = infonce_loss(&p, &[inst], &store).unwrap();
        assert!((l - 6f64.ln()).abs() < 1e-12);
        assert!(matches!(infonce_loss(&p, &[], &store), Err(ScorerError::EmptyBatch)));
    }

    fn small_batch() -> (ScorerParams, Vec<TrainingInstance>, EmbeddingStore) {
        let names = ["r", "a", "b", "c", "d"];
        let store = random_store(&names, 2, 11);
        let mut p = init_params(2, 3, 5);
        p.b1.iter_mut().for_each(|b| *b = 0.1);
        p.b2 = -0.2;
        let batch = vec![
            TrainingInstance { child: id("a"), parent: id("r"), negatives: vec![id("b"), id("c")] },
            TrainingInstance { child: id("d"), parent: id("a"), negatives: vec![id("c"), id("r")] },
        ];
        (p, batch, store)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (p, batch, store) = small_batch();
        let err = grad_check(&p, &batch, &store, 1e-6).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn checker_catches_a_wrong_gradient() {
        let (p, batch, store) = small_batch();
        let mut g = gradient(&p, &batch, &store).unwrap();
        g.b2 += 0.5;
        let err = grad_check_against(&p, &batch, &store, &g, 1e-6, 1000).unwrap();
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn dead_relu_gives_zero_gradient() {
        let (mut p, batch, store) = small_batch();
        p.w1.iter_mut().for_each(|w| *w = 0.0);
        p.b1.iter_mut().for_each(|b| *b = 0.0);
        let g = gradient(&p, &batch, &store).unwrap();
        assert!(g.w1.iter().all(|x| *x == 0.0));
        assert!(g.b1.iter().all(|x| *x == 0.0));

        // all params zero: every coordinate is exactly zero on both sides
        let mut zero = p.clone();
        zero.w2.iter_mut().for_each(|w| *w = 0.0);
        assert_eq!(grad_check(&zero, &batch, &store, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn descent_step_reduces_loss() {
        let (p, batch, store) = small_batch();
        let (l0, g) = loss_and_gradient(&p, &batch, &store).unwrap();
        let mut q = p.clone();
        q.step(&g, 1e-3);
        assert!(infonce_loss(&q, &batch, &store).unwrap() < l0);
    }

    #[test]
    fn sampling_respects_eligibility() {
        let chain = taxonomy(&["a", "b", "c"], &[("a", "b"), ("b", "c")]);
        let mut rng = seed::rng(0);
        assert!(matches!(
            sample_instance(&chain, &id("c"), 1, &mut rng),
            Err(ScorerError::InsufficientNegatives { available: 0, .. })
        ));
        assert!(matches!(
            sample_instance(&chain, &id("a"), 1, &mut rng),
            Err(ScorerError::NoParent(_))
        ));

        let t = taxonomy(
            &["a", "b", "c", "d", "e"],
            &[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")],
        );
        for s in 0..20 {
            let inst = sample_instance(&t, &id("d"), 1, &mut seed::rng(s)).unwrap();
            assert_eq!(inst.negatives, vec![id("e")]);
            assert!(inst.parent == id("b") || inst.parent == id("c"));
        }
    }

    #[test]
    fn label_propagation_example() {
        let t = taxonomy(
            &["machine learning", "semi-supervised learning", "label propagation", "integrated circuit", "gpu", "hardware"],
            &[
                ("machine learning", "semi-supervised learning"),
                ("semi-supervised learning", "label propagation"),
                ("hardware", "integrated circuit"),
                ("hardware", "gpu"),
            ],
        );
        for s in 0..50 {
            let inst = sample_instance(&t, &id("label propagation"), 2, &mut seed::rng(s)).unwrap();
            assert_eq!(inst.parent, id("semi-supervised learning"));
            assert!(!inst.negatives.contains(&id("machine learning")));
            assert!(!inst.negatives.contains(&id("label propagation")));
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let t = taxonomy(&["a", "b"], &[("a", "b")]);
        let store = random_store(&["a", "b"], 2, 0);
        let cfg = TrainConfig { max_epochs: 0, hidden: 3, seed: 9, ..Default::default() };
        let out = train(&t, &store, &cfg).unwrap();
        assert_eq!(out.params, init_params(2, 3, 9));
        assert!(out.epoch_losses.is_empty());
    }

    #[test]
    fn checkpoint_roundtrip_and_validation() {
        let p = init_params(2, 3, 77);
        let text = format_checkpoint(&p);
        assert_eq!(parse_checkpoint(&text).unwrap(), p);
        let broken = text.replacen("B1\n", "B1\n1 2\n", 1);
        assert!(matches!(parse_checkpoint(&broken), Err(ScorerError::Checkpoint { .. })));
        assert!(parse_checkpoint("taxoorder-scorer 9\n").is_err());
    }
}
