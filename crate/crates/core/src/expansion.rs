//! Ordered, iterative taxonomy expansion.
//!
//! Each query is attached under the top-ranked node of the taxonomy as it
//! stands at that step, so concepts inserted earlier are available as
//! parents to later ones. Ranking is delegated to an [`ExpansionModel`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingStore};
use crate::graph::{ConceptId, GraphError, Taxonomy};
use crate::io::{read_text, write_text, LoadError};
use crate::scorer::{ScorerError, ScorerParams};

#[derive(Debug, Error)]
pub enum ExpansionError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("taxonomy is empty, nothing to attach `{0}` to")]
    EmptyTaxonomy(ConceptId),
    #[error("ranking for `{query}` is invalid: {msg}")]
    InvalidRanking { query: ConceptId, msg: String },
    #[error("no affinity for query `{query}`, candidate `{candidate}`")]
    MissingAffinity {
        query: ConceptId,
        candidate: ConceptId,
    },
    #[error("{path}:{line}: {msg}")]
    Protocol {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("external model failed: {0}")]
    External(String),
}

/// Candidate parents of one query, sorted by affinity (desc) then id (asc).
#[derive(Debug, Clone, PartialEq)]
pub struct RankedParents {
    pub query: ConceptId,
    pub candidates: Vec<(ConceptId, f64)>,
}

impl RankedParents {
    pub fn new(query: ConceptId, mut candidates: Vec<(ConceptId, f64)>) -> Self {
        candidates.sort_by(|(ia, sa), (ib, sb)| sb.total_cmp(sa).then_with(|| ia.cmp(ib)));
        RankedParents { query, candidates }
    }

    pub fn top(&self) -> Option<&ConceptId> {
        self.candidates.first().map(|(c, _)| c)
    }

    /// 1-based rank of `id`, if it was a candidate.
    pub fn rank_of(&self, id: &ConceptId) -> Option<usize> {
        self.candidates.iter().position(|(c, _)| c == id).map(|i| i + 1)
    }
}

/// Scores every node of the current taxonomy as a parent for `query`.
pub trait ExpansionModel: Sync {
    fn rank_parents(&self, current: &Taxonomy, query: &ConceptId) -> Result<RankedParents, ExpansionError>;
}

/// Uses the pair scorer as an attachment model: affinity of candidate `n`
/// is `f(n, query)`.
pub struct BuiltinModel<'a> {
    pub params: &'a ScorerParams,
    pub store: &'a EmbeddingStore,
}

impl ExpansionModel for BuiltinModel<'_> {
    fn rank_parents(&self, current: &Taxonomy, query: &ConceptId) -> Result<RankedParents, ExpansionError> {
        self.store.vector(query)?;
        let nodes: Vec<&ConceptId> = current.nodes().collect();
        let scored = nodes
            .par_iter()
            .map(|n| Ok(((*n).clone(), self.params.score_pair(self.store, n, query)?)))
            .collect::<Result<Vec<_>, ScorerError>>()?;
        Ok(RankedParents::new(query.clone(), scored))
    }
}

/// Test model that knows the answer: true parents present in the current
/// taxonomy get affinity 1, everything else its cosine with the query.
pub struct OracleModel<'a> {
    pub parents: &'a BTreeMap<ConceptId, BTreeSet<ConceptId>>,
    pub store: &'a EmbeddingStore,
}

impl ExpansionModel for OracleModel<'_> {
    fn rank_parents(&self, current: &Taxonomy, query: &ConceptId) -> Result<RankedParents, ExpansionError> {
        let truth = self.parents.get(query);
        let mut scored = Vec::with_capacity(current.node_count());
        for n in current.nodes() {
            let s = if truth.is_some_and(|t| t.contains(n)) {
                1.0
            } else {
                self.store.cosine(n, query)?
            };
            scored.push((n.clone(), s));
        }
        Ok(RankedParents::new(query.clone(), scored))
    }
}

/// `query<TAB>candidate` lines for one step.
pub fn format_requests<'a>(query: &ConceptId, candidates: impl IntoIterator<Item = &'a ConceptId>) -> String {
    let mut out = String::new();
    for c in candidates {
        let _ = writeln!(out, "{query}\t{c}");
    }
    out
}

/// Parses `query<TAB>candidate<TAB>affinity` lines.
pub fn parse_affinities(text: &str, path: &Path) -> Result<BTreeMap<(ConceptId, ConceptId), f64>, ExpansionError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| ExpansionError::Protocol {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let f: Vec<&str> = line.split('\t').collect();
        let [q, c, s] = f.as_slice() else {
            return Err(err("expected `query<TAB>candidate<TAB>affinity`".into()));
        };
        let score: f64 = s
            .trim()
            .parse()
            .ok()
            .filter(|x: &f64| x.is_finite())
            .ok_or_else(|| err(format!("bad affinity `{s}`")))?;
        if out
            .insert((ConceptId::new(q.trim()), ConceptId::new(c.trim())), score)
            .is_some()
        {
            return Err(err(format!("duplicate pair `{q}`, `{c}`")));
        }
    }
    Ok(out)
}

/// Affinities supplied by an external system.
///
/// `Precomputed` reads one table up front. Pairs absent from it (typically
/// candidates that are themselves new concepts when the table was scored
/// against the initial taxonomy only) take `default`, or fail when no
/// default is set. `PerStep` writes a request file for every insertion,
/// runs `program args… <request> <response>` and reads the response, so
/// affinities always reflect the current taxonomy.
pub enum ExternalModel {
    Precomputed {
        table: BTreeMap<(ConceptId, ConceptId), f64>,
        default: Option<f64>,
    },
    PerStep {
        program: String,
        args: Vec<String>,
        workdir: PathBuf,
        step: AtomicUsize,
    },
}

impl fmt::Debug for ExternalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExternalModel::Precomputed { table, default } => f
                .debug_struct("Precomputed")
                .field("pairs", &table.len())
                .field("default", default)
                .finish(),
            ExternalModel::PerStep { program, workdir, .. } => f
                .debug_struct("PerStep")
                .field("program", program)
                .field("workdir", workdir)
                .finish(),
        }
    }
}

impl ExternalModel {
    pub fn precomputed(path: &Path, default: Option<f64>) -> Result<Self, ExpansionError> {
        let table = parse_affinities(&read_text(path)?, path)?;
        Ok(ExternalModel::Precomputed { table, default })
    }

    pub fn per_step(program: impl Into<String>, args: Vec<String>, workdir: impl Into<PathBuf>) -> Self {
        ExternalModel::PerStep {
            program: program.into(),
            args,
            workdir: workdir.into(),
            step: AtomicUsize::new(0),
        }
    }

    fn lookup(
        table: &BTreeMap<(ConceptId, ConceptId), f64>,
        default: Option<f64>,
        current: &Taxonomy,
        query: &ConceptId,
    ) -> Result<RankedParents, ExpansionError> {
        let mut scored = Vec::with_capacity(current.node_count());
        for n in current.nodes() {
            let s = match table.get(&(query.clone(), n.clone())) {
                Some(s) => *s,
                None => default.ok_or_else(|| ExpansionError::MissingAffinity {
                    query: query.clone(),
                    candidate: n.clone(),
                })?,
            };
            scored.push((n.clone(), s));
        }
        Ok(RankedParents::new(query.clone(), scored))
    }
}

impl ExpansionModel for ExternalModel {
    fn rank_parents(&self, current: &Taxonomy, query: &ConceptId) -> Result<RankedParents, ExpansionError> {
        match self {
            ExternalModel::Precomputed { table, default } => Self::lookup(table, *default, current, query),
            ExternalModel::PerStep {
                program,
                args,
                workdir,
                step,
            } => {
                let t = step.fetch_add(1, Ordering::SeqCst) + 1;
                let req = workdir.join(format!("step{t:05}.request.tsv"));
                let resp = workdir.join(format!("step{t:05}.response.tsv"));
                write_text(&req, &format_requests(query, current.nodes()))?;
                let status = Command::new(program)
                    .args(args)
                    .arg(&req)
                    .arg(&resp)
                    .status()
                    .map_err(|e| ExpansionError::External(format!("{program}: {e}")))?;
                if !status.success() {
                    return Err(ExpansionError::External(format!("{program} exited with {status}")));
                }
                let table = parse_affinities(&read_text(&resp)?, &resp)?;
                if let Some(((q, _), _)) = table.iter().find(|((q, _), _)| q != query) {
                    return Err(ExpansionError::Protocol {
                        path: resp,
                        line: 0,
                        msg: format!("response mentions query `{q}`, expected `{query}`"),
                    });
                }
                Self::lookup(&table, None, current, query)
            }
        }
    }
}

/// Everything recorded while expanding.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionTrace {
    pub final_taxonomy: Taxonomy,
    /// One `(parent, query)` edge per inserted query, in insertion order.
    pub predicted: Vec<(ConceptId, ConceptId)>,
    /// The full ranking seen by each query at its insertion step.
    pub ranks: BTreeMap<ConceptId, RankedParents>,
}

impl ExpansionTrace {
    pub fn new(t0: &Taxonomy) -> Self {
        ExpansionTrace {
            final_taxonomy: t0.clone(),
            predicted: Vec::new(),
            ranks: BTreeMap::new(),
        }
    }
}

/// Expansion error together with the trace up to the failing step.
#[derive(Debug, Error)]
#[error("expansion failed at step {step} (query `{query}`): {source}")]
pub struct ExpandFailure {
    pub step: usize,
    pub query: ConceptId,
    pub partial: Box<ExpansionTrace>,
    #[source]
    pub source: ExpansionError,
}

fn validate_ranking(current: &Taxonomy, ranked: &RankedParents, query: &ConceptId) -> Result<(), ExpansionError> {
    let bad = |msg: String| {
        Err(ExpansionError::InvalidRanking {
            query: query.clone(),
            msg,
        })
    };
    if &ranked.query != query {
        return bad(format!("answers query `{}`", ranked.query));
    }
    if ranked.candidates.len() != current.node_count() {
        return bad(format!(
            "{} candidates for {} taxonomy nodes",
            ranked.candidates.len(),
            current.node_count()
        ));
    }
    let mut seen = BTreeSet::new();
    for (c, s) in &ranked.candidates {
        if !current.contains(c) || !seen.insert(c) {
            return bad(format!("candidate `{c}` is unknown or repeated"));
        }
        if !s.is_finite() {
            return bad(format!("affinity of `{c}` is not finite"));
        }
    }
    Ok(())
}

/// Inserts `order` one query at a time under the model's top choice.
pub fn expand_all(t0: &Taxonomy, order: &[ConceptId], model: &dyn ExpansionModel) -> Result<ExpansionTrace, ExpandFailure> {
    let mut trace = ExpansionTrace::new(t0);
    for (step, query) in order.iter().enumerate() {
        let attempt = (|| {
            if trace.final_taxonomy.contains(query) {
                return Err(GraphError::DuplicateConcept(query.clone()).into());
            }
            if trace.final_taxonomy.node_count() == 0 {
                return Err(ExpansionError::EmptyTaxonomy(query.clone()));
            }
            let ranked = model.rank_parents(&trace.final_taxonomy, query)?;
            validate_ranking(&trace.final_taxonomy, &ranked, query)?;
            Ok(ranked)
        })();
        let ranked = match attempt {
            Ok(r) => r,
            Err(source) => {
                return Err(ExpandFailure {
                    step: step + 1,
                    query: query.clone(),
                    partial: Box::new(trace),
                    source,
                })
            }
        };
        let parent = ranked.top().expect("validated non-empty").clone();
        trace
            .final_taxonomy
            .insert_in_place(&parent, query)
            .expect("parent present and query fresh");
        trace.predicted.push((parent, query.clone()));
        trace.ranks.insert(query.clone(), ranked);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DirectedGraph;

    fn id(s: &str) -> ConceptId {
        ConceptId::new(s)
    }

    fn tax(nodes: &[&str], edges: &[(&str, &str)]) -> Taxonomy {
        Taxonomy::new(
            DirectedGraph::build(nodes.iter().map(|n| id(n)), edges.iter().map(|(p, c)| (id(p), id(c)))).unwrap(),
        )
        .unwrap()
    }

    fn store(rows: &[(&str, &[f64])]) -> EmbeddingStore {
        EmbeddingStore::from_vectors(rows[0].1.len(), rows.iter().map(|(k, v)| (k.to_string(), v.to_vec()))).unwrap()
    }

    #[test]
    fn ranking_order_and_ties() {
        let r = RankedParents::new(id("q"), vec![(id("b"), 0.1), (id("a"), 0.9)]);
        assert_eq!(r.top(), Some(&id("a")));
        assert_eq!(r.rank_of(&id("b")), Some(2));
        let r = RankedParents::new(id("q"), vec![(id("c"), 0.5), (id("a"), 0.5), (id("b"), 0.5)]);
        let order: Vec<_> = r.candidates.iter().map(|(c, _)| c.as_str()).collect();
        assert_eq!(order, ["a", "b", "c"]);
    }

    #[test]
    fn empty_order_returns_t0() {
        let t0 = tax(&["a"], &[]);
        let s = store(&[("a", &[1.0])]);
        let parents = BTreeMap::new();
        let trace = expand_all(&t0, &[], &OracleModel { parents: &parents, store: &s }).unwrap();
        assert_eq!(trace.final_taxonomy, t0);
        assert!(trace.predicted.is_empty());
    }

    fn order_fixture() -> (Taxonomy, EmbeddingStore, BTreeMap<ConceptId, BTreeSet<ConceptId>>) {
        let t0 = tax(&["r", "s"], &[("r", "s")]);
        // y is closer to s than to r, so without x present it lands under s
        let s = store(&[
            ("r", &[1.0, 0.0, 0.0]),
            ("s", &[0.0, 1.0, 0.0]),
            ("x", &[0.8, 0.0, 0.6]),
            ("y", &[0.1, 0.7, 0.7]),
        ]);
        let parents = [(id("x"), [id("r")].into()), (id("y"), [id("x")].into())].into_iter().collect();
        (t0, s, parents)
    }

    #[test]
    fn good_order_recovers_new_under_new_edge() {
        let (t0, s, parents) = order_fixture();
        let m = OracleModel { parents: &parents, store: &s };
        let trace = expand_all(&t0, &[id("x"), id("y")], &m).unwrap();
        assert!(trace.predicted.contains(&(id("x"), id("y"))));
        assert!(trace.predicted.contains(&(id("r"), id("x"))));
        assert_eq!(trace.final_taxonomy.node_count(), 4);
        assert_eq!(trace.final_taxonomy.edge_count(), 3);

        let trace = expand_all(&t0, &[id("y"), id("x")], &m).unwrap();
        assert!(!trace.predicted.contains(&(id("x"), id("y"))));
        assert_eq!(trace.predicted[0], (id("s"), id("y")));
    }

    #[test]
    fn failure_keeps_partial_trace() {
        let (t0, s, parents) = order_fixture();
        let m = OracleModel { parents: &parents, store: &s };
        let err = expand_all(&t0, &[id("x"), id("nope")], &m).unwrap_err();
        assert_eq!(err.step, 2);
        assert_eq!(err.partial.predicted.len(), 1);
        let err = expand_all(&t0, &[id("r")], &m).unwrap_err();
        assert!(matches!(err.source, ExpansionError::Graph(GraphError::DuplicateConcept(_))));
    }

    #[test]
    fn builtin_scores_every_node() {
        let t0 = tax(&["a", "b", "c"], &[("a", "b")]);
        let s = store(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0]), ("c", &[1.0, 1.0]), ("q", &[0.5, 0.5])]);
        let mut p = crate::scorer::init_params(2, 3, 0);
        p.w2.iter_mut().for_each(|w| *w = 0.0);
        let r = BuiltinModel { params: &p, store: &s }.rank_parents(&t0, &id("q")).unwrap();
        let order: Vec<_> = r.candidates.iter().map(|(c, _)| c.as_str()).collect();
        assert_eq!(order, ["a", "b", "c"]);
        assert!(matches!(
            BuiltinModel { params: &p, store: &s }.rank_parents(&t0, &id("zz")),
            Err(ExpansionError::Embedding(EmbeddingError::MissingEmbedding(_)))
        ));
    }

    #[test]
    fn precomputed_table_and_default() {
        let t0 = tax(&["a", "b"], &[]);
        let p = Path::new("aff.tsv");
        let table = parse_affinities("q\ta\t0.2\nq\tb\t0.7\n", p).unwrap();
        let m = ExternalModel::Precomputed { table: table.clone(), default: None };
        assert_eq!(m.rank_parents(&t0, &id("q")).unwrap().top(), Some(&id("b")));
        let grown = t0.insert(&id("a"), &id("n")).unwrap();
        assert!(matches!(m.rank_parents(&grown, &id("q")), Err(ExpansionError::MissingAffinity { .. })));
        let m = ExternalModel::Precomputed { table, default: Some(0.0) };
        assert_eq!(m.rank_parents(&grown, &id("q")).unwrap().candidates.len(), 3);
        assert!(matches!(
            parse_affinities("q\ta\n", p),
            Err(ExpansionError::Protocol { line: 1, .. })
        ));
    }

    struct Broken;
    impl ExpansionModel for Broken {
        fn rank_parents(&self, _: &Taxonomy, query: &ConceptId) -> Result<RankedParents, ExpansionError> {
            Ok(RankedParents::new(query.clone(), vec![(id("ghost"), 1.0)]))
        }
    }

    #[test]
    fn invalid_rankings_are_rejected() {
        let t0 = tax(&["a"], &[]);
        let err = expand_all(&t0, &[id("q")], &Broken).unwrap_err();
        assert!(matches!(err.source, ExpansionError::InvalidRanking { .. }));
    }
}
