//! File-to-file stages behind the command-line driver: split, train, sort,
//! expand + evaluate, and the full pipeline with an artifact manifest.
//!
//! Every stage takes the user seed and derives its own named sub-stream,
//! so running a stage alone reproduces what the full pipeline produced.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::{edge_similarity_threshold, format_embeddings, load_embeddings, EmbeddingError, EmbeddingStore};
use crate::eval::{
    check_order, format_kv, format_table, gen_synthetic, make_test_split, make_validation_split, EvalError, GroundTruth,
    MetricsReport, SyntheticConfig,
};
use crate::expansion::{expand_all, BuiltinModel, ExpandFailure, ExpansionError, ExpansionModel, ExternalModel, OracleModel};
use crate::graph::{Concept, ConceptId, GraphError, Taxonomy};
use crate::io::{
    format_concepts, format_id_list, format_pairs, format_taxonomy, format_weighted_edges, load_concepts, load_id_list, load_pairs,
    load_taxonomy, write_text, ConceptTable, LoadError,
};
use crate::scorer::{format_checkpoint, load_checkpoint, train, ScorerError, ScorerParams, TrainConfig};
use crate::seed;
use crate::sorter::{
    affinity_order, groundtruth_order, mlp_forest, pattern_order, random_order, sort_concepts, taxoorder, ConceptOrder,
    SortError,
};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID_ARGUMENT: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NON_FINITE_LOSS: i32 = 4;
pub const EXIT_MISSING_CHECKPOINT: i32 = 5;
pub const EXIT_ORDER_MISMATCH: i32 = 6;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("{0}")]
    Io(String),
    #[error("training diverged: {0}")]
    NonFiniteLoss(ScorerError),
    #[error("method `{0}` needs a checkpoint (--checkpoint)")]
    MissingCheckpoint(String),
    #[error("order/concepts mismatch: {0}")]
    OrderMismatch(String),
    #[error(transparent)]
    Scorer(ScorerError),
    #[error(transparent)]
    Embedding(EmbeddingError),
    #[error(transparent)]
    Sort(#[from] SortError),
    #[error(transparent)]
    Eval(EvalError),
    #[error(transparent)]
    Expand(#[from] Box<ExpandFailure>),
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl PipelineError {
    /// Stable process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::InvalidArgument(_) => EXIT_INVALID_ARGUMENT,
            PipelineError::Scorer(ScorerError::InvalidConfig(_)) => EXIT_INVALID_ARGUMENT,
            PipelineError::Load(_) | PipelineError::Io(_) => EXIT_IO,
            PipelineError::Embedding(e) if is_io_embedding(e) => EXIT_IO,
            PipelineError::Scorer(ScorerError::Load(_) | ScorerError::Checkpoint { .. }) => EXIT_IO,
            PipelineError::NonFiniteLoss(_) => EXIT_NON_FINITE_LOSS,
            PipelineError::MissingCheckpoint(_) => EXIT_MISSING_CHECKPOINT,
            PipelineError::OrderMismatch(_) => EXIT_ORDER_MISMATCH,
            PipelineError::Eval(EvalError::InvalidFraction(_)) => EXIT_INVALID_ARGUMENT,
            PipelineError::Eval(EvalError::OrderMismatch(_) | EvalError::UnknownQuery(_)) => EXIT_ORDER_MISMATCH,
            _ => EXIT_FAILURE,
        }
    }
}

fn is_io_embedding(e: &EmbeddingError) -> bool {
    matches!(
        e,
        EmbeddingError::Load(_)
            | EmbeddingError::MalformedHeader(_)
            | EmbeddingError::DimensionMismatch { .. }
            | EmbeddingError::DuplicateToken { .. }
            | EmbeddingError::BadValue { .. }
            | EmbeddingError::CountMismatch { .. }
    )
}

impl From<ScorerError> for PipelineError {
    fn from(e: ScorerError) -> Self {
        match e {
            ScorerError::NonFiniteLoss { .. } => PipelineError::NonFiniteLoss(e),
            e => PipelineError::Scorer(e),
        }
    }
}

impl From<EmbeddingError> for PipelineError {
    fn from(e: EmbeddingError) -> Self {
        PipelineError::Embedding(e)
    }
}

impl From<EvalError> for PipelineError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::OrderMismatch(m) => PipelineError::OrderMismatch(m),
            e => PipelineError::Eval(e),
        }
    }
}

impl From<ExpandFailure> for PipelineError {
    fn from(e: ExpandFailure) -> Self {
        PipelineError::Expand(Box::new(e))
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    Validation,
    Test,
}

impl FromStr for SplitMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "val" | "validation" => Ok(SplitMode::Validation),
            "test" => Ok(SplitMode::Test),
            _ => Err(format!("unknown split mode `{s}` (val|test)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SortMethod {
    Random,
    Affinity,
    Mlp,
    Pattern,
    TaxoOrder,
    GroundTruth,
}

impl SortMethod {
    pub const ALL: [SortMethod; 6] = [
        SortMethod::GroundTruth,
        SortMethod::Random,
        SortMethod::Affinity,
        SortMethod::Mlp,
        SortMethod::Pattern,
        SortMethod::TaxoOrder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SortMethod::Random => "random",
            SortMethod::Affinity => "affinity",
            SortMethod::Mlp => "mlp",
            SortMethod::Pattern => "pattern",
            SortMethod::TaxoOrder => "taxoorder",
            SortMethod::GroundTruth => "groundtruth",
        }
    }

    fn needs_checkpoint(self) -> bool {
        matches!(self, SortMethod::Mlp | SortMethod::TaxoOrder)
    }
}

impl FromStr for SortMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        SortMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Auto,
    Fixed(f64),
}

impl FromStr for Alpha {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Alpha::Auto);
        }
        match s.parse::<f64>() {
            Ok(a) if (-1.0..=1.0).contains(&a) => Ok(Alpha::Fixed(a)),
            _ => Err(format!("alpha must be `auto` or a number in [-1, 1], got `{s}`")),
        }
    }
}

/// Where parent rankings come from during expansion.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpansionChoice {
    /// The pair scorer from the checkpoint.
    Builtin,
    /// Knows the ground truth; for order-sensitivity experiments.
    Oracle,
    /// A precomputed affinity table, with an optional score for pairs it
    /// does not cover.
    ExternalTable { path: PathBuf, default: Option<f64> },
    /// A command run once per insertion step as `cmd… <request> <response>`.
    ExternalCommand { command: Vec<String> },
}

/// Common corpus inputs.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub concepts: PathBuf,
    pub embeddings: PathBuf,
}

struct Loaded {
    concepts: ConceptTable,
    store: EmbeddingStore,
}

impl Corpus {
    fn load(&self) -> Result<Loaded> {
        let concepts = load_concepts(&self.concepts)?;
        let raw = load_embeddings(&self.embeddings)?;
        let (store, missing) = raw.by_concept_id(&concepts);
        if !missing.is_empty() {
            warn!("concepts_without_embedding={} first={}", missing.len(), missing[0]);
        }
        Ok(Loaded { concepts, store })
    }
}

fn write(path: &Path, text: &str) -> Result<PathBuf> {
    write_text(path, text)?;
    Ok(path.to_path_buf())
}

// ------------------------------------------------------------------ gen

#[derive(Debug, Clone)]
pub struct GenOutput {
    pub taxonomy: PathBuf,
    pub concepts: PathBuf,
    pub embeddings: PathBuf,
}

/// Writes a synthetic corpus: `taxonomy.tsv`, `concepts.tsv`, `embeddings.txt`.
pub fn cmd_gen(cfg: &SyntheticConfig, out: &Path) -> Result<GenOutput> {
    let corpus = gen_synthetic(cfg).map_err(|e| PipelineError::InvalidArgument(e.to_string()))?;
    Ok(GenOutput {
        taxonomy: write(&out.join("taxonomy.tsv"), &format_taxonomy(corpus.taxonomy.graph()))?,
        concepts: write(&out.join("concepts.tsv"), &format_concepts(corpus.concepts.values()))?,
        embeddings: write(&out.join("embeddings.txt"), &format_embeddings(&corpus.store))?,
    })
}

// ---------------------------------------------------------------- split

#[derive(Debug, Clone)]
pub struct SplitArgs {
    pub taxonomy: PathBuf,
    pub mode: SplitMode,
    pub fraction: f64,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SplitOutput {
    pub taxonomy: PathBuf,
    pub new_concepts: PathBuf,
    pub ground_truth: PathBuf,
}

pub fn cmd_split(args: &SplitArgs) -> Result<SplitOutput> {
    if !(args.fraction > 0.0 && args.fraction < 1.0) {
        return Err(PipelineError::InvalidArgument(format!(
            "fraction {} must lie strictly between 0 and 1",
            args.fraction
        )));
    }
    let t = load_taxonomy(&args.taxonomy)?;
    let seed = seed::derive(args.seed, "split");
    let (reduced, gt) = match args.mode {
        SplitMode::Validation => make_validation_split(&t, args.fraction, seed)?,
        SplitMode::Test => make_test_split(&t, args.fraction, seed)?,
    };
    info!(
        "split mode={:?} nodes={} kept={} masked={}",
        args.mode,
        t.node_count(),
        reduced.node_count(),
        gt.len()
    );
    Ok(SplitOutput {
        taxonomy: write(&args.out.join("taxonomy.tsv"), &format_taxonomy(reduced.graph()))?,
        new_concepts: write(&args.out.join("new_concepts.txt"), &format_id_list(gt.queries()))?,
        ground_truth: write(&args.out.join("ground_truth.tsv"), &format_pairs(gt.pairs().iter().map(|(q, p)| (q, p))))?,
    })
}

/// Reads a ground-truth TSV back against the full taxonomy.
pub fn load_ground_truth(full: &Taxonomy, path: &Path, queries: &[ConceptId]) -> Result<GroundTruth> {
    let mut parents: BTreeMap<ConceptId, BTreeSet<ConceptId>> =
        queries.iter().map(|q| (q.clone(), BTreeSet::new())).collect();
    for (q, p) in load_pairs(path)? {
        match parents.get_mut(&q) {
            Some(set) => {
                set.insert(p);
            }
            None => {
                return Err(PipelineError::OrderMismatch(format!(
                    "ground truth mentions `{q}`, which is not a new concept"
                )))
            }
        }
    }
    Ok(GroundTruth {
        full: full.clone(),
        parents,
    })
}

/// Rebuilds the full taxonomy from the reduced one plus ground-truth edges.
fn full_taxonomy(reduced: &Taxonomy, gt_pairs: &[(ConceptId, ConceptId)], queries: &[ConceptId]) -> Result<Taxonomy> {
    let mut g = reduced.graph().clone();
    for q in queries {
        g.add_node(q.clone());
    }
    for (q, p) in gt_pairs {
        g.add_node(p.clone());
        g.add_edge(p.clone(), q.clone())?;
    }
    Ok(Taxonomy::new(g)?)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub taxonomy: PathBuf,
    pub corpus: Corpus,
    pub config: TrainConfig,
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
}

/// Nodes lacking an embedding are dropped from the training taxonomy.
fn embedded_only(t: &Taxonomy, store: &EmbeddingStore) -> Taxonomy {
    let missing: BTreeSet<ConceptId> = t.nodes().filter(|n| !store.contains(n)).cloned().collect();
    if missing.is_empty() {
        return t.clone();
    }
    warn!("skipping_unembedded_nodes={}", missing.len());
    t.without(&missing)
}

pub fn cmd_train(args: &TrainArgs) -> Result<ScorerParams> {
    let t = load_taxonomy(&args.taxonomy)?;
    let loaded = args.corpus.load()?;
    let t = embedded_only(&t, &loaded.store);
    let mut cfg = args.config.clone();
    cfg.seed = seed::derive(cfg.seed, "train");
    let out = train(&t, &loaded.store, &cfg)?;
    let mut log = String::from("# epoch\tmean_loss\n");
    for (i, l) in out.epoch_losses.iter().enumerate() {
        let _ = writeln!(log, "{}\t{l}", i + 1);
    }
    write(&args.loss_log, &log)?;
    write(&args.checkpoint, &format_checkpoint(&out.params))?;
    Ok(out.params)
}

// ---------------------------------------------------------------- sort

#[derive(Debug, Clone)]
pub struct SortArgs {
    pub taxonomy: PathBuf,
    pub corpus: Corpus,
    pub new_concepts: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub method: SortMethod,
    pub alpha: Alpha,
    pub seed: u64,
    /// Needed for `groundtruth` and for the oracle expansion model.
    pub ground_truth: Option<PathBuf>,
    /// Model consulted by the `affinity` sorter.
    pub expansion: ExpansionChoice,
    pub out: PathBuf,
    /// Optional weighted dump of the DAG the order was read from.
    pub dump: Option<PathBuf>,
}

struct SortInputs {
    t0: Taxonomy,
    loaded: Loaded,
    queries: Vec<ConceptId>,
}

fn load_sort_inputs(taxonomy: &Path, corpus: &Corpus, new_concepts: &Path) -> Result<SortInputs> {
    let t0 = load_taxonomy(taxonomy)?;
    let loaded = corpus.load()?;
    let queries = load_id_list(new_concepts)?;
    for q in &queries {
        if t0.contains(q) {
            return Err(PipelineError::OrderMismatch(format!("new concept `{q}` is already in the taxonomy")));
        }
    }
    Ok(SortInputs { t0, loaded, queries })
}

fn resolve_alpha(alpha: Alpha, t0: &Taxonomy, store: &EmbeddingStore) -> Result<f64> {
    let a = match alpha {
        Alpha::Fixed(a) => a,
        Alpha::Auto => edge_similarity_threshold(&embedded_only(t0, store), store)?,
    };
    info!("alpha={a}");
    Ok(a)
}

fn load_params(checkpoint: Option<&Path>, method: &str, store: &EmbeddingStore) -> Result<ScorerParams> {
    let path = checkpoint.ok_or_else(|| PipelineError::MissingCheckpoint(method.to_string()))?;
    if !path.exists() {
        return Err(PipelineError::MissingCheckpoint(format!("{method}: {} does not exist", path.display())));
    }
    let params = load_checkpoint(path)?;
    if params.dim != store.dim() {
        return Err(PipelineError::Scorer(ScorerError::ShapeMismatch {
            expected: store.dim(),
            got: params.dim,
        }));
    }
    Ok(params)
}

fn ground_truth_for(
    t0: &Taxonomy,
    queries: &[ConceptId],
    path: Option<&Path>,
    what: &str,
) -> Result<GroundTruth> {
    let path = path.ok_or_else(|| PipelineError::InvalidArgument(format!("{what} needs --ground-truth")))?;
    let pairs: Vec<(ConceptId, ConceptId)> = load_pairs(path)?;
    let full = full_taxonomy(t0, &pairs, queries)?;
    load_ground_truth(&full, path, queries)
}

fn build_model<'a>(
    choice: &ExpansionChoice,
    params: Option<&'a ScorerParams>,
    store: &'a EmbeddingStore,
    gt: Option<&'a GroundTruth>,
    workdir: &Path,
) -> Result<Box<dyn ExpansionModel + 'a>> {
    Ok(match choice {
        ExpansionChoice::Builtin => {
            let params = params.ok_or_else(|| PipelineError::MissingCheckpoint("builtin expansion".into()))?;
            Box::new(BuiltinModel { params, store })
        }
        ExpansionChoice::Oracle => {
            let gt = gt.ok_or_else(|| PipelineError::InvalidArgument("oracle expansion needs --ground-truth".into()))?;
            Box::new(OracleModel {
                parents: &gt.parents,
                store,
            })
        }
        ExpansionChoice::ExternalTable { path, default } => Box::new(ExternalModel::precomputed(path, *default)?),
        ExpansionChoice::ExternalCommand { command } => {
            let (program, args) = command
                .split_first()
                .ok_or_else(|| PipelineError::InvalidArgument("empty external command".into()))?;
            fs::create_dir_all(workdir).map_err(|e| PipelineError::Io(format!("{}: {e}", workdir.display())))?;
            Box::new(ExternalModel::per_step(program.clone(), args.to_vec(), workdir))
        }
    })
}

/// Concepts without embeddings cannot be scored; they are ordered after
/// the rest, by id.
fn split_unembedded(queries: &[ConceptId], store: &EmbeddingStore) -> (Vec<ConceptId>, Vec<ConceptId>) {
    let (ok, missing): (Vec<_>, Vec<_>) = queries.iter().cloned().partition(|q| store.contains(q));
    if !missing.is_empty() {
        warn!("unembedded_new_concepts={} placed_last=true", missing.len());
    }
    (ok, missing)
}

fn concept_list(ids: &[ConceptId], table: &ConceptTable) -> Result<Vec<Concept>> {
    ids.iter()
        .map(|id| {
            table
                .get(id)
                .cloned()
                .ok_or_else(|| PipelineError::OrderMismatch(format!("`{id}` is not in the concept file")))
        })
        .collect()
}

pub fn cmd_sort(args: &SortArgs) -> Result<ConceptOrder> {
    let SortInputs { t0, loaded, queries } = load_sort_inputs(&args.taxonomy, &args.corpus, &args.new_concepts)?;
    let store = &loaded.store;
    let mut dump = None;
    let order = match args.method {
        SortMethod::Random => random_order(&queries, seed::derive(args.seed, "sort")),
        SortMethod::Pattern => pattern_order(&concept_list(&queries, &loaded.concepts)?)?,
        SortMethod::GroundTruth => {
            let gt = ground_truth_for(&t0, &queries, args.ground_truth.as_deref(), "groundtruth sorting")?;
            groundtruth_order(&queries, gt.full.graph())?
        }
        SortMethod::Affinity => {
            let params = match (&args.expansion, args.checkpoint.as_deref()) {
                (ExpansionChoice::Builtin, cp) => Some(load_params(cp, "affinity", store)?),
                _ => None,
            };
            let gt = match &args.expansion {
                ExpansionChoice::Oracle => Some(ground_truth_for(&t0, &queries, args.ground_truth.as_deref(), "oracle")?),
                _ => None,
            };
            let workdir = args.out.with_extension("requests");
            let model = build_model(&args.expansion, params.as_ref(), store, gt.as_ref(), &workdir)?;
            affinity_order(&queries, &t0, model.as_ref())?
        }
        SortMethod::Mlp | SortMethod::TaxoOrder => {
            let params = load_params(args.checkpoint.as_deref(), args.method.name(), store)?;
            let alpha = resolve_alpha(args.alpha, &t0, store)?;
            let (ok, missing) = split_unembedded(&queries, store);
            let (mut order, graph) = if args.method == SortMethod::Mlp {
                let g = mlp_forest(&ok, store, &params, alpha)?;
                (sort_concepts(&g)?, g)
            } else {
                let r = taxoorder(&concept_list(&ok, &loaded.concepts)?, store, &params, alpha)?;
                (r.order, r.t_order)
            };
            order.0.extend(missing);
            info!("method={} order_edges={}", args.method.name(), graph.edge_count());
            dump = Some(graph);
            order
        }
    };
    debug_assert!(order.is_permutation_of(&queries));
    write(&args.out, &format_id_list(order.as_slice()))?;
    if let (Some(path), Some(g)) = (&args.dump, &dump) {
        write(path, &format_weighted_edges(g))?;
    }
    Ok(order)
}

// ---------------------------------------------------------- expand + eval

#[derive(Debug, Clone)]
pub struct ExpandEvalArgs {
    pub taxonomy: PathBuf,
    pub corpus: Corpus,
    pub new_concepts: PathBuf,
    pub ground_truth: PathBuf,
    /// `(label, order file)` pairs; one table row each.
    pub orders: Vec<(String, PathBuf)>,
    pub expansion: ExpansionChoice,
    pub checkpoint: Option<PathBuf>,
    pub hit_k: Vec<usize>,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ExpandEvalOutput {
    pub rows: Vec<(String, MetricsReport)>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_expand_eval(args: &ExpandEvalArgs) -> Result<ExpandEvalOutput> {
    if args.hit_k.is_empty() || args.hit_k.contains(&0) {
        return Err(PipelineError::InvalidArgument("--hit-k values must be positive".into()));
    }
    let SortInputs { t0, loaded, queries } = load_sort_inputs(&args.taxonomy, &args.corpus, &args.new_concepts)?;
    let store = &loaded.store;
    let gt = ground_truth_for(&t0, &queries, Some(&args.ground_truth), "evaluation")?;
    let params = match args.expansion {
        ExpansionChoice::Builtin => Some(load_params(args.checkpoint.as_deref(), "builtin expansion", store)?),
        _ => None,
    };

    let mut rows = Vec::new();
    let mut files = Vec::new();
    for (label, path) in &args.orders {
        let order = load_id_list(path)?;
        check_order(&order, &gt)?;
        let workdir = args.out.join(format!("requests_{label}"));
        let model = build_model(&args.expansion, params.as_ref(), store, Some(&gt), &workdir)?;
        let trace = expand_all(&t0, &order, model.as_ref())?;
        let report = MetricsReport::compute(&order, &t0, &trace, &gt, &args.hit_k)?;
        info!("method={label} enc={} mrr={:.4}", report.enc, report.mrr);
        let pred = trace.predicted.iter().map(|(p, c)| (p, c));
        files.push(write(&args.out.join(format!("predicted_{label}.tsv")), &format_pairs(pred))?);
        rows.push((label.clone(), report));
    }
    files.push(write(&args.out.join("metrics.txt"), &format_table(&rows))?);
    files.push(write(&args.out.join("metrics.kv"), &format_kv(&rows))?);
    Ok(ExpandEvalOutput { rows, files })
}

// -------------------------------------------------------------- pipeline

#[derive(Debug, Clone)]
pub struct PipelineArgs {
    pub taxonomy: PathBuf,
    pub corpus: Corpus,
    pub out: PathBuf,
    pub seed: u64,
    pub mode: SplitMode,
    pub fraction: f64,
    pub train: TrainConfig,
    pub alpha: Alpha,
    pub methods: Vec<SortMethod>,
    pub expansion: ExpansionChoice,
    pub hit_k: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub rows: Vec<(String, MetricsReport)>,
    pub manifest: PathBuf,
    /// `(relative path, sha256 hex)` in path order.
    pub hashes: Vec<(String, String)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hashes every file under `root` except the manifest itself.
pub fn hash_tree(root: &Path) -> Result<Vec<(String, String)>> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<(String, String)>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(&path, root, out)?;
            } else {
                let rel = path
                    .strip_prefix(root)
                    .expect("walk stays under root")
                    .to_string_lossy()
                    .replace('\\', "/");
                if rel != "manifest.txt" {
                    out.push((rel, sha256_hex(&fs::read(&path)?)));
                }
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out).map_err(|e| PipelineError::Io(format!("{}: {e}", root.display())))?;
    out.sort();
    Ok(out)
}

/// split → train → sort (each method) → expand + evaluate → manifest.
pub fn cmd_pipeline(args: &PipelineArgs) -> Result<PipelineOutput> {
    if args.methods.is_empty() {
        return Err(PipelineError::InvalidArgument("no sorting methods requested".into()));
    }
    let split_dir = args.out.join("split");
    let split = cmd_split(&SplitArgs {
        taxonomy: args.taxonomy.clone(),
        mode: args.mode,
        fraction: args.fraction,
        seed: args.seed,
        out: split_dir,
    })?;

    let needs_params = args.methods.iter().any(|m| m.needs_checkpoint())
        || args.expansion == ExpansionChoice::Builtin;
    let checkpoint = args.out.join("checkpoint.txt");
    if needs_params {
        let mut config = args.train.clone();
        config.seed = args.seed;
        cmd_train(&TrainArgs {
            taxonomy: split.taxonomy.clone(),
            corpus: args.corpus.clone(),
            config,
            checkpoint: checkpoint.clone(),
            loss_log: args.out.join("loss.tsv"),
        })?;
    }

    let mut orders = Vec::new();
    for &method in &args.methods {
        let name = method.name();
        let out = args.out.join(format!("order_{name}.txt"));
        let dump = method.needs_checkpoint().then(|| args.out.join(format!("graph_{name}.tsv")));
        cmd_sort(&SortArgs {
            taxonomy: split.taxonomy.clone(),
            corpus: args.corpus.clone(),
            new_concepts: split.new_concepts.clone(),
            checkpoint: needs_params.then(|| checkpoint.clone()),
            method,
            alpha: args.alpha,
            seed: args.seed,
            ground_truth: Some(split.ground_truth.clone()),
            expansion: args.expansion.clone(),
            out: out.clone(),
            dump,
        })?;
        orders.push((name.to_string(), out));
    }

    let eval = cmd_expand_eval(&ExpandEvalArgs {
        taxonomy: split.taxonomy.clone(),
        corpus: args.corpus.clone(),
        new_concepts: split.new_concepts.clone(),
        ground_truth: split.ground_truth.clone(),
        orders,
        expansion: args.expansion.clone(),
        checkpoint: needs_params.then_some(checkpoint),
        hit_k: args.hit_k.clone(),
        out: args.out.clone(),
    })?;

    let hashes = hash_tree(&args.out)?;
    let mut manifest = String::new();
    for (path, hash) in &hashes {
        let _ = writeln!(manifest, "{hash}  {path}");
    }
    let manifest = write(&args.out.join("manifest.txt"), &manifest)?;
    Ok(PipelineOutput {
        rows: eval.rows,
        manifest,
        hashes,
    })
}
