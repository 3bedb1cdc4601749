use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use taxoorder::eval::{format_table, SyntheticConfig};
use taxoorder::pipeline::{
    cmd_expand_eval, cmd_gen, cmd_pipeline, cmd_sort, cmd_split, cmd_train, Alpha, Corpus, ExpandEvalArgs,
    ExpansionChoice, PipelineArgs, PipelineError, SortArgs, SortMethod, SplitArgs, SplitMode, TrainArgs,
    EXIT_INVALID_ARGUMENT,
};
use taxoorder::scorer::{Sampling, TrainConfig};

#[derive(Parser)]
#[command(name = "taxoorder", version, about = "Order new concepts for taxonomy expansion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic taxonomy, concept table and embedding file.
    Gen(GenCmd),
    /// Mask part of a taxonomy as new concepts.
    Split(SplitCmd),
    /// Train the pair scorer on an existing taxonomy.
    Train(TrainCmd),
    /// Produce an insertion order for new concepts.
    Sort(SortCmd),
    /// Insert concepts in one or more orders and score the results.
    ExpandEval(ExpandEvalCmd),
    /// split, train, sort and expand-eval in one go, with a hash manifest.
    Pipeline(PipelineCmd),
}

#[derive(Args)]
struct GenCmd {
    #[arg(long, default_value_t = 200)]
    nodes: usize,
    #[arg(long, default_value_t = 3)]
    branching: usize,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Probability that a child's name extends its parent's.
    #[arg(long, default_value_t = 0.5)]
    pattern_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    concepts: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
}

impl CorpusArgs {
    fn corpus(&self) -> Corpus {
        Corpus {
            concepts: self.concepts.clone(),
            embeddings: self.embeddings.clone(),
        }
    }
}

#[derive(Args)]
struct SplitCmd {
    #[arg(long)]
    taxonomy: PathBuf,
    #[arg(long, default_value = "test")]
    mode: SplitMode,
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct TrainFlags {
    #[arg(long, default_value_t = 15)]
    neg_size: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = 512)]
    hidden: usize,
    /// Draw one instance per training edge instead of per child node.
    #[arg(long)]
    per_edge: bool,
}

impl TrainFlags {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            negative_size: self.neg_size,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            max_epochs: self.epochs,
            seed,
            convergence_tol: self.tol,
            patience: self.patience,
            hidden: self.hidden,
            sampling: if self.per_edge { Sampling::PerEdge } else { Sampling::PerNode },
        }
    }
}

#[derive(Args)]
struct TrainCmd {
    #[arg(long)]
    taxonomy: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint to write.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Loss log; defaults to `loss.tsv` next to the checkpoint.
    #[arg(long)]
    loss_log: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ExpansionFlags {
    /// builtin, oracle or external-file.
    #[arg(long, default_value = "builtin")]
    expansion: String,
    /// Affinity table (`query<TAB>candidate<TAB>score`) for external-file.
    #[arg(long)]
    affinities: Option<PathBuf>,
    /// Score for pairs missing from the affinity table.
    #[arg(long)]
    affinity_default: Option<f64>,
    /// Command run once per insertion step as `CMD <request> <response>`;
    /// split on whitespace.
    #[arg(long)]
    external_cmd: Option<String>,
}

impl ExpansionFlags {
    fn choice(&self) -> Result<ExpansionChoice, PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidArgument(m.to_string()));
        match self.expansion.as_str() {
            "builtin" => Ok(ExpansionChoice::Builtin),
            "oracle" => Ok(ExpansionChoice::Oracle),
            "external-file" => match (&self.affinities, &self.external_cmd) {
                (Some(path), None) => Ok(ExpansionChoice::ExternalTable {
                    path: path.clone(),
                    default: self.affinity_default,
                }),
                (None, Some(cmd)) => Ok(ExpansionChoice::ExternalCommand {
                    command: cmd.split_whitespace().map(str::to_string).collect(),
                }),
                _ => bad("external-file needs exactly one of --affinities or --external-cmd"),
            },
            other => bad(&format!("unknown expansion `{other}` (builtin|oracle|external-file)")),
        }
    }
}

#[derive(Args)]
struct SortCmd {
    #[arg(long)]
    taxonomy: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    new_concepts: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    method: SortMethod,
    #[arg(long, default_value = "auto")]
    alpha: Alpha,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[command(flatten)]
    expansion: ExpansionFlags,
    /// Order file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write the weighted DAG the order was read from.
    #[arg(long)]
    dump_graph: Option<PathBuf>,
}

#[derive(Args)]
struct ExpandEvalCmd {
    #[arg(long)]
    taxonomy: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    new_concepts: PathBuf,
    #[arg(long)]
    ground_truth: PathBuf,
    /// Order file; repeat for a comparison table. Rows are labelled by the
    /// file stem without an `order_` prefix.
    #[arg(long, required = true)]
    order: Vec<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    expansion: ExpansionFlags,
    #[arg(long, value_delimiter = ',', default_value = "1,3")]
    hit_k: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineCmd {
    #[arg(long)]
    taxonomy: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "test")]
    mode: SplitMode,
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, default_value = "auto")]
    alpha: Alpha,
    #[arg(long, value_delimiter = ',', default_value = "groundtruth,random,affinity,mlp,pattern,taxoorder")]
    methods: Vec<SortMethod>,
    #[command(flatten)]
    expansion: ExpansionFlags,
    #[arg(long, value_delimiter = ',', default_value = "1,3")]
    hit_k: Vec<usize>,
}

fn order_label(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_prefix("order_").map(str::to_string).unwrap_or(stem)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Gen(a) => {
            let mut cfg = SyntheticConfig::new(a.nodes, a.branching, a.noise, a.dim, a.seed);
            cfg.pattern_rate = a.pattern_rate;
            cmd_gen(&cfg, &a.out)?;
        }
        Command::Split(a) => {
            cmd_split(&SplitArgs {
                taxonomy: a.taxonomy,
                mode: a.mode,
                fraction: a.fraction,
                seed: a.seed,
                out: a.out,
            })?;
        }
        Command::Train(a) => {
            let loss_log = a
                .loss_log
                .unwrap_or_else(|| a.checkpoint.with_file_name("loss.tsv"));
            cmd_train(&TrainArgs {
                taxonomy: a.taxonomy,
                corpus: a.corpus.corpus(),
                config: a.train.config(a.seed),
                checkpoint: a.checkpoint,
                loss_log,
            })?;
        }
        Command::Sort(a) => {
            cmd_sort(&SortArgs {
                taxonomy: a.taxonomy,
                corpus: a.corpus.corpus(),
                new_concepts: a.new_concepts,
                checkpoint: a.checkpoint,
                method: a.method,
                alpha: a.alpha,
                seed: a.seed,
                ground_truth: a.ground_truth,
                expansion: a.expansion.choice()?,
                out: a.out,
                dump: a.dump_graph,
            })?;
        }
        Command::ExpandEval(a) => {
            let mut orders: Vec<(String, PathBuf)> = Vec::new();
            for path in a.order {
                let label = order_label(&path);
                if orders.iter().any(|(l, _)| *l == label) {
                    return Err(PipelineError::InvalidArgument(format!("two order files share the label `{label}`")));
                }
                orders.push((label, path));
            }
            let out = cmd_expand_eval(&ExpandEvalArgs {
                taxonomy: a.taxonomy,
                corpus: a.corpus.corpus(),
                new_concepts: a.new_concepts,
                ground_truth: a.ground_truth,
                orders,
                expansion: a.expansion.choice()?,
                checkpoint: a.checkpoint,
                hit_k: a.hit_k,
                out: a.out,
            })?;
            print!("{}", format_table(&out.rows));
        }
        Command::Pipeline(a) => {
            let out = cmd_pipeline(&PipelineArgs {
                taxonomy: a.taxonomy,
                corpus: a.corpus.corpus(),
                out: a.out,
                seed: a.seed,
                mode: a.mode,
                fraction: a.fraction,
                train: a.train.config(a.seed),
                alpha: a.alpha,
                methods: a.methods,
                expansion: a.expansion.choice()?,
                hit_k: a.hit_k,
            })?;
            print!("{}", format_table(&out.rows));
        }
    }
    Ok(())
}

fn init_threads() -> Result<(), PipelineError> {
    let Ok(v) = std::env::var("TAXOORDER_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| PipelineError::InvalidArgument(format!("TAXOORDER_THREADS=`{v}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| PipelineError::InvalidArgument(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            let code = e.exit_code();
            debug_assert!(code != 0);
            ExitCode::from(u8::try_from(code).unwrap_or(EXIT_INVALID_ARGUMENT as u8))
        }
    }
}
