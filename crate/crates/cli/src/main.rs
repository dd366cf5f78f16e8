mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use crate::config::{FileConfig, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "bias-audit",
    version,
    about = "Audit a text corpus for social bias toward protected attributes"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML file with run settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Taxonomy JSON file; the bundled taxonomy is used by default.
    #[arg(long, global = true)]
    taxonomy: Option<PathBuf>,
    /// Classifier backend: builtin, exec:<command> or http:<host:port>.
    #[arg(long, global = true, env = "BIAS_AUDIT_BACKEND")]
    backend: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(short, long = "output-dir", global = true)]
    output_dir: Option<PathBuf>,
    /// Maximum sentences per attribute sent to regard classification.
    #[arg(long = "cap", global = true)]
    per_attribute_cap: Option<usize>,
    /// Per-attribute vocabulary size before intersection.
    #[arg(long = "vocab-k", global = true)]
    vocab_k: Option<usize>,
    /// Negative-regard ratio cap for mitigation.
    #[arg(long, global = true)]
    target: Option<f64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    max_in_flight: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Find attribute keywords and decide whether each refers to a person.
    Detect(DetectArgs),
    /// Classify regard toward each protected mention.
    Annotate(AnnotateArgs),
    /// Co-occurrence bias rankings and regard distributions for one class.
    Analyze(AnalyzeArgs),
    /// Downsample negative-regard sentences to the target ratio.
    Mitigate(MitigateArgs),
    /// Agreement metrics and recall against a gold stereotype list.
    Evaluate(EvaluateArgs),
    /// Markdown report of bias tables and example predictions.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Text,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Corpus files; replaces corpus_paths from the config.
    #[arg(long = "corpus")]
    corpus: Vec<PathBuf>,
    /// Input format; inferred from the extension by default (.jsonl or plain text).
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Documents read and processed per batch.
    #[arg(long, default_value_t = 4096, hide = true)]
    chunk_docs: usize,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Mentions file from `detect`; defaults to <output-dir>/mentions.jsonl.
    #[arg(long)]
    mentions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Attribute class, e.g. "race/ethnicity".
    #[arg(long)]
    class: String,
    /// Annotated corpus; defaults to <output-dir>/annotated.jsonl.
    #[arg(long)]
    annotated: Option<PathBuf>,
    /// Keep this many words per ranking; 0 keeps the whole vocabulary.
    #[arg(long, default_value_t = 1000)]
    top: usize,
    /// Restrict to these attributes of the class (comma separated).
    #[arg(long, value_delimiter = ',')]
    attributes: Vec<String>,
    /// File with one word per line never counted.
    #[arg(long)]
    stoplist: Option<PathBuf>,
    /// Exponent on the frequency term of the combined score.
    #[arg(long, default_value_t = 1.0)]
    frequency_exponent: f64,
    /// Exponent on the regard term of the combined score.
    #[arg(long, default_value_t = 1.0)]
    regard_exponent: f64,
    /// Also write a Markdown report.
    #[arg(long)]
    report: bool,
    /// Words per cell in the Markdown report.
    #[arg(long, default_value_t = 10)]
    per_cell: usize,
}

#[derive(Debug, Args)]
pub struct MitigateArgs {
    /// Annotated corpus; defaults to <output-dir>/annotated.jsonl.
    #[arg(long)]
    annotated: Option<PathBuf>,
    /// Pairs to report retention for, as word:attribute.
    #[arg(long = "watch")]
    watch: Vec<String>,
    /// Without --watch, report the top words of each attribute under the
    /// negative-regard score.
    #[arg(long, default_value_t = 10)]
    watch_top: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GoldFormat {
    /// attribute,word,mean_offensiveness
    Generic,
    /// identity,attribute,mean_offensiveness (column names configurable)
    Seegull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatchArg {
    Any,
    Exact,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Confusion data: JSON {labels, matrix} or CSV gold,predicted pairs. Repeatable.
    #[arg(long)]
    confusion: Vec<PathBuf>,
    /// Rankings CSV from `analyze`.
    #[arg(long)]
    rankings: Option<PathBuf>,
    /// Stereotype gold list.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GoldFormat::Generic)]
    gold_format: GoldFormat,
    #[arg(long, default_value = "identity")]
    seegull_identity_column: String,
    #[arg(long, default_value = "attribute")]
    seegull_attribute_column: String,
    #[arg(long, default_value = "mean_offensiveness")]
    seegull_score_column: String,
    /// Cutoffs for recall@k.
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 50, 100])]
    k: Vec<usize>,
    /// How multi-word gold entries match ranked words.
    #[arg(long = "match", value_enum, default_value_t = MatchArg::Any)]
    match_mode: MatchArg,
    /// Output file; defaults to <output-dir>/metrics.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    class: String,
    /// Rankings CSV; defaults to <output-dir>/rankings_<class>.csv.
    #[arg(long)]
    rankings: Option<PathBuf>,
    /// Mentions file for disambiguation examples; defaults to <output-dir>/mentions.jsonl if present.
    #[arg(long)]
    mentions: Option<PathBuf>,
    /// Annotated corpus for regard examples; defaults to <output-dir>/annotated.jsonl if present.
    #[arg(long)]
    annotated: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    per_cell: usize,
    /// Example sentences per predicted label.
    #[arg(long, default_value_t = 3)]
    examples: usize,
}

impl GlobalArgs {
    fn overrides(&self) -> FileConfig {
        FileConfig {
            taxonomy_path: self.taxonomy.clone(),
            corpus_paths: None,
            backend: self.backend.clone(),
            per_attribute_cap: self.per_attribute_cap,
            vocab_k: self.vocab_k,
            target: self.target,
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            workers: self.workers,
            batch_size: self.batch_size,
            max_in_flight: self.max_in_flight,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.global.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut overrides = cli.global.overrides();
    if let Command::Detect(d) = &cli.command {
        if !d.corpus.is_empty() {
            overrides.corpus_paths = Some(d.corpus.clone());
        }
    }
    let cfg = RunConfig::resolve(file.merge(overrides))?;
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    match &cli.command {
        Command::Detect(a) => commands::detect(&cfg, a),
        Command::Annotate(a) => commands::annotate(&cfg, a),
        Command::Analyze(a) => commands::analyze(&cfg, a),
        Command::Mitigate(a) => commands::mitigate(&cfg, a),
        Command::Evaluate(a) => commands::evaluate(&cfg, a),
        Command::Report(a) => commands::report(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bias-audit: {e}");
            e.exit_code()
        }
    }
}
