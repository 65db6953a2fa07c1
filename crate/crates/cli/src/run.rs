//! Command-line arguments and the run description embedded in outputs.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use trilstm::{EncoderMethod, EvalMode, NetworkVariant};

#[derive(Parser, Debug)]
#[command(
    name = "trilstm",
    version,
    about = "Letter-trigram BLSTM mention detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model on a labeled corpus.
    Train(TrainArgs),
    /// Detect mentions in raw text with a trained model.
    Annotate(AnnotateArgs),
    /// Score a model or precomputed annotations against gold data.
    Evaluate(EvaluateArgs),
    /// Train and score all nine encoder/network combinations.
    CompareConfigs(CompareArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Write a seeded synthetic corpus in column format.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// `token<TAB>label` columns, blank line between sentences.
    #[default]
    Bio,
    /// JSON or JSON Lines records with `doc_id`, `text`, `mentions`.
    Standoff,
}

#[derive(Args, Debug, Clone)]
pub struct CorpusArgs {
    /// Corpus file.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = CorpusFormat::Bio)]
    pub format: CorpusFormat,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value = "TRI")]
    pub encoder: EncoderMethod,
    #[arg(long, default_value = "BLSTM")]
    pub network: NetworkVariant,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of randomly drawn training sentences; all when omitted.
    #[arg(long)]
    pub train_size: Option<usize>,
    /// Output model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Word vectors (word2vec text format), required for EMB.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Training log; defaults to `<model>.log.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Input file: plain text (one document per non-empty line) or standoff
    /// records; standard input when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Treat the input as standoff records rather than plain text.
    #[arg(long)]
    pub standoff: bool,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Model to run over the corpus.
    #[arg(
        long,
        required_unless_present = "annotations",
        conflicts_with = "annotations"
    )]
    pub model: Option<PathBuf>,
    /// Precomputed standoff annotations to score instead of a model.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long, default_value = "both")]
    pub mode: EvalMode,
    /// Evaluate on this many randomly drawn sentences instead of the whole
    /// corpus (model evaluation only).
    #[arg(long)]
    pub test_size: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Report path prefix; writes `<report>.txt` and `<report>.jsonl`.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2000)]
    pub train_size: usize,
    #[arg(long, default_value_t = 2000)]
    pub test_size: usize,
    /// Word vectors for the EMB rows; those rows fail without them.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Report path prefix; writes `<report>.txt` and `<report>.jsonl`.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum NetworkChoice {
    #[value(name = "FF", alias = "ff")]
    Ff,
    #[value(name = "LSTM", alias = "lstm")]
    Lstm,
    #[value(name = "BLSTM", alias = "blstm")]
    Blstm,
    #[value(name = "all")]
    All,
}

impl NetworkChoice {
    pub fn variants(self) -> Vec<NetworkVariant> {
        match self {
            NetworkChoice::Ff => vec![NetworkVariant::Ff],
            NetworkChoice::Lstm => vec![NetworkVariant::Lstm],
            NetworkChoice::Blstm => vec![NetworkVariant::Blstm],
            NetworkChoice::All => NetworkVariant::ALL.to_vec(),
        }
    }
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = NetworkChoice::All)]
    pub network: NetworkChoice,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Add this value to one analytic entry per block (negative control).
    #[arg(long)]
    pub corrupt: Option<f64>,
    /// Optional JSON Lines report with per-block errors.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    pub sentences: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub misspell_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub case_mangle_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub mention_density: f64,
    #[arg(long, default_value_t = 10)]
    pub sentences_per_doc: usize,
    /// Column-format output file.
    #[arg(long)]
    pub output: PathBuf,
    /// Also write matching word vectors here.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
}

/// Everything that determines a run, embedded in every artifact.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<CorpusFormat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoder: Option<EncoderMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub network: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<EvalMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

impl RunConfig {
    pub fn new(command: &'static str) -> Self {
        RunConfig {
            command,
            version: env!("CARGO_PKG_VERSION"),
            ..Default::default()
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}
