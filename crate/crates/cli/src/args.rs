use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use erc_core::corpus::{Emotion, Taxonomy};
use erc_core::embedding::{EncodingSpec, PoolingKind};
use erc_core::lexicon::FusionSpec;
use erc_core::nn::Precision;
use erc_core::sweep::AblationDimension;

#[derive(Debug, Parser)]
#[command(
    name = "erc-lab",
    version,
    about = "Context-length and pooling experiments for emotion recognition in conversation"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a corpus (and optionally an embedding file) for consistency.
    ValidateCorpus(ValidateArgs),
    /// Dialogue-length and sentence-count distributions.
    CorpusStats(CorpusStatsArgs),
    /// One training run.
    Train(TrainArgs),
    /// Multi-seed sweep over context lengths K.
    Sweep(SweepArgs),
    /// Multi-seed comparison of pooling, layer mode, fusion or encoding variants.
    Ablate(AblateArgs),
    /// Discourse-marker positions and their association with emotion.
    DmAnalyze(DmArgs),
    /// Statistical routines.
    Stats {
        #[command(subcommand)]
        command: StatsCommand,
    },
    /// Finite-difference check of the MLP and LSTM gradients.
    Gradcheck(GradcheckArgs),
    /// Markdown summary tables from one or more sweep directories.
    Report(ReportArgs),
    /// Write a synthetic corpus and embedding file.
    Synth(SynthArgs),
}

#[derive(Debug, Subcommand)]
pub enum StatsCommand {
    /// Run the fixture suite for every test.
    Selftest,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Also check that every utterance and sentence has an embedding record.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value = "4way")]
    pub taxonomy: Taxonomy,
}

#[derive(Debug, Args)]
pub struct CorpusStatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory for the CSV/JSON tables; printed only when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Corpus JSONL, one dialogue per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// EMB1 token-embedding file.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// SenticNet-style lexicon TSV (needed for concat / blend fusion).
    #[arg(long)]
    pub sentic: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    pub train_sessions: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub val_sessions: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "5")]
    pub test_sessions: Vec<u32>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

/// Model settings. Each flag overrides the `--config` file, which in turn
/// overrides the built-in defaults.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// JSON training config (a bare config or a run's `config.json`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<Taxonomy>,
    /// flat, hier, hier:mean or hier:wmean_pos.
    #[arg(long)]
    pub encoding: Option<EncodingSpec>,
    /// mean, wmean_pos or wmean_pos_rev.
    #[arg(long)]
    pub pooling: Option<PoolingKind>,
    /// none, concat or blend:<alpha>.
    #[arg(long)]
    pub fusion: Option<FusionSpec>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Early-stopping patience in epochs (default 60 for K = 0, else 20).
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
    /// Clip the batch gradient to this global L2 norm.
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// L2-normalize utterance vectors.
    #[arg(long)]
    pub normalize: bool,
    /// Match multi-word lexicon concepts.
    #[arg(long)]
    pub multi_word_affect: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// default, full, a comma list or an inclusive range a..b.
    #[arg(long, default_value = "default")]
    pub grid: String,
    /// Comma list or inclusive range.
    #[arg(long, default_value = "42..51")]
    pub seeds: String,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Do not read or write the run cache.
    #[arg(long)]
    pub no_cache: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub dimension: AblationDimension,
    /// Comma list of variants; the first is the baseline. For layer_mode
    /// each entry is name=path to an EMB1 file.
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value = "42..51")]
    pub seeds: String,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub no_cache: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DmArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "4way")]
    pub taxonomy: Taxonomy,
    /// marker<TAB>category file replacing the built-in inventory.
    #[arg(long)]
    pub inventory: Option<PathBuf>,
    /// Restrict the analysis to these markers.
    #[arg(long, value_delimiter = ',')]
    pub markers: Option<Vec<String>>,
    /// Drop occurrences in one-token utterances.
    #[arg(long)]
    pub exclude_single_token: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Sweep output directories.
    #[arg(long = "sweep", required = true)]
    pub sweeps: Vec<PathBuf>,
    /// Markdown file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    /// One class depends on the previous 5 turns.
    Context,
    /// Class signal on the utterance-final token.
    Positional,
    /// One marker per utterance; embeddings are not written.
    Discourse,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 200)]
    pub dialogues: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Discourse kind: utterances per emotion.
    #[arg(long, default_value_t = 125)]
    pub per_emotion: usize,
    /// Discourse kind: force this emotion's markers into medial position.
    #[arg(long)]
    pub medial: Option<Emotion>,
    #[arg(long)]
    pub out: PathBuf,
}
