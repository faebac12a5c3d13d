use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tabal_core::acquisition::{AcquisitionKind, TableOrder};

#[derive(Debug, Parser)]
#[command(name = "tabal", version, about = "Active learning for entity tagging inside table cells")]
pub struct Cli {
    /// JSON file with `generator`, `experiment` and `serve` sections. Flags
    /// override it.
    #[arg(long, global = true, env = "TABAL_CONFIG")]
    pub config: Option<PathBuf>,

    /// Directory that receives every output.
    #[arg(long, global = true, env = "TABAL_OUT", default_value = "out")]
    pub out: PathBuf,

    /// Root seed: the generator seed for `gen`, the experiment seed otherwise.
    #[arg(long, global = true, env = "TABAL_SEED")]
    pub seed: Option<u64>,

    /// Worker threads for `simulate`.
    #[arg(long, global = true, env = "TABAL_JOBS")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic training pool and test set with gold labels.
    Gen(GenArgs),
    /// Run every acquisition function under every repeat with a simulated oracle.
    Simulate(SimulateArgs),
    /// Train on the whole labeled pool for the ceiling line.
    TrainFull(TrainFullArgs),
    /// Render a curves CSV to a markdown summary and SVG plots.
    Report(ReportArgs),
    /// Start the annotation service.
    Serve(ServeArgs),
}

fn fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not a fraction in [0, 1]"))
    }
}

fn acquisition(s: &str) -> Result<AcquisitionKind, String> {
    s.parse().map_err(|e: tabal_core::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Tables in the training pool.
    #[arg(long, env = "TABAL_TABLES")]
    pub tables: Option<usize>,

    /// Tables in the test set.
    #[arg(long, env = "TABAL_TEST_TABLES", default_value_t = 24)]
    pub test_tables: usize,

    /// Target share of cells without any entity.
    #[arg(long, env = "TABAL_O_FRACTION", value_parser = fraction)]
    pub o_fraction: Option<f64>,

    /// Probability of a spelling variant per generated token.
    #[arg(long, env = "TABAL_NOISE", value_parser = fraction)]
    pub noise: Option<f64>,

    /// Directory with word pool files replacing the built-in ones.
    #[arg(long, env = "TABAL_POOLS")]
    pub pools: Option<PathBuf>,
}

/// Flags shared by commands that train on a corpus.
#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Training pool JSONL; defaults to `<out>/train.jsonl`.
    #[arg(long, env = "TABAL_TRAIN")]
    pub train: Option<PathBuf>,

    /// Test set JSONL; defaults to `<out>/test.jsonl`.
    #[arg(long, env = "TABAL_TEST")]
    pub test: Option<PathBuf>,

    /// Independent repeats, each with its own seeds
    #[arg(long, env = "TABAL_REPEATS")]
    pub repeats: Option<usize>,

    /// Epoch cap per training run
    #[arg(long, env = "TABAL_MAX_EPOCHS")]
    pub max_epochs: Option<usize>,

    /// Probability of replacing a training token with the unknown token
    #[arg(long, env = "TABAL_WORD_DROPOUT", value_parser = fraction)]
    pub word_dropout: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OrderArg {
    BestScore,
    Corpus,
}

impl From<OrderArg> for TableOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::BestScore => TableOrder::BestScore,
            OrderArg::Corpus => TableOrder::Corpus,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,

    /// Comma-separated acquisition functions.
    #[arg(long, env = "TABAL_ACQUISITIONS", value_delimiter = ',', value_parser = acquisition)]
    pub acquisitions: Option<Vec<AcquisitionKind>>,

    /// Labeled cells before the first acquisition
    #[arg(long, env = "TABAL_SEED_SIZE")]
    pub seed_size: Option<usize>,

    /// Cells acquired per iteration.
    #[arg(long, env = "TABAL_BATCH")]
    pub batch: Option<usize>,

    /// Acquisition rounds after the seed
    #[arg(long, env = "TABAL_ITERATIONS")]
    pub iterations: Option<usize>,

    /// Table order of the MNLP+ round robin.
    #[arg(long, env = "TABAL_MNLP_PLUS_ORDER", value_enum)]
    pub mnlp_plus_order: Option<OrderArg>,
}

#[derive(Debug, Args)]
pub struct TrainFullArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Curves CSV; defaults to `<out>/curves.csv`.
    #[arg(long, env = "TABAL_CURVES")]
    pub curves: Option<PathBuf>,

    /// Ceiling JSON from `train-full`; `<out>/ceiling.json` is used when present.
    #[arg(long, env = "TABAL_CEILING")]
    pub ceiling: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address [default: 127.0.0.1:8080]
    #[arg(long, env = "TABAL_BIND")]
    pub bind: Option<SocketAddr>,

    /// Session storage; defaults to `<out>/sessions`.
    #[arg(long, env = "TABAL_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
}
