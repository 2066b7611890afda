mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use covgen::model::Mode;
use covgen::synthetic::SyntheticKind;

#[derive(Parser, Debug)]
#[command(name = "covgen", version, about = "Pointer-generator summarization with coverage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration sources shared by model-facing subcommands. Later sources
/// win: config file, then `--set`, then typed flags.
#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// JSON file of dotted keys, e.g. {"model.hidden_dim": 64}.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. --set train.learning_rate=0.5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: covgen::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<SyntheticKind, String> {
    s.parse().map_err(|e: covgen::Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model (or fine-tune a pointer checkpoint with coverage).
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        /// Start from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        init_checkpoint: Option<PathBuf>,
        /// Optimizer steps to run.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Beam-decode a corpus to JSONL.
    Decode {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        beam_size: Option<usize>,
    },
    /// Write per-step attention, p_gen and coverage dumps as JSONL.
    Inspect {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Only the first N examples.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Score decoded output: ROUGE, lead-3, repetition, novelty, p_gen.
    Evaluate {
        /// JSONL written by `decode`.
        #[arg(long)]
        decoded: PathBuf,
        /// JSONL written by `inspect`, for p_gen statistics.
        #[arg(long)]
        inspect: Option<PathBuf>,
        /// Report JSON path.
        #[arg(long)]
        out: PathBuf,
        /// Directory for the repetition and novelty CSVs.
        #[arg(long)]
        plot_dir: Option<PathBuf>,
        /// Use one LCS over whole summaries for ROUGE-L.
        #[arg(long)]
        plain_lcs: bool,
    },
    /// Print the parameter count and its breakdown.
    CountParams {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        json: bool,
    },
    /// Finite-difference check of the loss gradient at tiny dimensions.
    Gradcheck {
        #[arg(long, value_parser = parse_mode, default_value = "coverage")]
        mode: Mode,
        #[arg(long, default_value_t = 4)]
        hidden_dim: usize,
        #[arg(long, default_value_t = 3)]
        emb_dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
    },
    /// Generate a synthetic JSONL corpus.
    GenSynthetic {
        #[arg(long, value_parser = parse_kind)]
        kind: SyntheticKind,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Distinct in-vocabulary content words.
        #[arg(long, default_value_t = 40)]
        vocab_size: usize,
        #[arg(long, default_value_t = 0.0)]
        oov_rate: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the generator's exact vocabulary here.
        #[arg(long)]
        vocab_out: Option<PathBuf>,
    },
    /// Build a vocabulary file from JSONL corpora.
    BuildVocab {
        #[arg(long, required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        /// Maximum size including the four reserved ids.
        #[arg(long, default_value_t = 50_000)]
        cap: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("COVGEN_THREADS") {
        let n: usize = v.parse().map_err(|_| anyhow::anyhow!("COVGEN_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("COVGEN_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match init_threads().and_then(|_| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = matches!(e.downcast_ref::<covgen::Error>(), Some(covgen::Error::Config(_)));
            ExitCode::from(if usage { 1 } else { 2 })
        }
    }
}
