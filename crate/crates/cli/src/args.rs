use std::path::PathBuf;

use av2t_core::{PromptSource, Split, Subset};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "av2t",
    version,
    about = "Audio-visual segmentation runs: ingest, synth, train, infer, eval, ablate"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Stub,
    Pretrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdapterArms {
    Both,
    On,
    Off,
}

/// Options shared by every command; they override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML config layered over the built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key (dotted path), e.g. `--set train.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, global = true)]
    pub backend: Option<BackendArg>,
    /// fused, clip-only or clap-only.
    #[arg(long, global = true)]
    pub prompt_source: Option<PromptSource>,
    #[arg(long, value_enum, global = true)]
    pub adapter: Option<Toggle>,
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub beta2: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan a dataset split and write its manifest.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        subset: Subset,
        #[arg(long)]
        split: Split,
        /// Where to write `manifest.json` (default: the split directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        sample_rate: Option<u32>,
    },
    /// Generate a synthetic split of shapes and tones.
    Synth {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        subset: Subset,
        #[arg(long)]
        split: Split,
        #[arg(long, default_value_t = 4)]
        clips: usize,
        #[arg(long, default_value_t = 5)]
        frames: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long)]
        sample_rate: Option<u32>,
    },
    /// Train the prompt path, adapters and decoder head.
    Train {
        /// Manifest file or split directory; repeatable.
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write bilevel masks (and optional overlays) for a clip folder or dataset.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Clip folder, manifest file or split directory.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        overlay: bool,
    },
    /// Score a checkpoint on an annotated split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Prompt-source × adapter grid.
    Ablate {
        #[arg(long)]
        train_data: Option<PathBuf>,
        #[arg(long)]
        eval_data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Train every arm instead of reading existing checkpoints.
        #[arg(long)]
        train_all: bool,
        /// Directory holding `<arm>/model.av2t` (default: `<out-dir>/arms`).
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Prompt sources to run (default: all three).
        #[arg(long, value_delimiter = ',')]
        sources: Vec<PromptSource>,
        #[arg(long, value_enum, default_value_t = AdapterArms::Both)]
        adapters: AdapterArms,
    },
}
