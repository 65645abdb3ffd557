//! Command-line front end for the av2t segmentation pipeline.

pub mod ablate;
pub mod args;
pub mod commands;

use std::ffi::OsString;

use anyhow::Result;
use av2t_core::Error;
use clap::Parser;

pub use args::{Cli, Command, CommonArgs};

/// Exit status for a failed run: 2 for missing inputs or backend assets, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::MissingInput(_) | Error::BackendUnavailable { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

pub fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let cfg = commands::resolve_config(common)?;
    match &cli.command {
        Command::Ingest {
            root,
            subset,
            split,
            out_dir,
            sample_rate,
        } => commands::ingest(
            &cfg,
            root,
            *subset,
            *split,
            out_dir.as_deref(),
            *sample_rate,
        ),
        Command::Synth {
            root,
            subset,
            split,
            clips,
            frames,
            height,
            width,
            sample_rate,
        } => commands::synth(
            &cfg,
            root,
            *subset,
            *split,
            *clips,
            *frames,
            *height,
            *width,
            *sample_rate,
        ),
        Command::Train { data, out_dir } => commands::train_cmd(&cfg, data, out_dir),
        Command::Infer {
            checkpoint,
            input,
            out_dir,
            overlay,
        } => commands::infer_cmd(common, &cfg, checkpoint, input, out_dir, *overlay),
        Command::Eval {
            checkpoint,
            data,
            out_dir,
        } => commands::eval_cmd(common, &cfg, checkpoint, data, out_dir),
        Command::Ablate {
            train_data,
            eval_data,
            out_dir,
            train_all,
            checkpoints,
            sources,
            adapters,
        } => {
            std::fs::create_dir_all(out_dir)?;
            let args = ablate::AblateArgs {
                train_data: train_data.as_deref(),
                eval_data,
                out_dir,
                train_all: *train_all,
                checkpoints: checkpoints.as_deref(),
                sources,
                adapters: *adapters,
            };
            ablate::run(common, &cfg, &args).map(|_| ())
        }
    }
}

/// Parses `args` (including the program name), runs, and returns the exit status.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
