//! The `footlift` command line: argument parsing, configuration assembly
//! and one module per subcommand. Commands take plain option structs so
//! they can be driven from tests as well as from `main`.

pub mod commands;
pub mod error;
pub mod plot;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use footlift_core::config::{Preset, RunConfig};
use footlift_core::io::{read_bytes, read_skeleton};
use footlift_core::kinematics::Skeleton;

pub use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "footlift", version, about = "Refine ankle rotations from 2D foot keypoints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate motion, observation and initial-estimate files plus a manifest.
    Synth(commands::synth::SynthArgs),
    /// Train a refiner and write a checkpoint and a CSV log.
    Train(commands::train::TrainArgs),
    /// Refine the ankles of an initial estimate.
    Refine(commands::refine::RefineArgs),
    /// Compute the metric report for predicted motions.
    Eval(commands::eval::EvalArgs),
    /// Render a training log, report or per-frame CSV as SVG plus tidy CSV.
    Plot(plot::PlotArgs),
    /// Finite-difference check of every op and of the full model.
    Gradcheck(commands::gradcheck::GradcheckArgs),
    /// Train and evaluate the output-mode and input-joint variants.
    Ablate(commands::ablate::AblateArgs),
}

/// Configuration flags shared by every command that reads a config.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Start from a named preset (paper or toy) instead of the defaults.
    #[arg(long)]
    pub preset: Option<String>,
    /// `key = value` configuration file applied after the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Single `key=value` override, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

impl ConfigArgs {
    /// Preset, then file, then overrides, then `FOOTLIFT_SEED`.
    pub fn load(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.preset {
            Some(p) => RunConfig::preset(p.parse::<Preset>()?),
            None => RunConfig::default(),
        };
        if let Some(path) = &self.config {
            let bytes = read_bytes(path)?;
            let text = String::from_utf8(bytes)
                .map_err(|_| CliError::Usage(format!("{}: config is not UTF-8", path.display())))?;
            cfg.apply_text(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        }
        for s in &self.sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load_skeleton(cfg: &RunConfig) -> CliResult<Skeleton> {
    Ok(match &cfg.skeleton {
        Some(p) => read_skeleton(p)?,
        None => Skeleton::default(),
    })
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => commands::synth::run(&a).map(|_| ()),
        Command::Train(a) => commands::train::run(&a).map(|_| ()),
        Command::Refine(a) => commands::refine::run(&a),
        Command::Eval(a) => commands::eval::run(&a).map(|_| ()),
        Command::Plot(a) => plot::run(&a),
        Command::Gradcheck(a) => commands::gradcheck::run(&a).map(|_| ()),
        Command::Ablate(a) => commands::ablate::run(&a).map(|_| ()),
    }
}
