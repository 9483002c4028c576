use std::path::{Path, PathBuf};

use clap::Args;
use footlift_core::io::{read_bytes, read_manifest, read_motion, write_atomic};
use footlift_core::kinematics::MotionSequence;
use footlift_core::train::{logs_to_csv, Dataset, EpochLog, Trainer, TrainConfig, LOG_CSV_HEADER};
use footlift_nn::Checkpoint;

use crate::{create_dir, load_skeleton, CliError, CliResult, ConfigArgs};

pub const CHECKPOINT_NAME: &str = "checkpoint.ckpt";
pub const LOG_NAME: &str = "log.csv";
pub const CONFIG_NAME: &str = "config.txt";

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory for the checkpoint, log and resolved config.
    #[arg(long)]
    pub out: PathBuf,
    /// Train on the ground-truth motions of a synth directory instead of
    /// generating them.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Continue from a checkpoint; epoch numbering carries on.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Do not print per-epoch progress.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub epochs: usize,
    pub steps: u64,
    pub skipped: usize,
    pub final_loss: f64,
    pub logs: Vec<EpochLog>,
}

fn manifest_motions(dir: &Path) -> CliResult<Vec<MotionSequence>> {
    let m = read_manifest(dir)?;
    m.sequences.iter().map(|e| Ok(read_motion(&dir.join(&e.motion))?.sequence)).collect()
}

/// Log rows of an earlier run up to `epoch`, so a resumed run extends it.
fn previous_rows(path: &Path, epoch: usize) -> Vec<String> {
    let Ok(bytes) = std::fs::read(path) else { return Vec::new() };
    let text = String::from_utf8_lossy(&bytes);
    text.lines()
        .skip(1)
        .filter(|l| l.split(',').next().and_then(|e| e.parse::<usize>().ok()).is_some_and(|e| e <= epoch))
        .map(str::to_string)
        .collect()
}

fn write_log(path: &Path, earlier: &[String], logs: &[EpochLog]) -> CliResult<()> {
    let mut text = String::from(LOG_CSV_HEADER);
    text.push('\n');
    for r in earlier {
        text.push_str(r);
        text.push('\n');
    }
    text.push_str(logs_to_csv(logs).split_once('\n').map(|x| x.1).unwrap_or(""));
    Ok(write_atomic(path, text.as_bytes())?)
}

pub fn run(args: &TrainArgs) -> CliResult<TrainSummary> {
    let cfg = args.config.load()?;
    let skeleton = load_skeleton(&cfg)?;
    create_dir(&args.out)?;
    write_atomic(&args.out.join(CONFIG_NAME), cfg.to_text().as_bytes())?;

    let data = match &args.data {
        Some(dir) => {
            let train = manifest_motions(dir)?;
            let val_cfg = TrainConfig { num_sequences: 1, ..cfg.train.clone() };
            let val = Dataset::synthetic(&val_cfg, skeleton.clone())?.val;
            Dataset::from_motions(&cfg.train, skeleton, train, val)
        }
        None => Dataset::synthetic(&cfg.train, skeleton)?,
    };
    let mut trainer = match &args.resume {
        Some(p) => {
            let ckpt = Checkpoint::from_bytes(&read_bytes(p)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            let t = Trainer::from_checkpoint(&ckpt, cfg.train.clone())?;
            if t.model.config != cfg.model {
                eprintln!("note: model architecture taken from the checkpoint");
            }
            t
        }
        None => Trainer::new(cfg.model.clone(), cfg.train.clone())?,
    };
    let log_path = args.out.join(LOG_NAME);
    let earlier = if args.resume.is_some() { previous_rows(&log_path, trainer.epoch) } else { Vec::new() };
    let ckpt_path = args.out.join(CHECKPOINT_NAME);

    while trainer.epoch < trainer.config.epochs {
        if trainer.config.max_steps > 0 && trainer.steps() >= trainer.config.max_steps as u64 {
            break;
        }
        let log = trainer.run_epoch(&data)?;
        if !args.quiet {
            eprintln!(
                "epoch {:>4}  lr {:.2e}  loss {:.5}  train AJAE {:.2}°  val AJAE {:.2}°  skipped {}",
                log.epoch, log.lr, log.loss.total, log.train_ajae_deg, log.val_ajae_deg, log.skipped
            );
        }
        write_atomic(&ckpt_path, &trainer.to_checkpoint().to_bytes())?;
        write_log(&log_path, &earlier, &trainer.logs)?;
        if !log.loss.total.is_finite() {
            return Err(CliError::Numeric(format!("loss is {} at epoch {}", log.loss.total, log.epoch)));
        }
    }
    write_atomic(&ckpt_path, &trainer.to_checkpoint().to_bytes())?;
    write_log(&log_path, &earlier, &trainer.logs)?;
    if trainer.skipped > 0 {
        eprintln!("skipped {} degenerate examples", trainer.skipped);
    }
    let final_loss = trainer.logs.last().map(|l| l.loss.total).unwrap_or(f64::NAN);
    Ok(TrainSummary {
        epochs: trainer.epoch,
        steps: trainer.steps(),
        skipped: trainer.skipped,
        final_loss,
        logs: trainer.logs,
    })
}
