use std::path::{Path, PathBuf};

use clap::Args;
use footlift_core::footmr::{with_refined_ankles, FootMr};
use footlift_core::io::{read_bytes, read_manifest, read_motion, read_observation, write_motion, SkeletonRef};
use footlift_core::train::model_from_checkpoint;
use footlift_nn::Checkpoint;

use crate::{create_dir, CliError, CliResult};

#[derive(Args, Debug, Clone)]
pub struct RefineArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Observation file (single-sequence mode).
    #[arg(long, requires_all = ["initial", "out"], conflicts_with = "data")]
    pub observation: Option<PathBuf>,
    /// Initial-estimate motion file (single-sequence mode).
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Output motion file (single-sequence mode).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Synth directory: refine every sequence in its manifest.
    #[arg(long, requires = "out_dir")]
    pub data: Option<PathBuf>,
    /// Output directory for `--data`; files are named `<name>.refined.json`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn load_model(path: &Path) -> CliResult<FootMr> {
    let ckpt = Checkpoint::from_bytes(&read_bytes(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(model_from_checkpoint(&ckpt)?)
}

/// Refines one sequence: ankles from the model, every other joint and the
/// translation copied from the initial estimate.
pub fn refine_file(model: &FootMr, observation: &Path, initial: &Path, out: &Path) -> CliResult<()> {
    let obs = read_observation(observation)?;
    let init = read_motion(initial)?;
    let refined = model.refine_sequence(&obs, &init.sequence, &init.skeleton)?;
    let seq = with_refined_ankles(&init.sequence, &refined)?;
    write_motion(out, &seq, SkeletonRef::Inline(init.skeleton))?;
    Ok(())
}

pub fn refined_name(name: &str) -> String {
    format!("{name}.refined.json")
}

pub fn run(args: &RefineArgs) -> CliResult<()> {
    let model = load_model(&args.checkpoint)?;
    match (&args.data, &args.observation) {
        (Some(dir), _) => {
            let out_dir = args.out_dir.as_ref().expect("clap enforces --out-dir");
            create_dir(out_dir)?;
            let m = read_manifest(dir)?;
            for e in &m.sequences {
                refine_file(&model, &dir.join(&e.observation), &dir.join(&e.initial), &out_dir.join(refined_name(&e.name)))?;
            }
            eprintln!("refined {} sequences into {}", m.sequences.len(), out_dir.display());
            Ok(())
        }
        (None, Some(obs)) => {
            let (initial, out) = (args.initial.as_ref().expect("clap"), args.out.as_ref().expect("clap"));
            refine_file(&model, obs, initial, out)
        }
        (None, None) => Err(CliError::Usage("give --observation/--initial/--out or --data/--out-dir".into())),
    }
}
