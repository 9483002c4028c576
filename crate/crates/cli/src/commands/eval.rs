use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use footlift_core::io::{read_manifest, read_motion, read_observation, write_atomic, write_json};
use footlift_core::metrics::{ajae, evaluate_sequence, sample_motion, EvalReport};

use super::refine::refined_name;
use crate::{CliError, CliResult};

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Predicted motion file (single-sequence mode).
    #[arg(long, requires_all = ["gt", "observation"], conflicts_with = "data")]
    pub pred: Option<PathBuf>,
    /// Ground-truth motion file.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Observation file supplying the camera and person boxes.
    #[arg(long)]
    pub observation: Option<PathBuf>,
    /// Synth directory: evaluate every sequence in its manifest.
    #[arg(long, requires = "pred_dir")]
    pub data: Option<PathBuf>,
    /// Directory of `<name>.refined.json` predictions for `--data`. Use
    /// `--initial` to score the unrefined estimates instead.
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    /// With `--data`, score the initial estimates rather than `--pred-dir`.
    #[arg(long)]
    pub initial: bool,
    /// Output prefix: writes `<out>.json`, `<out>.csv` and `<out>.frames.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

pub const FRAMES_CSV_HEADER: &str = "name,frame,ajae_deg";

struct Item {
    name: String,
    pred: PathBuf,
    gt: PathBuf,
    obs: PathBuf,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(args: &EvalArgs) -> CliResult<EvalReport> {
    let items = match (&args.data, &args.pred) {
        (Some(dir), _) => {
            let m = read_manifest(dir)?;
            let pred_dir = args.pred_dir.as_ref().expect("clap enforces --pred-dir");
            m.sequences
                .iter()
                .map(|e| Item {
                    name: e.name.clone(),
                    pred: if args.initial { dir.join(&e.initial) } else { pred_dir.join(refined_name(&e.name)) },
                    gt: dir.join(&e.motion),
                    obs: dir.join(&e.observation),
                })
                .collect()
        }
        (None, Some(pred)) => vec![Item {
            name: pred.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "pred".into()),
            pred: pred.clone(),
            gt: args.gt.clone().expect("clap"),
            obs: args.observation.clone().expect("clap"),
        }],
        (None, None) => return Err(CliError::Usage("give --pred/--gt/--observation or --data/--pred-dir".into())),
    };

    let mut metrics = Vec::with_capacity(items.len());
    let mut frames = String::from(FRAMES_CSV_HEADER);
    frames.push('\n');
    for it in &items {
        let pred = read_motion(&it.pred)?;
        let gt = read_motion(&it.gt)?;
        let obs = read_observation(&it.obs)?;
        if pred.skeleton != gt.skeleton {
            return Err(CliError::Data(format!(
                "{} and {} use different skeletons",
                it.pred.display(),
                it.gt.display()
            )));
        }
        let m = evaluate_sequence(&it.name, &pred.sequence, &gt.sequence, &obs, &gt.skeleton)
            .map_err(|e| CliError::Data(format!("{}: {e}", it.name)))?;
        let p = sample_motion(&pred.sequence, &pred.skeleton, &obs.camera)?;
        let g = sample_motion(&gt.sequence, &gt.skeleton, &obs.camera)?;
        for t in 0..p.ankles.len() {
            let a = ajae(&p.ankles[t..t + 1], &g.ankles[t..t + 1])?;
            let _ = writeln!(frames, "{},{t},{a}", it.name);
        }
        metrics.push(m);
    }
    let report = EvalReport::new(metrics)?;
    write_json(&with_suffix(&args.out, ".json"), &report)?;
    write_atomic(&with_suffix(&args.out, ".csv"), report.to_csv().as_bytes())?;
    write_atomic(&with_suffix(&args.out, ".frames.csv"), frames.as_bytes())?;
    let a = &report.aggregate;
    println!(
        "AJAE {:.3}°  N-MPJPE_F {:.3} mm  PCK_F {:.4}  N-FKE_2d {:.5}  Accel_F {:.4}  ({} sequences, {} frames)",
        a.ajae_deg, a.n_mpjpe_f_mm, a.pck_f, a.n_fke_2d, a.accel_f, report.sequences.len(), a.frames
    );
    Ok(report)
}
