//! Output-representation and input-joint variants, trained on one motion
//! profile and evaluated on another with estimated knees and random root
//! orientations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{FootError, Result};
use crate::footmr::{with_refined_ankles, InputJoints, RefineInput};
use crate::kinematics::Skeleton;
use crate::metrics::{evaluate_sequence, SequenceMetrics};
use crate::synth::{
    derived_rng, generate_sequence, initial_motion, make_example, profile_by_name, KneeSource,
    TrainingExample,
};
use crate::train::{initial_ajae, Dataset, Trainer};
use crate::footmr::FootMr;

const STREAM_EVAL_MOTION: u64 = 11;
const STREAM_EVAL_EXAMPLE: u64 = 12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variant {
    pub name: &'static str,
    pub output_mode: &'static str,
    pub input_joints: InputJoints,
    pub augment: bool,
}

const fn joints(ankle: bool, knee: bool, hip: bool, pelvis: bool) -> InputJoints {
    InputJoints { ankle, knee, hip, pelvis }
}

const AK: InputJoints = joints(true, true, false, false);

pub const VARIANTS: [Variant; 10] = [
    Variant { name: "relative", output_mode: "relative", input_joints: AK, augment: true },
    Variant { name: "global", output_mode: "global", input_joints: AK, augment: true },
    Variant { name: "residual_relative", output_mode: "residual_relative", input_joints: AK, augment: true },
    Variant { name: "residual_global", output_mode: "residual_global", input_joints: AK, augment: true },
    Variant { name: "residual_global_no_da", output_mode: "residual_global", input_joints: AK, augment: false },
    // Without any rotation input there is nothing to add a residual to.
    Variant { name: "inputs_none", output_mode: "global", input_joints: joints(false, false, false, false), augment: true },
    Variant { name: "inputs_ankle", output_mode: "residual_global", input_joints: joints(true, false, false, false), augment: true },
    Variant { name: "inputs_ankle_knee", output_mode: "residual_global", input_joints: AK, augment: true },
    Variant { name: "inputs_ankle_knee_hip", output_mode: "residual_global", input_joints: joints(true, true, true, false), augment: true },
    Variant { name: "inputs_all", output_mode: "residual_global", input_joints: joints(true, true, true, true), augment: true },
];

pub const OUTPUT_VARIANTS: [&str; 5] =
    ["relative", "global", "residual_relative", "residual_global", "residual_global_no_da"];
pub const INPUT_VARIANTS: [&str; 5] =
    ["inputs_none", "inputs_ankle", "inputs_ankle_knee", "inputs_ankle_knee_hip", "inputs_all"];

pub fn variant(name: &str) -> Result<&'static Variant> {
    VARIANTS.iter().find(|v| v.name == name).ok_or_else(|| {
        let known: Vec<&str> = VARIANTS.iter().map(|v| v.name).collect();
        FootError::InvalidConfig(format!("unknown ablation variant {name:?} (known: {})", known.join(", ")))
    })
}

/// Held-out examples: `eval_profile` motions, random root orientation,
/// estimated knees.
pub fn eval_set(cfg: &RunConfig, skeleton: &Skeleton, seed: u64) -> Result<Vec<TrainingExample>> {
    let profile = profile_by_name(&cfg.eval_profile)?;
    let t = &cfg.train;
    (0..cfg.eval_sequences)
        .map(|i| {
            let seq = generate_sequence(profile.as_ref(), t.seq_len, t.fps, &mut derived_rng(seed, i as u64, STREAM_EVAL_MOTION))?;
            let mut rng = derived_rng(seed, i as u64, STREAM_EVAL_EXAMPLE);
            make_example(&seq, skeleton, &t.camera, &t.noise, true, KneeSource::Estimated, &mut rng)
        })
        .collect()
}

/// Metrics of the refined motion on one held-out example.
pub fn evaluate_example(model: &FootMr, example: &TrainingExample, skeleton: &Skeleton, name: &str) -> Result<SequenceMetrics> {
    let input = RefineInput::build(&example.observation, &example.input_globals, &model.config.input_joints)?;
    let knees: Vec<_> = (0..example.len()).map(|t| example.input_knees(t)).collect();
    let refined = model.refine(&input, &example.init_global_ankle, &knees)?;
    let initial = initial_motion(example, skeleton)?;
    let pred = with_refined_ankles(&initial, &refined)?;
    evaluate_sequence(name, &pred, &example.gt_sequence, &example.observation, skeleton)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub output_mode: String,
    pub input_joints: String,
    pub augment: bool,
    pub steps: u64,
    pub final_loss: f64,
    pub initial_ajae_deg: f64,
    pub ajae_deg: f64,
    pub n_mpjpe_f_mm: f64,
    pub pck_f: f64,
    pub n_fke_2d: f64,
    pub accel_f: f64,
}

/// Trains `variant` with `seed` under `cfg` and evaluates it on the
/// held-out set.
pub fn run_variant(cfg: &RunConfig, skeleton: &Skeleton, v: &Variant, seed: u64, eval: &[TrainingExample]) -> Result<AblationRow> {
    let mut model_cfg = cfg.model.clone();
    model_cfg.output_mode = v.output_mode.to_string();
    model_cfg.input_joints = v.input_joints;
    let mut train_cfg = cfg.train.clone();
    train_cfg.augment = v.augment;
    train_cfg.seed = seed;
    train_cfg.noise.seed = seed;
    let data = Dataset::synthetic(&train_cfg, skeleton.clone())?;
    let mut trainer = Trainer::new(model_cfg, train_cfg)?;
    trainer.fit(&data, |_| {})?;
    let final_loss = trainer.logs.last().map(|l| l.loss.total).unwrap_or(f64::NAN);

    let mut metrics = Vec::with_capacity(eval.len());
    let mut init = 0.0;
    for (i, ex) in eval.iter().enumerate() {
        metrics.push(evaluate_example(&trainer.model, ex, skeleton, &format!("eval{i}"))?);
        init += initial_ajae(ex)?;
    }
    let report = crate::metrics::EvalReport::new(metrics)?;
    let a = &report.aggregate;
    Ok(AblationRow {
        variant: v.name.to_string(),
        seed,
        output_mode: v.output_mode.to_string(),
        input_joints: v.input_joints.to_string(),
        augment: v.augment,
        steps: trainer.steps(),
        final_loss,
        initial_ajae_deg: init / eval.len().max(1) as f64,
        ajae_deg: a.ajae_deg,
        n_mpjpe_f_mm: a.n_mpjpe_f_mm,
        pck_f: a.pck_f,
        n_fke_2d: a.n_fke_2d,
        accel_f: a.accel_f,
    })
}

/// Runs every variant for every seed. The held-out set depends only on the
/// seed, so all variants of a seed see the same evaluation data.
pub fn run_ablation(
    cfg: &RunConfig,
    skeleton: &Skeleton,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let variants: Vec<&Variant> = cfg.ablate_variants.iter().map(|n| variant(n)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &seed in &cfg.ablate_seeds {
        let eval = eval_set(cfg, skeleton, seed)?;
        for v in &variants {
            let row = run_variant(cfg, skeleton, v, seed, &eval)?;
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Per-seed comparison of two variants' held-out AJAE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seed: u64,
    pub a: String,
    pub b: String,
    pub a_ajae_deg: f64,
    pub b_ajae_deg: f64,
    /// `b − a`; positive when `a` is better.
    pub margin_deg: f64,
}

pub fn compare(rows: &[AblationRow], a: &str, b: &str) -> Vec<Comparison> {
    let mut out = Vec::new();
    for ra in rows.iter().filter(|r| r.variant == a) {
        if let Some(rb) = rows.iter().find(|r| r.variant == b && r.seed == ra.seed) {
            out.push(Comparison {
                seed: ra.seed,
                a: a.to_string(),
                b: b.to_string(),
                a_ajae_deg: ra.ajae_deg,
                b_ajae_deg: rb.ajae_deg,
                margin_deg: rb.ajae_deg - ra.ajae_deg,
            });
        }
    }
    out
}

pub const ABLATION_CSV_HEADER: &str = "variant,seed,output_mode,input_joints,augment,steps,final_loss,initial_ajae_deg,ajae_deg,n_mpjpe_f_mm,pck_f,n_fke_2d,accel_f";

/// One row per (variant, seed), then a `# compare` block with per-seed
/// margins of residual_global over residual_relative when both ran.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(ABLATION_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.variant,
            r.seed,
            r.output_mode,
            r.input_joints.replace(',', "+"),
            r.augment,
            r.steps,
            r.final_loss,
            r.initial_ajae_deg,
            r.ajae_deg,
            r.n_mpjpe_f_mm,
            r.pck_f,
            r.n_fke_2d,
            r.accel_f
        );
    }
    let cmp = compare(rows, "residual_global", "residual_relative");
    if !cmp.is_empty() {
        out.push_str("# compare,seed,a,b,a_ajae_deg,b_ajae_deg,margin_deg\n");
        for c in &cmp {
            let _ = writeln!(out, "# compare,{},{},{},{},{},{}", c.seed, c.a, c.b, c.a_ajae_deg, c.b_ajae_deg, c.margin_deg);
        }
        let wins = cmp.iter().filter(|c| c.margin_deg > 0.0).count();
        let _ = writeln!(out, "# wins,{},{},{}/{}", cmp[0].a, cmp[0].b, wins, cmp.len());
    }
    out
}
