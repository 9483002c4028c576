use clap::Args;
use footlift_core::diagnostics::model_gradcheck;
use footlift_core::footmr::{InputJoints, ModelConfig, OUTPUT_MODES};
use footlift_nn::op_gradcheck_suite;

use crate::{CliError, CliResult};

pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Args, Debug, Clone)]
pub struct GradcheckArgs {
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Sequence length for the full-model check.
    #[arg(long, default_value_t = 8)]
    pub len: usize,
    /// Skip the per-op suite.
    #[arg(long)]
    pub model_only: bool,
}

#[derive(Clone, Debug)]
pub struct GradcheckLine {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
}

/// The small configuration used for the full-model check.
pub fn tiny_model(mode: &str) -> ModelConfig {
    ModelConfig { d_h: 16, layers: 2, heads: 2, window: 3, output_mode: mode.into(), input_joints: InputJoints::default() }
}

/// Runs every check and fails with a numeric error if any exceeds the
/// tolerance.
pub fn run(args: &GradcheckArgs) -> CliResult<Vec<GradcheckLine>> {
    if !(args.eps > 0.0) || args.len < 2 {
        return Err(CliError::Usage("--eps must be positive and --len at least 2".into()));
    }
    let mut lines = Vec::new();
    if !args.model_only {
        for c in op_gradcheck_suite(args.eps)? {
            lines.push(GradcheckLine { name: format!("op {}", c.name), max_rel_err: c.max_rel_err, checked: c.checked });
        }
    }
    for mode in OUTPUT_MODES {
        let r = model_gradcheck(&tiny_model(mode), args.len, args.eps, 7)?;
        lines.push(GradcheckLine { name: format!("model {mode}"), max_rel_err: r.max_rel_err, checked: r.checked });
    }
    let mut worst: f64 = 0.0;
    for l in &lines {
        let ok = l.max_rel_err < GRAD_TOLERANCE;
        println!("{:<28} {:>10.3e}  {:>6} coords  {}", l.name, l.max_rel_err, l.checked, if ok { "ok" } else { "FAIL" });
        worst = worst.max(l.max_rel_err);
    }
    if !(worst < GRAD_TOLERANCE) {
        return Err(CliError::Numeric(format!("max relative error {worst:.3e} exceeds {GRAD_TOLERANCE:e}")));
    }
    Ok(lines)
}
