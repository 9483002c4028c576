//! Full-model gradient check used by the `gradcheck` command and the
//! acceptance suite.

use footlift_nn::{grad_check_with_floor, GradCheckReport};
use rand_distr::{Distribution, StandardNormal};

use crate::camera::CameraIntrinsics;
use crate::error::Result;
use crate::footmr::{output_strategy, FootMr, ModelConfig, RefineInput};
use crate::kinematics::Skeleton;
use crate::losses::{LossContext, LossWeights};
use crate::rotmath::{Rot6D, RotMat};
use crate::synth::{derived_rng, generate_sequence, make_training_example, profile_by_name, NoiseConfig};
use crate::train::example_gradient;

/// Denominator floor for the full-model check. The total loss is of order
/// 10–100, so at ε = 1e-5 roundoff alone puts a few 1e-9 of noise on each
/// difference quotient; a relative comparison below this floor would
/// measure that noise rather than the backward pass.
pub const MODEL_GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Checks backprop of the total loss through `config` on an `len`-frame
/// synthetic example. Every parameter is redrawn from N(0, 0.2²) so no
/// path is switched off by zero initialization; direct modes keep an
/// identity bias on the head so their 6D output stays well conditioned.
pub fn model_gradcheck(config: &ModelConfig, len: usize, eps: f64, seed: u64) -> Result<GradCheckReport> {
    let skeleton = Skeleton::default();
    let weights = LossWeights::default();
    let mut model = FootMr::new(config.clone(), seed)?;
    let mut rng = derived_rng(seed, 0, 0x6763);
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        for v in model.store.get_mut(id).values_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = 0.2 * g;
        }
    }
    let strategy = output_strategy(&config.output_mode)?;
    let id = RotMat::identity();
    if strategy.base(&id, &id).is_none() {
        let b = model.store.id("head.fc2.bias")?;
        for (k, v) in model.store.get_mut(b).values_mut().iter_mut().enumerate() {
            *v += Rot6D::IDENTITY.0[k % 6];
        }
    }
    let profile = profile_by_name("everyday")?;
    let seq = generate_sequence(profile.as_ref(), len, 30.0, &mut derived_rng(seed, 1, 0x6763))?;
    let example = make_training_example(
        &seq,
        &skeleton,
        &CameraIntrinsics::default(),
        &NoiseConfig::default(),
        true,
        &mut derived_rng(seed, 2, 0x6763),
    )?;
    let g = example_gradient(&model, &example, &skeleton, &weights)?;
    let input = RefineInput::build(&example.observation, &example.input_globals, &config.input_joints)?;
    let ctx = LossContext::new(&example, &skeleton)?;
    let mut store = model.store.clone();
    let mut probe = FootMr::new(config.clone(), 0)?;
    let report = grad_check_with_floor(&mut store, &g.grads, eps, 1, MODEL_GRAD_CHECK_FLOOR, |ps| {
        probe.load_params(ps).expect("same layout");
        let d = probe.predict_delta(&input).expect("valid input");
        ctx.total_loss(strategy.as_ref(), &d, &weights).map(|b| b.total).unwrap_or(f64::NAN)
    });
    Ok(report)
}
