//! The refinement network: per-stream input MLPs summed into one token per
//! frame, a windowed RoPE encoder stack and a residual ankle head.

use std::fmt;
use std::str::FromStr;

use footlift_nn::{
    banded_mask, EncoderLayer, LayerNorm, Mlp, ParamStore, Tape, Tensor, Var, DEFAULT_ROPE_BASE,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::bbox_features;
use crate::error::{FootError, Result};
use crate::kinematics::{
    MotionSequence, Skeleton, ANKLES, KNEES, L_HIP, NUM_JOINTS, NUM_MARKERS, PELVIS, R_HIP,
};
use crate::rotmath::{gram_schmidt, rot6d_to_rotmat, rotmat_to_rot6d, Mat3, Rot6D, RotMat};
use crate::scalar::Real;
use crate::synth::ObservationSequence;

pub const FOOT2D_WIDTH: usize = 2 * NUM_MARKERS;
pub const BBOX_WIDTH: usize = 3;
/// Two ankles × 6D.
pub const OUTPUT_WIDTH: usize = 12;
pub const FF_MULT: usize = 4;

/// Which global joint rotations are fed to the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputJoints {
    pub ankle: bool,
    pub knee: bool,
    pub hip: bool,
    pub pelvis: bool,
}

impl Default for InputJoints {
    fn default() -> Self {
        Self {
            ankle: true,
            knee: true,
            hip: false,
            pelvis: false,
        }
    }
}

impl InputJoints {
    pub const NONE: InputJoints = InputJoints {
        ankle: false,
        knee: false,
        hip: false,
        pelvis: false,
    };

    /// Joint indices in feature order: ankles, knees, hips, pelvis.
    pub fn joints(&self) -> Vec<usize> {
        let mut out = Vec::new();
        if self.ankle {
            out.extend(ANKLES);
        }
        if self.knee {
            out.extend(KNEES);
        }
        if self.hip {
            out.extend([L_HIP, R_HIP]);
        }
        if self.pelvis {
            out.push(PELVIS);
        }
        out
    }

    pub fn width(&self) -> usize {
        6 * self.joints().len()
    }
}

impl fmt::Display for InputJoints {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.ankle, "ankle"),
            (self.knee, "knee"),
            (self.hip, "hip"),
            (self.pelvis, "pelvis"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        if names.is_empty() {
            write!(f, "none")
        } else {
            write!(f, "{}", names.join(","))
        }
    }
}

impl FromStr for InputJoints {
    type Err = FootError;

    /// Comma-separated subset of `ankle,knee,hip,pelvis`, or `none`.
    fn from_str(s: &str) -> Result<Self> {
        let mut out = InputJoints::NONE;
        let s = s.trim();
        if s == "none" || s.is_empty() {
            return Ok(out);
        }
        for part in s.split(',') {
            match part.trim() {
                "ankle" => out.ankle = true,
                "knee" => out.knee = true,
                "hip" => out.hip = true,
                "pelvis" => out.pelvis = true,
                other => {
                    return Err(FootError::InvalidConfig(format!(
                        "unknown input joint {other:?} (expected ankle, knee, hip, pelvis or none)"
                    )))
                }
            }
        }
        Ok(out)
    }
}

/// The three per-frame feature streams, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineInput {
    pub len: usize,
    pub f_foot2d: Vec<f64>,
    pub f_bbox: Vec<f64>,
    pub f_rot: Vec<f64>,
    pub rot_width: usize,
}

impl RefineInput {
    /// Box-normalized keypoints (invisible ones set to 0), box features and
    /// the selected global rotations in 6D.
    pub fn build(
        obs: &ObservationSequence,
        input_globals: &[[RotMat; NUM_JOINTS]],
        joints: &InputJoints,
    ) -> Result<Self> {
        if obs.len() != input_globals.len() {
            return Err(FootError::LengthMismatch {
                what: "observation vs rotation frames",
                left: obs.len(),
                right: input_globals.len(),
            });
        }
        let selected = joints.joints();
        let len = obs.len();
        let mut f_foot2d = Vec::with_capacity(len * FOOT2D_WIDTH);
        let mut f_bbox = Vec::with_capacity(len * BBOX_WIDTH);
        let mut f_rot = Vec::with_capacity(len * 6 * selected.len());
        for (frame, globals) in obs.frames.iter().zip(input_globals) {
            for k in &frame.keypoints {
                if k.visible() {
                    f_foot2d.extend(frame.bbox.normalize([k.u, k.v]));
                } else {
                    f_foot2d.extend([0.0, 0.0]);
                }
            }
            f_bbox.extend(bbox_features(&frame.bbox, &obs.camera));
            for &j in &selected {
                f_rot.extend(rotmat_to_rot6d(&globals[j]).0);
            }
        }
        Ok(Self {
            len,
            f_foot2d,
            f_bbox,
            f_rot,
            rot_width: 6 * selected.len(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFrame {
    Global,
    Relative,
}

/// How the network output becomes ankle rotations.
pub trait OutputStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    /// Frame in which the 6D output (base + Δ) is expressed.
    fn frame(&self) -> OutputFrame;
    /// 6D vector the output is added to, or `None` when Δ is used directly.
    fn base(&self, init_global: &RotMat, knee: &RotMat) -> Option<[f64; 6]>;
    /// Initial bias of the head's last layer for one ankle.
    fn head_bias(&self) -> [f64; 6] {
        if self.base(&RotMat::identity(), &RotMat::identity()).is_some() {
            [0.0; 6]
        } else {
            Rot6D::IDENTITY.0
        }
    }
}

pub struct Relative;
pub struct Global;
pub struct ResidualRelative;
pub struct ResidualGlobal;

impl OutputStrategy for Relative {
    fn name(&self) -> &'static str {
        "relative"
    }
    fn frame(&self) -> OutputFrame {
        OutputFrame::Relative
    }
    fn base(&self, _: &RotMat, _: &RotMat) -> Option<[f64; 6]> {
        None
    }
}

impl OutputStrategy for Global {
    fn name(&self) -> &'static str {
        "global"
    }
    fn frame(&self) -> OutputFrame {
        OutputFrame::Global
    }
    fn base(&self, _: &RotMat, _: &RotMat) -> Option<[f64; 6]> {
        None
    }
}

impl OutputStrategy for ResidualRelative {
    fn name(&self) -> &'static str {
        "residual_relative"
    }
    fn frame(&self) -> OutputFrame {
        OutputFrame::Relative
    }
    fn base(&self, init_global: &RotMat, knee: &RotMat) -> Option<[f64; 6]> {
        let rel = crate::kinematics::global_to_relative(init_global, knee);
        Some(rotmat_to_rot6d(&rel).0)
    }
}

impl OutputStrategy for ResidualGlobal {
    fn name(&self) -> &'static str {
        "residual_global"
    }
    fn frame(&self) -> OutputFrame {
        OutputFrame::Global
    }
    fn base(&self, init_global: &RotMat, _: &RotMat) -> Option<[f64; 6]> {
        Some(rotmat_to_rot6d(init_global).0)
    }
}

pub const OUTPUT_MODES: [&str; 4] = ["relative", "global", "residual_relative", "residual_global"];

pub fn output_strategy(name: &str) -> Result<Box<dyn OutputStrategy>> {
    match name {
        "relative" => Ok(Box::new(Relative)),
        "global" => Ok(Box::new(Global)),
        "residual_relative" => Ok(Box::new(ResidualRelative)),
        "residual_global" => Ok(Box::new(ResidualGlobal)),
        other => Err(FootError::InvalidConfig(format!(
            "unknown output mode {other:?} (known: {})",
            OUTPUT_MODES.join(", ")
        ))),
    }
}

/// Refined ankle rotations of one frame over any scalar:
/// `(global, relative)`, each `[left, right]`.
pub type AnklePair<S> = ([Mat3<S>; 2], [Mat3<S>; 2]);

/// Combines one frame's output Δ (12 values) with the initial global ankles
/// and the global knees.
pub fn apply_output_frame<S: Real>(
    strategy: &dyn OutputStrategy,
    delta: &[S],
    init_global: &[Rot6D; 2],
    knees: &[RotMat; 2],
) -> Result<AnklePair<S>> {
    let mut global = [Mat3::identity(); 2];
    let mut relative = [Mat3::identity(); 2];
    for side in 0..2 {
        let d = &delta[6 * side..6 * side + 6];
        let init = rot6d_to_rotmat(&init_global[side])?;
        let raw: [S; 6] = match strategy.base(&init, &knees[side]) {
            Some(b) => std::array::from_fn(|k| S::cst(b[k]) + d[k]),
            None => std::array::from_fn(|k| d[k]),
        };
        let m = gram_schmidt(&raw)?;
        let knee = Mat3::<S>::from_f64(knees[side].matrix());
        match strategy.frame() {
            OutputFrame::Global => {
                global[side] = m;
                relative[side] = knee.transpose() * m;
            }
            OutputFrame::Relative => {
                relative[side] = m;
                global[side] = knee * m;
            }
        }
    }
    Ok((global, relative))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefinedFrame {
    pub global: [RotMat; 2],
    pub relative: [RotMat; 2],
}

/// [`apply_output_frame`] over a whole sequence.
pub fn apply_output(
    strategy: &dyn OutputStrategy,
    delta: &[[f64; OUTPUT_WIDTH]],
    init_global: &[[Rot6D; 2]],
    knees: &[[RotMat; 2]],
) -> Result<Vec<RefinedFrame>> {
    if delta.len() != init_global.len() || delta.len() != knees.len() {
        return Err(FootError::LengthMismatch {
            what: "output vs initial estimate frames",
            left: delta.len(),
            right: init_global.len().min(knees.len()),
        });
    }
    delta
        .iter()
        .zip(init_global)
        .zip(knees)
        .map(|((d, init), k)| {
            let (g, r) = apply_output_frame::<f64>(strategy, d, init, k)?;
            Ok(RefinedFrame {
                global: g.map(RotMat::from_matrix_unchecked),
                relative: r.map(RotMat::from_matrix_unchecked),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_h: usize,
    pub layers: usize,
    pub heads: usize,
    /// Attention half-width: frame i attends to j iff |i − j| ≤ window.
    pub window: usize,
    pub output_mode: String,
    pub input_joints: InputJoints,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_h: 256,
            layers: 6,
            heads: 4,
            window: 120,
            output_mode: "residual_global".into(),
            input_joints: InputJoints::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_h == 0 || self.heads == 0 || self.d_h % self.heads != 0 {
            return Err(FootError::InvalidConfig(format!(
                "d_h {} must be a positive multiple of heads {}",
                self.d_h, self.heads
            )));
        }
        if (self.d_h / self.heads) % 2 != 0 {
            return Err(FootError::InvalidConfig(format!(
                "head width {} must be even for rotary embeddings",
                self.d_h / self.heads
            )));
        }
        output_strategy(&self.output_mode)?;
        Ok(())
    }
}

/// Forward pass result: the `L×12` output on the tape, each layer's
/// per-head attention weights, and the input feature streams.
pub struct ForwardOutput {
    pub delta: Var,
    pub attention: Vec<Vec<Var>>,
    pub inputs: FeatureVars,
}

/// Tape nodes holding the feature streams. They are constants, so the
/// initial estimate is detached from the gradient.
#[derive(Clone, Copy, Debug)]
pub struct FeatureVars {
    pub foot2d: Var,
    pub bbox: Var,
    pub rot: Option<Var>,
}

pub struct FootMr {
    pub config: ModelConfig,
    pub store: ParamStore,
    strategy: Box<dyn OutputStrategy>,
    rot_mlp: Option<Mlp>,
    kp_mlp: Mlp,
    bbox_mlp: Mlp,
    layers: Vec<EncoderLayer>,
    final_norm: LayerNorm,
    head: Mlp,
}

impl FootMr {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let strategy = output_strategy(&config.output_mode)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.d_h;
        let rot_width = config.input_joints.width();
        let rot_mlp = (rot_width > 0).then(|| Mlp::new(&mut store, "embed.rot", rot_width, d, d, &mut rng));
        let kp_mlp = Mlp::new(&mut store, "embed.kp", FOOT2D_WIDTH, d, d, &mut rng);
        let bbox_mlp = Mlp::new(&mut store, "embed.bbox", BBOX_WIDTH, d, d, &mut rng);
        let layers = (0..config.layers)
            .map(|i| {
                EncoderLayer::new(&mut store, &format!("encoder.{i}"), d, config.heads, FF_MULT, DEFAULT_ROPE_BASE, &mut rng)
            })
            .collect::<footlift_nn::Result<Vec<_>>>()?;
        let final_norm = LayerNorm::new(&mut store, "encoder.norm", d);
        let head = Mlp::with_zero_output(&mut store, "head", d, d, OUTPUT_WIDTH, &mut rng);
        let bias = strategy.head_bias();
        let b = store.get_mut(head.fc2.bias).values_mut();
        b[..6].copy_from_slice(&bias);
        b[6..].copy_from_slice(&bias);
        Ok(Self {
            config,
            store,
            strategy,
            rot_mlp,
            kp_mlp,
            bbox_mlp,
            layers,
            final_norm,
            head,
        })
    }

    pub fn strategy(&self) -> &dyn OutputStrategy {
        self.strategy.as_ref()
    }

    /// Copies every parameter from `other`, which must hold exactly this
    /// model's parameter names and shapes.
    pub fn load_params(&mut self, other: &ParamStore) -> Result<()> {
        for (name, _) in self.store.iter() {
            other
                .id(name)
                .map_err(|_| FootError::Format(format!("checkpoint lacks parameter {name}")))?;
        }
        self.store.load_from(other)?;
        Ok(())
    }

    fn check_input(&self, input: &RefineInput) -> Result<()> {
        let width = self.config.input_joints.width();
        let ok = input.rot_width == width
            && input.f_rot.len() == input.len * width
            && input.f_foot2d.len() == input.len * FOOT2D_WIDTH
            && input.f_bbox.len() == input.len * BBOX_WIDTH;
        if !ok {
            return Err(FootError::Format(format!(
                "input streams do not match the model (rotation width {} vs {width}, {} frames)",
                input.rot_width, input.len
            )));
        }
        if input.len == 0 {
            return Err(FootError::EmptyInput("refinement input has no frames"));
        }
        Ok(())
    }

    /// `T = MLP_rot(f_rot) + MLP_kp(f_foot2d) + MLP_bbox(f_bbox)`, `L×d_H`.
    pub fn fuse_tokens(&self, tape: &mut Tape, input: &RefineInput) -> Result<(Var, FeatureVars)> {
        self.check_input(input)?;
        let l = input.len;
        let kp = tape.constant(Tensor::matrix(l, FOOT2D_WIDTH, input.f_foot2d.clone())?);
        let bb = tape.constant(Tensor::matrix(l, BBOX_WIDTH, input.f_bbox.clone())?);
        let mut tok = self.kp_mlp.forward(tape, &self.store, kp)?;
        let b = self.bbox_mlp.forward(tape, &self.store, bb)?;
        tok = tape.add(tok, b)?;
        let mut rot_var = None;
        if let Some(m) = &self.rot_mlp {
            let rot = tape.constant(Tensor::matrix(l, input.rot_width, input.f_rot.clone())?);
            let r = m.forward(tape, &self.store, rot)?;
            tok = tape.add(tok, r)?;
            rot_var = Some(rot);
        }
        Ok((tok, FeatureVars { foot2d: kp, bbox: bb, rot: rot_var }))
    }

    pub fn forward(&self, tape: &mut Tape, input: &RefineInput) -> Result<ForwardOutput> {
        let (mut x, inputs) = self.fuse_tokens(tape, input)?;
        let mask = banded_mask(input.len, self.config.window);
        let mut attention = Vec::with_capacity(self.layers.len());
        if let Some(first) = self.layers.first() {
            let rope = first.attn.rope_table(input.len)?;
            for layer in &self.layers {
                let out = layer.forward(tape, &self.store, x, &mask, &rope)?;
                x = out.out;
                attention.push(out.attention);
            }
        }
        let x = self.final_norm.forward(tape, &self.store, x)?;
        let delta = self.head.forward(tape, &self.store, x)?;
        Ok(ForwardOutput { delta, attention, inputs })
    }

    /// Network output per frame, without gradients.
    pub fn predict_delta(&self, input: &RefineInput) -> Result<Vec<[f64; OUTPUT_WIDTH]>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, input)?;
        Ok(rows12(tape.value(out.delta).values()))
    }

    pub fn refine(
        &self,
        input: &RefineInput,
        init_global: &[[Rot6D; 2]],
        knees: &[[RotMat; 2]],
    ) -> Result<Vec<RefinedFrame>> {
        let delta = self.predict_delta(input)?;
        apply_output(self.strategy(), &delta, init_global, knees)
    }

    /// End-to-end inference from observations and an initial motion
    /// estimate. Knee and ankle inputs come from the estimate.
    pub fn refine_sequence(
        &self,
        obs: &ObservationSequence,
        initial: &MotionSequence,
        skeleton: &Skeleton,
    ) -> Result<Vec<RefinedFrame>> {
        if obs.len() != initial.len() {
            return Err(FootError::LengthMismatch {
                what: "observation vs initial estimate frames",
                left: obs.len(),
                right: initial.len(),
            });
        }
        let mut globals = Vec::with_capacity(initial.len());
        for t in 0..initial.len() {
            let g = initial.global_rotations(skeleton, t)?;
            globals.push(std::array::from_fn::<RotMat, NUM_JOINTS, _>(|j| g[j]));
        }
        let input = RefineInput::build(obs, &globals, &self.config.input_joints)?;
        let init: Vec<[Rot6D; 2]> = globals.iter().map(|g| ANKLES.map(|a| rotmat_to_rot6d(&g[a]))).collect();
        let knees: Vec<[RotMat; 2]> = globals.iter().map(|g| KNEES.map(|k| g[k])).collect();
        self.refine(&input, &init, &knees)
    }
}

pub(crate) fn rows12(values: &[f64]) -> Vec<[f64; OUTPUT_WIDTH]> {
    values
        .chunks_exact(OUTPUT_WIDTH)
        .map(|c| std::array::from_fn(|k| c[k]))
        .collect()
}

/// Writes refined ankles into a copy of `initial` (relative rotations).
pub fn with_refined_ankles(initial: &MotionSequence, refined: &[RefinedFrame]) -> Result<MotionSequence> {
    if initial.len() != refined.len() {
        return Err(FootError::LengthMismatch {
            what: "refined vs initial frames",
            left: refined.len(),
            right: initial.len(),
        });
    }
    let mut out = initial.clone();
    for (f, r) in out.frames.iter_mut().zip(refined) {
        for side in 0..2 {
            f.rel_rot[ANKLES[side]] = rotmat_to_rot6d(&r.relative[side]);
        }
    }
    Ok(out)
}
