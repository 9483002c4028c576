//! Procedural motion generation and the training-pair factory.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::camera::{bbox_from_points, BBox, CameraIntrinsics, Keypoint, DEFAULT_BOX_PAD};
use crate::error::{FootError, Result};
use crate::kinematics::{
    apply_root_augmentation, foot_keypoints_3d, forward_kinematics, global_to_relative,
    upright_orientation, Frame, MotionSequence, Skeleton, ANKLES, KNEES, L_ANKLE, L_HIP, L_KNEE,
    NUM_JOINTS, NUM_MARKERS, PELVIS, R_ANKLE, R_HIP, R_KNEE,
};
use crate::rotmath::{
    compose, perturb_rotation, rotmat_to_rot6d, sample_uniform_rotation, Rot6D, RotMat, Vec3,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub kp_sigma_px: f64,
    pub drop_prob: f64,
    pub init_rot_sigma_deg: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kp_sigma_px: 3.0,
            drop_prob: 0.05,
            init_rot_sigma_deg: 20.0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            kp_sigma_px: 0.0,
            drop_prob: 0.0,
            init_rot_sigma_deg: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(FootError::InvalidConfig(format!(
                "drop_prob must be in [0, 1], got {}",
                self.drop_prob
            )));
        }
        if !(self.kp_sigma_px >= 0.0) || !(self.init_rot_sigma_deg >= 0.0) {
            return Err(FootError::InvalidConfig("noise sigmas must be non-negative".into()));
        }
        Ok(())
    }
}

/// Independent rng for `(seed, index, stream)`, so examples can be
/// generated in any order with identical results.
pub fn derived_rng(seed: u64, index: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

/// A family of procedural ground-truth motions.
pub trait MotionProfile: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, len: usize, fps: f64, rng: &mut dyn RngCore) -> MotionSequence;
}

/// Amplitude and rate limits for [`SinusoidProfile`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileParams {
    pub hip_deg: f64,
    pub knee_deg: f64,
    pub ankle_deg: f64,
    pub freq_hz: (f64, f64),
    pub root_tilt_deg: f64,
    pub yaw_rate_deg: f64,
    pub drift_m: f64,
}

/// Each joint's rotation vector follows `b + Σ_k a_k sin(2π f_k t + φ_k)`
/// per axis, with bias and amplitudes scaled so no component exceeds the
/// joint's amplitude limit.
pub struct SinusoidProfile {
    pub name: String,
    pub params: ProfileParams,
}

const HARMONICS: usize = 2;
// Per-axis weights (x forward, y lateral, z up); flexion is about y.
const HIP_AXES: [f64; 3] = [0.4, 1.0, 0.3];
const KNEE_AXES: [f64; 3] = [0.1, 1.0, 0.1];
const ANKLE_AXES: [f64; 3] = [0.6, 1.0, 0.4];

struct Wave {
    bias: f64,
    terms: [(f64, f64, f64); HARMONICS],
}

impl Wave {
    fn draw(rng: &mut dyn RngCore, amp: f64, freq: (f64, f64)) -> Self {
        let bias = if amp > 0.0 { rng.random_range(-amp / 2.0..=amp / 2.0) } else { 0.0 };
        let terms = std::array::from_fn(|_| {
            let a = if amp > 0.0 { rng.random_range(0.0..=amp / (2.0 * HARMONICS as f64)) } else { 0.0 };
            let f = rng.random_range(freq.0..=freq.1);
            let phase = rng.random_range(0.0..2.0 * PI);
            (a, f, phase)
        });
        Self { bias, terms }
    }

    fn at(&self, t: f64) -> f64 {
        self.bias + self.terms.iter().map(|(a, f, p)| a * (2.0 * PI * f * t + p).sin()).sum::<f64>()
    }
}

fn rotvec_deg(v: [f64; 3]) -> RotMat {
    RotMat::exp(&Vec3(v.map(f64::to_radians)))
}

impl MotionProfile for SinusoidProfile {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, len: usize, fps: f64, rng: &mut dyn RngCore) -> MotionSequence {
        let p = &self.params;
        let mut joint_waves: Vec<Option<[Wave; 3]>> = Vec::with_capacity(NUM_JOINTS);
        for j in 0..NUM_JOINTS {
            let (amp, axes) = match j {
                L_HIP | R_HIP => (p.hip_deg, HIP_AXES),
                L_KNEE | R_KNEE => (p.knee_deg, KNEE_AXES),
                L_ANKLE | R_ANKLE => (p.ankle_deg, ANKLE_AXES),
                _ => {
                    joint_waves.push(None);
                    continue;
                }
            };
            joint_waves.push(Some(axes.map(|w| Wave::draw(rng, amp * w, p.freq_hz))));
        }
        let tilt = [0, 1].map(|_| Wave::draw(rng, p.root_tilt_deg, (0.1, 0.5)));
        let drift = [0, 1, 2].map(|_| Wave::draw(rng, p.drift_m, (0.05, 0.3)));
        let yaw0: f64 = rng.random_range(-180.0..180.0);
        let depth: f64 = rng.random_range(2.0..5.0);
        let base = [rng.random_range(-0.3..0.3), rng.random_range(-0.5..-0.1), depth];
        let rate_noise = Normal::new(0.0, p.yaw_rate_deg * 0.3).expect("finite sigma");

        let upright = upright_orientation();
        let (mut yaw, mut rate) = (yaw0, 0.0);
        let mut frames = Vec::with_capacity(len);
        for i in 0..len {
            let t = i as f64 / fps;
            if i > 0 {
                rate = 0.9 * rate + rate_noise.sample(rng);
                rate = rate.clamp(-p.yaw_rate_deg * 3.0, p.yaw_rate_deg * 3.0);
                yaw += rate / fps;
            }
            let body = compose(
                &RotMat::rz_deg(yaw),
                &compose(&RotMat::ry_deg(tilt[0].at(t)), &RotMat::rx_deg(tilt[1].at(t))),
            );
            let mut rel_rot = Vec::with_capacity(NUM_JOINTS);
            for (j, waves) in joint_waves.iter().enumerate() {
                let r = match (j, waves) {
                    (PELVIS, _) => compose(&upright, &body),
                    (_, Some(w)) => rotvec_deg([w[0].at(t), w[1].at(t), w[2].at(t)]),
                    (_, None) => RotMat::identity(),
                };
                rel_rot.push(rotmat_to_rot6d(&r));
            }
            let trans = std::array::from_fn(|k| base[k] + drift[k].at(t));
            frames.push(Frame { rel_rot, trans });
        }
        MotionSequence { fps, frames }
    }
}

/// Rest pose, standing still and facing the camera.
pub struct StaticProfile;

pub const STATIC_TRANS: [f64; 3] = [0.0, -0.3, 3.0];

impl MotionProfile for StaticProfile {
    fn name(&self) -> &str {
        "static"
    }

    fn generate(&self, len: usize, fps: f64, _rng: &mut dyn RngCore) -> MotionSequence {
        let mut rel_rot = vec![Rot6D::IDENTITY; NUM_JOINTS];
        rel_rot[PELVIS] = rotmat_to_rot6d(&upright_orientation());
        let frame = Frame { rel_rot, trans: STATIC_TRANS };
        MotionSequence { fps, frames: vec![frame; len] }
    }
}

pub fn everyday_profile() -> SinusoidProfile {
    SinusoidProfile {
        name: "everyday".into(),
        params: ProfileParams {
            hip_deg: 30.0,
            knee_deg: 40.0,
            ankle_deg: 15.0,
            freq_hz: (0.2, 1.0),
            root_tilt_deg: 5.0,
            yaw_rate_deg: 10.0,
            drift_m: 0.1,
        },
    }
}

pub fn complex_foot_profile() -> SinusoidProfile {
    SinusoidProfile {
        name: "complex-foot".into(),
        params: ProfileParams {
            hip_deg: 35.0,
            knee_deg: 45.0,
            ankle_deg: 70.0,
            freq_hz: (0.2, 1.5),
            root_tilt_deg: 10.0,
            yaw_rate_deg: 10.0,
            drift_m: 0.1,
        },
    }
}

pub const PROFILE_NAMES: [&str; 3] = ["everyday", "complex-foot", "static"];

pub fn profile_by_name(name: &str) -> Result<Box<dyn MotionProfile>> {
    match name {
        "everyday" => Ok(Box::new(everyday_profile())),
        "complex-foot" => Ok(Box::new(complex_foot_profile())),
        "static" => Ok(Box::new(StaticProfile)),
        other => Err(FootError::InvalidConfig(format!(
            "unknown motion profile {other:?} (known: {})",
            PROFILE_NAMES.join(", ")
        ))),
    }
}

pub fn generate_sequence(
    profile: &dyn MotionProfile,
    len: usize,
    fps: f64,
    rng: &mut dyn RngCore,
) -> Result<MotionSequence> {
    if len < 2 {
        return Err(FootError::SequenceTooShort { needed: 2, got: len });
    }
    if !(fps > 0.0) {
        return Err(FootError::InvalidConfig(format!("fps must be positive, got {fps}")));
    }
    Ok(profile.generate(len, fps, rng))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationFrame {
    pub keypoints: [Keypoint; NUM_MARKERS],
    pub bbox: BBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSequence {
    pub fps: f64,
    pub camera: CameraIntrinsics,
    pub frames: Vec<ObservationFrame>,
}

impl ObservationSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if !(self.fps > 0.0) {
            return Err(FootError::Format(format!("fps must be positive, got {}", self.fps)));
        }
        for (t, f) in self.frames.iter().enumerate() {
            f.bbox.validate()?;
            for k in &f.keypoints {
                if ![k.u, k.v, k.conf].iter().all(|v| v.is_finite()) || !(0.0..=1.0).contains(&k.conf) {
                    return Err(FootError::Format(format!("frame {t}: invalid keypoint {k:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Clean projections of all joints and foot markers of one frame.
pub struct FrameProjection {
    pub joints: [[f64; 2]; NUM_JOINTS],
    pub markers: [[f64; 2]; NUM_MARKERS],
}

pub fn project_frame(skeleton: &Skeleton, frame: &Frame, cam: &CameraIntrinsics) -> Result<FrameProjection> {
    let pose = forward_kinematics(skeleton, frame)?;
    let markers3d = foot_keypoints_3d(&pose, skeleton);
    let mut joints = [[0.0; 2]; NUM_JOINTS];
    for (out, p) in joints.iter_mut().zip(&pose.joint_pos) {
        *out = cam.project_point(p)?;
    }
    let mut markers = [[0.0; 2]; NUM_MARKERS];
    for (out, p) in markers.iter_mut().zip(&markers3d) {
        *out = cam.project_point(p)?;
    }
    Ok(FrameProjection { joints, markers })
}

/// Person box from the clean projections of every joint and marker.
pub fn person_bbox(proj: &FrameProjection) -> BBox {
    let pts: Vec<[f64; 2]> = proj.joints.iter().chain(&proj.markers).copied().collect();
    bbox_from_points(&pts, DEFAULT_BOX_PAD).expect("non-empty")
}

/// Projects the foot markers, adds pixel noise and drops keypoints at
/// random. Dropped keypoints keep their noisy position with confidence 0.
pub fn synthesize_observations(
    seq: &MotionSequence,
    skeleton: &Skeleton,
    cam: &CameraIntrinsics,
    noise: &NoiseConfig,
    rng: &mut dyn RngCore,
) -> Result<ObservationSequence> {
    noise.validate()?;
    let px = Normal::new(0.0, noise.kp_sigma_px).map_err(|e| FootError::InvalidConfig(e.to_string()))?;
    let coin = Uniform::new(0.0, 1.0).expect("valid range");
    let mut frames = Vec::with_capacity(seq.len());
    for frame in &seq.frames {
        let proj = project_frame(skeleton, frame, cam)?;
        let bbox = person_bbox(&proj);
        let keypoints = proj.markers.map(|[u, v]| {
            let (du, dv): (f64, f64) = (px.sample(rng), px.sample(rng));
            let dropped = coin.sample(rng) < noise.drop_prob;
            Keypoint {
                u: u + du,
                v: v + dv,
                conf: if dropped { 0.0 } else { 1.0 },
            }
        });
        frames.push(ObservationFrame { keypoints, bbox });
    }
    Ok(ObservationSequence { fps: seq.fps, camera: *cam, frames })
}

/// Simulated estimator output: global rotations of (l knee, r knee,
/// l ankle, r ankle) per frame. Each joint gets one perturbation per
/// sequence plus per-frame jitter at a quarter of the sigma.
pub fn simulate_initial_estimate(
    seq: &MotionSequence,
    skeleton: &Skeleton,
    noise: &NoiseConfig,
    rng: &mut dyn RngCore,
) -> Result<Vec<[Rot6D; 4]>> {
    let joints = [L_KNEE, R_KNEE, L_ANKLE, R_ANKLE];
    let sigma = noise.init_rot_sigma_deg;
    let bias: [RotMat; 4] = std::array::from_fn(|_| perturb_rotation(&RotMat::identity(), sigma, rng));
    let mut out = Vec::with_capacity(seq.len());
    for t in 0..seq.len() {
        let globals = seq.global_rotations(skeleton, t)?;
        out.push(std::array::from_fn(|k| {
            let jitter = perturb_rotation(&RotMat::identity(), sigma / 4.0, rng);
            rotmat_to_rot6d(&compose(&compose(&globals[joints[k]], &bias[k]), &jitter))
        }));
    }
    Ok(out)
}

/// A motion sequence whose knee and ankle global rotations equal `estimate`
/// while every other joint keeps its value from `seq`.
pub fn estimate_as_sequence(
    seq: &MotionSequence,
    skeleton: &Skeleton,
    estimate: &[[Rot6D; 4]],
) -> Result<MotionSequence> {
    if estimate.len() != seq.len() {
        return Err(FootError::LengthMismatch {
            what: "initial estimate vs motion frames",
            left: estimate.len(),
            right: seq.len(),
        });
    }
    let mut out = seq.clone();
    for (t, est) in estimate.iter().enumerate() {
        let globals = seq.global_rotations(skeleton, t)?;
        let est: Vec<RotMat> = est.iter().map(crate::rotmath::rot6d_to_rotmat).collect::<Result<_>>()?;
        for side in 0..2 {
            let hip = globals[[L_HIP, R_HIP][side]];
            out.frames[t].rel_rot[KNEES[side]] = rotmat_to_rot6d(&global_to_relative(&est[side], &hip));
            out.frames[t].rel_rot[ANKLES[side]] =
                rotmat_to_rot6d(&global_to_relative(&est[2 + side], &est[side]));
        }
    }
    Ok(out)
}

/// The refiner's input as a motion: ground truth with the example's input
/// knee and ankle globals written in.
pub fn initial_motion(example: &TrainingExample, skeleton: &Skeleton) -> Result<MotionSequence> {
    let est: Vec<[Rot6D; 4]> = example
        .input_globals
        .iter()
        .map(|g| [KNEES[0], KNEES[1], ANKLES[0], ANKLES[1]].map(|j| rotmat_to_rot6d(&g[j])))
        .collect();
    estimate_as_sequence(&example.gt_sequence, skeleton, &est)
}

/// Where the knee rotations fed to the refiner come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KneeSource {
    /// Training: ground-truth global knees.
    GroundTruth,
    /// Evaluation: the simulated estimator's knees.
    Estimated,
}

#[derive(Clone, Debug)]
pub struct TrainingExample {
    pub observation: ObservationSequence,
    /// Per-frame global rotations of all joints as seen by the refiner:
    /// ground truth with the ankles (and, for estimated knees, the knees)
    /// replaced by the simulated estimate.
    pub input_globals: Vec<[RotMat; NUM_JOINTS]>,
    pub init_global_ankle: Vec<[Rot6D; 2]>,
    pub target_rel_ankle: Vec<[Rot6D; 2]>,
    pub target_global_ankle: Vec<[Rot6D; 2]>,
    pub gt_sequence: MotionSequence,
    pub camera: CameraIntrinsics,
    /// The root rotation drawn for augmentation (identity when disabled).
    pub augmentation: RotMat,
}

impl TrainingExample {
    pub fn len(&self) -> usize {
        self.gt_sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt_sequence.is_empty()
    }

    pub fn input_knees(&self, t: usize) -> [RotMat; 2] {
        KNEES.map(|k| self.input_globals[t][k])
    }
}

/// Builds a training pair with ground-truth knees as input.
pub fn make_training_example(
    seq: &MotionSequence,
    skeleton: &Skeleton,
    cam: &CameraIntrinsics,
    noise: &NoiseConfig,
    augment: bool,
    rng: &mut dyn RngCore,
) -> Result<TrainingExample> {
    make_example(seq, skeleton, cam, noise, augment, KneeSource::GroundTruth, rng)
}

/// The augmentation rotation is always drawn, so toggling `augment` leaves
/// the observation and estimator noise unchanged for a given rng state.
pub fn make_example(
    seq: &MotionSequence,
    skeleton: &Skeleton,
    cam: &CameraIntrinsics,
    noise: &NoiseConfig,
    augment: bool,
    knees: KneeSource,
    rng: &mut dyn RngCore,
) -> Result<TrainingExample> {
    let drawn = sample_uniform_rotation(rng);
    let augmentation = if augment { drawn } else { RotMat::identity() };
    let gt = if augment { apply_root_augmentation(seq, &augmentation)? } else { seq.clone() };
    let observation = synthesize_observations(&gt, skeleton, cam, noise, rng)?;
    let estimate = simulate_initial_estimate(&gt, skeleton, noise, rng)?;

    let mut input_globals = Vec::with_capacity(gt.len());
    let mut init_global_ankle = Vec::with_capacity(gt.len());
    let mut target_rel_ankle = Vec::with_capacity(gt.len());
    let mut target_global_ankle = Vec::with_capacity(gt.len());
    for (t, est) in estimate.iter().enumerate() {
        let globals = gt.global_rotations(skeleton, t)?;
        let mut input: [RotMat; NUM_JOINTS] = std::array::from_fn(|j| globals[j]);
        for side in 0..2 {
            input[ANKLES[side]] = crate::rotmath::rot6d_to_rotmat(&est[2 + side])?;
            if knees == KneeSource::Estimated {
                input[KNEES[side]] = crate::rotmath::rot6d_to_rotmat(&est[side])?;
            }
        }
        input_globals.push(input);
        init_global_ankle.push([est[2], est[3]]);
        target_rel_ankle.push(ANKLES.map(|a| gt.frames[t].rel_rot[a]));
        target_global_ankle.push(ANKLES.map(|a| rotmat_to_rot6d(&globals[a])));
    }
    Ok(TrainingExample {
        observation,
        input_globals,
        init_global_ankle,
        target_rel_ankle,
        target_global_ankle,
        gt_sequence: gt,
        camera: *cam,
        augmentation,
    })
}
