//! Training losses. Every term is a mean of per-point distances; 2D terms
//! are measured in box-normalized coordinates.
//!
//! The functions are generic over [`Real`] so the same code yields values
//! (`f64`) and per-frame gradients with respect to the network output
//! (`Jet<12>`).

use serde::{Deserialize, Serialize};

use crate::camera::{BBox, CameraIntrinsics};
use crate::error::{FootError, Result};
use crate::footmr::{apply_output_frame, OutputStrategy, OUTPUT_WIDTH};
use crate::kinematics::{
    fk_from_matrices, foot_keypoints_3d, PoseFK, Skeleton, ANKLES, NUM_JOINTS, NUM_MARKERS,
};
use crate::rotmath::{rot6d_to_rotmat, rotmat_to_rot6d, Mat3, Rot6D, RotMat, Vec3};
use crate::scalar::{Jet, Real};
use crate::synth::{project_frame, TrainingExample};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub theta: f64,
    pub j3d: f64,
    pub j2d: f64,
    pub v3d: f64,
    pub v2d: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            theta: 1.0,
            j3d: 500.0,
            j2d: 1000.0,
            v3d: 500.0,
            v2d: 1000.0,
        }
    }
}

/// Unweighted loss terms and their weighted sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub theta: f64,
    pub j3d: f64,
    pub j2d: f64,
    pub v3d: f64,
    pub v2d: f64,
}

impl LossBreakdown {
    pub fn weighted(theta: f64, j3d: f64, j2d: f64, v3d: f64, v2d: f64, w: &LossWeights) -> Self {
        Self {
            total: w.theta * theta + w.j3d * j3d + w.j2d * j2d + w.v3d * v3d + w.v2d * v2d,
            theta,
            j3d,
            j2d,
            v3d,
            v2d,
        }
    }

    pub fn add_scaled(&mut self, o: &LossBreakdown, k: f64) {
        self.total += k * o.total;
        self.theta += k * o.theta;
        self.j3d += k * o.j3d;
        self.j2d += k * o.j2d;
        self.v3d += k * o.v3d;
        self.v2d += k * o.v2d;
    }
}

fn dist3<S: Real>(a: &Vec3<S>, b: &Vec3<f64>) -> S {
    (*a - Vec3::from_f64(b)).norm()
}

fn dist2<S: Real>(a: [S; 2], b: [f64; 2]) -> S {
    let (du, dv) = (a[0] - S::cst(b[0]), a[1] - S::cst(b[1]));
    (du * du + dv * dv).sqrt()
}

fn dist6<S: Real>(a: &[S; 6], b: &[f64; 6]) -> S {
    let mut s = S::zero();
    for k in 0..6 {
        let d = a[k] - S::cst(b[k]);
        s += d * d;
    }
    s.sqrt()
}

/// Sum of Euclidean distances between matching points.
pub fn distance_sum_3d<S: Real>(pred: &[Vec3<S>], gt: &[Vec3<f64>]) -> S {
    let mut s = S::zero();
    for (p, g) in pred.iter().zip(gt) {
        s += dist3(p, g);
    }
    s
}

/// Sum of box-normalized reprojection distances over visible points, and
/// the number of visible points.
pub fn reprojection_sum<S: Real>(
    pred: &[Vec3<S>],
    gt_px: &[[f64; 2]],
    visible: &[bool],
    bbox: &BBox,
    cam: &CameraIntrinsics,
) -> Result<(S, usize)> {
    let mut s = S::zero();
    let mut n = 0;
    for ((p, g), &vis) in pred.iter().zip(gt_px).zip(visible) {
        if !vis {
            continue;
        }
        let proj = bbox.normalize(cam.project_point(p)?);
        s += dist2(proj, bbox.normalize([g[0], g[1]]));
        n += 1;
    }
    Ok((s, n))
}

fn check_len(what: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(FootError::LengthMismatch { what, left: a, right: b });
    }
    Ok(())
}

/// Mean joint position error over frames and joints, meters.
pub fn loss_j3d<S: Real>(pred: &[PoseFK<S>], gt: &[PoseFK]) -> Result<S> {
    check_len("predicted vs ground-truth poses", pred.len(), gt.len())?;
    let mut s = S::zero();
    let mut n = 0;
    for (p, g) in pred.iter().zip(gt) {
        s += distance_sum_3d(&p.joint_pos, &g.joint_pos);
        n += p.joint_pos.len();
    }
    Ok(if n == 0 { S::zero() } else { s.scale(1.0 / n as f64) })
}

/// Mean box-normalized reprojection error of joints over visible entries;
/// 0 when nothing is visible.
pub fn loss_j2d<S: Real>(
    pred: &[PoseFK<S>],
    gt_px: &[Vec<[f64; 2]>],
    visible: &[Vec<bool>],
    bboxes: &[BBox],
    cam: &CameraIntrinsics,
) -> Result<S> {
    let pts: Vec<Vec<Vec3<S>>> = pred.iter().map(|p| p.joint_pos.clone()).collect();
    mean_reprojection(&pts, gt_px, visible, bboxes, cam)
}

/// Mean foot-marker position error, meters.
pub fn loss_v3d<S: Real>(pred: &[[Vec3<S>; NUM_MARKERS]], gt: &[[Vec3; NUM_MARKERS]]) -> Result<S> {
    check_len("predicted vs ground-truth markers", pred.len(), gt.len())?;
    let mut s = S::zero();
    for (p, g) in pred.iter().zip(gt) {
        s += distance_sum_3d(p, g);
    }
    let n = pred.len() * NUM_MARKERS;
    Ok(if n == 0 { S::zero() } else { s.scale(1.0 / n as f64) })
}

/// Mean box-normalized reprojection error of foot markers.
pub fn loss_v2d<S: Real>(
    pred: &[[Vec3<S>; NUM_MARKERS]],
    gt_px: &[Vec<[f64; 2]>],
    visible: &[Vec<bool>],
    bboxes: &[BBox],
    cam: &CameraIntrinsics,
) -> Result<S> {
    let pts: Vec<Vec<Vec3<S>>> = pred.iter().map(|p| p.to_vec()).collect();
    mean_reprojection(&pts, gt_px, visible, bboxes, cam)
}

fn mean_reprojection<S: Real>(
    pred: &[Vec<Vec3<S>>],
    gt_px: &[Vec<[f64; 2]>],
    visible: &[Vec<bool>],
    bboxes: &[BBox],
    cam: &CameraIntrinsics,
) -> Result<S> {
    check_len("predicted vs 2D ground-truth frames", pred.len(), gt_px.len())?;
    check_len("2D ground truth vs visibility frames", gt_px.len(), visible.len())?;
    check_len("2D ground truth vs box frames", gt_px.len(), bboxes.len())?;
    let mut s = S::zero();
    let mut n = 0;
    for t in 0..pred.len() {
        let (ft, nt) = reprojection_sum(&pred[t], &gt_px[t], &visible[t], &bboxes[t], cam)?;
        s += ft;
        n += nt;
    }
    Ok(if n == 0 { S::zero() } else { s.scale(1.0 / n as f64) })
}

/// `½ (mean‖θ* − θ̂‖ + mean‖θ − θ̂‖)` over the ankle 6D rotations of every
/// frame.
pub fn loss_theta<S: Real>(
    init: &[[[f64; 6]; 2]],
    refined: &[[[S; 6]; 2]],
    gt: &[[[f64; 6]; 2]],
) -> Result<S> {
    check_len("initial vs ground-truth rotations", init.len(), gt.len())?;
    check_len("refined vs ground-truth rotations", refined.len(), gt.len())?;
    if gt.is_empty() {
        return Ok(S::zero());
    }
    let mut init_sum = 0.0;
    let mut ref_sum = S::zero();
    for t in 0..gt.len() {
        for side in 0..2 {
            init_sum += dist6(&init[t][side], &gt[t][side]);
            ref_sum += dist6(&refined[t][side], &gt[t][side]);
        }
    }
    let n = (2 * gt.len()) as f64;
    Ok((S::cst(init_sum) + ref_sum).scale(0.5 / n))
}

/// Everything about one training frame that does not depend on the
/// network output.
struct FrameTargets {
    rel: [Mat3; NUM_JOINTS],
    trans: Vec3,
    gt_joints: [Vec3; NUM_JOINTS],
    gt_markers: [Vec3; NUM_MARKERS],
    gt_joints_px: [[f64; 2]; NUM_JOINTS],
    gt_markers_px: [[f64; 2]; NUM_MARKERS],
    bbox: BBox,
    knees: [RotMat; 2],
    init_global: [Rot6D; 2],
    init_rel: [[f64; 6]; 2],
    target_rel: [[f64; 6]; 2],
}

/// Precomputed loss targets for one [`TrainingExample`].
pub struct LossContext<'a> {
    skeleton: &'a Skeleton,
    camera: CameraIntrinsics,
    frames: Vec<FrameTargets>,
}

impl<'a> LossContext<'a> {
    pub fn new(example: &TrainingExample, skeleton: &'a Skeleton) -> Result<Self> {
        let seq = &example.gt_sequence;
        let mut frames = Vec::with_capacity(seq.len());
        for t in 0..seq.len() {
            let rel_m = seq.rel_matrices(t)?;
            let rel: [Mat3; NUM_JOINTS] = std::array::from_fn(|j| *rel_m[j].matrix());
            let trans = Vec3(seq.frames[t].trans);
            let pose = fk_from_matrices(skeleton, &rel, trans);
            let markers = foot_keypoints_3d(&pose, skeleton);
            let proj = project_frame(skeleton, &seq.frames[t], &example.camera)?;
            let knees = example.input_knees(t);
            let init_global = example.init_global_ankle[t];
            let init_rel = std::array::from_fn(|side| {
                let g = rot6d_to_rotmat(&init_global[side]).expect("estimate is a rotation");
                rotmat_to_rot6d(&crate::kinematics::global_to_relative(&g, &knees[side])).0
            });
            let target_rel = std::array::from_fn(|side| {
                let r = rot6d_to_rotmat(&example.target_rel_ankle[t][side]).expect("target is a rotation");
                rotmat_to_rot6d(&r).0
            });
            frames.push(FrameTargets {
                rel,
                trans,
                gt_joints: std::array::from_fn(|j| pose.joint_pos[j]),
                gt_markers: markers,
                gt_joints_px: proj.joints,
                gt_markers_px: proj.markers,
                bbox: example.observation.frames[t].bbox,
                knees,
                init_global,
                init_rel,
                target_rel,
            });
        }
        Ok(Self {
            skeleton,
            camera: example.camera,
            frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Per-frame loss terms (sums, before dividing by the point counts).
    fn frame_terms<S: Real>(&self, strategy: &dyn OutputStrategy, t: usize, delta: &[S]) -> Result<[S; 5]> {
        let f = &self.frames[t];
        let (_, relative) = apply_output_frame(strategy, delta, &f.init_global, &f.knees)?;
        let mut rel: [Mat3<S>; NUM_JOINTS] = std::array::from_fn(|j| Mat3::from_f64(&f.rel[j]));
        for side in 0..2 {
            rel[ANKLES[side]] = relative[side];
        }
        let pose = fk_from_matrices(self.skeleton, &rel, Vec3::from_f64(&f.trans));
        let markers = foot_keypoints_3d(&pose, self.skeleton);
        let all = [true; NUM_JOINTS];
        let j3d = distance_sum_3d(&pose.joint_pos, &f.gt_joints);
        let (j2d, _) = reprojection_sum(&pose.joint_pos, &f.gt_joints_px, &all, &f.bbox, &self.camera)?;
        let v3d = distance_sum_3d(&markers, &f.gt_markers);
        let (v2d, _) = reprojection_sum(&markers, &f.gt_markers_px, &all[..NUM_MARKERS], &f.bbox, &self.camera)?;
        let mut theta = S::zero();
        for side in 0..2 {
            let refined = relative[side].to_6d();
            theta += S::cst(dist6(&f.init_rel[side], &f.target_rel[side])) + dist6(&refined, &f.target_rel[side]);
        }
        Ok([theta, j3d, j2d, v3d, v2d])
    }

    fn normalizers(&self) -> [f64; 5] {
        let l = self.frames.len() as f64;
        [
            0.5 / (2.0 * l),
            1.0 / (l * NUM_JOINTS as f64),
            1.0 / (l * NUM_JOINTS as f64),
            1.0 / (l * NUM_MARKERS as f64),
            1.0 / (l * NUM_MARKERS as f64),
        ]
    }

    fn check_delta(&self, delta: &[[f64; OUTPUT_WIDTH]]) -> Result<()> {
        check_len("network output vs example frames", delta.len(), self.frames.len())
    }

    /// Loss value and breakdown for the given network output.
    pub fn total_loss(
        &self,
        strategy: &dyn OutputStrategy,
        delta: &[[f64; OUTPUT_WIDTH]],
        weights: &LossWeights,
    ) -> Result<LossBreakdown> {
        self.check_delta(delta)?;
        let norm = self.normalizers();
        let mut terms = [0.0; 5];
        for (t, d) in delta.iter().enumerate() {
            let ft = self.frame_terms::<f64>(strategy, t, d)?;
            for k in 0..5 {
                terms[k] += ft[k];
            }
        }
        let [th, j3, j2, v3, v2] = std::array::from_fn(|k| terms[k] * norm[k]);
        Ok(LossBreakdown::weighted(th, j3, j2, v3, v2, weights))
    }

    /// Loss breakdown and `∂loss/∂Δ` as a row-major `L×12` buffer.
    pub fn total_loss_grad(
        &self,
        strategy: &dyn OutputStrategy,
        delta: &[[f64; OUTPUT_WIDTH]],
        weights: &LossWeights,
    ) -> Result<(LossBreakdown, Vec<f64>)> {
        self.check_delta(delta)?;
        let norm = self.normalizers();
        let w = [weights.theta, weights.j3d, weights.j2d, weights.v3d, weights.v2d];
        let mut terms = [0.0; 5];
        let mut grad = Vec::with_capacity(delta.len() * OUTPUT_WIDTH);
        for (t, d) in delta.iter().enumerate() {
            let vars: [Jet<OUTPUT_WIDTH>; OUTPUT_WIDTH] = std::array::from_fn(|k| Jet::variable(d[k], k));
            let ft = self.frame_terms(strategy, t, &vars)?;
            let mut g = [0.0; OUTPUT_WIDTH];
            for k in 0..5 {
                terms[k] += ft[k].v;
                for (gi, di) in g.iter_mut().zip(ft[k].d) {
                    *gi += w[k] * norm[k] * di;
                }
            }
            grad.extend(g);
        }
        let [th, j3, j2, v3, v2] = std::array::from_fn(|k| terms[k] * norm[k]);
        Ok((LossBreakdown::weighted(th, j3, j2, v3, v2, weights), grad))
    }
}
