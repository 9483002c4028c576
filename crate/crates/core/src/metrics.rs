//! Evaluation metrics for refined foot motion.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::camera::{BBox, CameraIntrinsics};
use crate::error::{FootError, Result};
use crate::kinematics::{
    foot_keypoints_3d, forward_kinematics, MotionSequence, Skeleton, ANKLES, NUM_MARKERS,
    TOE_HEEL_MARKERS,
};
use crate::rotmath::{geodesic_angle_deg, RotMat, Vec3};
use crate::synth::ObservationSequence;

pub const PCK_THRESHOLD: f64 = 0.05;
const SCALE_FLOOR: f64 = 1e-12;

fn same_len(what: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(FootError::LengthMismatch { what, left: a, right: b });
    }
    Ok(())
}

/// Mean geodesic angle between predicted and ground-truth global ankle
/// rotations, over frames and both ankles, degrees.
pub fn ajae(pred: &[[RotMat; 2]], gt: &[[RotMat; 2]]) -> Result<f64> {
    same_len("predicted vs ground-truth ankle frames", pred.len(), gt.len())?;
    if pred.is_empty() {
        return Err(FootError::EmptyInput("no frames to evaluate"));
    }
    let mut s = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        s += geodesic_angle_deg(&p[0], &g[0]) + geodesic_angle_deg(&p[1], &g[1]);
    }
    Ok(s / (2 * pred.len()) as f64)
}

/// Toe and heel markers of one foot (ankle excluded).
fn foot_markers(side: usize) -> [usize; 3] {
    [4 * side, 4 * side + 1, 4 * side + 2]
}

fn centered<const D: usize>(pts: &[[f64; D]]) -> Vec<[f64; D]> {
    let n = pts.len() as f64;
    let mut c = [0.0; D];
    for p in pts {
        for k in 0..D {
            c[k] += p[k] / n;
        }
    }
    pts.iter().map(|p| std::array::from_fn(|k| p[k] - c[k])).collect()
}

/// Least-squares scale `s = ⟨p,g⟩/⟨p,p⟩` aligning centered `p` to centered
/// `g`, and the mean distance `‖s·p − g‖` after alignment.
pub fn scale_aligned_error<const D: usize>(pred: &[[f64; D]], gt: &[[f64; D]]) -> Option<(f64, f64)> {
    let p = centered(pred);
    let g = centered(gt);
    let pp: f64 = p.iter().flatten().map(|v| v * v).sum();
    if pp < SCALE_FLOOR {
        return None;
    }
    let pg: f64 = p.iter().flatten().zip(g.iter().flatten()).map(|(a, b)| a * b).sum();
    let s = pg / pp;
    Some((s, mean_error_at_scale(&p, &g, s)))
}

/// Mean distance between `s·p` and `g` for already centered point sets.
pub fn mean_error_at_scale<const D: usize>(p: &[[f64; D]], g: &[[f64; D]], s: f64) -> f64 {
    let mut e = 0.0;
    for (a, b) in p.iter().zip(g) {
        e += (0..D).map(|k| (s * a[k] - b[k]).powi(2)).sum::<f64>().sqrt();
    }
    e / p.len() as f64
}

/// Per-foot, per-frame centered and scale-normalized 3D error of the toe
/// and heel markers, millimeters.
pub fn n_mpjpe_f(pred: &[[Vec3; NUM_MARKERS]], gt: &[[Vec3; NUM_MARKERS]]) -> Result<f64> {
    same_len("predicted vs ground-truth marker frames", pred.len(), gt.len())?;
    if pred.is_empty() {
        return Err(FootError::EmptyInput("no frames to evaluate"));
    }
    let mut s = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        for side in 0..2 {
            let idx = foot_markers(side);
            let pf: Vec<[f64; 3]> = idx.iter().map(|&i| p[i].0).collect();
            let gf: Vec<[f64; 3]> = idx.iter().map(|&i| g[i].0).collect();
            let (_, e) = scale_aligned_error(&pf, &gf)
                .ok_or_else(|| FootError::DegenerateInput("predicted foot markers coincide".into()))?;
            s += e;
        }
    }
    Ok(1000.0 * s / (2 * pred.len()) as f64)
}

/// Share of visible toe/heel keypoints within `threshold · b` of the ground
/// truth (boundary inclusive).
pub fn pck_f(
    pred: &[[[f64; 2]; NUM_MARKERS]],
    gt: &[[[f64; 2]; NUM_MARKERS]],
    bboxes: &[BBox],
    threshold: f64,
    visible: &[[bool; NUM_MARKERS]],
) -> Result<f64> {
    same_len("predicted vs ground-truth keypoint frames", pred.len(), gt.len())?;
    same_len("keypoint vs box frames", gt.len(), bboxes.len())?;
    same_len("keypoint vs visibility frames", gt.len(), visible.len())?;
    let (mut hit, mut n) = (0usize, 0usize);
    for t in 0..pred.len() {
        for &i in &TOE_HEEL_MARKERS {
            if !visible[t][i] {
                continue;
            }
            let d = ((pred[t][i][0] - gt[t][i][0]).powi(2) + (pred[t][i][1] - gt[t][i][1]).powi(2)).sqrt();
            n += 1;
            if d / bboxes[t].size <= threshold {
                hit += 1;
            }
        }
    }
    if n == 0 {
        return Err(FootError::NoVisibleKeypoints);
    }
    Ok(hit as f64 / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FkeResult {
    pub value: f64,
    pub feet_evaluated: usize,
    pub feet_skipped: usize,
}

/// Box-normalized, per-foot centered and scale-aligned 2D error of the
/// visible toe/heel keypoints. Feet with fewer than two visible keypoints
/// (or no extent) are skipped and counted.
pub fn n_fke_2d(
    pred: &[[[f64; 2]; NUM_MARKERS]],
    gt: &[[[f64; 2]; NUM_MARKERS]],
    bboxes: &[BBox],
    visible: &[[bool; NUM_MARKERS]],
) -> Result<FkeResult> {
    same_len("predicted vs ground-truth keypoint frames", pred.len(), gt.len())?;
    same_len("keypoint vs box frames", gt.len(), bboxes.len())?;
    same_len("keypoint vs visibility frames", gt.len(), visible.len())?;
    let mut s = 0.0;
    let (mut used, mut skipped) = (0usize, 0usize);
    for t in 0..pred.len() {
        for side in 0..2 {
            let idx: Vec<usize> = foot_markers(side).into_iter().filter(|&i| visible[t][i]).collect();
            if idx.len() < 2 {
                skipped += 1;
                continue;
            }
            let pf: Vec<[f64; 2]> = idx.iter().map(|&i| bboxes[t].normalize(pred[t][i])).collect();
            let gf: Vec<[f64; 2]> = idx.iter().map(|&i| bboxes[t].normalize(gt[t][i])).collect();
            match scale_aligned_error(&pf, &gf) {
                Some((_, e)) => {
                    s += e;
                    used += 1;
                }
                None => skipped += 1,
            }
        }
    }
    if used == 0 {
        return Err(FootError::NoVisibleKeypoints);
    }
    Ok(FkeResult {
        value: s / used as f64,
        feet_evaluated: used,
        feet_skipped: skipped,
    })
}

/// Mean error of second-difference accelerations of the toe/heel markers
/// over interior frames, m/s².
pub fn accel_f(pred: &[[Vec3; NUM_MARKERS]], gt: &[[Vec3; NUM_MARKERS]], fps: f64) -> Result<f64> {
    same_len("predicted vs ground-truth marker frames", pred.len(), gt.len())?;
    if pred.len() < 3 {
        return Err(FootError::SequenceTooShort { needed: 3, got: pred.len() });
    }
    let k = fps * fps;
    let accel = |x: &[[Vec3; NUM_MARKERS]], t: usize, i: usize| -> Vec3 {
        (x[t + 1][i] - x[t][i].scale(2.0) + x[t - 1][i]).scale(k)
    };
    let mut s = 0.0;
    for t in 1..pred.len() - 1 {
        for &i in &TOE_HEEL_MARKERS {
            s += (accel(pred, t, i) - accel(gt, t, i)).norm();
        }
    }
    Ok(s / ((pred.len() - 2) * TOE_HEEL_MARKERS.len()) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub name: String,
    pub frames: usize,
    pub ajae_deg: f64,
    pub n_mpjpe_f_mm: f64,
    pub pck_f: f64,
    pub n_fke_2d: f64,
    pub accel_f: f64,
    pub keypoints_evaluated: usize,
    pub feet_skipped: usize,
}

/// Camera-frame ankle rotations, 3D markers and projected markers of a
/// motion.
pub struct MotionSamples {
    pub ankles: Vec<[RotMat; 2]>,
    pub markers3d: Vec<[Vec3; NUM_MARKERS]>,
    pub markers2d: Vec<[[f64; 2]; NUM_MARKERS]>,
}

pub fn sample_motion(seq: &MotionSequence, skeleton: &Skeleton, cam: &CameraIntrinsics) -> Result<MotionSamples> {
    let mut out = MotionSamples {
        ankles: Vec::with_capacity(seq.len()),
        markers3d: Vec::with_capacity(seq.len()),
        markers2d: Vec::with_capacity(seq.len()),
    };
    for f in &seq.frames {
        let pose = forward_kinematics(skeleton, f)?;
        let m = foot_keypoints_3d(&pose, skeleton);
        let mut m2 = [[0.0; 2]; NUM_MARKERS];
        for (o, p) in m2.iter_mut().zip(&m) {
            *o = cam.project_point(p)?;
        }
        out.ankles
            .push(ANKLES.map(|a| RotMat::try_from_matrix(pose.global_rot[a]).expect("FK of rotations")));
        out.markers3d.push(m);
        out.markers2d.push(m2);
    }
    Ok(out)
}

/// All five metrics for one predicted sequence against ground truth. The
/// observation supplies the camera and the person boxes; every ground-truth
/// keypoint counts as visible.
pub fn evaluate_sequence(
    name: &str,
    pred: &MotionSequence,
    gt: &MotionSequence,
    obs: &ObservationSequence,
    skeleton: &Skeleton,
) -> Result<SequenceMetrics> {
    same_len("predicted vs ground-truth frames", pred.len(), gt.len())?;
    same_len("motion vs observation frames", gt.len(), obs.len())?;
    let p = sample_motion(pred, skeleton, &obs.camera)?;
    let g = sample_motion(gt, skeleton, &obs.camera)?;
    let bboxes: Vec<BBox> = obs.frames.iter().map(|f| f.bbox).collect();
    let visible = vec![[true; NUM_MARKERS]; gt.len()];
    let fke = n_fke_2d(&p.markers2d, &g.markers2d, &bboxes, &visible)?;
    Ok(SequenceMetrics {
        name: name.to_string(),
        frames: gt.len(),
        ajae_deg: ajae(&p.ankles, &g.ankles)?,
        n_mpjpe_f_mm: n_mpjpe_f(&p.markers3d, &g.markers3d)?,
        pck_f: pck_f(&p.markers2d, &g.markers2d, &bboxes, PCK_THRESHOLD, &visible)?,
        n_fke_2d: fke.value,
        accel_f: accel_f(&p.markers3d, &g.markers3d, gt.fps)?,
        keypoints_evaluated: gt.len() * TOE_HEEL_MARKERS.len(),
        feet_skipped: fke.feet_skipped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sequences: Vec<SequenceMetrics>,
    /// Frame-weighted mean over sequences.
    pub aggregate: SequenceMetrics,
}

pub const REPORT_CSV_HEADER: &str =
    "name,frames,ajae_deg,n_mpjpe_f_mm,pck_f,n_fke_2d,accel_f,keypoints_evaluated,feet_skipped";

impl EvalReport {
    pub fn new(sequences: Vec<SequenceMetrics>) -> Result<Self> {
        if sequences.is_empty() {
            return Err(FootError::EmptyInput("no sequences evaluated"));
        }
        let frames: usize = sequences.iter().map(|s| s.frames).sum();
        let w = |f: fn(&SequenceMetrics) -> f64| {
            sequences.iter().map(|s| f(s) * s.frames as f64).sum::<f64>() / frames as f64
        };
        let aggregate = SequenceMetrics {
            name: "all".into(),
            frames,
            ajae_deg: w(|s| s.ajae_deg),
            n_mpjpe_f_mm: w(|s| s.n_mpjpe_f_mm),
            pck_f: w(|s| s.pck_f),
            n_fke_2d: w(|s| s.n_fke_2d),
            accel_f: w(|s| s.accel_f),
            keypoints_evaluated: sequences.iter().map(|s| s.keypoints_evaluated).sum(),
            feet_skipped: sequences.iter().map(|s| s.feet_skipped).sum(),
        };
        Ok(Self { sequences, aggregate })
    }

    /// One row per sequence followed by the aggregate row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for s in self.sequences.iter().chain(std::iter::once(&self.aggregate)) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                s.name,
                s.frames,
                s.ajae_deg,
                s.n_mpjpe_f_mm,
                s.pck_f,
                s.n_fke_2d,
                s.accel_f,
                s.keypoints_evaluated,
                s.feet_skipped
            );
        }
        out
    }
}
