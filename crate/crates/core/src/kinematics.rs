//! Reduced lower-body kinematic tree and forward kinematics.
//!
//! Body-local axes: x forward, y to the subject's left, z up. The camera
//! frame is x right, y down, z forward.

use serde::{Deserialize, Serialize};

use crate::error::{FootError, Result};
use crate::rotmath::{
    compose, gram_schmidt, inverse, rot6d_to_rotmat, rotmat_to_rot6d, Mat3, Rot6D, RotMat, Vec3,
};
use crate::scalar::Real;

pub const NUM_JOINTS: usize = 9;
pub const NUM_MARKERS: usize = 8;

pub const PELVIS: usize = 0;
pub const L_HIP: usize = 1;
pub const R_HIP: usize = 2;
pub const L_KNEE: usize = 3;
pub const R_KNEE: usize = 4;
pub const L_ANKLE: usize = 5;
pub const R_ANKLE: usize = 6;
pub const L_FOOT: usize = 7;
pub const R_FOOT: usize = 8;

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis", "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle", "r_ankle", "l_foot", "r_foot",
];

pub const ANKLES: [usize; 2] = [L_ANKLE, R_ANKLE];
pub const KNEES: [usize; 2] = [L_KNEE, R_KNEE];

/// Marker order within one foot.
pub const MARKER_NAMES: [&str; 4] = ["big_toe", "small_toe", "heel", "ankle"];
/// Indices of the toe and heel markers among the 8 (ankle markers excluded).
pub const TOE_HEEL_MARKERS: [usize; 6] = [0, 1, 2, 4, 5, 6];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootMarkers {
    pub big_toe: [f64; 3],
    pub small_toe: [f64; 3],
    pub heel: [f64; 3],
    pub ankle: [f64; 3],
}

impl FootMarkers {
    pub fn offsets(&self) -> [[f64; 3]; 4] {
        [self.big_toe, self.small_toe, self.heel, self.ankle]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub joints: Vec<Joint>,
    pub left_foot: FootMarkers,
    pub right_foot: FootMarkers,
}

impl Default for Skeleton {
    fn default() -> Self {
        let j = |name: &str, parent: Option<usize>, offset: [f64; 3]| Joint {
            name: name.to_string(),
            parent,
            offset,
        };
        let foot = |side: f64| FootMarkers {
            big_toe: [0.19, 0.0, -0.04],
            small_toe: [0.15, 0.05 * side, -0.04],
            heel: [-0.06, 0.0, -0.04],
            ankle: [0.0, 0.0, 0.0],
        };
        Self {
            joints: vec![
                j("pelvis", None, [0.0, 0.0, 0.0]),
                j("l_hip", Some(PELVIS), [0.0, 0.10, 0.0]),
                j("r_hip", Some(PELVIS), [0.0, -0.10, 0.0]),
                j("l_knee", Some(L_HIP), [0.0, 0.0, -0.42]),
                j("r_knee", Some(R_HIP), [0.0, 0.0, -0.42]),
                j("l_ankle", Some(L_KNEE), [0.0, 0.0, -0.43]),
                j("r_ankle", Some(R_KNEE), [0.0, 0.0, -0.43]),
                j("l_foot", Some(L_ANKLE), [0.20, 0.0, 0.0]),
                j("r_foot", Some(R_ANKLE), [0.20, 0.0, 0.0]),
            ],
            left_foot: foot(1.0),
            right_foot: foot(-1.0),
        }
    }
}

impl Skeleton {
    pub fn validate(&self) -> Result<()> {
        if self.joints.len() != NUM_JOINTS {
            return Err(FootError::Format(format!(
                "skeleton needs {NUM_JOINTS} joints, got {}",
                self.joints.len()
            )));
        }
        for (i, (joint, want)) in self.joints.iter().zip(JOINT_NAMES).enumerate() {
            if joint.name != want {
                return Err(FootError::Format(format!(
                    "joint {i} must be {want}, got {}",
                    joint.name
                )));
            }
            match joint.parent {
                None if i == 0 => {}
                Some(p) if i > 0 && p < i => {}
                _ => {
                    return Err(FootError::Format(format!(
                        "joint {} has parent {:?}; parents must precede children and only the root has none",
                        joint.name, joint.parent
                    )))
                }
            }
            if joint.offset.iter().any(|v| !v.is_finite()) {
                return Err(FootError::Format(format!("joint {} offset is not finite", joint.name)));
            }
        }
        let markers = self.left_foot.offsets().into_iter().chain(self.right_foot.offsets());
        if markers.flatten().any(|v| !v.is_finite()) {
            return Err(FootError::Format("foot marker offsets must be finite".into()));
        }
        Ok(())
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.joints[joint].parent
    }

    pub fn markers(&self, side: usize) -> &FootMarkers {
        if side == 0 {
            &self.left_foot
        } else {
            &self.right_foot
        }
    }
}

/// Camera-frame orientation of an upright subject facing the camera.
pub fn upright_orientation() -> RotMat {
    RotMat::try_from_matrix(Mat3::from_cols(
        Vec3::new(0.0, 0.0, -1.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, -1.0, 0.0),
    ))
    .expect("constant is a rotation")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    /// Parent-relative rotations; the pelvis entry is the root orientation
    /// in the camera frame.
    pub rel_rot: Vec<Rot6D>,
    /// Root translation in camera space, meters.
    pub trans: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionSequence {
    pub fps: f64,
    pub frames: Vec<Frame>,
}

impl MotionSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(FootError::Format(format!("fps must be positive, got {}", self.fps)));
        }
        if self.frames.is_empty() {
            return Err(FootError::EmptyInput("motion sequence has no frames"));
        }
        for (t, f) in self.frames.iter().enumerate() {
            if f.rel_rot.len() != NUM_JOINTS {
                return Err(FootError::Format(format!(
                    "frame {t}: expected {NUM_JOINTS} rotations, got {}",
                    f.rel_rot.len()
                )));
            }
            if f.trans.iter().chain(f.rel_rot.iter().flat_map(|r| r.0.iter())).any(|v| !v.is_finite()) {
                return Err(FootError::Format(format!("frame {t}: non-finite value")));
            }
            for r in &f.rel_rot {
                rot6d_to_rotmat(r)?;
            }
        }
        Ok(())
    }

    /// Relative rotation matrices of frame `t`.
    pub fn rel_matrices(&self, t: usize) -> Result<Vec<RotMat>> {
        self.frames[t].rel_rot.iter().map(rot6d_to_rotmat).collect()
    }

    pub fn global_rotations(&self, skeleton: &Skeleton, t: usize) -> Result<Vec<RotMat>> {
        Ok(relative_to_global(skeleton, &self.rel_matrices(t)?))
    }
}

/// Global rotations and joint positions of one frame, camera frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseFK<S = f64> {
    pub global_rot: Vec<Mat3<S>>,
    pub joint_pos: Vec<Vec3<S>>,
}

/// Chain product along the tree: `R̄_i = R̄_parent · R_i`, root first.
pub fn relative_to_global(skeleton: &Skeleton, rel: &[RotMat]) -> Vec<RotMat> {
    let mats: Vec<Mat3> = rel.iter().map(|r| *r.matrix()).collect();
    global_chain(skeleton, &mats)
        .into_iter()
        .map(RotMat::from_matrix_unchecked)
        .collect()
}

/// [`relative_to_global`] over any scalar.
pub fn global_chain<S: Real>(skeleton: &Skeleton, rel: &[Mat3<S>]) -> Vec<Mat3<S>> {
    let mut out: Vec<Mat3<S>> = Vec::with_capacity(rel.len());
    for (i, r) in rel.iter().enumerate() {
        let g = match skeleton.parent(i) {
            None => *r,
            Some(p) => out[p] * *r,
        };
        out.push(g);
    }
    out
}

/// `parentᵀ · child`.
pub fn global_to_relative(global_child: &RotMat, global_parent: &RotMat) -> RotMat {
    compose(&inverse(global_parent), global_child)
}

/// Forward kinematics from relative rotation matrices over any scalar.
pub fn fk_from_matrices<S: Real>(skeleton: &Skeleton, rel: &[Mat3<S>], trans: Vec3<S>) -> PoseFK<S> {
    let global_rot = global_chain(skeleton, rel);
    let mut joint_pos: Vec<Vec3<S>> = Vec::with_capacity(rel.len());
    for joint in skeleton.joints.iter().take(rel.len()) {
        let p = match joint.parent {
            None => trans,
            Some(p) => {
                let off = Vec3::from_f64(&Vec3(joint.offset));
                joint_pos[p] + global_rot[p].mul_vec(&off)
            }
        };
        joint_pos.push(p);
    }
    PoseFK { global_rot, joint_pos }
}

pub fn forward_kinematics(skeleton: &Skeleton, frame: &Frame) -> Result<PoseFK> {
    let rel = frame
        .rel_rot
        .iter()
        .map(|r| gram_schmidt(&r.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(fk_from_matrices(skeleton, &rel, Vec3(frame.trans)))
}

/// The 8 foot markers: L big toe, L small toe, L heel, L ankle, then the
/// same for the right foot.
pub fn foot_keypoints_3d<S: Real>(pose: &PoseFK<S>, skeleton: &Skeleton) -> [Vec3<S>; NUM_MARKERS] {
    let mut out = [Vec3::zero(); NUM_MARKERS];
    for (side, &ankle) in ANKLES.iter().enumerate() {
        let rot = &pose.global_rot[ankle];
        let base = pose.joint_pos[ankle];
        for (k, off) in skeleton.markers(side).offsets().iter().enumerate() {
            out[4 * side + k] = base + rot.mul_vec(&Vec3::from_f64(&Vec3(*off)));
        }
    }
    out
}

/// Left-multiplies every frame's root orientation by `r`. Translations and
/// non-root rotations are untouched.
pub fn apply_root_augmentation(seq: &MotionSequence, r: &RotMat) -> Result<MotionSequence> {
    let mut out = seq.clone();
    for f in &mut out.frames {
        let root = rot6d_to_rotmat(&f.rel_rot[PELVIS])?;
        f.rel_rot[PELVIS] = rotmat_to_rot6d(&compose(r, &root));
    }
    Ok(out)
}
