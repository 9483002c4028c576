//! JSON motion and observation files (`format_version` 1).
//!
//! Rotations are stored per joint as the 6D vector `[c1.x, c1.y, c1.z,
//! c2.x, c2.y, c2.z]`: the first two columns of the rotation matrix.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::{BBox, CameraIntrinsics, Keypoint};
use crate::error::{FootError, Result};
use crate::kinematics::{Frame, MotionSequence, Skeleton, NUM_MARKERS};
use crate::rotmath::Rot6D;
use crate::synth::{ObservationFrame, ObservationSequence};

pub const FORMAT_VERSION: u32 = 1;

/// Writes `bytes` to a temporary sibling of `path`, then renames it into
/// place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| FootError::Format(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| FootError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| FootError::io(&tmp, e))?;
    f.sync_all().map_err(|e| FootError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| FootError::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FootError::io(path, e))
}

fn check_version(v: u32, path: &Path) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(FootError::Format(format!(
            "{}: unsupported format_version {v} (expected {FORMAT_VERSION})",
            path.display()
        )));
    }
    Ok(())
}

fn parse_json<'a, T: Deserialize<'a>>(bytes: &'a [u8], path: &Path) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| FootError::Format(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SkeletonRef {
    Path { path: String },
    Inline(Skeleton),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionFrameRecord {
    pub rot6d: Vec<[f64; 6]>,
    pub trans: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionFile {
    pub format_version: u32,
    pub fps: f64,
    pub skeleton: SkeletonRef,
    pub frames: Vec<MotionFrameRecord>,
}

impl MotionFile {
    pub fn new(seq: &MotionSequence, skeleton: SkeletonRef) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            fps: seq.fps,
            skeleton,
            frames: seq
                .frames
                .iter()
                .map(|f| MotionFrameRecord {
                    rot6d: f.rel_rot.iter().map(|r| r.0).collect(),
                    trans: f.trans,
                })
                .collect(),
        }
    }

    pub fn sequence(&self) -> MotionSequence {
        MotionSequence {
            fps: self.fps,
            frames: self
                .frames
                .iter()
                .map(|f| Frame {
                    rel_rot: f.rot6d.iter().map(|r| Rot6D(*r)).collect(),
                    trans: f.trans,
                })
                .collect(),
        }
    }
}

/// Loaded motion file: the sequence and its resolved skeleton.
pub struct LoadedMotion {
    pub sequence: MotionSequence,
    pub skeleton: Skeleton,
    pub skeleton_ref: SkeletonRef,
}

pub fn read_skeleton(path: &Path) -> Result<Skeleton> {
    let s: Skeleton = parse_json(&read_bytes(path)?, path)?;
    s.validate().map_err(|e| FootError::Format(format!("{}: {e}", path.display())))?;
    Ok(s)
}

pub fn write_skeleton(path: &Path, skeleton: &Skeleton) -> Result<()> {
    write_atomic(path, &to_json(skeleton))
}

pub fn read_motion(path: &Path) -> Result<LoadedMotion> {
    let file: MotionFile = parse_json(&read_bytes(path)?, path)?;
    check_version(file.format_version, path)?;
    let skeleton = match &file.skeleton {
        SkeletonRef::Inline(s) => {
            s.validate()?;
            s.clone()
        }
        SkeletonRef::Path { path: rel } => {
            let base = path.parent().unwrap_or(Path::new("."));
            read_skeleton(&base.join(rel))?
        }
    };
    let sequence = file.sequence();
    sequence.validate().map_err(|e| FootError::Format(format!("{}: {e}", path.display())))?;
    Ok(LoadedMotion { sequence, skeleton, skeleton_ref: file.skeleton })
}

pub fn write_motion(path: &Path, seq: &MotionSequence, skeleton: SkeletonRef) -> Result<()> {
    write_atomic(path, &to_json(&MotionFile::new(seq, skeleton)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationFrameRecord {
    pub keypoints: Vec<[f64; 3]>,
    pub bbox: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationFile {
    pub format_version: u32,
    pub fps: f64,
    pub camera: CameraIntrinsics,
    pub frames: Vec<ObservationFrameRecord>,
}

impl ObservationFile {
    pub fn new(obs: &ObservationSequence) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            fps: obs.fps,
            camera: obs.camera,
            frames: obs
                .frames
                .iter()
                .map(|f| ObservationFrameRecord {
                    keypoints: f.keypoints.iter().map(|k| [k.u, k.v, k.conf]).collect(),
                    bbox: [f.bbox.center[0], f.bbox.center[1], f.bbox.size],
                })
                .collect(),
        }
    }

    pub fn sequence(&self) -> Result<ObservationSequence> {
        let mut frames = Vec::with_capacity(self.frames.len());
        for (t, f) in self.frames.iter().enumerate() {
            if f.keypoints.len() != NUM_MARKERS {
                return Err(FootError::Format(format!(
                    "frame {t}: expected {NUM_MARKERS} keypoints, got {}",
                    f.keypoints.len()
                )));
            }
            let keypoints = std::array::from_fn(|k| {
                let [u, v, conf] = f.keypoints[k];
                Keypoint { u, v, conf }
            });
            frames.push(ObservationFrame {
                keypoints,
                bbox: BBox { center: [f.bbox[0], f.bbox[1]], size: f.bbox[2] },
            });
        }
        let seq = ObservationSequence { fps: self.fps, camera: self.camera, frames };
        seq.validate()?;
        Ok(seq)
    }
}

pub fn read_observation(path: &Path) -> Result<ObservationSequence> {
    let file: ObservationFile = parse_json(&read_bytes(path)?, path)?;
    check_version(file.format_version, path)?;
    file.sequence().map_err(|e| match e {
        FootError::Format(m) => FootError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_observation(path: &Path, obs: &ObservationSequence) -> Result<()> {
    write_atomic(path, &to_json(&ObservationFile::new(obs)))
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write_atomic(path, &to_json(v))
}

pub fn read_json<T: for<'a> Deserialize<'a>>(path: &Path) -> Result<T> {
    parse_json(&read_bytes(path)?, path)
}

/// Dataset manifest written by `synth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub profile: String,
    pub config: String,
    pub sequences: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub motion: String,
    pub observation: String,
    pub initial: String,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path: PathBuf = dir.join(MANIFEST_NAME);
    let m: Manifest = read_json(&path)?;
    check_version(m.format_version, &path)?;
    Ok(m)
}
