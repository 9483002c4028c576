//! Pinhole projection, person boxes and box-relative normalization.

use serde::{Deserialize, Serialize};

use crate::error::{FootError, Result};
use crate::rotmath::Vec3;
use crate::scalar::Real;

const MIN_DEPTH: f64 = 1e-6;
/// Smallest box side before padding, pixels.
pub const MIN_BOX_SIDE: f64 = 1.0;
pub const DEFAULT_BOX_PAD: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            f: 1000.0,
            cx: 960.0,
            cy: 540.0,
            width: 1920.0,
            height: 1080.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.f, self.cx, self.cy, self.width, self.height]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.f <= 0.0 || self.width <= 0.0 || self.height <= 0.0 {
            return Err(FootError::Format(format!("invalid camera {self:?}")));
        }
        Ok(())
    }

    pub fn project_point<S: Real>(&self, p: &Vec3<S>) -> Result<[S; 2]> {
        let z = p.z();
        if !(z.value() > MIN_DEPTH) {
            return Err(FootError::BehindCamera { z: z.value() });
        }
        let inv = S::cst(self.f) / z;
        Ok([p.x() * inv + S::cst(self.cx), p.y() * inv + S::cst(self.cy)])
    }

    pub fn project(&self, points: &[Vec3]) -> Result<Vec<[f64; 2]>> {
        points.iter().map(|p| self.project_point(p)).collect()
    }
}

/// Square person box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub center: [f64; 2],
    pub size: f64,
}

impl BBox {
    pub fn validate(&self) -> Result<()> {
        if !(self.size > 0.0 && self.size.is_finite()) || self.center.iter().any(|v| !v.is_finite()) {
            return Err(FootError::Format(format!("invalid bbox {self:?}")));
        }
        Ok(())
    }

    pub fn normalize<S: Real>(&self, p: [S; 2]) -> [S; 2] {
        let inv = 1.0 / self.size;
        [
            (p[0] - S::cst(self.center[0])).scale(inv),
            (p[1] - S::cst(self.center[1])).scale(inv),
        ]
    }

    pub fn denormalize(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] * self.size + self.center[0], p[1] * self.size + self.center[1]]
    }
}

/// Square box centered on the tight extent of `points`, side
/// `max(extent, 1 px) · (1 + pad)`.
pub fn bbox_from_points(points: &[[f64; 2]], pad_fraction: f64) -> Result<BBox> {
    let first = points.first().ok_or(FootError::EmptyInput("bbox needs at least one point"))?;
    let (mut lo, mut hi) = (*first, *first);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(MIN_BOX_SIDE);
    Ok(BBox {
        center: [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0],
        size: extent * (1.0 + pad_fraction),
    })
}

/// A 2D keypoint in pixels with a confidence in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub u: f64,
    pub v: f64,
    pub conf: f64,
}

impl Keypoint {
    pub fn visible(&self) -> bool {
        self.conf > 0.0
    }
}

/// Box-relative coordinates `((u − cu)/b, (v − cv)/b)`; confidences pass
/// through unchanged.
pub fn normalize_keypoints(kps: &[Keypoint], bbox: &BBox) -> Vec<Keypoint> {
    kps.iter()
        .map(|k| {
            let [u, v] = bbox.normalize([k.u, k.v]);
            Keypoint { u, v, conf: k.conf }
        })
        .collect()
}

pub fn denormalize_keypoints(kps: &[Keypoint], bbox: &BBox) -> Vec<Keypoint> {
    kps.iter()
        .map(|k| {
            let [u, v] = bbox.denormalize([k.u, k.v]);
            Keypoint { u, v, conf: k.conf }
        })
        .collect()
}

/// Focal-normalized box center offset from the image center, and box scale.
pub fn bbox_features(bbox: &BBox, cam: &CameraIntrinsics) -> [f64; 3] {
    [
        (bbox.center[0] - cam.width / 2.0) / cam.f,
        (bbox.center[1] - cam.height / 2.0) / cam.f,
        bbox.size / cam.f,
    ]
}
