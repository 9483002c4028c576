//! Rotation representations and SO(3) utilities.
//!
//! The 6D representation is the first two columns of a rotation matrix,
//! column-stacked: `[c1.x, c1.y, c1.z, c2.x, c2.y, c2.z]`. It is mapped back
//! to SO(3) with Gram-Schmidt.

use std::ops::{Add, Index, Mul, Sub};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{FootError, Result};
use crate::scalar::Real;

const NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<S = f64>(pub [S; 3]);

impl<S: Real> Vec3<S> {
    pub fn new(x: S, y: S, z: S) -> Self {
        Self([x, y, z])
    }

    pub fn zero() -> Self {
        Self([S::zero(); 3])
    }

    pub fn x(&self) -> S {
        self.0[0]
    }
    pub fn y(&self) -> S {
        self.0[1]
    }
    pub fn z(&self) -> S {
        self.0[2]
    }

    pub fn dot(&self, o: &Self) -> S {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn cross(&self, o: &Self) -> Self {
        let [a, b, c] = self.0;
        let [x, y, z] = o.0;
        Self([b * z - c * y, c * x - a * z, a * y - b * x])
    }

    pub fn norm(&self) -> S {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, k: S) -> Self {
        Self(self.0.map(|v| v * k))
    }

    pub fn from_f64(v: &Vec3<f64>) -> Self {
        Self(v.0.map(S::cst))
    }

    pub fn values(&self) -> Vec3<f64> {
        Vec3(self.0.map(|v| v.value()))
    }
}

impl<S: Real> Add for Vec3<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<S: Real> Sub for Vec3<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<S> Index<usize> for Vec3<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.0[i]
    }
}

/// Row-major 3×3 matrix, `m.0[row][col]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<S = f64>(pub [[S; 3]; 3]);

impl<S: Real> Mat3<S> {
    pub fn identity() -> Self {
        let (o, z) = (S::cst(1.0), S::zero());
        Self([[o, z, z], [z, o, z], [z, z, o]])
    }

    pub fn from_cols(c1: Vec3<S>, c2: Vec3<S>, c3: Vec3<S>) -> Self {
        Self([
            [c1.0[0], c2.0[0], c3.0[0]],
            [c1.0[1], c2.0[1], c3.0[1]],
            [c1.0[2], c2.0[2], c3.0[2]],
        ])
    }

    pub fn col(&self, c: usize) -> Vec3<S> {
        Vec3([self.0[0][c], self.0[1][c], self.0[2][c]])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Self([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul_vec(&self, v: &Vec3<S>) -> Vec3<S> {
        let m = &self.0;
        Vec3([
            m[0][0] * v.0[0] + m[0][1] * v.0[1] + m[0][2] * v.0[2],
            m[1][0] * v.0[0] + m[1][1] * v.0[1] + m[1][2] * v.0[2],
            m[2][0] * v.0[0] + m[2][1] * v.0[1] + m[2][2] * v.0[2],
        ])
    }

    pub fn trace(&self) -> S {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn determinant(&self) -> S {
        self.col(0).dot(&self.col(1).cross(&self.col(2)))
    }

    pub fn from_f64(m: &Mat3<f64>) -> Self {
        Self(m.0.map(|r| r.map(S::cst)))
    }

    pub fn values(&self) -> Mat3<f64> {
        Mat3(self.0.map(|r| r.map(|v| v.value())))
    }

    /// First two columns, stacked.
    pub fn to_6d(&self) -> [S; 6] {
        let (a, b) = (self.col(0), self.col(1));
        [a.0[0], a.0[1], a.0[2], b.0[0], b.0[1], b.0[2]]
    }
}

impl<S: Real> Mul for Mat3<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = [[S::zero(); 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.0[r][0] * o.0[0][c] + self.0[r][1] * o.0[1][c] + self.0[r][2] * o.0[2][c];
            }
        }
        Self(out)
    }
}

impl Mat3<f64> {
    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        let mut m: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                m = m.max((self.0[r][c] - o.0[r][c]).abs());
            }
        }
        m
    }

    /// Largest deviation of `MᵀM` from the identity, and of det from 1.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.transpose() * *self;
        g.max_abs_diff(&Mat3::identity()).max((self.determinant() - 1.0).abs())
    }
}

/// Gram-Schmidt map from any 6-vector to a rotation matrix.
pub fn gram_schmidt<S: Real>(r: &[S; 6]) -> Result<Mat3<S>> {
    let a = Vec3([r[0], r[1], r[2]]);
    let b = Vec3([r[3], r[4], r[5]]);
    let na = a.norm();
    if !(na.value() > NORM_FLOOR) {
        return Err(FootError::DegenerateInput(format!(
            "first 6D column has norm {:e}",
            na.value()
        )));
    }
    let c1 = a.scale(S::cst(1.0) / na);
    let proj = b - c1.scale(c1.dot(&b));
    let np = proj.norm();
    if !(np.value() > NORM_FLOOR) {
        return Err(FootError::DegenerateInput(format!(
            "6D columns are collinear (residual norm {:e})",
            np.value()
        )));
    }
    let c2 = proj.scale(S::cst(1.0) / np);
    let c3 = c1.cross(&c2);
    Ok(Mat3::from_cols(c1, c2, c3))
}

/// Continuous 6D rotation representation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rot6D(pub [f64; 6]);

impl Rot6D {
    pub const IDENTITY: Rot6D = Rot6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
}

/// A rotation matrix: orthonormal columns, determinant +1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotMat(Mat3<f64>);

pub const ROTMAT_TOL: f64 = 1e-9;

impl RotMat {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Validates orthonormality to [`ROTMAT_TOL`].
    pub fn try_from_matrix(m: Mat3<f64>) -> Result<Self> {
        let err = m.orthonormality_error();
        if !(err <= ROTMAT_TOL) {
            return Err(FootError::DegenerateInput(format!(
                "matrix is not a rotation (error {err:e})"
            )));
        }
        Ok(Self(m))
    }

    pub(crate) fn from_matrix_unchecked(m: Mat3<f64>) -> Self {
        debug_assert!(m.orthonormality_error() < 1e-6);
        Self(m)
    }

    pub fn matrix(&self) -> &Mat3<f64> {
        &self.0
    }

    /// Rodrigues' formula for the rotation vector `w` (radians).
    pub fn exp(w: &Vec3<f64>) -> Self {
        let theta = w.norm();
        if theta < 1e-300 {
            return Self::identity();
        }
        let k = w.scale(1.0 / theta);
        Self::from_axis_angle(&k, theta)
    }

    /// Rotation about unit `axis` by `angle` radians.
    pub fn from_axis_angle(axis: &Vec3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        let [x, y, z] = axis.scale(1.0 / n).0;
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Self(Mat3([
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]))
    }

    pub fn rx_deg(deg: f64) -> Self {
        Self::from_axis_angle(&Vec3::new(1.0, 0.0, 0.0), deg.to_radians())
    }
    pub fn ry_deg(deg: f64) -> Self {
        Self::from_axis_angle(&Vec3::new(0.0, 1.0, 0.0), deg.to_radians())
    }
    pub fn rz_deg(deg: f64) -> Self {
        Self::from_axis_angle(&Vec3::new(0.0, 0.0, 1.0), deg.to_radians())
    }

    /// Rotation angle in degrees, in [0, 180].
    pub fn angle_deg(&self) -> f64 {
        let c = ((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos().to_degrees()
    }

    /// Unit quaternion (w, x, y, z) to matrix.
    pub fn from_quaternion(q: [f64; 4]) -> Self {
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let [w, x, y, z] = q.map(|v| v / n);
        Self(Mat3([
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]))
    }
}

pub fn rot6d_to_rotmat(r: &Rot6D) -> Result<RotMat> {
    gram_schmidt(&r.0).map(RotMat)
}

pub fn rotmat_to_rot6d(r: &RotMat) -> Rot6D {
    Rot6D(r.0.to_6d())
}

pub fn compose(a: &RotMat, b: &RotMat) -> RotMat {
    RotMat::from_matrix_unchecked(a.0 * b.0)
}

pub fn inverse(r: &RotMat) -> RotMat {
    RotMat(r.0.transpose())
}

/// Geodesic distance on SO(3), in degrees.
pub fn geodesic_angle_deg(a: &RotMat, b: &RotMat) -> f64 {
    let c = (((a.0.transpose() * b.0).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

/// Haar-uniform rotation from a normalized Gaussian quaternion.
pub fn sample_uniform_rotation<R: Rng + ?Sized>(rng: &mut R) -> RotMat {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    RotMat::from_quaternion(q)
}

/// `R · exp(ω)` with `ω` along a uniformly random axis and `|ω|` drawn from
/// the half-normal `|N(0, σ²)|` (degrees).
pub fn perturb_rotation<R: Rng + ?Sized>(r: &RotMat, sigma_deg: f64, rng: &mut R) -> RotMat {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let g: f64 = StandardNormal.sample(rng);
    let angle = (g * sigma_deg).abs().to_radians();
    compose(r, &RotMat::from_axis_angle(&Vec3(axis), angle))
}
