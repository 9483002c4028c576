#![allow(dead_code)]
// Independent reference implementations used as test oracles. They work on
// plain arrays with explicit loops and share no code with the library beyond
// the input types.

use footlift_core::camera::{BBox, CameraIntrinsics};
use footlift_core::kinematics::{Frame, MotionSequence, Skeleton, NUM_JOINTS, NUM_MARKERS};
use footlift_core::rotmath::{perturb_rotation, rotmat_to_rot6d, sample_uniform_rotation, Rot6D, RotMat, Vec3};
use footlift_core::synth::{derived_rng, generate_sequence, profile_by_name};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type M3 = [[f64; 3]; 3];
pub type V3 = [f64; 3];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mat(r: &RotMat) -> M3 {
    r.matrix().0
}

pub fn mm(a: &M3, b: &M3) -> M3 {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
        }
    }
    out
}

pub fn mv(a: &M3, v: &V3) -> V3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn tr(a: &M3) -> M3 {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = a[c][r];
        }
    }
    out
}

pub fn max_diff(a: &M3, b: &M3) -> f64 {
    let mut m: f64 = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            m = m.max((a[r][c] - b[r][c]).abs());
        }
    }
    m
}

/// Rotation angle from the trace, degrees.
pub fn angle_deg(a: &M3) -> f64 {
    let c = ((a[0][0] + a[1][1] + a[2][2] - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

pub fn geodesic_deg(a: &M3, b: &M3) -> f64 {
    angle_deg(&mm(&tr(a), b))
}

/// Rodrigues' formula.
pub fn axis_angle(axis: V3, angle: f64) -> M3 {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
    let (s, c) = angle.sin_cos();
    let k = 1.0 - c;
    [
        [c + x * x * k, x * y * k - z * s, x * z * k + y * s],
        [y * x * k + z * s, c + y * y * k, y * z * k - x * s],
        [z * x * k - y * s, z * y * k + x * s, c + z * z * k],
    ]
}

/// Naive Gram-Schmidt on the two 6D columns.
pub fn gs(r: &[f64; 6]) -> M3 {
    let a = [r[0], r[1], r[2]];
    let b = [r[3], r[4], r[5]];
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let b1 = [a[0] / na, a[1] / na, a[2] / na];
    let d = b1[0] * b[0] + b1[1] * b[1] + b1[2] * b[2];
    let u = [b[0] - d * b1[0], b[1] - d * b1[1], b[2] - d * b1[2]];
    let nu = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let b2 = [u[0] / nu, u[1] / nu, u[2] / nu];
    let b3 = [
        b1[1] * b2[2] - b1[2] * b2[1],
        b1[2] * b2[0] - b1[0] * b2[2],
        b1[0] * b2[1] - b1[1] * b2[0],
    ];
    [[b1[0], b2[0], b3[0]], [b1[1], b2[1], b3[1]], [b1[2], b2[2], b3[2]]]
}

/// Recursive forward kinematics: global rotation and position of joint `j`
/// computed by walking up to the root on every call.
pub fn fk_recursive(skeleton: &Skeleton, rel: &[M3], trans: V3, j: usize) -> (M3, V3) {
    match skeleton.joints[j].parent {
        None => (rel[j], trans),
        Some(p) => {
            let (gp, pp) = fk_recursive(skeleton, rel, trans, p);
            let off = mv(&gp, &skeleton.joints[j].offset);
            (mm(&gp, &rel[j]), [pp[0] + off[0], pp[1] + off[1], pp[2] + off[2]])
        }
    }
}

/// Markers of one frame via the recursive oracle, library marker order.
pub fn markers_recursive(skeleton: &Skeleton, rel: &[M3], trans: V3) -> Vec<V3> {
    let mut out = Vec::new();
    for (side, ankle) in [5usize, 6].into_iter().enumerate() {
        let (g, p) = fk_recursive(skeleton, rel, trans, ankle);
        let feet = if side == 0 { &skeleton.left_foot } else { &skeleton.right_foot };
        for off in [feet.big_toe, feet.small_toe, feet.heel, feet.ankle] {
            let o = mv(&g, &off);
            out.push([p[0] + o[0], p[1] + o[1], p[2] + o[2]]);
        }
    }
    out
}

/// Pinhole projection written out by hand.
pub fn project(cam: &CameraIntrinsics, p: V3) -> [f64; 2] {
    [cam.f * p[0] / p[2] + cam.cx, cam.f * p[1] / p[2] + cam.cy]
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> RotMat {
    sample_uniform_rotation(rng)
}

pub fn random_frame(rng: &mut ChaCha8Rng) -> Frame {
    Frame {
        rel_rot: (0..NUM_JOINTS).map(|_| rotmat_to_rot6d(&random_rotation(rng))).collect(),
        trans: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(2.0..6.0)],
    }
}

/// Random but non-orthonormal 6D vectors, as the network would emit.
pub fn random_6d(rng: &mut ChaCha8Rng, scale: f64) -> Rot6D {
    Rot6D(std::array::from_fn(|_| rng.random_range(-scale..scale)))
}

pub fn motion(profile: &str, len: usize, seed: u64) -> MotionSequence {
    let p = profile_by_name(profile).unwrap();
    generate_sequence(p.as_ref(), len, 30.0, &mut derived_rng(seed, 0, 99)).unwrap()
}

// Loop-based metric oracles, written from the metric definitions.

pub fn ajae_loop(pred: &[[M3; 2]], gt: &[[M3; 2]]) -> f64 {
    let mut s = 0.0;
    let mut n = 0.0;
    for t in 0..pred.len() {
        for k in 0..2 {
            s += geodesic_deg(&pred[t][k], &gt[t][k]);
            n += 1.0;
        }
    }
    s / n
}

/// Optimal-scale aligned mean distance of centered point sets, any
/// dimension. The scale minimizes the squared error, which has the closed
/// form ⟨p,g⟩/⟨p,p⟩.
pub fn aligned_error_loop(p: &[Vec<f64>], g: &[Vec<f64>]) -> f64 {
    let n = p.len();
    let d = p[0].len();
    let mut cp = vec![0.0; d];
    let mut cg = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            cp[k] += p[i][k];
            cg[k] += g[i][k];
        }
    }
    for k in 0..d {
        cp[k] /= n as f64;
        cg[k] /= n as f64;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for k in 0..d {
            num += (p[i][k] - cp[k]) * (g[i][k] - cg[k]);
            den += (p[i][k] - cp[k]) * (p[i][k] - cp[k]);
        }
    }
    let s = num / den;
    let mut e = 0.0;
    for i in 0..n {
        let mut q = 0.0;
        for k in 0..d {
            let r = s * (p[i][k] - cp[k]) - (g[i][k] - cg[k]);
            q += r * r;
        }
        e += q.sqrt();
    }
    e / n as f64
}

pub const TOE_HEEL: [[usize; 3]; 2] = [[0, 1, 2], [4, 5, 6]];

pub fn n_mpjpe_loop(pred: &[Vec<V3>], gt: &[Vec<V3>]) -> f64 {
    let mut s = 0.0;
    let mut n = 0.0;
    for t in 0..pred.len() {
        for foot in TOE_HEEL {
            let p: Vec<Vec<f64>> = foot.iter().map(|&i| pred[t][i].to_vec()).collect();
            let g: Vec<Vec<f64>> = foot.iter().map(|&i| gt[t][i].to_vec()).collect();
            s += aligned_error_loop(&p, &g);
            n += 1.0;
        }
    }
    1000.0 * s / n
}

pub fn pck_loop(pred: &[Vec<[f64; 2]>], gt: &[Vec<[f64; 2]>], sizes: &[f64], thr: f64, vis: &[Vec<bool>]) -> f64 {
    let mut hit = 0.0;
    let mut n = 0.0;
    for t in 0..pred.len() {
        for foot in TOE_HEEL {
            for i in foot {
                if !vis[t][i] {
                    continue;
                }
                let du = pred[t][i][0] - gt[t][i][0];
                let dv = pred[t][i][1] - gt[t][i][1];
                n += 1.0;
                if (du * du + dv * dv).sqrt() <= thr * sizes[t] {
                    hit += 1.0;
                }
            }
        }
    }
    hit / n
}

/// Boxes as (center u, center v, side).
pub fn fke_loop(pred: &[Vec<[f64; 2]>], gt: &[Vec<[f64; 2]>], boxes: &[[f64; 3]], vis: &[Vec<bool>]) -> f64 {
    let norm = |p: [f64; 2], b: [f64; 3]| vec![(p[0] - b[0]) / b[2], (p[1] - b[1]) / b[2]];
    let mut s = 0.0;
    let mut n = 0.0;
    for t in 0..pred.len() {
        for foot in TOE_HEEL {
            let idx: Vec<usize> = foot.into_iter().filter(|&i| vis[t][i]).collect();
            if idx.len() < 2 {
                continue;
            }
            let p: Vec<Vec<f64>> = idx.iter().map(|&i| norm(pred[t][i], boxes[t])).collect();
            let g: Vec<Vec<f64>> = idx.iter().map(|&i| norm(gt[t][i], boxes[t])).collect();
            s += aligned_error_loop(&p, &g);
            n += 1.0;
        }
    }
    s / n
}

pub fn accel_loop(pred: &[Vec<V3>], gt: &[Vec<V3>], fps: f64) -> f64 {
    let mut s = 0.0;
    let mut n = 0.0;
    for t in 1..pred.len() - 1 {
        for foot in TOE_HEEL {
            for i in foot {
                let mut q = 0.0;
                for k in 0..3 {
                    let ap = (pred[t + 1][i][k] - 2.0 * pred[t][i][k] + pred[t - 1][i][k]) * fps * fps;
                    let ag = (gt[t + 1][i][k] - 2.0 * gt[t][i][k] + gt[t - 1][i][k]) * fps * fps;
                    q += (ap - ag) * (ap - ag);
                }
                s += q.sqrt();
                n += 1.0;
            }
        }
    }
    s / n
}

/// Mean of the Haar angle density `(1 − cos θ)/π` on `[0, π]`, degrees, by
/// composite Simpson integration.
pub fn haar_mean_angle_deg() -> f64 {
    let n = 10_000;
    let h = std::f64::consts::PI / n as f64;
    let f = |x: f64| x * (1.0 - x.cos()) / std::f64::consts::PI;
    let mut s = f(0.0) + f(std::f64::consts::PI);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    (s * h / 3.0).to_degrees()
}

/// Mean of |N(0, σ²)|.
pub fn half_normal_mean(sigma: f64) -> f64 {
    sigma * (2.0 / std::f64::consts::PI).sqrt()
}

/// Random prediction/ground-truth pair for the metric oracles.
pub struct MetricCase {
    pub ankles_p: Vec<[RotMat; 2]>,
    pub ankles_g: Vec<[RotMat; 2]>,
    pub p3: Vec<[Vec3; NUM_MARKERS]>,
    pub g3: Vec<[Vec3; NUM_MARKERS]>,
    pub p2: Vec<[[f64; 2]; NUM_MARKERS]>,
    pub g2: Vec<[[f64; 2]; NUM_MARKERS]>,
    pub boxes: Vec<BBox>,
    pub vis: Vec<[bool; NUM_MARKERS]>,
    pub fps: f64,
}

pub fn metric_case(r: &mut ChaCha8Rng) -> MetricCase {
    let len = r.random_range(3..12);
    let pt3 = |r: &mut ChaCha8Rng| Vec3::new(r.random_range(-0.5..0.5), r.random_range(-0.5..0.5), r.random_range(2.0..4.0));
    let mut c = MetricCase {
        ankles_p: vec![],
        ankles_g: vec![],
        p3: vec![],
        g3: vec![],
        p2: vec![],
        g2: vec![],
        boxes: vec![],
        vis: vec![],
        fps: r.random_range(10.0..60.0),
    };
    for _ in 0..len {
        let g = [random_rotation(r), random_rotation(r)];
        let p = [perturb_rotation(&g[0], 30.0, r), perturb_rotation(&g[1], 30.0, r)];
        c.ankles_g.push(g);
        c.ankles_p.push(p);
        let g3: [Vec3; NUM_MARKERS] = std::array::from_fn(|_| pt3(r));
        let p3: [Vec3; NUM_MARKERS] = std::array::from_fn(|i| {
            g3[i] + Vec3::new(r.random_range(-0.05..0.05), r.random_range(-0.05..0.05), r.random_range(-0.05..0.05))
        });
        c.g3.push(g3);
        c.p3.push(p3);
        let g2: [[f64; 2]; NUM_MARKERS] = std::array::from_fn(|_| [r.random_range(0.0..1920.0), r.random_range(0.0..1080.0)]);
        let p2: [[f64; 2]; NUM_MARKERS] =
            std::array::from_fn(|i| [g2[i][0] + r.random_range(-40.0..40.0), g2[i][1] + r.random_range(-40.0..40.0)]);
        c.g2.push(g2);
        c.p2.push(p2);
        c.boxes.push(BBox { center: [r.random_range(500.0..1500.0), r.random_range(300.0..800.0)], size: r.random_range(200.0..900.0) });
        let mut v: [bool; NUM_MARKERS] = std::array::from_fn(|_| r.random_bool(0.8));
        v[0] = true;
        c.vis.push(v);
    }
    c
}

pub fn v3(x: &[[Vec3; NUM_MARKERS]]) -> Vec<Vec<V3>> {
    x.iter().map(|f| f.iter().map(|p| p.0).collect()).collect()
}

pub fn v2(x: &[[[f64; 2]; NUM_MARKERS]]) -> Vec<Vec<[f64; 2]>> {
    x.iter().map(|f| f.to_vec()).collect()
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + b.abs())
}
