mod common;

use common::*;
use footlift_core::rotmath::*;
use footlift_core::FootError;
use proptest::prelude::*;

#[test]
fn rotmat_6d_round_trip() {
    let mut r = rng(1);
    for _ in 0..1000 {
        let m = random_rotation(&mut r);
        let back = rot6d_to_rotmat(&rotmat_to_rot6d(&m)).unwrap();
        assert!(max_diff(&mat(&m), &mat(&back)) < 1e-9);
    }
}

#[test]
fn rot6d_round_trip_from_orthonormal_columns() {
    let mut r = rng(2);
    for _ in 0..1000 {
        let six = rotmat_to_rot6d(&random_rotation(&mut r));
        let again = rotmat_to_rot6d(&rot6d_to_rotmat(&six).unwrap());
        for k in 0..6 {
            assert!((six.0[k] - again.0[k]).abs() < 1e-9);
        }
    }
}

#[test]
fn gram_schmidt_matches_naive_oracle_and_is_valid() {
    let mut r = rng(3);
    for _ in 0..10_000 {
        let six = random_6d(&mut r, 2.0);
        let m = match rot6d_to_rotmat(&six) {
            Ok(m) => m,
            Err(FootError::DegenerateInput(_)) => continue,
            Err(e) => panic!("{e}"),
        };
        assert!(m.matrix().orthonormality_error() < 1e-9);
        assert!((m.matrix().determinant() - 1.0).abs() < 1e-9);
        assert!(max_diff(&mat(&m), &gs(&six.0)) < 1e-12);
    }
}

#[test]
fn gram_schmidt_rejects_degenerate_inputs() {
    assert!(matches!(rot6d_to_rotmat(&Rot6D([0.0; 6])), Err(FootError::DegenerateInput(_))));
    assert!(matches!(
        rot6d_to_rotmat(&Rot6D([1.0, 2.0, 3.0, 2.0, 4.0, 6.0])),
        Err(FootError::DegenerateInput(_))
    ));
    assert!(rot6d_to_rotmat(&Rot6D([f64::NAN, 0.0, 0.0, 0.0, 1.0, 0.0])).is_err());
}

#[test]
fn try_from_matrix_rejects_non_rotations() {
    let mut m = *RotMat::identity().matrix();
    m.0[0][0] = 2.0;
    assert!(RotMat::try_from_matrix(m).is_err());
    let reflection = Mat3([[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    assert!(RotMat::try_from_matrix(reflection).is_err());
}

#[test]
fn axis_angle_matches_rodrigues_oracle() {
    let m = RotMat::from_axis_angle(&Vec3::new(1.0, 2.0, -0.5), 0.7);
    assert!(max_diff(&mat(&m), &axis_angle([1.0, 2.0, -0.5], 0.7)) < 1e-15);
    // 90° about z sends x to y.
    let z90 = RotMat::rz_deg(90.0);
    let v = z90.matrix().mul_vec(&Vec3::new(1.0, 0.0, 0.0));
    assert!((v.x()).abs() < 1e-15 && (v.y() - 1.0).abs() < 1e-15);
}

#[test]
fn quaternion_matches_axis_angle() {
    // q = (cos θ/2, sin θ/2 · n)
    let th: f64 = 1.1;
    let n = [0.0, 0.6, 0.8];
    let q = [(th / 2.0).cos(), (th / 2.0).sin() * n[0], (th / 2.0).sin() * n[1], (th / 2.0).sin() * n[2]];
    let m = RotMat::from_quaternion(q);
    assert!(max_diff(&mat(&m), &axis_angle(n, th)) < 1e-12);
}

#[test]
fn geodesic_known_values() {
    let a = RotMat::identity();
    assert_eq!(geodesic_angle_deg(&a, &a), 0.0);
    assert!((geodesic_angle_deg(&a, &RotMat::rx_deg(90.0)) - 90.0).abs() < 1e-9);
    assert!((geodesic_angle_deg(&a, &RotMat::ry_deg(180.0)) - 180.0).abs() < 1e-6);
}

#[test]
fn geodesic_is_bi_invariant_and_matches_oracle() {
    let mut r = rng(4);
    for _ in 0..1000 {
        let (a, b, g, h) = (random_rotation(&mut r), random_rotation(&mut r), random_rotation(&mut r), random_rotation(&mut r));
        let d = geodesic_angle_deg(&a, &b);
        let moved = geodesic_angle_deg(&compose(&compose(&g, &a), &h), &compose(&compose(&g, &b), &h));
        assert!((d - moved).abs() < 1e-7, "{d} vs {moved}");
        assert!((d - geodesic_deg(&mat(&a), &mat(&b))).abs() < 1e-9);
        assert!((d - geodesic_angle_deg(&b, &a)).abs() < 1e-9);
    }
}

#[test]
fn haar_sampler_mean_angle() {
    let want = haar_mean_angle_deg();
    assert!((want - 126.47).abs() < 0.01, "oracle {want}");
    let mut r = rng(5);
    let n = 10_000;
    let mean = (0..n).map(|_| random_rotation(&mut r).angle_deg()).sum::<f64>() / n as f64;
    assert!((mean - want).abs() < 2.0, "mean angle {mean}");
}

#[test]
fn haar_sampler_is_left_invariant_in_distribution() {
    // The mean angle of g·R must stay at the Haar value for a fixed g.
    let g = RotMat::rx_deg(40.0);
    let mut r = rng(6);
    let n = 10_000;
    let mean = (0..n)
        .map(|_| compose(&g, &random_rotation(&mut r)).angle_deg())
        .sum::<f64>()
        / n as f64;
    assert!((mean - haar_mean_angle_deg()).abs() < 2.0, "{mean}");
}

#[test]
fn perturbation_angle_is_half_normal() {
    let mut r = rng(7);
    let base = random_rotation(&mut r);
    let n = 10_000;
    let sigma = 20.0;
    let angles: Vec<f64> = (0..n)
        .map(|_| geodesic_angle_deg(&base, &perturb_rotation(&base, sigma, &mut r)))
        .collect();
    let mean = angles.iter().sum::<f64>() / n as f64;
    let want = half_normal_mean(sigma);
    // Standard error of the half-normal mean is σ·sqrt(1 − 2/π)/sqrt(n) ≈ 0.12°.
    assert!((mean - want).abs() < 0.6, "mean {mean} vs {want}");
    let rms = (angles.iter().map(|a| a * a).sum::<f64>() / n as f64).sqrt();
    assert!((rms - sigma).abs() < 0.6, "rms {rms}");
}

#[test]
fn zero_sigma_perturbation_is_identity() {
    let mut r = rng(8);
    let base = random_rotation(&mut r);
    let p = perturb_rotation(&base, 0.0, &mut r);
    assert!(max_diff(&mat(&base), &mat(&p)) < 1e-15);
}

proptest! {
    #[test]
    fn gram_schmidt_is_scale_invariant(v in prop::array::uniform6(-3.0f64..3.0), k in 0.1f64..10.0) {
        let a = rot6d_to_rotmat(&Rot6D(v));
        let b = rot6d_to_rotmat(&Rot6D(v.map(|x| x * k)));
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!(max_diff(&mat(&a), &mat(&b)) < 1e-9);
        }
    }

    #[test]
    fn compose_inverse_is_identity(q in prop::array::uniform4(-1.0f64..1.0)) {
        prop_assume!(q.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let r = RotMat::from_quaternion(q);
        let i = compose(&r, &inverse(&r));
        prop_assert!(max_diff(&mat(&i), &mat(&RotMat::identity())) < 1e-12);
    }

    #[test]
    fn exp_angle_matches_vector_norm(w in prop::array::uniform3(-1.5f64..1.5)) {
        let n = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        let r = RotMat::exp(&Vec3(w));
        prop_assert!((r.angle_deg() - n.to_degrees()).abs() < 1e-6);
    }
}
