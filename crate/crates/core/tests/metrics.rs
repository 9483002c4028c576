mod common;

use common::*;
use footlift_core::kinematics::{Skeleton, NUM_MARKERS};
use footlift_core::metrics::*;
use footlift_core::camera::BBox;
use footlift_core::rotmath::{compose, RotMat, Vec3};
use footlift_core::FootError;
use rand::Rng;

#[test]
fn all_metrics_match_loop_oracles() {
    let mut r = rng(20);
    for i in 0..100 {
        let c = metric_case(&mut r);
        let pm: Vec<[M3; 2]> = c.ankles_p.iter().map(|a| [mat(&a[0]), mat(&a[1])]).collect();
        let gm: Vec<[M3; 2]> = c.ankles_g.iter().map(|a| [mat(&a[0]), mat(&a[1])]).collect();
        assert!(close(ajae(&c.ankles_p, &c.ankles_g).unwrap(), ajae_loop(&pm, &gm)), "case {i} ajae");

        assert!(close(n_mpjpe_f(&c.p3, &c.g3).unwrap(), n_mpjpe_loop(&v3(&c.p3), &v3(&c.g3))), "case {i} n-mpjpe");

        let sizes: Vec<f64> = c.boxes.iter().map(|b| b.size).collect();
        let vis: Vec<Vec<bool>> = c.vis.iter().map(|v| v.to_vec()).collect();
        let pck = pck_f(&c.p2, &c.g2, &c.boxes, PCK_THRESHOLD, &c.vis).unwrap();
        assert!(close(pck, pck_loop(&v2(&c.p2), &v2(&c.g2), &sizes, PCK_THRESHOLD, &vis)), "case {i} pck");

        let boxes: Vec<[f64; 3]> = c.boxes.iter().map(|b| [b.center[0], b.center[1], b.size]).collect();
        let fke = n_fke_2d(&c.p2, &c.g2, &c.boxes, &c.vis).unwrap();
        assert!(close(fke.value, fke_loop(&v2(&c.p2), &v2(&c.g2), &boxes, &vis)), "case {i} fke");

        assert!(close(accel_f(&c.p3, &c.g3, c.fps).unwrap(), accel_loop(&v3(&c.p3), &v3(&c.g3), c.fps)), "case {i} accel");
    }
}

#[test]
fn scale_is_locally_optimal() {
    let mut r = rng(21);
    for _ in 0..100 {
        let n = r.random_range(2..6);
        let p: Vec<[f64; 3]> = (0..n).map(|_| std::array::from_fn(|_| r.random_range(-1.0..1.0))).collect();
        let g: Vec<[f64; 3]> = (0..n).map(|_| std::array::from_fn(|_| r.random_range(-1.0..1.0))).collect();
        let (s, e) = scale_aligned_error(&p, &g).unwrap();
        let center = |x: &[[f64; 3]]| {
            let m: [f64; 3] = std::array::from_fn(|k| x.iter().map(|v| v[k]).sum::<f64>() / x.len() as f64);
            x.iter().map(|v| std::array::from_fn(|k| v[k] - m[k])).collect::<Vec<[f64; 3]>>()
        };
        let (pc, gc) = (center(&p), center(&g));
        assert!((mean_error_at_scale(&pc, &gc, s) - e).abs() < 1e-12);
        // s is the least-squares scale, so the probe uses the squared error
        // it minimizes.
        let sq = |s: f64| -> f64 {
            pc.iter().zip(&gc).map(|(a, b)| (0..3).map(|i| (s * a[i] - b[i]).powi(2)).sum::<f64>()).sum()
        };
        for k in [0.99, 1.01] {
            assert!(sq(s * k) >= sq(s));
        }
    }
}

#[test]
fn doubled_prediction_has_zero_normalized_error() {
    let mut r = rng(22);
    let gt: Vec<[Vec3; NUM_MARKERS]> = (0..5)
        .map(|_| std::array::from_fn(|_| Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(2.0..4.0))))
        .collect();
    let pred: Vec<[Vec3; NUM_MARKERS]> = gt.iter().map(|f| f.map(|p| p.scale(2.0))).collect();
    assert!(n_mpjpe_f(&pred, &gt).unwrap() < 1e-9);
    // Un-normalized position error is large, so the normalization is what
    // removes it.
    assert!(accel_f(&pred, &gt, 30.0).unwrap() > 0.0);
}

#[test]
fn identical_inputs_are_perfect() {
    let mut r = rng(23);
    let c = metric_case(&mut r);
    assert!(ajae(&c.ankles_g, &c.ankles_g).unwrap() < 1e-6);
    assert_eq!(pck_f(&c.g2, &c.g2, &c.boxes, PCK_THRESHOLD, &c.vis).unwrap(), 1.0);
    assert!(n_fke_2d(&c.g2, &c.g2, &c.boxes, &c.vis).unwrap().value < 1e-12);
    assert_eq!(accel_f(&c.g3, &c.g3, 30.0).unwrap(), 0.0);
}

#[test]
fn pck_boundary_is_inclusive() {
    let gt = vec![[[0.0, 0.0]; NUM_MARKERS]];
    let mut pred = gt.clone();
    pred[0][0] = [5.0, 0.0];
    let boxes = vec![BBox { center: [0.0, 0.0], size: 100.0 }];
    let mut vis = vec![[false; NUM_MARKERS]];
    vis[0][0] = true;
    assert_eq!(pck_f(&pred, &gt, &boxes, 0.05, &vis).unwrap(), 1.0);
    assert_eq!(pck_f(&pred, &gt, &boxes, 0.0499, &vis).unwrap(), 0.0);
}

#[test]
fn ajae_known_angle() {
    let g = vec![[RotMat::identity(), RotMat::identity()]];
    let p = vec![[RotMat::rx_deg(10.0), compose(&RotMat::identity(), &RotMat::rz_deg(30.0))]];
    assert!((ajae(&p, &g).unwrap() - 20.0).abs() < 1e-9);
}

#[test]
fn degenerate_and_empty_inputs_are_reported() {
    assert!(matches!(ajae(&[], &[]), Err(FootError::EmptyInput(_))));
    let one = vec![[Vec3::zero(); NUM_MARKERS]; 2];
    assert!(matches!(accel_f(&one, &one, 30.0), Err(FootError::SequenceTooShort { .. })));
    assert!(matches!(n_mpjpe_f(&one, &one), Err(FootError::DegenerateInput(_))));
    let gt = vec![[[1.0, 2.0]; NUM_MARKERS]];
    let boxes = vec![BBox { center: [0.0, 0.0], size: 10.0 }];
    let none = vec![[false; NUM_MARKERS]];
    assert!(matches!(pck_f(&gt, &gt, &boxes, 0.05, &none), Err(FootError::NoVisibleKeypoints)));
    assert!(matches!(n_fke_2d(&gt, &gt, &boxes, &none), Err(FootError::NoVisibleKeypoints)));
}

#[test]
fn feet_with_one_visible_keypoint_are_skipped_and_counted() {
    let mut r = rng(24);
    let c = metric_case(&mut r);
    let mut vis = c.vis.clone();
    vis[0] = [true, false, false, true, true, true, true, true];
    let res = n_fke_2d(&c.p2, &c.g2, &c.boxes, &vis).unwrap();
    assert!(res.feet_skipped >= 1);
    assert_eq!(res.feet_evaluated + res.feet_skipped, 2 * c.p2.len());
}

#[test]
fn perfect_sequence_evaluates_to_zero_error() {
    use footlift_core::synth::{derived_rng, make_training_example, NoiseConfig};
    let s = Skeleton::default();
    let seq = motion("everyday", 20, 5);
    let ex = make_training_example(&seq, &s, &Default::default(), &NoiseConfig::noiseless(), true, &mut derived_rng(1, 0, 0)).unwrap();
    let m = evaluate_sequence("x", &ex.gt_sequence, &ex.gt_sequence, &ex.observation, &s).unwrap();
    assert!(m.ajae_deg < 1e-6);
    assert!(m.n_mpjpe_f_mm < 1e-9);
    assert_eq!(m.pck_f, 1.0);
    assert!(m.n_fke_2d < 1e-12);
    assert_eq!(m.accel_f, 0.0);
    let report = EvalReport::new(vec![m.clone(), m]).unwrap();
    assert_eq!(report.aggregate.frames, 40);
    let csv = report.to_csv();
    assert!(csv.starts_with(REPORT_CSV_HEADER));
    assert_eq!(csv.lines().count(), 4);
}
