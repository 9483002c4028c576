mod common;

use common::*;
use footlift_core::camera::*;
use footlift_core::kinematics::*;
use footlift_core::rotmath::*;
use footlift_core::synth::*;
use footlift_core::train::initial_ajae;
use footlift_core::FootError;

#[test]
fn projection_matches_pinhole_oracle() {
    let cam = CameraIntrinsics { f: 850.0, cx: 640.0, cy: 360.0, width: 1280.0, height: 720.0 };
    let s = Skeleton::default();
    let mut r = rng(30);
    for _ in 0..100 {
        let f = random_frame(&mut r);
        let proj = project_frame(&s, &f, &cam).unwrap();
        let rel: Vec<M3> = f.rel_rot.iter().map(|x| mat(&rot6d_to_rotmat(x).unwrap())).collect();
        for (k, m) in markers_recursive(&s, &rel, f.trans).into_iter().enumerate() {
            let want = project(&cam, m);
            assert!((proj.markers[k][0] - want[0]).abs() < 1e-9 && (proj.markers[k][1] - want[1]).abs() < 1e-9);
        }
    }
}

#[test]
fn hand_computed_projection() {
    let cam = CameraIntrinsics::default();
    // (0.3, −0.2, 2.5) → (960 + 1000·0.12, 540 − 1000·0.08)
    let p = cam.project_point(&Vec3::new(0.3, -0.2, 2.5)).unwrap();
    assert!((p[0] - 1080.0).abs() < 1e-9 && (p[1] - 460.0).abs() < 1e-9);
    assert!(matches!(cam.project_point(&Vec3::new(0.0, 0.0, -1.0)), Err(FootError::BehindCamera { .. })));
}

#[test]
fn bbox_normalization_round_trip() {
    let b = bbox_from_points(&[[100.0, 200.0], [300.0, 250.0]], 0.2).unwrap();
    assert_eq!(b.center, [200.0, 225.0]);
    assert!((b.size - 240.0).abs() < 1e-12);
    let kps = vec![Keypoint { u: 123.0, v: 456.0, conf: 0.7 }];
    let back = denormalize_keypoints(&normalize_keypoints(&kps, &b), &b);
    assert!((back[0].u - 123.0).abs() < 1e-12 && (back[0].v - 456.0).abs() < 1e-12);
    assert_eq!(back[0].conf, 0.7);
    // A single point still gets a positive box.
    assert!(bbox_from_points(&[[5.0, 5.0]], 0.0).unwrap().size >= MIN_BOX_SIDE);
    assert!(bbox_from_points(&[], 0.2).is_err());
}

#[test]
fn observation_noise_statistics() {
    let s = Skeleton::default();
    let seq = motion("everyday", 200, 31);
    let cam = CameraIntrinsics::default();
    let noise = NoiseConfig { kp_sigma_px: 4.0, drop_prob: 0.1, ..NoiseConfig::default() };
    let obs = synthesize_observations(&seq, &s, &cam, &noise, &mut rng(32)).unwrap();
    let (mut sq, mut n, mut dropped) = (0.0, 0.0, 0.0);
    for (t, f) in obs.frames.iter().enumerate() {
        let clean = project_frame(&s, &seq.frames[t], &cam).unwrap();
        for (k, kp) in f.keypoints.iter().enumerate() {
            sq += (kp.u - clean.markers[k][0]).powi(2) + (kp.v - clean.markers[k][1]).powi(2);
            n += 2.0;
            if !kp.visible() {
                dropped += 1.0;
            }
        }
    }
    let sd = (sq / n).sqrt();
    let rate = dropped / (n / 2.0);
    assert!((sd - 4.0).abs() < 0.2, "noise sd {sd}");
    // 1600 Bernoulli draws: standard error ≈ 0.0075.
    assert!((rate - 0.1).abs() < 0.03, "drop rate {rate}");
}

#[test]
fn noiseless_observations_are_exact() {
    let s = Skeleton::default();
    let seq = motion("complex-foot", 20, 33);
    let cam = CameraIntrinsics::default();
    let obs = synthesize_observations(&seq, &s, &cam, &NoiseConfig::noiseless(), &mut rng(1)).unwrap();
    for (t, f) in obs.frames.iter().enumerate() {
        let clean = project_frame(&s, &seq.frames[t], &cam).unwrap();
        for (k, kp) in f.keypoints.iter().enumerate() {
            assert_eq!([kp.u, kp.v], clean.markers[k]);
            assert!(kp.visible());
        }
        // The person box contains every keypoint.
        for kp in &f.keypoints {
            let [u, v] = f.bbox.normalize([kp.u, kp.v]);
            assert!(u.abs() <= 0.5 && v.abs() <= 0.5);
        }
    }
}

#[test]
fn examples_are_deterministic_per_seed() {
    let s = Skeleton::default();
    let seq = motion("everyday", 30, 34);
    let cam = CameraIntrinsics::default();
    let noise = NoiseConfig::default();
    let a = make_training_example(&seq, &s, &cam, &noise, true, &mut derived_rng(5, 2, 7)).unwrap();
    let b = make_training_example(&seq, &s, &cam, &noise, true, &mut derived_rng(5, 2, 7)).unwrap();
    let c = make_training_example(&seq, &s, &cam, &noise, true, &mut derived_rng(5, 3, 7)).unwrap();
    assert_eq!(a.observation, b.observation);
    assert_eq!(a.init_global_ankle, b.init_global_ankle);
    assert_ne!(a.observation, c.observation);
}

#[test]
fn derived_streams_are_independent_of_order() {
    use rand::RngCore;
    let first: Vec<u64> = (0..4).map(|i| derived_rng(9, i, 1).next_u64()).collect();
    let reversed: Vec<u64> = (0..4).rev().map(|i| derived_rng(9, i, 1).next_u64()).collect();
    assert_eq!(first, reversed.into_iter().rev().collect::<Vec<_>>());
    assert_ne!(derived_rng(9, 0, 1).next_u64(), derived_rng(9, 0, 2).next_u64());
}

#[test]
fn toggling_augmentation_keeps_estimator_noise() {
    // The augmentation rotation is drawn either way, so the estimator's
    // error in the body frame (Gᵀ·estimate) is the same.
    let s = Skeleton::default();
    let seq = motion("everyday", 25, 35);
    let cam = CameraIntrinsics::default();
    let noise = NoiseConfig::default();
    let on = make_training_example(&seq, &s, &cam, &noise, true, &mut derived_rng(1, 1, 1)).unwrap();
    let off = make_training_example(&seq, &s, &cam, &noise, false, &mut derived_rng(1, 1, 1)).unwrap();
    for t in 0..seq.len() {
        let g_on = on.gt_sequence.global_rotations(&s, t).unwrap();
        let g_off = off.gt_sequence.global_rotations(&s, t).unwrap();
        for side in 0..2 {
            let e_on = mm(&tr(&mat(&g_on[ANKLES[side]])), &mat(&rot6d_to_rotmat(&on.init_global_ankle[t][side]).unwrap()));
            let e_off = mm(&tr(&mat(&g_off[ANKLES[side]])), &mat(&rot6d_to_rotmat(&off.init_global_ankle[t][side]).unwrap()));
            assert!(max_diff(&e_on, &e_off) < 1e-9);
        }
    }
}

#[test]
fn initial_error_is_near_half_normal_mean() {
    // One bias of σ per sequence and joint, plus per-frame jitter of σ/4:
    // the mean angle sits slightly above σ·sqrt(2/π).
    let s = Skeleton::default();
    let cam = CameraIntrinsics::default();
    let noise = NoiseConfig::default();
    let n = 200;
    let mut total = 0.0;
    for i in 0..n {
        let seq = motion("everyday", 10, 100 + i);
        let ex = make_training_example(&seq, &s, &cam, &noise, true, &mut derived_rng(2, i, 0)).unwrap();
        total += initial_ajae(&ex).unwrap();
    }
    let mean = total / n as f64;
    let want = half_normal_mean(20.0);
    assert!(mean > want - 1.0 && mean < want + 2.5, "mean initial AJAE {mean} vs {want}");
}

#[test]
fn estimated_knees_replace_ground_truth_inputs() {
    let s = Skeleton::default();
    let seq = motion("everyday", 10, 36);
    let cam = CameraIntrinsics::default();
    let noise = NoiseConfig::default();
    let gt_k = make_example(&seq, &s, &cam, &noise, false, KneeSource::GroundTruth, &mut derived_rng(1, 0, 0)).unwrap();
    let est_k = make_example(&seq, &s, &cam, &noise, false, KneeSource::Estimated, &mut derived_rng(1, 0, 0)).unwrap();
    let g = seq.global_rotations(&s, 3).unwrap();
    assert_eq!(gt_k.input_knees(3), [g[L_KNEE], g[R_KNEE]]);
    assert!(geodesic_angle_deg(&est_k.input_knees(3)[0], &g[L_KNEE]) > 0.0);
    assert_eq!(gt_k.init_global_ankle, est_k.init_global_ankle);
}

#[test]
fn estimate_as_sequence_reproduces_estimated_globals() {
    let s = Skeleton::default();
    let seq = motion("everyday", 8, 37);
    let est = simulate_initial_estimate(&seq, &s, &NoiseConfig::default(), &mut rng(3)).unwrap();
    let out = estimate_as_sequence(&seq, &s, &est).unwrap();
    for t in 0..seq.len() {
        let g = out.global_rotations(&s, t).unwrap();
        for (k, j) in [L_KNEE, R_KNEE, L_ANKLE, R_ANKLE].into_iter().enumerate() {
            let want = rot6d_to_rotmat(&est[t][k]).unwrap();
            assert!(max_diff(&mat(&g[j]), &mat(&want)) < 1e-9);
        }
    }
}

#[test]
fn profiles_stay_in_front_of_the_camera() {
    let s = Skeleton::default();
    let cam = CameraIntrinsics::default();
    for name in PROFILE_NAMES {
        for i in 0..10 {
            let seq = motion(name, 60, 200 + i);
            seq.validate().unwrap();
            let aug = apply_root_augmentation(&seq, &random_rotation(&mut rng(i))).unwrap();
            for f in &aug.frames {
                project_frame(&s, f, &cam).unwrap();
            }
        }
    }
}

#[test]
fn complex_profile_moves_ankles_more() {
    let spread = |name: &str| {
        let mut total = 0.0;
        for i in 0..10 {
            let seq = motion(name, 90, 300 + i);
            for f in &seq.frames {
                let r = rot6d_to_rotmat(&f.rel_rot[L_ANKLE]).unwrap();
                total += r.angle_deg();
            }
        }
        total
    };
    assert!(spread("complex-foot") > 1.5 * spread("everyday"));
}
