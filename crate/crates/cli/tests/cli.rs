use std::path::Path;
use std::process::Command;

use footlift_cli::commands::{eval, refine, synth, train};
use footlift_cli::error::{EXIT_DATA, EXIT_OK, EXIT_USAGE};
use footlift_cli::plot::{self, PlotArgs};
use footlift_cli::ConfigArgs;
use footlift_core::io::{read_manifest, read_motion};
use footlift_core::kinematics::ANKLES;
use footlift_core::metrics::evaluate_sequence;
use footlift_core::rotmath::geodesic_angle_deg;

fn sets(s: &[&str]) -> ConfigArgs {
    ConfigArgs { preset: None, config: None, sets: s.iter().map(|x| x.to_string()).collect() }
}

const SMALL: [&str; 2] = ["seed=3", "seq_len=30"];
const TINY_TRAIN: [&str; 10] = [
    "seed=3", "d_h=16", "layers=1", "heads=2", "window=4", "seq_len=30", "num_sequences=2", "val_sequences=1", "batch_size=2", "epochs=1",
];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_footlift"))
}

fn synth_into(dir: &Path, n: usize) {
    synth::run(&synth::SynthArgs { config: sets(&SMALL), out: dir.to_path_buf(), count: Some(n) }).unwrap();
}

#[test]
fn synth_writes_three_files_per_sequence_and_a_manifest() {
    let d = tempfile::tempdir().unwrap();
    synth_into(d.path(), 1);
    let mut names: Vec<String> = std::fs::read_dir(d.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["manifest.json", "seq0000.init.json", "seq0000.motion.json", "seq0000.obs.json"]);
    let m = read_manifest(d.path()).unwrap();
    assert_eq!(m.sequences.len(), 1);
    assert_eq!(read_motion(&d.path().join(&m.sequences[0].motion)).unwrap().sequence.len(), 30);
}

#[test]
fn synth_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth_into(a.path(), 2);
    synth_into(b.path(), 2);
    for e in std::fs::read_dir(a.path()).unwrap() {
        let name = e.unwrap().file_name();
        assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap());
    }
}

#[test]
fn fresh_checkpoint_refines_to_the_initial_estimate() {
    // lr 0 keeps the zero-initialized head, so residual_global returns the
    // initial ankles.
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("data");
    synth_into(&data, 1);
    let run = d.path().join("run");
    let mut cfg: Vec<&str> = TINY_TRAIN.to_vec();
    cfg.push("lr=0");
    train::run(&train::TrainArgs { config: sets(&cfg), out: run.clone(), data: None, resume: None, quiet: true }).unwrap();

    let out = d.path().join("refined");
    refine::run(&refine::RefineArgs {
        checkpoint: run.join(train::CHECKPOINT_NAME),
        observation: None,
        initial: None,
        out: None,
        data: Some(data.clone()),
        out_dir: Some(out.clone()),
    })
    .unwrap();
    let init = read_motion(&data.join("seq0000.init.json")).unwrap();
    let refined = read_motion(&out.join(refine::refined_name("seq0000"))).unwrap();
    for t in 0..init.sequence.len() {
        let gi = init.sequence.global_rotations(&init.skeleton, t).unwrap();
        let gr = refined.sequence.global_rotations(&refined.skeleton, t).unwrap();
        for a in ANKLES {
            assert!(geodesic_angle_deg(&gi[a], &gr[a]) < 1e-6, "frame {t}");
        }
        // Everything but the ankles is copied.
        for j in 0..init.sequence.frames[t].rel_rot.len() {
            if !ANKLES.contains(&j) {
                assert_eq!(init.sequence.frames[t].rel_rot[j], refined.sequence.frames[t].rel_rot[j]);
            }
        }
    }
}

#[test]
fn eval_of_ground_truth_is_perfect_and_matches_the_library() {
    let d = tempfile::tempdir().unwrap();
    synth_into(d.path(), 1);
    let gt = d.path().join("seq0000.motion.json");
    let obs = d.path().join("seq0000.obs.json");
    let prefix = d.path().join("report");
    let r = eval::run(&eval::EvalArgs {
        pred: Some(gt.clone()),
        gt: Some(gt.clone()),
        observation: Some(obs.clone()),
        data: None,
        pred_dir: None,
        initial: false,
        out: prefix.clone(),
    })
    .unwrap();
    let a = &r.aggregate;
    assert!(a.ajae_deg < 1e-6 && a.n_mpjpe_f_mm < 1e-9 && a.n_fke_2d < 1e-12 && a.accel_f < 1e-9);
    assert_eq!(a.pck_f, 1.0);
    for suffix in [".json", ".csv", ".frames.csv"] {
        assert!(Path::new(&format!("{}{suffix}", prefix.display())).exists());
    }

    // The initial estimate through the command equals the library call.
    let r = eval::run(&eval::EvalArgs {
        pred: None,
        gt: None,
        observation: None,
        data: Some(d.path().to_path_buf()),
        pred_dir: Some(d.path().to_path_buf()),
        initial: true,
        out: prefix,
    })
    .unwrap();
    let init = read_motion(&d.path().join("seq0000.init.json")).unwrap();
    let truth = read_motion(&gt).unwrap();
    let o = footlift_core::io::read_observation(&obs).unwrap();
    let want = evaluate_sequence("seq0000", &init.sequence, &truth.sequence, &o, &truth.skeleton).unwrap();
    assert_eq!(r.sequences[0], want);
    assert!(want.ajae_deg > 1.0);
}

#[test]
fn train_then_resume_extends_the_log() {
    let d = tempfile::tempdir().unwrap();
    let run = d.path().join("run");
    train::run(&train::TrainArgs { config: sets(&TINY_TRAIN), out: run.clone(), data: None, resume: None, quiet: true }).unwrap();
    let mut cfg: Vec<&str> = TINY_TRAIN.to_vec();
    cfg.push("epochs=2");
    let s = train::run(&train::TrainArgs {
        config: sets(&cfg),
        out: run.clone(),
        data: None,
        resume: Some(run.join(train::CHECKPOINT_NAME)),
        quiet: true,
    })
    .unwrap();
    assert_eq!(s.epochs, 2);
    let log = std::fs::read_to_string(run.join(train::LOG_NAME)).unwrap();
    let epochs: Vec<&str> = log.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["1", "2"]);
}

fn plot_args(input: &Path, out: &Path) -> PlotArgs {
    PlotArgs { input: input.to_path_buf(), out: out.to_path_buf(), x: None, y: vec![], group: None }
}

#[test]
fn plot_rejects_header_only_csv_naming_the_file() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("empty.csv");
    std::fs::write(&p, "epoch,loss\n").unwrap();
    let e = plot::run(&plot_args(&p, &d.path().join("o"))).unwrap_err();
    assert_eq!(e.exit_code(), EXIT_DATA);
    assert!(e.to_string().contains("empty.csv"), "{e}");
}

fn polyline_points(svg: &str) -> Vec<(f64, f64)> {
    let start = svg.find("points=\"").unwrap() + 8;
    let rest = &svg[start..];
    rest[..rest.find('"').unwrap()]
        .split(' ')
        .map(|p| {
            let (x, y) = p.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

#[test]
fn plot_of_decreasing_loss_is_monotone_and_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("log.csv");
    let rows: String = (1..=10).map(|e| format!("{e},{}\n", 100.0 / e as f64)).collect();
    std::fs::write(&p, format!("# comment\nepoch,loss\n{rows}")).unwrap();
    let out = d.path().join("plot");
    plot::run(&plot_args(&p, &out)).unwrap();
    let svg = std::fs::read_to_string(d.path().join("plot.svg")).unwrap();
    let pts = polyline_points(&svg);
    assert_eq!(pts.len(), 10);
    // SVG y grows downward, so a falling loss gives rising y.
    for w in pts.windows(2) {
        assert!(w[1].0 > w[0].0 && w[1].1 > w[0].1);
    }
    let tidy = std::fs::read_to_string(d.path().join("plot.csv")).unwrap();
    assert_eq!(tidy.lines().next(), Some(plot::TIDY_CSV_HEADER));
    assert_eq!(tidy.lines().count(), 11);

    plot::run(&plot_args(&p, &d.path().join("again"))).unwrap();
    assert_eq!(svg, std::fs::read_to_string(d.path().join("again.svg")).unwrap());
}

#[test]
fn binary_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let out = bin().args(["synth", "--out"]).arg(d.path().join("s")).args(["-n", "1", "--set", "seq_len=10"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin().args(["synth", "--out"]).arg(d.path()).args(["--set", "no_such_key=1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));

    let out = bin().args(["synth", "--out"]).arg(d.path()).args(["--set", "heads=3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));

    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));

    let out = bin().args(["refine", "--checkpoint"]).arg(d.path().join("missing.ckpt")).arg("--data").arg(d.path().join("s")).arg("--out-dir").arg(d.path().join("r")).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_DATA));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.ckpt"));
}
