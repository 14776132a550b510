//! Smoke tests for the `headpose` binary.

use std::path::Path;
use std::process::{Command, Output};

fn headpose(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_headpose"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_pnp_on_synthesized_landmarks() {
    let dir = tempfile::tempdir().unwrap();
    let synth = headpose(
        &["synth-landmarks", "--out", "lm.txt", "--yaw", "-25", "--pitch", "15", "--roll", "5"],
        dir.path(),
    );
    assert!(synth.status.success());
    let export = headpose(&["export-face-model", "--out", "face.txt"], dir.path());
    assert!(export.status.success());

    let out = headpose(&["solve-pnp", "--landmarks", "lm.txt", "--model", "face.txt"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("yaw -25.000000"), "{text}");
    assert!(text.contains("pitch 15.000000"));
    assert!(text.contains("roll 5.000000"));
    assert!(text.contains("converged true"));
}

#[test]
fn study_writes_csv_and_svg_per_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = headpose(
        &["study-stretch", "--trials", "5", "--seed", "3", "--sweep", "0.8,1,1.2", "--out", "res"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("excluded trials: 0"));
    for name in ["stretch_width", "stretch_height"] {
        let csv = std::fs::read_to_string(dir.path().join(format!("res/{name}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("sweep,yaw_mae,pitch_mae,roll_mae,mae,trials\n"));
        assert!(dir.path().join(format!("res/{name}.svg")).exists());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = headpose(
            &["study-subset", "--trials", "20", "--seed", "9", "--out", out],
            dir.path(),
        );
        assert!(o.status.success());
    }
    let a = std::fs::read(dir.path().join("a/subset_subsets.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/subset_subsets.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn train_toy_saves_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = headpose(
        &["train-toy", "--out", "net.txt", "--train-scenes", "80", "--epochs", "2", "--hidden", "6"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let net = headpose::multiloss::load_toynet(&dir.path().join("net.txt")).unwrap();
    assert_eq!((net.input_dim(), net.hidden()), (136, 6));
}

#[test]
fn errors_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["solve-pnp", "--landmarks", "missing.txt"],
        &["study-jitter", "--trials", "0"],
        &["study-subset", "--subsets", "no-such-subset"],
        &["study-lowres", "--schemes", "x7"],
    ];
    for args in cases {
        let o = headpose(args, dir.path());
        assert!(!o.status.success(), "{args:?} succeeded");
        assert!(!o.stderr.is_empty(), "{args:?} printed no message");
    }
}
