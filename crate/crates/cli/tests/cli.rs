use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spin7(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spin7")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn shoot_into(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["shoot", "--k", "2", "--l", "1", "--orbit", "l", "--theta", "0.05", "--out", out];
    args.extend_from_slice(extra);
    spin7(&args)
}

#[test]
fn critical_points_exit_codes() {
    let ok = spin7(&["critical-points", "--k", "2", "--l", "1"]);
    assert_eq!(code(&ok), 0);
    assert!(stdout(&ok).contains("P_ALC"));
    for (k, l) in [("2", "2"), ("1", "1"), ("-1", "2"), ("0", "1")] {
        assert_eq!(code(&spin7(&["critical-points", "--k", k, "--l", l])), 2, "pair ({k}, {l})");
    }
    assert_eq!(code(&spin7(&["critical-points", "--k", "2"])), 2);
}

#[test]
fn shoot_writes_outputs_and_classifies() {
    let tmp = tempfile::tempdir().unwrap();
    let o = shoot_into(tmp.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("fate ALC"));
    assert!(tmp.path().join("trajectory.csv").is_file());
    assert!(tmp.path().join("manifest.txt").is_file());
}

#[test]
fn shoot_reports_fate_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&shoot_into(tmp.path(), &["--expect", "FiberBlowup"])), 4);
    assert_eq!(code(&shoot_into(tmp.path(), &["--expect", "alc"])), 0);
}

#[test]
fn shoot_rejects_bad_settings() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&shoot_into(tmp.path(), &["--rtol", "-1"])), 2);
    assert_eq!(code(&shoot_into(tmp.path(), &["--projection", "sideways"])), 2);
    let o = spin7(&["shoot", "--k", "2", "--l", "1", "--orbit", "m", "--theta", "0.1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&shoot_into(a.path(), &[])), 0);
    assert_eq!(code(&shoot_into(b.path(), &[])), 0);
    let ta = fs::read(a.path().join("trajectory.csv")).unwrap();
    let tb = fs::read(b.path().join("trajectory.csv")).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn manifest_replay_reproduces_trajectory() {
    let first = tempfile::tempdir().unwrap();
    let replay = tempfile::tempdir().unwrap();
    assert_eq!(code(&shoot_into(first.path(), &["--stride", "0.1", "--rtol", "1e-9"])), 0);
    let manifest = first.path().join("manifest.txt");
    let o = spin7(&[
        "shoot",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        replay.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = fs::read(first.path().join("trajectory.csv")).unwrap();
    let b = fs::read(replay.path().join("trajectory.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn reconstruct_reads_shoot_output() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&shoot_into(tmp.path(), &[])), 0);
    let csv = tmp.path().join("trajectory.csv");
    let prof = tmp.path().join("profile");
    let o = spin7(&[
        "reconstruct",
        "--input",
        csv.to_str().unwrap(),
        "--out",
        prof.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("kind: ALC"));
    let profile = fs::read_to_string(prof.join("profile.csv")).unwrap();
    assert!(profile.starts_with("t,a,b,c,f,trL"));
    assert!(prof.join("asymptotics.txt").is_file());
}

#[test]
fn reconstruct_rejects_garbage() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "not,a,trajectory\n1,2,3\n").unwrap();
    assert_eq!(code(&spin7(&["reconstruct", "--input", bad.to_str().unwrap()])), 2);
}

#[test]
fn sweep_finds_one_switch() {
    let tmp = tempfile::tempdir().unwrap();
    let o = spin7(&[
        "sweep",
        "--k",
        "2",
        "--l",
        "1",
        "--orbit",
        "k",
        "--points",
        "12",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("fate_switches 1"));
    let rows = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(rows.lines().filter(|l| !l.starts_with('#')).count(), 13);
}

#[test]
fn verify_small_suite() {
    let o = spin7(&["verify", "--suite", "polynomials", "--samples", "500"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 9);
    assert_eq!(code(&spin7(&["verify", "--suite", "nonsense"])), 2);
}

#[test]
fn bisect_locates_boundary() {
    let tmp = tempfile::tempdir().unwrap();
    let o = spin7(&[
        "bisect",
        "--k",
        "2",
        "--l",
        "1",
        "--orbit",
        "l",
        "--tol",
        "1e-6",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("target P_AC-"), "{text}");
    assert!(tmp.path().join("boundary.csv").is_file());
    assert!(tmp.path().join("manifest.txt").is_file());
}
