use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn fracdiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracdiff")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by signal")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_on_the_zero_datum_exits_zero_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("zero.toml");
    let before = std::fs::read(&cfg).unwrap();
    let o = fracdiff(&["verify", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("manifest.json").exists());
    assert!(dir.path().join("trajectory.csv").exists());
    assert_eq!(std::fs::read(&cfg).unwrap(), before, "config file was modified");
}

#[test]
fn kernels_prints_the_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracdiff(&[
        "kernels",
        "--config",
        path(&configs().join("kernels_sfl_025.toml")),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let printed: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let reports = printed.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["hypothesis"], "k1");
    assert_eq!(reports[1]["hypothesis"], "k2");
    assert!(reports.iter().all(|r| r["pass"] == true));
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("kernels.json")).unwrap()).unwrap();
    assert_eq!(written, printed);
}

#[test]
fn missing_config_exits_two() {
    let o = fracdiff(&["verify", "--config", "/nonexistent/fracdiff.toml"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&fracdiff(&["transmogrify"])), 2);
    assert_eq!(code(&fracdiff(&["verify", "--config", "x.toml", "--bogus"])), 2);
    assert_eq!(code(&fracdiff(&[])), 2);
    assert_eq!(code(&fracdiff(&["--help"])), 0);
}

#[test]
fn unknown_check_name_is_a_config_error() {
    let o = fracdiff(&["verify", "--config", path(&configs().join("zero.toml")), "--checks", "monotonicity,nope"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn numerical_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("standard.toml"))
        .unwrap()
        .replace("height = 10.0", "height = 1e6")
        .replace("dt = 1e-3", "dt = 1.0\nmax_newton_iters = 1\nmax_fixed_point_iters = 1\nmax_halvings = 0");
    let cfg = dir.path().join("starved.toml");
    std::fs::write(&cfg, text).unwrap();
    let o = fracdiff(&["verify", "--config", path(&cfg)]);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert_eq!(code(&o), 1, "{stderr}");
    assert!(stderr.contains("step"), "{stderr}");
}

#[test]
fn solve_sweep_and_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let solve = dir.path().join("solve");
    let o = fracdiff(&["solve", "--config", path(&configs().join("zero.toml")), "--out", path(&solve), "--quiet"]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    assert!(solve.join("trajectory.csv").exists());

    let sweep = dir.path().join("sweep");
    let o = fracdiff(&[
        "sweep",
        "--config",
        path(&configs().join("sweep_scale.toml")),
        "--out",
        path(&sweep),
        "--checks",
        "absolute_bounds",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("absolute_bounds            3/3"), "{stdout}");

    let plots = dir.path().join("plots");
    let o = fracdiff(&["plot", "--manifest", path(&sweep.join("manifest.json")), "--out", path(&plots)]);
    assert_eq!(code(&o), 0);
    for f in ["decay.svg", "decay.csv", "smoothing.svg", "kernels.svg"] {
        assert!(plots.join(f).exists(), "{f}");
    }
    let o = fracdiff(&["plot", "--manifest", path(&dir.path().join("missing.json"))]);
    assert_eq!(code(&o), 2);
}
