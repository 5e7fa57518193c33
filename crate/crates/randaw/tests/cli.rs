//! The `randaw` binary: outputs, exit codes and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn randaw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_randaw")).args(args).env_remove("RANDAW_SOLVER_SETTINGS").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn bound_prints_the_sample_count() {
    let out = randaw(&["bound", "--eps", "0.01", "--delta", "1e-6", "--ntheta", "5"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "2819\n");
    let out = randaw(&["bound", "--eps", "0.01", "--delta", "1e-6", "--ntheta", "8", "--method", "explicit"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "3293\n");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");

    let missing = randaw(&["synth", "l2", "nominal", "--model", "/nonexistent.toml", "--s", "1", "--out", s(&out_dir)]);
    assert_eq!(missing.status.code(), Some(4));
    let bad_arg = randaw(&["bound", "--eps", "2", "--delta", "1e-6", "--ntheta", "5"]);
    assert_eq!(bad_arg.status.code(), Some(4));

    let fo = fixture("first_order.toml");
    let uncapped = randaw(&["synth", "doa", "nominal", "--model", s(&fo), "--no-cap", "--out", s(&out_dir)]);
    assert_eq!(uncapped.status.code(), Some(3), "{}", String::from_utf8_lossy(&uncapped.stderr));

    let unstable = dir.path().join("unstable.toml");
    let text = std::fs::read_to_string(&fo).unwrap().replace("nominal = -1.0", "nominal = 2.0");
    std::fs::write(&unstable, text).unwrap();
    let infeasible = randaw(&["synth", "l2", "nominal", "--model", s(&unstable), "--s", "10", "--out", s(&out_dir)]);
    assert_eq!(infeasible.status.code(), Some(2), "{}", String::from_utf8_lossy(&infeasible.stderr));
}

#[test]
fn bad_solver_settings_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let settings = dir.path().join("s.toml");
    std::fs::write(&settings, "[lmi]\nmargn = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_randaw"))
        .args(["synth", "l2", "nominal", "--model", s(&fixture("first_order.toml")), "--s", "1"])
        .args(["--out", s(&dir.path().join("o"))])
        .env("RANDAW_SOLVER_SETTINGS", &settings)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("margn"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let fo = fixture("first_order.toml");
    let run = |tag: &str| {
        let base = dir.path().join(tag);
        let synth = base.join("synth");
        let o = randaw(&[
            "synth",
            "reach",
            "swc",
            "--model",
            s(&fo),
            "--s",
            "1",
            "--samples",
            "30",
            "--seed",
            "5",
            "--audit",
            "20",
            "--out",
            s(&synth),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let design = synth.join("design.json");
        let o = randaw(&[
            "validate",
            "--model",
            s(&fo),
            "--design",
            s(&design),
            "--samples",
            "20",
            "--trials",
            "4",
            "--out",
            s(&base.join("validate")),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let o = randaw(&[
            "curve",
            "--model",
            s(&fo),
            "--design",
            s(&design),
            "--no-aw",
            "--grid",
            "log:0.1:10:4",
            "--mode",
            "swc",
            "--samples",
            "5",
            "--out",
            s(&base.join("curve")),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let o = randaw(&[
            "simulate",
            "--model",
            s(&fo),
            "--design",
            s(&design),
            "--no-aw",
            "--input",
            "random:1",
            "--tend",
            "5",
            "--dt",
            "0.01",
            "--samples",
            "2",
            "--out",
            s(&base.join("sim")),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        base
    };
    let (a, b) = (run("a"), run("b"));
    let files = [
        "synth/design.json",
        "synth/audit.json",
        "validate/validation.json",
        "curve/curve_synth.csv",
        "curve/curve_no_aw.csv",
        "sim/synth_sample_0.csv",
        "sim/no_aw_sample_nominal.csv",
        "sim/summary.json",
        "sim/synth_ellipse.csv",
    ];
    for f in files {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f} differs between runs");
    }
    // The manifest carries timestamps, so it is only checked for content.
    let manifest: serde_json::Value = serde_json::from_str(&read(&a.join("synth/manifest.json"))).unwrap();
    assert_eq!(manifest["n_theta"], 6);
    assert_eq!(manifest["seed"], 5);
}

#[test]
fn curve_table_marks_infeasible_levels() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve");
    let o =
        randaw(&["curve", "--model", s(&fixture("network.toml")), "--no-aw", "--grid", "0.001,1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(&out.join("curve_no_aw.csv"));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "s,gamma");
    assert!(lines[1].starts_with("0.001,") && !lines[1].ends_with("inf"));
    assert_eq!(lines[2], "1,inf");
}
