use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cascade-opo"))
}

fn recipe(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("recipes").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "[system]\nchi2 = 0.25\ndrive = 0.5\ncutoff1 = 8\ncutoff2 = 8\n\
[run]\nt_end = 0.5\ndt = 0.005\nsample_every = 0.1\ntrajectories = 48\nseed = 5\n\
observables = [\"n\", \"g3\", \"pn\", \"wigner\"]\nwigner_radial = 10\nwigner_angular = 12\n";

#[test]
fn threshold_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("th");
    let o = run(&["threshold", "--config", recipe("fig4_below_threshold.toml").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("threshold drive"), "{stdout}");
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join("threshold.json")).unwrap()).unwrap();
    assert_eq!(v["report"]["verdict"], "stable");
    assert!(v["relative_difference"].as_f64().unwrap() < 0.01);
}

#[test]
fn config_errors_exit_2_and_name_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "[system]\ndrive = 1.0\ncutoff1 = 4\ncutoff2 = 4\ncolour = 3\n[pulses]\nmode = \"pulsed\"\nduration = 1.0\n[run]\nt_end = 1.0\ndt = 0.01\nsample_every = 0.5\n",
    );
    let o = run(&["simulate", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("pulses.tau") && err.contains("system.colour"), "{err}");

    let o = run(&["simulate", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let big = write(
        dir.path(),
        "big.toml",
        "[system]\ndrive = 0.1\ncutoff1 = 80\ncutoff2 = 60\n[run]\nengine = \"oracle\"\nt_end = 0.1\ndt = 0.01\nsample_every = 0.1\n",
    );
    let o = run(&["oracle", "--config", &big, "--out", dir.path().join("a").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));

    let tight = write(
        dir.path(),
        "tight.toml",
        "[system]\ndrive = 1.0\ncutoff1 = 2\ncutoff2 = 2\n[run]\nt_end = 2.0\ndt = 0.01\nsample_every = 0.5\ntrajectories = 4\n",
    );
    let o = run(&["simulate", "--config", &tight, "--out", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("truncation overflow"));
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_outputs_are_identical_across_workers_and_seed_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out, workers, seed) in [(&a, "1", "9"), (&b, "3", "9"), (&c, "1", "10")] {
        let o = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", workers, "--seed", seed]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (fa, fb, fc) = (files(&a), files(&b), files(&c));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["manifest.json", "pn.csv", "summary.json", "timeseries.csv", "wigner_0.csv", "wigner_0.json"]
    );
    assert_eq!(fa, fb);
    assert_ne!(fa[3], fc[3]);

    let m: Value = serde_json::from_slice(&fa[0].1).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(m["code_version"], env!("CARGO_PKG_VERSION"));
    assert!(m["config"]["toml"].as_str().unwrap().contains("seed = 9"));

    let ts = String::from_utf8_lossy(&fa[3].1).into_owned();
    let mut lines = ts.lines();
    assert_eq!(lines.next(), Some("t,n1,se_n1,n2,se_n2,g3,se_g3"));
    assert!(lines.all(|l| l.split(',').count() == 7));
}

#[test]
fn wigner_semiclassical_triplet_and_coupling_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let w = dir.path().join("w");
    let o = run(&["wigner", "--config", &cfg, "--out", w.to_str().unwrap()]);
    assert!(o.status.success());
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(w.join("wigner_0.json")).unwrap()).unwrap();
    assert!(meta["convention"].as_str().unwrap().contains("alpha"));
    assert!(meta["negativity"].as_f64().unwrap() >= 0.0);
    assert!(!w.join("timeseries.csv").exists());

    let sc = write(
        dir.path(),
        "sc.toml",
        "[system]\ndrive = 0.3\ncutoff1 = 4\ncutoff2 = 4\n[run]\nengine = \"semiclassical\"\nt_end = 1.0\ndt = 0.01\nsample_every = 0.5\ntrajectories = 64\nobservables = [\"n\"]\n",
    );
    let s = dir.path().join("s");
    let o = run(&["semiclassical", "--config", &sc, "--out", s.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(s.join("semiclassical.csv").exists());

    let t = dir.path().join("t");
    let o = run(&["triplet", "--out", t.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("reduced purity = 0.5"));

    let cp = write(dir.path(), "cp.toml", "[coupling]\ndelta_k = 3.14159\nsegments = [[1.0, 1.0], [1.0, -1.0]]\n");
    let c = dir.path().join("c");
    let o = run(&["coupling", "--config", &cp, "--out", c.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(c.join("coupling.json").exists());
}
