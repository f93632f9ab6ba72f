use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BASELINE: &str = "# baseline\np = 2\nN = 3\nm = 1\nq = 2\nalpha = 0\nbeta = 0\n";

fn lab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blowup-lab"))
        .args(args)
        .current_dir(dir)
        .env_remove("BLOWUP_LAB_SEED")
        .output()
        .unwrap()
}

fn config(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

/// Runs successfully and returns the manifest named on stdout.
fn manifest(out: &Output, dir: &Path) -> Value {
    assert!(
        out.status.success(),
        "status {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout.clone()).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 1, "stdout carries only the manifest path");
    let path = dir.join(PathBuf::from(lines[0]));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn params_baseline_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "base.cfg", BASELINE);
    let m = manifest(
        &lab(&["params", "--config", &cfg, "--out", "o"], tmp.path()),
        tmp.path(),
    );
    let e = &m["exponents"];
    assert_eq!(f(&e["delta"]), -1.0);
    assert_eq!(f(&e["alpha0"]), 3.0);
    assert_eq!(f(&e["beta0"]), 4.0);
    assert_eq!(f(&e["gamma0"]), 5.0);
    let c = &m["constants"];
    for (key, want) in [("lambda", 60.0), ("mu", 180.0), ("nu", 720.0)] {
        assert!((f(&c[key]) / want - 1.0).abs() < 1e-12, "{key}");
    }
    assert_eq!(m["regime"]["tag"], "BlowupBoth");

    let text = std::fs::read_to_string(tmp.path().join("o/manifest.json")).unwrap();
    let top = [
        "command",
        "config",
        "exponents",
        "constants",
        "regime",
        "R_hat",
        "verification",
        "equilibria",
        "files",
        "version",
        "timings",
    ];
    let positions: Vec<usize> = top
        .iter()
        .map(|k| text.find(&format!("\n  \"{k}\"")).unwrap())
        .collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]), "fixed key order");
    assert_eq!(m.as_object().unwrap().len(), top.len());
}

#[test]
fn delta_zero_and_parse_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "dz.cfg",
        "p = 2\nN = 3\nm = 1\nq = 1\nalpha = 0\nbeta = 0\n",
    );
    let out = lab(&["params", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("(p-1-alpha)(p-1-beta) - m*q"), "{err}");
    assert!(out.stdout.is_empty());

    let cfg = config(
        tmp.path(),
        "mq.cfg",
        "p = 2\nN = 3\nm = 1\nalpha = 0\nbeta = 0\n",
    );
    let out = lab(&["params", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5") && err.contains("`q`"), "{err}");

    let cfg = config(tmp.path(), "bad.cfg", "p = 2\nN = 3\nm = 0x1\n");
    let out = lab(&["params", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let cfg = config(
        tmp.path(),
        "dom.cfg",
        "p = 0.5\nN = 3\nm = 1\nq = 1\nalpha = 0\nbeta = 0\n",
    );
    assert_eq!(
        lab(&["params", "--config", &cfg], tmp.path()).status.code(),
        Some(2)
    );
    assert_eq!(lab(&["solve"], tmp.path()).status.code(), Some(2));
}

#[test]
fn solve_baseline_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "base.cfg", BASELINE);
    let m = manifest(
        &lab(&["solve", "--config", &cfg, "--out", "a"], tmp.path()),
        tmp.path(),
    );
    let beta0_hat = f(&m["verification"]["rate_fit"]["beta0_hat"]);
    assert!((beta0_hat - 4.0).abs() / 4.0 <= 0.02, "{beta0_hat}");
    assert!(f(&m["R_hat"]) > 0.0);
    assert!(f(&m["verification"]["distance_at_1e_6"]) <= 0.01);

    manifest(
        &lab(&["solve", "--config", &cfg, "--out", "b"], tmp.path()),
        tmp.path(),
    );
    for name in ["solution.csv", "abc.csv"] {
        let a = std::fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between runs");
    }
    let abc = std::fs::read_to_string(tmp.path().join("a/abc.csv")).unwrap();
    assert_eq!(abc.lines().next(), Some("r,a,b,c"));
    let sol = std::fs::read_to_string(tmp.path().join("a/solution.csv")).unwrap();
    assert_eq!(sol.lines().next(), Some("r,W,U,v,V,S"));
}

#[test]
fn solve_bounded_regime_exits_3() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "gb.cfg",
        "p = 2\nN = 3\nm = 1\nq = 0.5\nalpha = 0\nbeta = 0\n",
    );
    let out = lab(&["solve", "--config", &cfg, "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
}

#[test]
fn flow_baseline_spectrum_and_trajectories() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "base.cfg", BASELINE);
    let m = manifest(
        &lab(&["flow", "--config", &cfg, "--out", "o"], tmp.path()),
        tmp.path(),
    );
    let ev = m["equilibria"]["eigenvalues"][1].as_array().unwrap();
    let s = 71f64.sqrt() / 2.0;
    for want in [(1.0, 0.0), (-6.5, s), (-6.5, -s)] {
        let hit = ev
            .iter()
            .any(|z| (f(&z[0]) - want.0).abs() <= 1e-6 && (f(&z[1]) - want.1).abs() <= 1e-6);
        assert!(hit, "{want:?} not in {ev:?}");
    }
    let found = m["equilibria"]["found"].as_array().unwrap();
    assert_eq!(found.len(), 2);
    let non_auto = &m["verification"][1];
    assert!(f(&non_auto["max_component"]) < 1.0);
    assert!(f(&non_auto["min_component"]) > 0.0);
    let csv = std::fs::read_to_string(tmp.path().join("o/trajectory_nonautonomous.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,X,Y,Z"));

    let ones = config(
        tmp.path(),
        "ones.cfg",
        &format!("{BASELINE}flow_start = 1, 1, 1\n"),
    );
    let m = manifest(
        &lab(&["flow", "--config", &ones, "--out", "p"], tmp.path()),
        tmp.path(),
    );
    let auto = &m["verification"][0];
    assert_eq!(f(&auto["min_component"]), 1.0);
    assert_eq!(f(&auto["max_component"]), 1.0);
}

#[test]
fn flow_seed_comes_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "base.cfg", BASELINE);
    let run = |seed: &str, out: &str| {
        Command::new(env!("CARGO_BIN_EXE_blowup-lab"))
            .args(["flow", "--config", &cfg, "--out", out])
            .current_dir(tmp.path())
            .env("BLOWUP_LAB_SEED", seed)
            .output()
            .unwrap()
    };
    let m = manifest(&run("42", "o"), tmp.path());
    assert_eq!(m["equilibria"]["seed"], 42);
    assert_eq!(run("forty-two", "p").status.code(), Some(2));
}

#[test]
fn figures_cover_all_presets() {
    let tmp = TempDir::new().unwrap();
    let m = manifest(&lab(&["figures", "--out", "figs"], tmp.path()), tmp.path());
    let panels = m["verification"].as_array().unwrap();
    let labels: Vec<&str> = panels
        .iter()
        .map(|p| p["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["A", "B", "C-left", "C-right"]);
    for p in panels {
        assert_eq!(p["stand_in"], true);
        for x in p["terminal"].as_array().unwrap() {
            assert!((f(x) - 1.0).abs() <= 0.01);
        }
        let svg = std::fs::read_to_string(tmp.path().join("figs").join(p["svg"].as_str().unwrap()))
            .unwrap();
        assert!(svg.contains("stand-in"));
        for label in ["a(r)", "b(r)", "c(r)"] {
            assert!(svg.contains(label));
        }
        assert_eq!(svg.matches("<polyline").count(), 3);
    }

    let m = manifest(
        &lab(&["figures", "--preset", "A", "--out", "a"], tmp.path()),
        tmp.path(),
    );
    assert_eq!(m["verification"].as_array().unwrap().len(), 1);
    assert_eq!(
        lab(&["figures", "--preset", "D"], tmp.path()).status.code(),
        Some(2)
    );
}

fn sweep_rows(path: &Path) -> Vec<[f64; 3]> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("v0,R,v0*R^beta0"));
    lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect()
}

#[test]
fn sweep_scaling_law() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "base.cfg", BASELINE);
    let m = manifest(
        &lab(&["sweep", "--config", &cfg, "--out", "o"], tmp.path()),
        tmp.path(),
    );
    assert!(f(&m["verification"]["spread"]) <= 5e-3);
    assert_eq!(sweep_rows(&tmp.path().join("o/sweep.csv")).len(), 4);

    let m = manifest(
        &lab(
            &["sweep", "--config", &cfg, "--v0", "2", "--out", "one"],
            tmp.path(),
        ),
        tmp.path(),
    );
    assert_eq!(f(&m["verification"]["spread"]), 0.0);

    let desc = config(
        tmp.path(),
        "desc.cfg",
        &format!("{BASELINE}sweep_v0 = 8, 4, 2, 1, 0.5\n"),
    );
    let m = manifest(
        &lab(&["sweep", "--config", &desc, "--out", "d"], tmp.path()),
        tmp.path(),
    );
    assert_eq!(m["verification"]["r_monotone"], true);
    let rows = sweep_rows(&tmp.path().join("d/sweep.csv"));
    assert!(rows.windows(2).all(|w| w[1][1] > w[0][1]));
}

#[test]
fn config_echo_reparses() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "base.cfg",
        &format!("{BASELINE}v0 = 0.75\nrel_tol = 1e-11\n"),
    );
    manifest(
        &lab(&["params", "--config", &cfg, "--out", "o"], tmp.path()),
        tmp.path(),
    );
    let m = manifest(
        &lab(
            &["params", "--config", "o/config.txt", "--out", "o2"],
            tmp.path(),
        ),
        tmp.path(),
    );
    assert_eq!(f(&m["config"]["v0"]), 0.75);
    assert_eq!(f(&m["config"]["integrator"]["rel_tol"]), 1e-11);
    let a = std::fs::read(tmp.path().join("o/config.txt")).unwrap();
    let b = std::fs::read(tmp.path().join("o2/config.txt")).unwrap();
    assert_eq!(a, b);
}
