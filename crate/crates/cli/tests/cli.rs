use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lacelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lacelab")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = lacelab(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

/// (key columns, estimate, stderr, n) per row
fn rows(path: &Path) -> Vec<(Vec<String>, f64, f64, u64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let nk = lines.next().unwrap().split(',').count() - 3;
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[..nk].iter().map(|s| s.to_string()).collect(),
                f[nk].parse().unwrap(),
                f[nk + 1].parse().unwrap(),
                f[nk + 2].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn line_two_point_matches_geometric_decay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["two-point", "--dim", "1", "--side", "129", "--p", "0.5", "--samples", "100000", "--seed", "7", "--out", out]);
    let r = rows(&dir.path().join("tau.csv"));
    let (_, mean, se, n) = r.iter().find(|r| r.0[1] == "3").unwrap().clone();
    assert_eq!(n, 100_000);
    assert!((mean - 0.25).abs() <= 3.0 * se, "{mean} +- {se}");
}

#[test]
fn oracle_enum_is_deterministic_and_exact() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&["oracle-enum", "--dim", "2", "--side", "4", "--p", "0.5", "--out", d.path().to_str().unwrap()]);
    }
    let ta = fs::read_to_string(a.path().join("tau.csv")).unwrap();
    assert_eq!(ta, fs::read_to_string(b.path().join("tau.csv")).unwrap());
    let r = rows(&a.path().join("tau.csv"));
    assert!(r.iter().all(|r| r.2 == 0.0));
    // nearest neighbours are always connected
    assert_eq!(r.iter().find(|r| r.0[1] == "1 0").unwrap().1, 1.0);
}

#[test]
fn bootstrap_f1_is_2dp() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "bootstrap-scan", "--dim", "13", "--side", "3", "--p-grid", "0.005:0.03:3", "--samples", "200", "--out",
        dir.path().to_str().unwrap(),
    ]);
    let r = rows(&dir.path().join("bootstrap.csv"));
    let f1: Vec<_> = r.iter().filter(|r| r.0[1] == "f1").collect();
    assert_eq!(f1.len(), 3);
    for row in f1 {
        let p: f64 = row.0[0].parse().unwrap();
        assert!((row.1 - 26.0 * p).abs() < 1e-12);
    }
}

#[test]
fn merged_halves_agree_with_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let path = |n: &str| tmp.path().join(n).to_str().unwrap().to_string();
    let base = ["two-point", "--dim", "2", "--side", "8", "--p", "0.4"];
    for (name, seed, samples) in [("a", "11", "4000"), ("b", "12", "4000"), ("full", "13", "8000")] {
        let out = path(name);
        let mut args = base.to_vec();
        args.extend(["--seed", seed, "--samples", samples, "--out", &out]);
        ok(&args);
    }
    ok(&["merge", &path("a"), &path("b"), "--out", &path("m")]);
    let merged = rows(&tmp.path().join("m/tau.csv"));
    let full = rows(&tmp.path().join("full/tau.csv"));
    for (m, f) in merged.iter().zip(&full) {
        assert_eq!(m.0, f.0);
        assert_eq!(m.3, 8000);
        let se = (m.2 * m.2 + f.2 * f.2).sqrt();
        assert!((m.1 - f.1).abs() <= 3.0 * se + 1e-12, "{m:?} vs {f:?}");
    }
    // mismatched configs refuse to pool
    ok(&["two-point", "--dim", "3", "--side", "4", "--samples", "100", "--out", &path("c")]);
    assert!(!lacelab(&["merge", &path("a"), &path("c"), "--out", &path("bad")]).status.success());
}

#[test]
fn csv_bodies_do_not_depend_on_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for threads in ["1", "4", "8"] {
        let out = tmp.path().join(threads);
        ok(&[
            "diagrams", "--dim", "3", "--side", "6", "--p", "0.2", "--samples", "400", "--seed", "5", "--threads",
            threads, "--out", out.to_str().unwrap(),
        ]);
        bodies.push(fs::read_to_string(out.join("diagrams.csv")).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
    assert_eq!(bodies[0], bodies[2]);
}

#[test]
fn usage_errors_name_fields() {
    let out = lacelab(&["two-point", "--side", "1", "--samples", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("side") && err.contains("samples"), "{err}");
}

#[test]
fn inconclusive_scan_exits_nonzero_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = lacelab(&[
        "pc-scan", "--dim", "2", "--range", "0.1:0.2", "--sizes", "6,8", "--points", "3", "--samples", "50",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let manifest = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("inconclusive"));
}

#[test]
fn output_root_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lacelab"))
        .args(["oracle-enum", "--dim", "1", "--side", "4", "--p", "0.3"])
        .env("LACELAB_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("oracle-enum/tau.csv").exists());
}
