use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rbfxfer::io::{read_field, read_points, FieldData};

fn xfer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xfer")).args(args).output().unwrap()
}

fn gen(kind: &str, grid: &str, out: &Path) {
    let o = xfer(&["gen", "--kind", kind, "--grid", grid, "--q", "1", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_writes_consistent_files() {
    let dir = tempfile::tempdir().unwrap();
    gen("twist", "3,4,2", dir.path());
    let pts = read_points(dir.path().join("points.csv")).unwrap();
    assert_eq!(pts.len(), 24);
    for name in ["displacement.csv", "tensor.csv"] {
        let f = read_field(dir.path().join(name)).unwrap();
        assert_eq!(f.len(), 24);
    }
    match read_field(dir.path().join("tensor.csv")).unwrap() {
        FieldData::Tensor(t) => assert!(t.iter().all(|t| (t.det() - 1.0).abs() < 1e-12)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn transfer_svd_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let (src, dst, out) = (dir.path().join("src"), dir.path().join("dst"), dir.path().join("out"));
    gen("stretch", "4,4,4", &src);
    gen("stretch", "5,5,5", &dst);
    let o = xfer(&[
        "transfer",
        "--src",
        s(&src.join("points.csv")),
        "--src-field",
        s(&src.join("tensor.csv")),
        "--dst",
        s(&dst.join("points.csv")),
        "--method",
        "rbf-f-svd",
        "--M",
        "2",
        "--alpha",
        "2.0",
        "--tol",
        "1e-10",
        "--threads",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let FieldData::Tensor(t) = read_field(out.join("field.csv")).unwrap() else {
        panic!("expected a tensor field");
    };
    assert_eq!(t.len(), 125);
    assert!(t.iter().all(|t| t.det() > 0.0));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["methods"][0]["name"], "rbf-f-svd");
    assert_eq!(report["methods"][0]["nonpositive_dets"], 0);
    let hist = fs::read_to_string(out.join("hist_rbf-f-svd.csv")).unwrap();
    let total: usize = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 125);
}

#[test]
fn nonpositive_det_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (src, dst, out) = (dir.path().join("src"), dir.path().join("dst"), dir.path().join("out"));
    gen("rotblend", "4,4,4", &src);
    gen("rotblend", "6,6,6", &dst);
    let o = xfer(&[
        "transfer",
        "--src",
        s(&src.join("points.csv")),
        "--src-field",
        s(&src.join("displacement.csv")),
        "--dst",
        s(&dst.join("points.csv")),
        "--method",
        "rbf-d",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("report.json").exists());
}

#[test]
fn svd_rejects_reflected_source_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    gen("stretch", "3,3,3", &src);
    let text = fs::read_to_string(src.join("tensor.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[5] = "-1.0,0.0,0.0,0.0,1.0,0.0,0.0,0.0,1.0".into();
    fs::write(src.join("tensor.csv"), lines.join("\n") + "\n").unwrap();
    let o = xfer(&[
        "transfer",
        "--src",
        s(&src.join("points.csv")),
        "--src-field",
        s(&src.join("tensor.csv")),
        "--dst",
        s(&src.join("points.csv")),
        "--method",
        "rbf-f-svd",
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_and_io_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(xfer(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(xfer(&["gen", "--kind", "stretch", "--grid", "2,2", "--out", s(dir.path())]).status.code(), Some(1));
    assert_eq!(xfer(&["gen", "--kind", "spiral", "--grid", "2,2,2", "--out", s(dir.path())]).status.code(), Some(1));
    let missing = dir.path().join("missing.csv");
    let o = xfer(&[
        "transfer",
        "--src",
        s(&missing),
        "--src-field",
        s(&missing),
        "--dst",
        s(&missing),
        "--method",
        "rbf-f-e",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = xfer(&["transfer", "--src", "a", "--src-field", "b", "--dst", "c", "--method", "nearest", "--out", "d"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_and_version_exit_with_zero() {
    assert_eq!(xfer(&["--help"]).status.code(), Some(0));
    assert_eq!(xfer(&["--version"]).status.code(), Some(0));
}

#[test]
fn run_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{
            "source": {"grid": {"min": [0, 0, 0], "max": [1, 1, 1], "cells": [4, 4, 4]}, "q": 1},
            "destination": {"grid": {"min": [0, 0, 0], "max": [1, 1, 1], "cells": [5, 5, 5]}, "q": 1},
            "field": {"kind": "shear", "k": 0.2},
            "methods": ["rbf-f-e", "rbf-f-svd"],
            "seed": 1
        }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = xfer(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["methods"].as_array().unwrap().len(), 2);
    for f in ["hist_source.csv", "hist_rbf-f-e.csv", "hist_rbf-f-svd.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn run_with_bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"bins": 0}"#).unwrap();
    assert_eq!(xfer(&["run", "--config", s(&cfg), "--out", s(dir.path())]).status.code(), Some(1));
    fs::write(&cfg, "not json").unwrap();
    assert_eq!(xfer(&["run", "--config", s(&cfg), "--out", s(dir.path())]).status.code(), Some(1));
}
