use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};

fn qdom() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qdom"))
}

fn run_config(cfg: &Value, out: &Path) -> (i32, String) {
    let path = out.with_extension("json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    let o = qdom()
        .arg("run")
        .arg(&path)
        .env("QDOM_OUT", out)
        .output()
        .unwrap();
    (
        o.status.code().unwrap(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn far_pair() -> Value {
    json!({
        "task": "two-phase",
        "grid": {"n": 2, "origin": [-3.5, -2.0], "extent": [7.0, 4.0], "cells": [224, 128]},
        "phases": [
            {"label": "plus", "k": 0.5, "atoms": [{"point": [1.6, 0.0], "mass": 2.5}], "mollify_radius": 0.2},
            {"label": "minus", "k": 0.5, "atoms": [{"point": [-1.6, 0.0], "mass": 2.5}], "mollify_radius": 0.2}
        ]
    })
}

fn read_pgm(path: &Path) -> (usize, usize, Vec<u8>) {
    let bytes = std::fs::read(path).unwrap();
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(String::from_utf8(bytes[start..pos].to_vec()).unwrap());
    }
    assert_eq!(fields[0], "P5");
    let (w, h): (usize, usize) = (fields[1].parse().unwrap(), fields[2].parse().unwrap());
    assert_eq!(fields[3], "255");
    let data = bytes[pos + 1..].to_vec();
    assert_eq!(data.len(), w * h);
    (w, h, data)
}

#[test]
fn version_prints() {
    let o = qdom().arg("version").output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("qdom "));
}

#[test]
fn malformed_json_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{ \"task\": ").unwrap();
    let o = qdom()
        .arg("run")
        .arg(&p)
        .env("QDOM_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = far_pair();
    cfg["colour"] = json!("blue");
    let (code, _) = run_config(&cfg, &dir.path().join("out"));
    assert_eq!(code, 2);
}

#[test]
fn far_pair_passes_and_writes_masks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("far");
    let (code, err) = run_config(&far_pair(), &out);
    assert_eq!(code, 0, "{err}");
    for f in [
        "d_plus.csv",
        "d_minus.qdr",
        "phases.pgm",
        "u.csv",
        "report.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let r = report(&out);
    assert_eq!(r["status"], "pass");
    assert!(r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"] == true));
    // sign field of the two-phase solution renders with three gray levels
    let (_, _, data) = read_pgm(&out.join("phases.pgm"));
    let mut levels: Vec<u8> = data.clone();
    levels.sort();
    levels.dedup();
    assert_eq!(levels, vec![0, 128, 255]);
}

#[test]
fn wavenumber_above_box_eigenvalue_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("hot");
    let mut cfg = far_pair();
    cfg["phases"][0]["k"] = json!(3.0);
    cfg["phases"][1]["k"] = json!(3.0);
    cfg["options"] = json!({"method": "balayage"});
    let (code, err) = run_config(&cfg, &out);
    assert_eq!(code, 3);
    assert!(err.contains("first Dirichlet eigenvalue"), "{err}");
    let r = report(&out);
    assert_eq!(r["status"], "error");
    assert_eq!(r["error"]["class"], "hypothesis");
}

#[test]
fn render_constant_field_is_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let g = qdom_core::Grid::centered(2, 1.0, 24).unwrap();
    let f = qdom_core::ScalarField::constant(g, 2.5);
    let src = dir.path().join("c.qdr");
    qdom_core::io::write_raster_file(&f, &src).unwrap();
    let img = dir.path().join("c.pgm");
    let o = qdom().arg("render").arg(&src).arg(&img).output().unwrap();
    assert!(o.status.success());
    let (w, h, data) = read_pgm(&img);
    assert_eq!((w, h), (24, 24));
    assert!(data.iter().all(|&b| b == data[0]));
}

#[test]
fn render_3d_writes_three_slices() {
    let dir = tempfile::tempdir().unwrap();
    let g = qdom_core::Grid::centered(3, 1.0, 16).unwrap();
    let f = qdom_core::ScalarField::from_fn(g, |x| x[0] + 2.0 * x[1] - x[2]);
    let src = dir.path().join("f.qdr");
    qdom_core::io::write_raster_file(&f, &src).unwrap();
    let o = qdom()
        .arg("render")
        .arg(&src)
        .arg(dir.path().join("f.pgm"))
        .output()
        .unwrap();
    assert!(o.status.success());
    for a in 0..3 {
        let (w, h, _) = read_pgm(&dir.path().join(format!("f_x{a}.pgm")));
        assert_eq!((w, h), (16, 16));
    }
}

#[test]
fn null_profile_heatmap_is_radially_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("null");
    let cfg = json!({
        "task": "verify-null",
        "grid": {"n": 2, "origin": [-4.5, -4.5], "extent": [9.0, 9.0], "cells": [256, 256]},
        "phases": [{"k": 1.0}],
        "output": {"formats": ["raster"], "heatmap": false}
    });
    let (code, err) = run_config(&cfg, &out);
    assert_eq!(code, 0, "{err}");
    let img = dir.path().join("u.pgm");
    let o = qdom()
        .arg("render")
        .arg(out.join("u.qdr"))
        .arg(&img)
        .output()
        .unwrap();
    assert!(o.status.success());
    let (w, h, data) = read_pgm(&img);
    // bilinear samples on rings about the image centre
    let at = |x: f64, y: f64| -> f64 {
        let (i, j) = (x.floor() as usize, y.floor() as usize);
        let (fx, fy) = (x - i as f64, y - j as f64);
        let p = |i: usize, j: usize| data[j * w + i] as f64;
        p(i, j) * (1.0 - fx) * (1.0 - fy)
            + p(i + 1, j) * fx * (1.0 - fy)
            + p(i, j + 1) * (1.0 - fx) * fy
            + p(i + 1, j + 1) * fx * fy
    };
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut worst: f64 = 0.0;
    for ring in 1..=20 {
        let r = ring as f64 * 5.0;
        let vals: Vec<f64> = (0..32)
            .map(|a| {
                let t = a as f64 * std::f64::consts::PI / 16.0;
                at(cx + r * t.cos(), cy + r * t.sin())
            })
            .collect();
        let (lo, hi) = vals
            .iter()
            .fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        worst = worst.max((hi - lo) / 255.0);
    }
    assert!(worst <= 0.01, "angular deviation {worst}");
}

#[test]
fn repeated_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("timestamp");
        v
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run_config(&far_pair(), &a).0, 0);
    assert_eq!(run_config(&far_pair(), &b).0, 0);
    assert_eq!(strip(report(&a)), strip(report(&b)));
    for f in ["u.qdr", "u.csv", "phases.pgm"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap()
        );
    }
}
