//! Command-line behavior: configuration layering, worker override, and the
//! error messages users see for common mistakes.

use std::path::Path;
use std::process::{Command, Output};

use patchseg::synthetic::{figure_corpus, FigureParams};

fn patchseg(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_patchseg"));
    cmd.args(args).env("RUST_LOG", "warn");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).to_string()
}

fn corpus(dir: &Path, n: usize) {
    std::fs::create_dir_all(dir.join("meshes")).unwrap();
    std::fs::create_dir_all(dir.join("landmarks")).unwrap();
    for fig in figure_corpus(n, 2, &FigureParams { spacing: 0.09, ..Default::default() }) {
        fig.save(&dir.join("meshes"), &dir.join("landmarks")).unwrap();
    }
}

#[test]
fn config_file_then_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.conf");
    std::fs::write(&conf, "[pipeline]\nm = 500\nresolution = 16\n").unwrap();
    let out = patchseg(&["show-config", "--config", conf.to_str().unwrap(), "--set", "pipeline.m=700"], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("pipeline.m = 700"));
    assert!(text.contains("pipeline.resolution = 16"));
}

#[test]
fn rejects_bad_settings() {
    let out = patchseg(&["show-config", "--set", "pipeline.nope=1"], &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("pipeline.nope"));
    let out = patchseg(&["show-config", "--set", "train.lr=log:1e-9:1e-3"], &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("start > end"));
    let out = patchseg(&["show-config"], &[(patchseg::config::WORKERS_ENV, "zero")]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains(patchseg::config::WORKERS_ENV));
}

#[test]
fn missing_inputs_are_named() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path(), 2);
    let meshes = dir.path().join("meshes");
    std::fs::remove_file(meshes.join("figure_001.labels")).unwrap();
    let m = format!("paths.meshes={}", meshes.display());
    let o = format!("paths.output={}", dir.path().join("out").display());
    let out = patchseg(&["preprocess", "--set", &m, "--set", &o], &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("figure_001"), "{}", stderr(&out));

    let out = patchseg(&["predict", "--set", &m, "--set", &o], &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("run `train`"), "{}", stderr(&out));

    // a label outside 0..8 names the offending vertex
    std::fs::write(meshes.join("figure_001.labels"), "9\n".repeat(3)).unwrap();
    let out = patchseg(&["preprocess", "--set", &m, "--set", &o], &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("figure_001"), "{}", stderr(&out));
}

#[test]
fn export_charts_writes_debug_views() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path(), 1);
    let out = patchseg(
        &[
            "export-charts",
            "--set",
            &format!("paths.meshes={}", dir.path().join("meshes").display()),
            "--set",
            &format!("paths.landmarks={}", dir.path().join("landmarks").display()),
            "--set",
            &format!("paths.output={}", dir.path().join("out").display()),
            "--set",
            "export.vertices=3,40",
            "--set",
            "pipeline.resolution=12",
        ],
        &[(patchseg::config::WORKERS_ENV, "2")],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let charts = dir.path().join("out/charts");
    for v in [3, 40] {
        for ext in ["ball.txt", "param.txt", "cells.txt", "mask.pgm"] {
            assert!(charts.join(format!("figure_000_v{v}.{ext}")).exists(), "{v} {ext}");
        }
    }
    let pgm = std::fs::read_to_string(charts.join("figure_000_v3.mask.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n12 12\n255\n"));
    assert_eq!(pgm.lines().count(), 3 + 12);
}
