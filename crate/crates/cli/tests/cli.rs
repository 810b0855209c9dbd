use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fractalsea(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fractalsea"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().last().expect("a completion record");
    serde_json::from_str(line).expect("record is JSON")
}

#[test]
fn help_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fractalsea(&["--help"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["field", "gen", "stitch", "export", "render", "refine", "eval", "pca-fit", "run"] {
        assert!(text.contains(cmd), "help lists {cmd}");
    }
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fractalsea(&["field", "--levels", "3", "--out", "f.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--scale"));
}

#[test]
fn invalid_values_are_validation_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fractalsea(&["field", "--levels", "3", "--scale", "-1", "--out", "f.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let rec = record(&out);
    assert_eq!(rec["status"], "error");
    assert_eq!(rec["exit_code"], 3);
    assert!(!tmp.path().join("f.csv").exists());
}

#[test]
fn unknown_config_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "seed = 1\n[grid]\nrowz = 2\n").unwrap();
    let out = fractalsea(&["run", "--config", "c.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(record(&out)["error"].as_str().unwrap().contains("rowz"));
}

#[test]
fn stitched_maps_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let ok = |out: Output| assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    ok(fractalsea(&["field", "--seed", "5", "--levels", "3", "--scale", "0.4", "--out", "field.csv"], dir));
    for (workers, out) in [("1", "one"), ("8", "eight")] {
        ok(fractalsea(
            &["stitch", "--seed", "5", "--field", "field.csv", "--grid", "3x3", "--patch", "24", "--workers", workers, "--out", out],
            dir,
        ));
    }
    for file in ["rgbd.bin", "rgb.png", "depth.png", "plan.json", "seams.csv"] {
        let a = std::fs::read(dir.join("one").join(file)).unwrap();
        let b = std::fs::read(dir.join("eight").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
}

#[test]
fn minimal_run_writes_a_manifest_and_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("c.toml"), "seed = 3\noutput = \"from-config\"\n[grid]\nrows = 2\ncols = 2\npatch = 64\n").unwrap();
    let out = fractalsea(&["run", "--config", "c.toml", "--grid", "1x1", "--patch", "24", "--out", "run"], dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = record(&out);
    assert_eq!(rec["status"], "ok");
    assert!(!dir.join("from-config").exists());
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    let config = std::fs::read_to_string(dir.join("run/config.toml")).unwrap();
    assert!(config.contains("rows = 1") && config.contains("patch = 24"));
}

#[test]
fn generated_patch_feeds_a_corpus_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::create_dir(dir.join("corpus")).unwrap();
    for (i, latent) in ["-1,0", "0,0.5", "1,1", "0.5,0.2"].iter().enumerate() {
        let prefix = format!("corpus/p{i}");
        let out = fractalsea(&["gen", "--seed", "2", "--latent", latent, "--size", "24", "--out", &prefix], dir);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = fractalsea(&["pca-fit", "--corpus", "corpus", "--dim", "2", "--out", "pca.csv"], dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(record(&out)["patches"], 4);
}
