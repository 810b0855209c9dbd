use std::path::Path;

use fractalsea_core::embedding::{FeatureExtractor, PcaModel, ReferenceExtractor};
use fractalsea_core::io;
use fractalsea_core::pipeline::{read_manifest, run_pipeline, PipelineConfig};
use fractalsea_core::stitcher::{StitchPlan, TaskKind, TerrainMap};
use fractalsea_core::Error;

fn small_config(dir: &Path, rows: usize, cols: usize) -> PipelineConfig {
    let mut c = PipelineConfig {
        seed: 17,
        output: dir.to_path_buf(),
        ..PipelineConfig::default()
    };
    c.grid.rows = rows;
    c.grid.cols = cols;
    c.grid.patch = 24;
    c.embedding.calibration_grid = 4;
    c.splat.refine_iterations = 3;
    c
}

#[test]
fn minimal_run_writes_every_artifact_and_hashes_it() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = run_pipeline(&small_config(tmp.path(), 1, 1)).unwrap();
    let m = read_manifest(tmp.path()).unwrap();
    assert_eq!(m, summary.manifest);
    assert_eq!(m.stages, ["embedding", "field", "stitch", "fuse", "splat", "eval", "manifest"]);
    for name in [
        "config.toml",
        "field/field.csv",
        "field/pca.csv",
        "field/calibration.csv",
        "map/rgbd.bin",
        "map/plan.json",
        "tiles/tile_r00_c00_rgb.png",
        "cloud/points.ply",
        "cloud/gaussians.ply",
        "cloud/render.png",
        "reports/summary.json",
        "reports/latent_mse.csv",
    ] {
        assert!(m.files.iter().any(|f| f.path == name), "{name} missing from manifest");
    }
    for f in &m.files {
        let bytes = std::fs::read(tmp.path().join(&f.path)).unwrap();
        assert_eq!(io::sha256_hex(&bytes), f.sha256, "{}", f.path);
        assert_eq!(bytes.len() as u64, f.bytes);
    }
    assert!(!tmp.path().join("error.json").exists());
    // A single patch has no seams to score.
    assert_eq!(summary.report.seams[0].score.aggregate, 0.0);
}

#[test]
fn latent_mse_matches_a_recomputation_from_saved_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run_pipeline(&small_config(dir, 3, 3)).unwrap();

    let map = TerrainMap::load(&dir.join("map")).unwrap();
    let plan = StitchPlan::from_json(&io::read_text(&dir.join("map/plan.json")).unwrap()).unwrap();
    let pca = PcaModel::read_csv(&dir.join("field/pca.csv")).unwrap();
    let (p, g) = (plan.geometry.patch, plan.geometry.gap);

    let csv = io::read_text(&dir.join("reports/latent_mse.csv")).unwrap();
    let reported: Vec<(usize, usize, f64)> = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("pattern"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[3].parse().unwrap(), f[4].parse().unwrap(), f[5].parse().unwrap())
        })
        .collect();
    assert_eq!(reported.len(), 9);

    for t in plan.tasks.iter().filter(|t| t.kind == TaskKind::Vertex) {
        // Vertex tiles sit on a (patch + gap) lattice.
        let (x0, y0) = (t.col * (p + g), t.row * (p + g));
        let mut tile = fractalsea_core::RgbdPatch::new(p, p);
        for y in 0..p {
            for x in 0..p {
                tile.set(x, y, map.rgbd().get(x0 + x, y0 + y));
            }
        }
        let f = ReferenceExtractor.extract(&tile);
        let mut se = 0.0;
        for (i, row) in pca.components.iter().enumerate() {
            let mut z = 0.0;
            for j in 0..row.len() {
                z += row[j] * (f.0[j] - pca.mean[j]);
            }
            se += (t.latent.0[i] - z).powi(2);
        }
        let expected = se / pca.components.len() as f64;
        let &(_, _, got) = reported.iter().find(|r| (r.0, r.1) == (t.row, t.col)).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected.max(1.0), "tile {},{}: {got} vs {expected}", t.row, t.col);
    }
}

#[test]
fn failing_stage_leaves_an_error_record() {
    let tmp = tempfile::tempdir().unwrap();
    // A directory where the PCA file should go makes the first stage fail.
    std::fs::create_dir_all(tmp.path().join("field/pca.csv")).unwrap();
    let err = run_pipeline(&small_config(tmp.path(), 1, 1)).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "embedding", .. }), "{err}");
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("error.json")).unwrap()).unwrap();
    assert_eq!(record["stage"], "embedding");
    assert_eq!(record["completed_stages"], serde_json::json!([]));
    assert!(!tmp.path().join("manifest.json").exists());
}

#[test]
fn invalid_config_is_rejected_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small_config(&tmp.path().join("out"), 1, 1);
    c.workers = 0;
    assert!(matches!(run_pipeline(&c), Err(Error::InvalidParams(_))));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn written_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    run_pipeline(&small_config(&first, 1, 2)).unwrap();
    let mut again = PipelineConfig::from_toml(&io::read_text(&first.join("config.toml")).unwrap()).unwrap();
    again.output = tmp.path().join("second");
    run_pipeline(&again).unwrap();
    let a = read_manifest(&first).unwrap().reproducible_part();
    let b = read_manifest(&again.output).unwrap().reproducible_part();
    assert_eq!(a, b);
}
