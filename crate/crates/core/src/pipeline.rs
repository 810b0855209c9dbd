//! End-to-end run: latent field, latent-space fit, stitching, fusion,
//! Gaussian splats and evaluation, written to one artifact directory.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.toml        resolved configuration
//! field/             field.csv, pca.csv, calibration.csv
//! tiles/             tile_rRR_cCC_{rgb,depth}.png per vertex tile
//! map/               rgb.png, depth.png, rgbd.bin, seams.csv, plan.json
//! cloud/             points.ply, elevation.png, gaussians.ply, camera.json,
//!                    render.png, and refined.ply / refined.png after refinement
//! reports/           summary.json and per-metric CSVs
//! manifest.json      SHA-256 of every file above, seeds and versions
//! error.json         only when a stage failed
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{fit_latent_space, CalibratedGenerator, LatentSpace, ReferenceExtractor};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport};
use crate::io;
use crate::latent_field::{generate_field, FractalParams, LatentField, LatentVector, DEFAULT_DECAY};
use crate::patchgen::{ReferenceGenerator, DEFAULT_PATCH_SIZE};
use crate::rng;
use crate::splat::{self, Camera, DenoiserOracle, GroundTruthOracle, Projection, RefineOptions, RgbImage};
use crate::stitcher::{self, FillMode, Pattern, StitchGeometry, StitchPlan, TaskKind, TerrainMap, DEFAULT_CONTEXT};
use crate::terrain;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorChoice {
    #[default]
    Reference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Export {
    /// Fused point cloud as ASCII PLY.
    Ply,
    /// 16-bit elevation PNG.
    Elevation,
    /// Gaussian initialization, top-down render and optional refinement.
    Splat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub levels: u32,
    pub scale: f64,
    pub decay: f64,
    /// Corner values as generator controls `[roughness, palette]`, in
    /// top-left, top-right, bottom-left, bottom-right order. Drawn from the
    /// seed when absent.
    pub corners: Option<[[f64; 2]; 4]>,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            levels: 3,
            scale: 0.3,
            decay: DEFAULT_DECAY,
            corners: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    pub patch: usize,
    /// Defaults to half the patch size.
    pub gap: Option<usize>,
    pub context: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            rows: 4,
            cols: 4,
            patch: DEFAULT_PATCH_SIZE,
            gap: None,
            context: None,
        }
    }
}

impl GridConfig {
    pub fn geometry(&self) -> StitchGeometry {
        let gap = self.gap.unwrap_or(self.patch / 2).max(1);
        let context = self.context.unwrap_or(DEFAULT_CONTEXT.min(gap));
        StitchGeometry::new(self.rows, self.cols, self.patch).with_gap(gap, context)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub dim: usize,
    /// Steps per axis of the control grid the PCA corpus is drawn from.
    pub calibration_grid: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 2,
            calibration_grid: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuseConfig {
    pub stride: usize,
    pub height_scale: f64,
}

impl Default for FuseConfig {
    fn default() -> Self {
        FuseConfig {
            stride: 4,
            height_scale: 64.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplatConfig {
    pub init_opacity: f64,
    pub init_scale: Option<f64>,
    /// Refinement steps against the stitched map as seen from above.
    pub refine_iterations: usize,
    pub step_size: f64,
}

impl Default for SplatConfig {
    fn default() -> Self {
        SplatConfig {
            init_opacity: splat::DEFAULT_OPACITY,
            init_scale: None,
            refine_iterations: 20,
            step_size: RefineOptions::default().step_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub workers: usize,
    pub generator: GeneratorChoice,
    pub pattern: Pattern,
    pub inpaint: FillMode,
    pub exports: Vec<Export>,
    pub field: FieldConfig,
    pub grid: GridConfig,
    pub embedding: EmbeddingConfig,
    pub fuse: FuseConfig,
    pub splat: SplatConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            output: PathBuf::from("fractalsea-run"),
            workers: 1,
            generator: GeneratorChoice::Reference,
            pattern: Pattern::Parallel,
            inpaint: FillMode::Unconditional,
            exports: vec![Export::Ply, Export::Elevation, Export::Splat],
            field: FieldConfig::default(),
            grid: GridConfig::default(),
            embedding: EmbeddingConfig::default(),
            fuse: FuseConfig::default(),
            splat: SplatConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::InvalidParams(format!("config: {}", e.message())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(1..=12).contains(&self.field.levels) {
            return bad(format!("field.levels must be in 1..=12, got {}", self.field.levels));
        }
        if let Some(c) = &self.field.corners {
            if c.iter().flatten().any(|v| !v.is_finite()) {
                return bad("field.corners must be finite".into());
            }
        }
        self.grid.geometry().validate()?;
        if self.embedding.dim < 2 {
            return bad("embedding.dim must be at least 2 for the reference generator".into());
        }
        if self.embedding.calibration_grid < 2
            || self.embedding.calibration_grid * self.embedding.calibration_grid <= self.embedding.dim
        {
            return bad(format!(
                "embedding.calibration_grid {} is too small for {} components",
                self.embedding.calibration_grid, self.embedding.dim
            ));
        }
        if self.fuse.stride == 0 || !(self.fuse.height_scale.is_finite() && self.fuse.height_scale > 0.0) {
            return bad("fuse.stride must be >= 1 and fuse.height_scale positive".into());
        }
        if !(0.0..=1.0).contains(&self.splat.init_opacity) {
            return bad("splat.init_opacity must be in [0, 1]".into());
        }
        if matches!(self.splat.init_scale, Some(s) if !(s.is_finite() && s > 0.0)) {
            return bad("splat.init_scale must be positive".into());
        }
        if !(self.splat.step_size.is_finite() && self.splat.step_size >= 0.0) {
            return bad("splat.step_size must be non-negative".into());
        }
        self.field_params(&std::array::from_fn(|_| LatentVector::zeros(self.embedding.dim)))
            .validate()
    }

    fn field_params(&self, corners: &[LatentVector; 4]) -> FractalParams {
        FractalParams::new(self.field.levels, self.field.scale, self.seed, corners.clone()).with_decay(self.field.decay)
    }

    /// Corner controls, either configured or drawn from the seed.
    pub fn corner_controls(&self) -> [[f64; 2]; 4] {
        self.field.corners.unwrap_or_else(|| seeded_corner_controls(self.seed))
    }
}

/// Four `[roughness, palette]` corner controls drawn from
/// `[-0.8, 0.8] × [0.1, 0.9]`.
pub fn seeded_corner_controls(seed: u64) -> [[f64; 2]; 4] {
    [0u64, 1, 2, 3].map(|k| {
        [
            -0.8 + 1.6 * rng::uniform(&[seed, 0xC0, k, 0]),
            0.1 + 0.8 * rng::uniform(&[seed, 0xC0, k, 1]),
        ]
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub stages: Vec<String>,
    pub files: Vec<ManifestEntry>,
    /// Seconds since the Unix epoch. Not part of reproducibility checks.
    pub created_unix: u64,
}

impl Manifest {
    /// The manifest without its timestamp, for comparing runs.
    pub fn reproducible_part(&self) -> Manifest {
        Manifest {
            created_unix: 0,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub output: PathBuf,
    pub manifest: Manifest,
    pub report: EvalReport,
}

/// Relative paths of every regular file under `dir`, sorted, skipping the
/// manifest and error record.
pub fn artifact_files(dir: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir) {
        let entry = entry.map_err(|e| Error::io(dir, e.into()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(dir).expect("under root");
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if rel != "manifest.json" && rel != "error.json" {
            out.push(rel);
        }
    }
    out.sort();
    Ok(out)
}

struct Stages<'a> {
    dir: &'a Path,
    done: Vec<String>,
}

impl Stages<'_> {
    fn run<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        log::info!("stage {name}");
        match f() {
            Ok(v) => {
                self.done.push(name.to_string());
                Ok(v)
            }
            Err(e) => {
                let record = serde_json::json!({
                    "stage": name,
                    "error": e.to_string(),
                    "completed_stages": self.done,
                });
                let _ = io::write_text(
                    &self.dir.join("error.json"),
                    &serde_json::to_string_pretty(&record).expect("record serializes"),
                );
                Err(Error::Stage {
                    stage: name,
                    source: Box::new(e),
                })
            }
        }
    }
}

/// Top-down camera that puts a stride-`stride` point grid on pixel centers.
pub fn grid_camera(map_width: usize, map_height: usize, stride: usize) -> Camera {
    let s = stride as f64;
    let mut camera = Camera::top_down(map_width as f64, map_height as f64, map_width.div_ceil(stride), map_height.div_ceil(stride));
    camera.projection = Projection::Orthographic {
        scale: 1.0 / s,
        cx: 0.5,
        cy: 0.5,
    };
    camera
}

/// The map's colors at the grid points, as the top-down refinement target.
fn grid_target(map: &TerrainMap, camera: &Camera, stride: usize) -> RgbImage {
    let px = map.rgbd();
    let pixels = (0..camera.height)
        .flat_map(|j| (0..camera.width).map(move |i| (i, j)))
        .map(|(i, j)| {
            let p = px.get(i * stride, j * stride);
            [p[0], p[1], p[2]]
        })
        .collect();
    RgbImage {
        width: camera.width,
        height: camera.height,
        pixels,
    }
}

fn write_image(img: &RgbImage, path: &Path) -> Result<()> {
    io::write_rgb_png(img.width, img.height, |x, y| img.get(x, y), path)
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<RunSummary> {
    config.validate()?;
    let dir = config.output.as_path();
    for sub in ["field", "tiles", "map", "cloud", "reports"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let _ = std::fs::remove_file(dir.join("error.json"));
    // The directory is recorded as itself so runs into different locations
    // produce identical artifacts.
    let config_text = PipelineConfig {
        output: PathBuf::from("."),
        ..config.clone()
    }
    .to_toml();
    io::write_text(&dir.join("config.toml"), &config_text)?;
    let mut stages = Stages { dir, done: Vec::new() };
    let geometry = config.grid.geometry();
    let patch = geometry.patch;
    let generator = match config.generator {
        GeneratorChoice::Reference => ReferenceGenerator::new(patch),
    };

    let space: LatentSpace = stages.run("embedding", || {
        let space = fit_latent_space(
            &generator,
            &ReferenceExtractor,
            patch,
            config.embedding.dim,
            config.embedding.calibration_grid,
            rng::hash(&[config.seed, 0xE4]),
        )?;
        space.pca.write_csv(&dir.join("field/pca.csv"))?;
        space.calibration.write_csv(&dir.join("field/calibration.csv"))?;
        Ok(space)
    })?;
    let generator = CalibratedGenerator::new(generator, space.calibration.clone());

    let field: LatentField = stages.run("field", || {
        let corners = config
            .corner_controls()
            .map(|c| space.calibration.to_latent(&c))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let corners: [LatentVector; 4] = corners.try_into().expect("four corners");
        let field = generate_field(&config.field_params(&corners))?;
        io::write_text(&dir.join("field/field.csv"), &field.to_csv_string())?;
        Ok(field)
    })?;

    let (plan, map): (StitchPlan, TerrainMap) = stages.run("stitch", || {
        let plan = stitcher::plan(config.pattern, geometry, &field, config.seed)?;
        let map = stitcher::execute_plan(&plan, &generator, config.inpaint, config.workers)?;
        map.save(&dir.join("map"))?;
        for t in plan.vertex_tasks() {
            let tile = map.crop(geometry.rect(TaskKind::Vertex, t.row, t.col));
            io::write_patch(&tile, &dir.join(format!("tiles/tile_r{:02}_c{:02}", t.row, t.col)))?;
        }
        Ok((plan, map))
    })?;

    let cloud = stages.run("fuse", || {
        let pc = terrain::to_pointcloud(map.rgbd(), config.fuse.stride, config.fuse.height_scale)?;
        if config.exports.contains(&Export::Ply) {
            terrain::export_ply(&pc, &dir.join("cloud/points.ply"))?;
        }
        if config.exports.contains(&Export::Elevation) {
            terrain::elevation(map.rgbd()).write_png(&dir.join("cloud/elevation.png"))?;
        }
        Ok(pc)
    })?;

    if config.exports.contains(&Export::Splat) {
        stages.run("splat", || {
            let stride = config.fuse.stride;
            let gaussians = splat::init_from_pointcloud(&cloud, config.splat.init_scale, config.splat.init_opacity)?;
            splat::write_cloud_ply(&gaussians, &dir.join("cloud/gaussians.ply"))?;
            let camera = grid_camera(map.width(), map.height(), stride);
            io::write_text(&dir.join("cloud/camera.json"), &camera.to_json())?;
            write_image(&splat::render(&gaussians, &camera), &dir.join("cloud/render.png"))?;
            if config.splat.refine_iterations > 0 {
                let oracle = GroundTruthOracle::new(grid_target(&map, &camera, stride));
                let options = RefineOptions {
                    iterations: config.splat.refine_iterations,
                    step_size: config.splat.step_size,
                    seed: config.seed,
                    ..RefineOptions::default()
                };
                let views = [(camera.clone(), &oracle as &dyn DenoiserOracle)];
                let refined = splat::refine(&gaussians, &views, &options, None)?;
                splat::write_cloud_ply(&refined.cloud, &dir.join("cloud/refined.ply"))?;
                write_image(&splat::render(&refined.cloud, &camera), &dir.join("cloud/refined.png"))?;
                let mut trace = String::from("iteration,loss\n");
                for (i, l) in refined.loss.iter().enumerate() {
                    trace.push_str(&format!("{i},{l}\n"));
                }
                io::write_text(&dir.join("cloud/refine_loss.csv"), &trace)?;
            }
            Ok(())
        })?;
    }

    let report = stages.run("eval", || {
        let mut report = EvalReport::new();
        let mse = eval::latent_mse(&map, &plan, &ReferenceExtractor, &space.pca)?;
        report.add_latent_mse(config.pattern, config.inpaint, mse);
        report.add_seams(format!("{}-{}", config.pattern, config.inpaint.name()), eval::seam_score(&map));
        for pattern in Pattern::ALL {
            let p = stitcher::plan(pattern, geometry, &field, config.seed)?;
            report.critical_paths.push(eval::critical_path_row(&p)?);
        }
        report.write(&dir.join("reports"))?;
        Ok(report)
    })?;

    let mut completed = stages.done.clone();
    completed.push("manifest".into());
    let manifest = stages.run("manifest", || {
        let files = artifact_files(dir)?
            .into_iter()
            .map(|rel| {
                let path = dir.join(&rel);
                let bytes = std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
                Ok(ManifestEntry {
                    sha256: io::sha256_file(&path)?,
                    path: rel,
                    bytes,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = Manifest {
            tool: "fractalsea".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            config_sha256: io::sha256_hex(config_text.as_bytes()),
            stages: completed,
            files,
            created_unix,
        };
        io::write_text(
            &dir.join("manifest.json"),
            &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
        Ok(manifest)
    })?;

    Ok(RunSummary {
        output: dir.to_path_buf(),
        manifest,
        report,
    })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = io::read_text(&dir.join("manifest.json"))?;
    serde_json::from_str(&text).map_err(|e| Error::format("manifest", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let err = PipelineConfig::from_toml("seed = 1\nbogus_key = 3\n").unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
        let err = PipelineConfig::from_toml("[grid]\nrowz = 3\n").unwrap_err();
        assert!(err.to_string().contains("rowz"), "{err}");
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut c = PipelineConfig::default();
        c.field.corners = Some([[0.1, 0.2], [0.3, 0.4], [-0.5, 0.6], [0.7, 0.8]]);
        c.grid.gap = Some(10);
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn invalid_values_fail_validation() {
        assert!(PipelineConfig::from_toml("workers = 0").is_err());
        assert!(PipelineConfig::from_toml("[grid]\nrows = 0").is_err());
        assert!(PipelineConfig::from_toml("[fuse]\nstride = 0").is_err());
        assert!(PipelineConfig::from_toml("pattern = \"spiral\"").is_err());
    }

    #[test]
    fn grid_camera_centers_points() {
        let cam = grid_camera(10, 7, 3);
        assert_eq!((cam.width, cam.height), (4, 3));
        let (uv, _, _) = cam.project(cam.to_camera([6.0, 3.0, 1.0])).unwrap();
        assert_eq!(uv, [2.5, 1.5]);
    }
}
