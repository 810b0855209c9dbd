use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use fractalsea_core::embedding::{fit_latent_space, fit_pca, CalibratedGenerator, Calibration, FeatureExtractor, PcaModel, ReferenceExtractor};
use fractalsea_core::eval::{self, EvalReport};
use fractalsea_core::latent_field::{generate_field, parse_corners, FractalParams, LatentField, LatentVector, DEFAULT_DECAY};
use fractalsea_core::patchgen::{ConditionalGenerator, ReferenceGenerator, DEFAULT_PATCH_SIZE};
use fractalsea_core::pipeline::{run_pipeline, seeded_corner_controls, PipelineConfig};
use fractalsea_core::splat::{self, Camera, DenoiserOracle, GroundTruthOracle, RefineOptions, RgbImage};
use fractalsea_core::stitcher::{self, FillMode, Pattern, StitchGeometry, StitchPlan, TerrainMap, DEFAULT_CONTEXT};
use fractalsea_core::{io, terrain, Error};

const EXIT_VALIDATION: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "fractalsea", version, about = "Fractal-conditioned seafloor terrain generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags every subcommand accepts.
#[derive(Args, Clone)]
struct Common {
    /// Global seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a diamond-square latent field and write it as CSV.
    Field(FieldArgs),
    /// Generate one reference patch from generator controls.
    Gen(GenArgs),
    /// Plan and execute map stitching from a latent field.
    Stitch(StitchArgs),
    /// Fuse a stitched map into a point cloud or elevation map.
    Export(ExportArgs),
    /// Render a Gaussian cloud from a camera.
    Render(RenderArgs),
    /// Refine Gaussian appearance toward a target image.
    Refine(RefineArgs),
    /// Evaluate a stitched map: latent MSE, seams and critical paths.
    Eval(EvalArgs),
    /// Fit a PCA (and optionally a control calibration) to patch features.
    PcaFit(PcaFitArgs),
    /// Run the whole pipeline from a config file.
    Run(RunArgs),
}

#[derive(Args)]
struct FieldArgs {
    #[command(flatten)]
    common: Common,
    /// Subdivision levels; the field has 2^levels + 1 vertices per side.
    #[arg(long)]
    levels: u32,
    /// Displacement scale s.
    #[arg(long, allow_hyphen_values = true)]
    scale: f64,
    #[arg(long, default_value_t = DEFAULT_DECAY)]
    decay: f64,
    /// Four lines of comma-separated corner latents (TL, TR, BL, BR).
    /// Without it, seeded generator controls are used.
    #[arg(long)]
    corners: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    /// Generator controls `roughness,palette`.
    #[arg(long, allow_hyphen_values = true)]
    latent: String,
    #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
    size: usize,
    /// Output prefix; writes PREFIX_rgb.png and PREFIX_depth.png.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PatternArg {
    Raster,
    Lawnmower,
    Parallel,
}

impl From<PatternArg> for Pattern {
    fn from(p: PatternArg) -> Self {
        match p {
            PatternArg::Raster => Pattern::Raster,
            PatternArg::Lawnmower => Pattern::Lawnmower,
            PatternArg::Parallel => Pattern::Parallel,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InpaintArg {
    Cond,
    Uncond,
}

impl From<InpaintArg> for FillMode {
    fn from(m: InpaintArg) -> Self {
        match m {
            InpaintArg::Cond => FillMode::Conditional,
            InpaintArg::Uncond => FillMode::Unconditional,
        }
    }
}

#[derive(Args)]
struct StitchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    field: PathBuf,
    /// Grid of vertex patches, `RxC`.
    #[arg(long, value_parser = parse_grid)]
    grid: (usize, usize),
    #[arg(long, value_enum, default_value = "parallel")]
    pattern: PatternArg,
    #[arg(long, value_enum, default_value = "uncond")]
    inpaint: InpaintArg,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
    patch: usize,
    /// Gap width; defaults to half the patch size.
    #[arg(long)]
    gap: Option<usize>,
    /// Calibration from `pca-fit --calibration`; when given, field values
    /// are PCA latents, otherwise generator controls.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportWhat {
    Ply,
    Elevation,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    map: PathBuf,
    #[arg(long, value_enum)]
    what: ExportWhat,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 64.0)]
    height_scale: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    common: Common,
    /// Gaussian cloud PLY.
    #[arg(long)]
    cloud: PathBuf,
    /// Camera JSON. Defaults to a top-down view of the cloud's extent.
    #[arg(long)]
    camera: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RefineArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    cloud: PathBuf,
    /// Target RGB PNG; its size must match the camera image.
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    iters: usize,
    #[arg(long)]
    camera: Option<PathBuf>,
    #[arg(long, default_value_t = RefineOptions::default().step_size)]
    step: f64,
    /// Refined cloud PLY.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    map: PathBuf,
    /// Defaults to the plan saved with the map.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    pca: PathBuf,
    #[arg(long, alias = "out")]
    report: PathBuf,
}

#[derive(Args)]
struct PcaFitArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of `*_rgb.png` / `*_depth.png` pairs. Without it, a control
    /// grid of reference patches is generated.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Patch size of the generated reference corpus.
    #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
    patch: usize,
    /// Steps per control axis of the generated corpus.
    #[arg(long, default_value_t = 6)]
    grid: usize,
    /// Also write the control calibration (generated corpus only).
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    pattern: Option<PatternArg>,
    #[arg(long, value_enum)]
    inpaint: Option<InpaintArg>,
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    scale: Option<f64>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected RxC, got `{s}`"))?;
    let n = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad grid size `{t}`"));
    Ok((n(r)?, n(c)?))
}

fn parse_latent(s: &str) -> Result<LatentVector, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParams(format!("bad latent component `{t}`")))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(LatentVector)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn cmd_field(a: FieldArgs) -> Result<Value, Error> {
    let corners = match &a.corners {
        Some(path) => parse_corners(&io::read_text(path)?)?,
        None => seeded_corner_controls(a.common.seed).map(|c| LatentVector(c.to_vec())),
    };
    let params = FractalParams::new(a.levels, a.scale, a.common.seed, corners).with_decay(a.decay);
    let field = generate_field(&params)?;
    io::write_text(&a.out, &field.to_csv_string())?;
    Ok(json!({
        "resolution": field.resolution(),
        "dim": field.dim(),
        "outputs": [path_str(&a.out)],
    }))
}

fn cmd_gen(a: GenArgs) -> Result<Value, Error> {
    let latent = parse_latent(&a.latent)?;
    if a.size == 0 {
        return Err(Error::InvalidParams("size must be at least 1".into()));
    }
    let generator = ReferenceGenerator::new(a.size);
    let patch = generator.generate(&latent, a.common.seed, a.size, a.size)?;
    let (rgb, depth) = io::write_patch(&patch, &a.out)?;
    Ok(json!({ "outputs": [path_str(&rgb), path_str(&depth)] }))
}

fn cmd_stitch(a: StitchArgs) -> Result<Value, Error> {
    let field = LatentField::read_csv(&a.field)?;
    let gap = a.gap.unwrap_or(a.patch / 2).max(1);
    let geometry = StitchGeometry::new(a.grid.0, a.grid.1, a.patch).with_gap(gap, DEFAULT_CONTEXT.min(gap));
    geometry.validate()?;
    let plan = stitcher::plan(a.pattern.into(), geometry, &field, a.common.seed)?;
    let base = ReferenceGenerator::new(a.patch);
    let map = match &a.calibration {
        Some(path) => {
            let generator = CalibratedGenerator::new(base, Calibration::read_csv(path)?);
            stitcher::execute_plan(&plan, &generator, a.inpaint.into(), a.workers)?
        }
        None => stitcher::execute_plan(&plan, &base, a.inpaint.into(), a.workers)?,
    };
    map.save(&a.out)?;
    Ok(json!({
        "width": map.width(),
        "height": map.height(),
        "tasks": plan.tasks.len(),
        "critical_path": plan.critical_path()?,
        "seams": map.seams().len(),
        "outputs": [path_str(&a.out)],
    }))
}

fn cmd_export(a: ExportArgs) -> Result<Value, Error> {
    let map = TerrainMap::load(&a.map)?;
    match a.what {
        ExportWhat::Ply => {
            let pc = terrain::to_pointcloud(map.rgbd(), a.stride, a.height_scale)?;
            terrain::export_ply(&pc, &a.out)?;
            Ok(json!({ "points": pc.len(), "outputs": [path_str(&a.out)] }))
        }
        ExportWhat::Elevation => {
            terrain::elevation(map.rgbd()).write_png(&a.out)?;
            Ok(json!({ "width": map.width(), "height": map.height(), "outputs": [path_str(&a.out)] }))
        }
    }
}

/// Extent of the cloud's x/y positions, padded by one unit.
fn cloud_extent(cloud: &splat::GaussianCloud) -> (f64, f64) {
    let (mut w, mut h) = (1.0f64, 1.0f64);
    for g in &cloud.gaussians {
        w = w.max(g.position[0] + 1.0);
        h = h.max(g.position[1] + 1.0);
    }
    (w.ceil(), h.ceil())
}

/// Reads `path`, or falls back to a top-down view of the whole cloud. The
/// fallback renders one pixel per unit unless `size` is given.
fn load_camera(path: Option<&Path>, cloud: &splat::GaussianCloud, size: Option<(usize, usize)>) -> Result<Camera, Error> {
    match path {
        Some(p) => Camera::from_json(&io::read_text(p)?),
        None => {
            let (w, h) = cloud_extent(cloud);
            let (pw, ph) = size.unwrap_or((w as usize, h as usize));
            Ok(Camera::top_down(w, h, pw, ph))
        }
    }
}

fn write_image(img: &RgbImage, path: &Path) -> Result<(), Error> {
    io::write_rgb_png(img.width, img.height, |x, y| img.get(x, y), path)
}

fn cmd_render(a: RenderArgs) -> Result<Value, Error> {
    let cloud = splat::read_cloud_ply(&a.cloud)?;
    let camera = load_camera(a.camera.as_deref(), &cloud, None)?;
    camera.validate()?;
    let img = splat::render(&cloud, &camera);
    write_image(&img, &a.out)?;
    Ok(json!({ "width": img.width, "height": img.height, "gaussians": cloud.len(), "outputs": [path_str(&a.out)] }))
}

fn cmd_refine(a: RefineArgs) -> Result<Value, Error> {
    let cloud = splat::read_cloud_ply(&a.cloud)?;
    let (w, h, pixels) = io::read_rgb_png(&a.target)?;
    let camera = load_camera(a.camera.as_deref(), &cloud, Some((w, h)))?;
    camera.validate()?;
    if (camera.width, camera.height) != (w, h) {
        return Err(Error::InvalidParams(format!(
            "target is {w}x{h}, camera renders {}x{}",
            camera.width, camera.height
        )));
    }
    let oracle = GroundTruthOracle::new(RgbImage { width: w, height: h, pixels });
    let options = RefineOptions {
        iterations: a.iters,
        step_size: a.step,
        seed: a.common.seed,
        ..RefineOptions::default()
    };
    let views = [(camera, &oracle as &dyn DenoiserOracle)];
    let result = splat::refine(&cloud, &views, &options, None)?;
    splat::write_cloud_ply(&result.cloud, &a.out)?;
    Ok(json!({
        "iterations": a.iters,
        "first_loss": result.loss.first(),
        "last_loss": result.loss.last(),
        "outputs": [path_str(&a.out)],
    }))
}

fn cmd_eval(a: EvalArgs) -> Result<Value, Error> {
    let map = TerrainMap::load(&a.map)?;
    let plan = match &a.plan {
        Some(p) => StitchPlan::from_json(&io::read_text(p)?)?,
        None => map
            .plan()
            .cloned()
            .ok_or_else(|| Error::InvalidParams("map has no plan.json; pass --plan".into()))?,
    };
    let pca = PcaModel::read_csv(&a.pca)?;
    let mut report = EvalReport::new();
    let mse = eval::latent_mse(&map, &plan, &ReferenceExtractor, &pca)?;
    let mean = mse.mean;
    report.add_latent_mse(plan.pattern, FillMode::default(), mse);
    let seams = eval::seam_score(&map);
    let aggregate = seams.aggregate;
    report.add_seams("map", seams);
    report.critical_paths.push(eval::critical_path_row(&plan)?);
    report.write(&a.report)?;
    Ok(json!({
        "latent_mse": mean,
        "seam_score": aggregate,
        "critical_path": plan.critical_path()?,
        "outputs": [path_str(&a.report)],
    }))
}

fn cmd_pca_fit(a: PcaFitArgs) -> Result<Value, Error> {
    match &a.corpus {
        Some(dir) => {
            if a.calibration.is_some() {
                return Err(Error::InvalidParams(
                    "--calibration needs a generated corpus; drop --corpus".into(),
                ));
            }
            let mut prefixes = Vec::new();
            let entries = std::fs::read_dir(dir).map_err(|e| Error::InvalidParams(format!("{}: {e}", dir.display())))?;
            for entry in entries.flatten() {
                let name = entry.file_name().to_string_lossy().into_owned();
                if let Some(stem) = name.strip_suffix("_rgb.png") {
                    prefixes.push(dir.join(stem));
                }
            }
            prefixes.sort();
            let features = prefixes
                .iter()
                .map(|p| io::read_patch(p).map(|patch| ReferenceExtractor.extract(&patch)))
                .collect::<Result<Vec<_>, _>>()?;
            let pca = fit_pca(&features, a.dim)?;
            pca.write_csv(&a.out)?;
            Ok(json!({
                "patches": features.len(),
                "explained_variance": pca.explained_variance,
                "outputs": [path_str(&a.out)],
            }))
        }
        None => {
            let generator = ReferenceGenerator::new(a.patch);
            let space = fit_latent_space(&generator, &ReferenceExtractor, a.patch, a.dim, a.grid, a.common.seed)?;
            space.pca.write_csv(&a.out)?;
            let mut outputs = vec![path_str(&a.out)];
            if let Some(c) = &a.calibration {
                space.calibration.write_csv(c)?;
                outputs.push(path_str(c));
            }
            Ok(json!({
                "patches": a.grid * a.grid,
                "explained_variance": space.pca.explained_variance,
                "recovery": space.calibration.recovery,
                "outputs": outputs,
            }))
        }
    }
}

fn cmd_run(a: RunArgs) -> Result<Value, Error> {
    let mut config = match &a.config {
        Some(p) => PipelineConfig::from_toml(&io::read_text(p)?)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if let Some(v) = a.out {
        config.output = v;
    }
    if let Some(v) = a.workers {
        config.workers = v;
    }
    if let Some(v) = a.pattern {
        config.pattern = v.into();
    }
    if let Some(v) = a.inpaint {
        config.inpaint = v.into();
    }
    if let Some((r, c)) = a.grid {
        config.grid.rows = r;
        config.grid.cols = c;
    }
    if let Some(v) = a.patch {
        config.grid.patch = v;
    }
    if let Some(v) = a.scale {
        config.field.scale = v;
    }
    config.validate()?;
    let summary = run_pipeline(&config)?;
    Ok(json!({
        "stages": summary.manifest.stages,
        "files": summary.manifest.files.len(),
        "latent_mse": summary.report.latent_mse.first().map(|m| m.result.mean),
        "seam_score": summary.report.seams.first().map(|s| s.score.aggregate),
        "outputs": [path_str(&summary.output)],
    }))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Stage { source, .. } | Error::Task { source, .. } => exit_code(source),
        Error::InvalidParams(_) | Error::Domain(_) | Error::DimensionMismatch { .. } | Error::Format { .. } => {
            EXIT_VALIDATION
        }
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, result) = match cli.command {
        Command::Field(a) => ("field", cmd_field(a)),
        Command::Gen(a) => ("gen", cmd_gen(a)),
        Command::Stitch(a) => ("stitch", cmd_stitch(a)),
        Command::Export(a) => ("export", cmd_export(a)),
        Command::Render(a) => ("render", cmd_render(a)),
        Command::Refine(a) => ("refine", cmd_refine(a)),
        Command::Eval(a) => ("eval", cmd_eval(a)),
        Command::PcaFit(a) => ("pca-fit", cmd_pca_fit(a)),
        Command::Run(a) => ("run", cmd_run(a)),
    };
    match result {
        Ok(mut record) => {
            record["command"] = json!(name);
            record["status"] = json!("ok");
            println!("{record}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = exit_code(&e);
            let record = json!({ "command": name, "status": "error", "exit_code": code, "error": e.to_string() });
            eprintln!("error: {e}");
            println!("{record}");
            ExitCode::from(code)
        }
    }
}
