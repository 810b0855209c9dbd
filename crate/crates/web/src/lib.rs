//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every call is pure in its arguments: the same inputs give the same
//! pixels in the browser and natively.

use serde_json::json;
use wasm_bindgen::prelude::*;

use fractalsea_core::latent_field::{generate_field, FractalParams, LatentField, LatentVector};
use fractalsea_core::patchgen::ReferenceGenerator;
use fractalsea_core::pipeline::seeded_corner_controls;
use fractalsea_core::stitcher::{self, execute_plan, FillMode, Pattern, StitchGeometry, StitchPlan};
use fractalsea_core::{eval, Error};

/// Largest map side the demo will build, in pixels.
const MAX_SIDE: usize = 1024;

/// An RGBA image plus a JSON summary of how it was made.
#[wasm_bindgen]
pub struct Frame {
    width: u32,
    height: u32,
    rgba: Vec<u8>,
    info: String,
}

#[wasm_bindgen]
impl Frame {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major RGBA bytes, ready for `ImageData`.
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn info(&self) -> String {
        self.info.clone()
    }
}

impl Frame {
    pub fn pixels(&self) -> &[u8] {
        &self.rgba
    }
}

fn js_err(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn parse_pattern(name: &str) -> Result<Pattern, Error> {
    match name {
        "raster" => Ok(Pattern::Raster),
        "lawnmower" => Ok(Pattern::Lawnmower),
        "parallel" => Ok(Pattern::Parallel),
        other => Err(Error::InvalidParams(format!("unknown pattern `{other}`"))),
    }
}

fn control_field(seed: u64, levels: u32, scale: f64) -> Result<LatentField, Error> {
    let corners = seeded_corner_controls(seed).map(|c| LatentVector(c.to_vec()));
    generate_field(&FractalParams::new(levels, scale, seed, corners))
}

fn byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Field preview, `cell` pixels per vertex. Roughness (the first control,
/// in [-1, 1]) drives red, palette (in [0, 1]) drives blue.
pub fn field_preview_native(seed: u64, levels: u32, scale: f64, cell: u32) -> Result<Frame, Error> {
    let field = control_field(seed, levels, scale)?;
    let n = field.resolution();
    let cell = cell.max(1) as usize;
    let side = n * cell;
    if side > MAX_SIDE {
        return Err(Error::InvalidParams(format!("preview side {side} exceeds {MAX_SIDE}")));
    }
    let mut rgba = Vec::with_capacity(side * side * 4);
    for y in 0..side {
        for x in 0..side {
            let v = field.vertex(x / cell, y / cell);
            rgba.extend_from_slice(&[byte((v[0] + 1.0) / 2.0), 64, byte(v[1]), 255]);
        }
    }
    let values = field.values();
    let info = json!({
        "resolution": n,
        "dim": field.dim(),
        "min": values.iter().copied().fold(f64::INFINITY, f64::min),
        "max": values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    Ok(Frame {
        width: side as u32,
        height: side as u32,
        rgba,
        info: info.to_string(),
    })
}

fn build_plan(seed: u64, scale: f64, rows: usize, cols: usize, patch: usize, pattern: &str) -> Result<StitchPlan, Error> {
    let geometry = StitchGeometry::new(rows, cols, patch);
    geometry.validate()?;
    if geometry.width().max(geometry.height()) > MAX_SIDE {
        return Err(Error::InvalidParams(format!("map side exceeds {MAX_SIDE} pixels")));
    }
    let field = control_field(seed, 3, scale)?;
    stitcher::plan(parse_pattern(pattern)?, geometry, &field, seed)
}

/// Stitches a `rows × cols` map and reports its critical path and seam score.
pub fn stitch_map_native(
    seed: u64,
    scale: f64,
    rows: u32,
    cols: u32,
    patch: u32,
    pattern: &str,
    conditional: bool,
) -> Result<Frame, Error> {
    let plan = build_plan(seed, scale, rows as usize, cols as usize, patch as usize, pattern)?;
    let fill = if conditional { FillMode::Conditional } else { FillMode::Unconditional };
    let map = execute_plan(&plan, &ReferenceGenerator::new(patch as usize), fill, 1)?;
    let mut rgba = Vec::with_capacity(map.width() * map.height() * 4);
    for px in map.rgbd().pixels() {
        rgba.extend_from_slice(&[byte(px[0]), byte(px[1]), byte(px[2]), 255]);
    }
    let seams = eval::seam_score(&map);
    let info = json!({
        "tasks": plan.tasks.len(),
        "critical_path": plan.critical_path()?,
        "seam_score": seams.aggregate,
        "fill": fill.name(),
    });
    Ok(Frame {
        width: map.width() as u32,
        height: map.height() as u32,
        rgba,
        info: info.to_string(),
    })
}

/// The plan as JSON: each task's owned rectangle and the level it runs in.
pub fn plan_stages_native(rows: u32, cols: u32, patch: u32, pattern: &str) -> Result<String, Error> {
    let plan = build_plan(0, 0.0, rows as usize, cols as usize, patch as usize, pattern)?;
    let mut level_of = vec![0; plan.tasks.len()];
    for (level, ids) in plan.levels()?.iter().enumerate() {
        for &id in ids {
            level_of[id] = level + 1;
        }
    }
    let tasks: Vec<_> = plan
        .tasks
        .iter()
        .map(|t| {
            json!({
                "id": t.id,
                "kind": t.kind,
                "row": t.row,
                "col": t.col,
                "stage": level_of[t.id],
                "rect": [t.owned.x, t.owned.y, t.owned.w, t.owned.h],
            })
        })
        .collect();
    Ok(json!({
        "width": plan.width(),
        "height": plan.height(),
        "critical_path": plan.critical_path()?,
        "tasks": tasks,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn field_preview(seed: u32, levels: u32, scale: f64, cell: u32) -> Result<Frame, JsValue> {
    field_preview_native(seed.into(), levels, scale, cell).map_err(js_err)
}

#[wasm_bindgen]
pub fn stitch_map(
    seed: u32,
    scale: f64,
    rows: u32,
    cols: u32,
    patch: u32,
    pattern: &str,
    conditional: bool,
) -> Result<Frame, JsValue> {
    stitch_map_native(seed.into(), scale, rows, cols, patch, pattern, conditional).map_err(js_err)
}

#[wasm_bindgen]
pub fn plan_stages(rows: u32, cols: u32, patch: u32, pattern: &str) -> Result<String, JsValue> {
    plan_stages_native(rows, cols, patch, pattern).map_err(js_err)
}
