//! Fractal latent fields sampled with the diamond-square process.
//!
//! A field covers a square domain with a `(2^n + 1)²` vertex grid. Starting
//! from four corner latents, each recursion level `k` first sets every
//! square's center to the mean of its four corners (diamond step), then every
//! diamond's center to the mean of its in-grid vertices (square step), adding
//! `s_k · σ` with `σ ~ N(0, I_d)` and `s_k = scale · decay^k`.
//!
//! Square-step vertices on the boundary average only their two collinear edge
//! neighbors. With `scale = 0` the process therefore reproduces bilinear
//! interpolation of the corners exactly.
//!
//! Noise is drawn from [`crate::rng::gaussian`] keyed by
//! `(seed, level, x, y, dim)`, so a field is independent of evaluation order
//! and thread count, and each latent dimension has its own stream.

use std::fmt::Write as _;
use std::io::Write as _;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{par, rng};

/// Largest accepted `levels` (a 16385² grid).
pub const MAX_LEVELS: u32 = 14;

pub const DEFAULT_DECAY: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Self {
        LatentVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        LatentVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn squared_distance(&self, other: &LatentVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl From<Vec<f64>> for LatentVector {
    fn from(v: Vec<f64>) -> Self {
        LatentVector(v)
    }
}

/// Corner order used throughout: top-left, top-right, bottom-left,
/// bottom-right. "Top" is row 0, "left" is column 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractalParams {
    pub levels: u32,
    pub scale: f64,
    pub decay: f64,
    pub seed: u64,
    pub corners: [LatentVector; 4],
}

impl FractalParams {
    pub fn new(levels: u32, scale: f64, seed: u64, corners: [LatentVector; 4]) -> Self {
        FractalParams {
            levels,
            scale,
            decay: DEFAULT_DECAY,
            seed,
            corners,
        }
    }

    pub fn with_decay(mut self, decay: f64) -> Self {
        self.decay = decay;
        self
    }

    pub fn side(&self) -> usize {
        (1usize << self.levels) + 1
    }

    pub fn dim(&self) -> usize {
        self.corners[0].dim()
    }

    /// Noise amplitude `s_k` at recursion level `k`.
    pub fn level_scale(&self, level: u32) -> f64 {
        self.scale * self.decay.powi(level as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels > MAX_LEVELS {
            return Err(Error::InvalidParams(format!(
                "levels {} exceeds the maximum of {MAX_LEVELS}",
                self.levels
            )));
        }
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "scale must be finite and non-negative, got {}",
                self.scale
            )));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "decay must lie in (0, 1], got {}",
                self.decay
            )));
        }
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::InvalidParams("latent dimension must be at least 1".into()));
        }
        for (name, c) in ["top-left", "top-right", "bottom-left", "bottom-right"]
            .iter()
            .zip(&self.corners)
        {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
            if !c.is_finite() {
                return Err(Error::InvalidParams(format!("{name} corner latent is not finite")));
            }
        }
        Ok(())
    }
}

/// Working grid used while a field is being generated. Tracks which vertices
/// have been populated so the recursive steps can check their prerequisites.
#[derive(Clone, Debug)]
pub struct FieldGrid {
    side: usize,
    dims: Range<usize>,
    values: Vec<f64>,
    filled: Vec<bool>,
}

impl FieldGrid {
    /// A grid with only the four corners populated, carrying latent
    /// components `dims` of `params`.
    pub fn with_corners(params: &FractalParams, dims: Range<usize>) -> Self {
        let side = params.side();
        let width = dims.len();
        let mut grid = FieldGrid {
            side,
            dims: dims.clone(),
            values: vec![0.0; side * side * width],
            filled: vec![false; side * side],
        };
        let last = side - 1;
        for (corner, (x, y)) in params
            .corners
            .iter()
            .zip([(0, 0), (last, 0), (0, last), (last, last)])
        {
            grid.set(x, y, &corner.0[dims.clone()]);
        }
        grid
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn width(&self) -> usize {
        self.dims.len()
    }

    pub fn is_filled(&self, x: usize, y: usize) -> bool {
        self.filled[y * self.side + x]
    }

    pub fn get(&self, x: usize, y: usize) -> &[f64] {
        let w = self.width();
        let i = (y * self.side + x) * w;
        &self.values[i..i + w]
    }

    fn set(&mut self, x: usize, y: usize, v: &[f64]) {
        let w = self.width();
        let i = (y * self.side + x) * w;
        self.values[i..i + w].copy_from_slice(v);
        self.filled[y * self.side + x] = true;
    }

    fn expect_filled(&self, x: usize, y: usize) -> &[f64] {
        assert!(
            self.is_filled(x, y),
            "vertex ({x}, {y}) read before it was populated"
        );
        self.get(x, y)
    }

    fn into_values(self) -> Vec<f64> {
        assert!(self.filled.iter().all(|&f| f), "field has unpopulated vertices");
        self.values
    }
}

/// Noise source for one generation run.
#[derive(Clone, Copy, Debug)]
pub struct LevelNoise<'a> {
    params: &'a FractalParams,
}

impl<'a> LevelNoise<'a> {
    pub fn new(params: &'a FractalParams) -> Self {
        LevelNoise { params }
    }

    /// `s_k · σ` for one component of the vertex at `(x, y)`.
    pub fn offset(&self, level: u32, x: usize, y: usize, dim: usize) -> f64 {
        let s = self.params.level_scale(level);
        if s == 0.0 {
            return 0.0;
        }
        s * rng::gaussian(&[
            self.params.seed,
            level as u64,
            x as u64,
            y as u64,
            dim as u64,
        ])
    }
}

fn half_step(side: usize, level: u32) -> usize {
    (side - 1) >> (level + 1)
}

fn apply_updates(grid: &mut FieldGrid, updates: Vec<Vec<(usize, usize, Vec<f64>)>>) {
    for row in updates {
        for (x, y, v) in row {
            grid.set(x, y, &v);
        }
    }
}

/// Sets the center of every level-`level` square to the mean of its four
/// corners plus noise.
///
/// Panics if a corner has not been populated yet.
pub fn diamond_step(grid: &mut FieldGrid, level: u32, noise: &LevelNoise<'_>) {
    let half = half_step(grid.side, level);
    assert!(half > 0, "level {level} is below the grid resolution");
    let centers: Vec<usize> = (half..grid.side).step_by(2 * half).collect();
    let view = &*grid;
    let updates = par::map_collect(&centers, |&y| {
        centers
            .iter()
            .map(|&x| {
                let corners = [
                    view.expect_filled(x - half, y - half),
                    view.expect_filled(x + half, y - half),
                    view.expect_filled(x - half, y + half),
                    view.expect_filled(x + half, y + half),
                ];
                let v = mean_plus_noise(&corners, view.dims.clone(), |d| {
                    noise.offset(level, x, y, d)
                });
                (x, y, v)
            })
            .collect()
    });
    apply_updates(grid, updates);
}

/// Sets the center of every level-`level` diamond to the mean of its in-grid
/// vertices plus noise. On the boundary only the two collinear edge
/// neighbors are averaged.
///
/// Panics if the diamond step for this level has not run.
pub fn square_step(grid: &mut FieldGrid, level: u32, noise: &LevelNoise<'_>) {
    let half = half_step(grid.side, level);
    assert!(half > 0, "level {level} is below the grid resolution");
    let side = grid.side;
    let last = side - 1;
    let rows: Vec<usize> = (0..side).step_by(half).collect();
    let view = &*grid;
    let updates = par::map_collect(&rows, |&y| {
        let start = if (y / half) % 2 == 0 { half } else { 0 };
        (start..side)
            .step_by(2 * half)
            .map(|x| {
                let mut neighbors: Vec<&[f64]> = Vec::with_capacity(4);
                if y == 0 || y == last {
                    neighbors.push(view.expect_filled(x - half, y));
                    neighbors.push(view.expect_filled(x + half, y));
                } else if x == 0 || x == last {
                    neighbors.push(view.expect_filled(x, y - half));
                    neighbors.push(view.expect_filled(x, y + half));
                } else {
                    neighbors.push(view.expect_filled(x - half, y));
                    neighbors.push(view.expect_filled(x + half, y));
                    neighbors.push(view.expect_filled(x, y - half));
                    neighbors.push(view.expect_filled(x, y + half));
                }
                let v = mean_plus_noise(&neighbors, view.dims.clone(), |d| {
                    noise.offset(level, x, y, d)
                });
                (x, y, v)
            })
            .collect()
    });
    apply_updates(grid, updates);
}

fn mean_plus_noise(
    vertices: &[&[f64]],
    dims: Range<usize>,
    noise: impl Fn(usize) -> f64,
) -> Vec<f64> {
    let inv = 1.0 / vertices.len() as f64;
    dims.enumerate()
        .map(|(i, d)| {
            let sum: f64 = vertices.iter().map(|v| v[i]).sum();
            sum * inv + noise(d)
        })
        .collect()
}

fn run(params: &FractalParams, dims: Range<usize>) -> Vec<f64> {
    let mut grid = FieldGrid::with_corners(params, dims);
    let noise = LevelNoise::new(params);
    for level in 0..params.levels {
        diamond_step(&mut grid, level, &noise);
        square_step(&mut grid, level, &noise);
    }
    grid.into_values()
}

/// Generates the latent field for `params` with unit cell extent.
pub fn generate_field(params: &FractalParams) -> Result<LatentField> {
    params.validate()?;
    let dim = params.dim();
    Ok(LatentField {
        resolution: params.side(),
        dim,
        cell_extent: 1.0,
        grid: run(params, 0..dim),
        params: params.clone(),
    })
}

/// Runs the process for a single latent component. The result equals
/// component `dim` of [`generate_field`] because noise streams are keyed
/// per component.
pub fn generate_component(params: &FractalParams, dim: usize) -> Result<Vec<f64>> {
    params.validate()?;
    if dim >= params.dim() {
        return Err(Error::Domain(format!(
            "component {dim} out of range for a {}-dimensional field",
            params.dim()
        )));
    }
    Ok(run(params, dim..dim + 1))
}

/// A populated latent field. Vertex `(x, y)` sits at world position
/// `(x · cell_extent, y · cell_extent)`; `x` runs along columns.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentField {
    resolution: usize,
    dim: usize,
    cell_extent: f64,
    grid: Vec<f64>,
    params: FractalParams,
}

impl LatentField {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_extent(&self) -> f64 {
        self.cell_extent
    }

    pub fn with_cell_extent(mut self, cell_extent: f64) -> Result<Self> {
        if !(cell_extent.is_finite() && cell_extent > 0.0) {
            return Err(Error::InvalidParams(format!(
                "cell extent must be positive, got {cell_extent}"
            )));
        }
        self.cell_extent = cell_extent;
        Ok(self)
    }

    /// Side length of the square domain in world units.
    pub fn extent(&self) -> f64 {
        (self.resolution - 1) as f64 * self.cell_extent
    }

    pub fn params(&self) -> &FractalParams {
        &self.params
    }

    pub fn vertex(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.resolution + x) * self.dim;
        &self.grid[i..i + self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.grid
    }

    /// Bilinear interpolation of the enclosing grid vertices at world
    /// coordinates `(x, y)`.
    pub fn sample(&self, x: f64, y: f64) -> Result<LatentVector> {
        let extent = self.extent();
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 || x > extent || y > extent {
            return Err(Error::Domain(format!(
                "({x}, {y}) lies outside the field extent [0, {extent}]²"
            )));
        }
        let (x0, tx) = self.cell(x);
        let (y0, ty) = self.cell(y);
        let a = self.vertex(x0, y0);
        let b = self.vertex(x0 + 1, y0);
        let c = self.vertex(x0, y0 + 1);
        let d = self.vertex(x0 + 1, y0 + 1);
        let values = (0..self.dim)
            .map(|k| {
                (1.0 - ty) * ((1.0 - tx) * a[k] + tx * b[k]) + ty * ((1.0 - tx) * c[k] + tx * d[k])
            })
            .collect();
        Ok(LatentVector(values))
    }

    /// Samples at normalized coordinates in `[0, 1]²`.
    pub fn sample_unit(&self, u: f64, v: f64) -> Result<LatentVector> {
        let e = self.extent();
        self.sample((u * e).min(e), (v * e).min(e))
    }

    fn cell(&self, coord: f64) -> (usize, f64) {
        let g = coord / self.cell_extent;
        let i = (g.floor() as usize).min(self.resolution - 2);
        (i, g - i as f64)
    }

    /// Writes the field as CSV: `#key=value` metadata lines followed by a
    /// `row,col,phi_0..` table in row-major vertex order.
    pub fn to_csv_string(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let _ = writeln!(out, "# fractalsea latent field v1");
        let _ = writeln!(out, "#levels={}", p.levels);
        let _ = writeln!(out, "#dim={}", self.dim);
        let _ = writeln!(out, "#scale={}", p.scale);
        let _ = writeln!(out, "#decay={}", p.decay);
        let _ = writeln!(out, "#seed={}", p.seed);
        let _ = writeln!(out, "#cell_extent={}", self.cell_extent);
        for (name, c) in ["tl", "tr", "bl", "br"].iter().zip(&p.corners) {
            let _ = writeln!(out, "#corner_{name}={}", join(&c.0, ";"));
        }
        out.push_str("row,col");
        for k in 0..self.dim {
            let _ = write!(out, ",phi_{k}");
        }
        out.push('\n');
        for y in 0..self.resolution {
            for x in 0..self.resolution {
                let _ = writeln!(out, "{y},{x},{}", join(self.vertex(x, y), ","));
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv_string().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<LatentField> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<LatentField> {
        let meta = |key: &str| -> Result<&str> {
            let prefix = format!("#{key}=");
            text.lines()
                .find_map(|l| l.strip_prefix(prefix.as_str()))
                .map(str::trim)
                .ok_or_else(|| Error::format("latent field", format!("missing `{key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            meta(key)?
                .parse()
                .map_err(|_| Error::format("latent field", format!("bad `{key}`")))
        };
        let levels: u32 = meta("levels")?
            .parse()
            .map_err(|_| Error::format("latent field", "bad `levels`"))?;
        let dim: usize = meta("dim")?
            .parse()
            .map_err(|_| Error::format("latent field", "bad `dim`"))?;
        let seed: u64 = meta("seed")?
            .parse()
            .map_err(|_| Error::format("latent field", "bad `seed`"))?;
        let corners = ["tl", "tr", "bl", "br"]
            .iter()
            .map(|n| parse_list(meta(&format!("corner_{n}"))?, ';').map(LatentVector))
            .collect::<Result<Vec<_>>>()?;
        let corners: [LatentVector; 4] = corners.try_into().expect("four corners");
        let params = FractalParams {
            levels,
            scale: num("scale")?,
            decay: num("decay")?,
            seed,
            corners,
        };
        params.validate()?;
        if params.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: params.dim(),
            });
        }
        let side = params.side();
        let mut grid = vec![0.0; side * side * dim];
        let mut seen = vec![false; side * side];
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        for record in reader.records() {
            let record = record.map_err(|e| Error::format("latent field", e.to_string()))?;
            if record.len() != dim + 2 {
                return Err(Error::format("latent field", "row has the wrong number of columns"));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::format("latent field", format!("bad number `{s}`")))
            };
            let row: usize = record[0]
                .parse()
                .map_err(|_| Error::format("latent field", "bad row index"))?;
            let col: usize = record[1]
                .parse()
                .map_err(|_| Error::format("latent field", "bad column index"))?;
            if row >= side || col >= side {
                return Err(Error::format("latent field", "vertex index out of range"));
            }
            for k in 0..dim {
                grid[(row * side + col) * dim + k] = parse(&record[k + 2])?;
            }
            seen[row * side + col] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::format("latent field", "missing vertices"));
        }
        LatentField {
            resolution: side,
            dim,
            cell_extent: 1.0,
            grid,
            params,
        }
        .with_cell_extent(num("cell_extent")?)
    }
}

fn join(values: &[f64], sep: &str) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

fn parse_list(s: &str, sep: char) -> Result<Vec<f64>> {
    s.split(sep)
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::format("latent vector", format!("bad number `{t}`")))
        })
        .collect()
}

/// Parses a corners file: four non-comment lines (top-left, top-right,
/// bottom-left, bottom-right), each a comma-separated latent vector.
pub fn parse_corners(text: &str) -> Result<[LatentVector; 4]> {
    let rows = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| parse_list(l, ',').map(LatentVector))
        .collect::<Result<Vec<_>>>()?;
    rows.try_into()
        .map_err(|r: Vec<_>| Error::format("corners file", format!("expected 4 rows, found {}", r.len())))
}
