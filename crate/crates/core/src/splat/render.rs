//! Front-to-back alpha compositing of projected Gaussians and its analytic
//! derivatives.
//!
//! A pixel's color is `C = Σ_i c_i a_i T_i + T_N · background`, with
//! `T_i = Π_{j<i} (1 - a_j)` over the Gaussians sorted by view depth and
//! `a_i = α_i · exp(-½ dᵀ Σ₂ᴅ⁻¹ d)` the effective opacity at pixel offset
//! `d`. Gaussians are sorted once per frame (not per ray), and footprints
//! are truncated at three standard deviations.

use crate::par;

use super::camera::Camera;
use super::gaussian::{Gaussian, GaussianCloud};

/// Added to every projected covariance, in squared pixels.
pub const SCREEN_DILATION: f64 = 0.3;
/// Squared Mahalanobis radius beyond which a footprint is ignored.
pub const CUTOFF: f64 = 9.0;
const TILE: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn mean_abs_difference(&self, other: &RgbImage) -> f64 {
        let n = (self.pixels.len() * 3) as f64;
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).abs()).sum::<f64>())
            .sum::<f64>()
            / n
    }
}

/// A Gaussian as seen from one camera.
#[derive(Clone, Debug)]
struct Splat {
    index: usize,
    center: [f64; 2],
    depth: f64,
    /// Inverse 2D covariance `[a, b, c]` for `[[a, b], [b, c]]`.
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
    x_range: (usize, usize),
    y_range: (usize, usize),
}

/// Splats sorted front to back, binned into screen tiles.
struct Frame {
    splats: Vec<Splat>,
    tiles: Vec<Vec<u32>>,
    tiles_x: usize,
}

fn project(g: &Gaussian, index: usize, camera: &Camera) -> Option<Splat> {
    let pc = camera.to_camera(g.position);
    let (center, depth, j) = camera.project(pc)?;
    let s = g.covariance();
    let w = &camera.rotation;
    // Σ_cam = W Σ Wᵀ, then T = J W and Σ₂ᴅ = T Σ Tᵀ.
    let mut t = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            t[r][c] = (0..3).map(|k| j[r][k] * w[k][c]).sum();
        }
    }
    let mut cov = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            cov[r][c] = (0..3)
                .map(|k| (0..3).map(|l| t[r][k] * s[k][l] * t[c][l]).sum::<f64>())
                .sum();
        }
    }
    let (a, b, c) = (cov[0][0] + SCREEN_DILATION, 0.5 * (cov[0][1] + cov[1][0]), cov[1][1] + SCREEN_DILATION);
    let det = a * c - b * b;
    if !(det > 0.0) {
        return None;
    }
    let lambda_max = 0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let radius = CUTOFF.sqrt() * lambda_max.sqrt();
    // Pixel centers i + 0.5 inside [center - radius, center + radius].
    let range = |mid: f64, n: usize| -> Option<(usize, usize)> {
        let lo = (mid - radius - 0.5).ceil().max(0.0);
        let hi = (mid + radius - 0.5).floor().min(n as f64 - 1.0);
        (lo <= hi).then(|| (lo as usize, hi as usize))
    };
    let x_range = range(center[0], camera.width)?;
    let y_range = range(center[1], camera.height)?;
    Some(Splat {
        index,
        center,
        depth,
        conic: [c / det, -b / det, a / det],
        opacity: g.opacity(),
        color: g.color(),
        x_range,
        y_range,
    })
}

/// Parameter bits used to order Gaussians at equal depth, so the order does
/// not depend on their position in the input.
fn canonical_key(g: &Gaussian) -> [u64; 14] {
    let mut key = [0u64; 14];
    let values = g
        .position
        .iter()
        .chain(&g.scale)
        .chain(&g.rotation)
        .chain(std::iter::once(&g.opacity_logit))
        .chain(&g.color_raw);
    for (k, v) in key.iter_mut().zip(values) {
        *k = v.to_bits();
    }
    key
}

fn prepare(cloud: &GaussianCloud, camera: &Camera) -> Frame {
    let splats: Vec<Splat> = cloud
        .gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project(g, i, camera))
        .collect();
    let keys: Vec<[u64; 14]> = splats.iter().map(|s| canonical_key(&cloud.gaussians[s.index])).collect();
    let mut order: Vec<usize> = (0..splats.len()).collect();
    order.sort_by(|&a, &b| {
        splats[a]
            .depth
            .total_cmp(&splats[b].depth)
            .then_with(|| keys[a].cmp(&keys[b]))
            .then(splats[a].index.cmp(&splats[b].index))
    });
    let splats: Vec<Splat> = order.into_iter().map(|k| splats[k].clone()).collect();
    let tiles_x = camera.width.div_ceil(TILE);
    let tiles_y = camera.height.div_ceil(TILE);
    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    for (k, s) in splats.iter().enumerate() {
        for ty in s.y_range.0 / TILE..=s.y_range.1 / TILE {
            for tx in s.x_range.0 / TILE..=s.x_range.1 / TILE {
                tiles[ty * tiles_x + tx].push(k as u32);
            }
        }
    }
    Frame { splats, tiles, tiles_x }
}

/// One Gaussian's share of a pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contribution {
    /// Index into the cloud.
    pub index: usize,
    /// Opacity before the footprint falloff.
    pub opacity: f64,
    /// Footprint falloff `exp(-½ dᵀ Σ⁻¹ d)`.
    pub falloff: f64,
    /// Effective opacity `a_i = opacity · falloff`.
    pub alpha: f64,
    /// Transmittance in front of this Gaussian, `T_i`.
    pub transmittance: f64,
    /// Compositing weight `a_i · T_i`.
    pub weight: f64,
    pub color: [f64; 3],
}

/// Everything that went into one pixel, front to back.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelTrace {
    pub contributions: Vec<Contribution>,
    /// Transmittance left for the background.
    pub transmittance: f64,
    pub color: [f64; 3],
}

/// Composites one pixel front to back, handing each contribution to
/// `visit`. Returns the color and the leftover transmittance.
fn composite_in_frame(
    frame: &Frame,
    background: [f64; 3],
    x: usize,
    y: usize,
    mut visit: impl FnMut(Contribution),
) -> ([f64; 3], f64) {
    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
    let tile = &frame.tiles[(y / TILE) * frame.tiles_x + x / TILE];
    let mut t = 1.0;
    let mut color = [0.0; 3];
    for &k in tile {
        let s = &frame.splats[k as usize];
        if x < s.x_range.0 || x > s.x_range.1 || y < s.y_range.0 || y > s.y_range.1 {
            continue;
        }
        let (dx, dy) = (px - s.center[0], py - s.center[1]);
        let power = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
        if power > CUTOFF {
            continue;
        }
        let falloff = (-0.5 * power).exp();
        let alpha = s.opacity * falloff;
        let weight = alpha * t;
        for c in 0..3 {
            color[c] += s.color[c] * weight;
        }
        visit(Contribution {
            index: s.index,
            opacity: s.opacity,
            falloff,
            alpha,
            transmittance: t,
            weight,
            color: s.color,
        });
        t *= 1.0 - alpha;
    }
    for c in 0..3 {
        color[c] += background[c] * t;
    }
    (color, t)
}

fn trace_in_frame(frame: &Frame, background: [f64; 3], x: usize, y: usize) -> PixelTrace {
    let mut contributions = Vec::new();
    let (color, transmittance) = composite_in_frame(frame, background, x, y, |c| contributions.push(c));
    PixelTrace {
        contributions,
        transmittance,
        color,
    }
}

pub fn render(cloud: &GaussianCloud, camera: &Camera) -> RgbImage {
    let frame = prepare(cloud, camera);
    let rows = par::map_range(camera.height, |y| {
        (0..camera.width)
            .map(|x| composite_in_frame(&frame, camera.background, x, y, |_| {}).0)
            .collect::<Vec<_>>()
    });
    RgbImage {
        width: camera.width,
        height: camera.height,
        pixels: rows.into_iter().flatten().collect(),
    }
}

pub fn trace_pixel(cloud: &GaussianCloud, camera: &Camera, x: usize, y: usize) -> PixelTrace {
    trace_in_frame(&prepare(cloud, camera), camera.background, x, y)
}

/// Derivatives of one pixel with respect to one Gaussian's opacity `α_i`
/// and color `c_i`, per output channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelGradient {
    pub index: usize,
    /// `∂C_ch / ∂α_i`.
    pub d_opacity: [f64; 3],
    /// `∂C_ch / ∂c_i,ch` (the cross-channel terms are zero).
    pub d_color: [f64; 3],
}

/// With `R_i` the color composited behind Gaussian `i` (normalized by its
/// own transmittance), `∂C/∂a_i = T_i (c_i - R_i)` and `∂C/∂c_i = a_i T_i`.
/// `R` is accumulated back to front so fully opaque layers need no division.
fn trace_gradients(trace: &PixelTrace, background: [f64; 3]) -> Vec<PixelGradient> {
    let n = trace.contributions.len();
    let mut out = vec![
        PixelGradient {
            index: 0,
            d_opacity: [0.0; 3],
            d_color: [0.0; 3],
        };
        n
    ];
    let mut behind = background;
    for (k, g) in trace.contributions.iter().enumerate().rev() {
        let mut d_opacity = [0.0; 3];
        for c in 0..3 {
            d_opacity[c] = g.transmittance * (g.color[c] - behind[c]) * g.falloff;
        }
        out[k] = PixelGradient {
            index: g.index,
            d_opacity,
            d_color: [g.weight; 3],
        };
        for c in 0..3 {
            behind[c] = g.color[c] * g.alpha + (1.0 - g.alpha) * behind[c];
        }
    }
    out
}

pub fn pixel_gradients(cloud: &GaussianCloud, camera: &Camera, x: usize, y: usize) -> Vec<PixelGradient> {
    trace_gradients(&trace_pixel(cloud, camera, x, y), camera.background)
}

/// Gradient of a scalar with respect to the unconstrained appearance
/// parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudGradient {
    pub opacity_logit: Vec<f64>,
    pub color_raw: Vec<[f64; 3]>,
}

impl CloudGradient {
    pub fn zeros(n: usize) -> Self {
        CloudGradient {
            opacity_logit: vec![0.0; n],
            color_raw: vec![[0.0; 3]; n],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.opacity_logit.iter().all(|&v| v == 0.0) && self.color_raw.iter().flatten().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.opacity_logit
            .iter()
            .chain(self.color_raw.iter().flatten())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Gradient of `Σ_pixels Σ_ch upstream · render` with `upstream` held
/// constant. Rows are processed in parallel and summed in row order, so the
/// result does not depend on the thread count.
pub fn backward(cloud: &GaussianCloud, camera: &Camera, upstream: &RgbImage) -> CloudGradient {
    assert_eq!((upstream.width, upstream.height), (camera.width, camera.height));
    let frame = prepare(cloud, camera);
    let rows = par::map_range(camera.height, |y| {
        let mut entries: Vec<(usize, f64, [f64; 3])> = Vec::new();
        for x in 0..camera.width {
            let g = upstream.get(x, y);
            if g == [0.0; 3] {
                continue;
            }
            let trace = trace_in_frame(&frame, camera.background, x, y);
            for pg in trace_gradients(&trace, camera.background) {
                let d_alpha: f64 = (0..3).map(|c| g[c] * pg.d_opacity[c]).sum();
                entries.push((pg.index, d_alpha, [0, 1, 2].map(|c| g[c] * pg.d_color[c])));
            }
        }
        entries
    });
    let mut grad = CloudGradient::zeros(cloud.len());
    for (index, d_alpha, d_color) in rows.into_iter().flatten() {
        grad.opacity_logit[index] += d_alpha;
        for c in 0..3 {
            grad.color_raw[index][c] += d_color[c];
        }
    }
    // Chain through the sigmoids.
    for (i, g) in cloud.gaussians.iter().enumerate() {
        let a = g.opacity();
        grad.opacity_logit[i] *= a * (1.0 - a);
        let col = g.color();
        for c in 0..3 {
            grad.color_raw[i][c] *= col[c] * (1.0 - col[c]);
        }
    }
    grad
}
