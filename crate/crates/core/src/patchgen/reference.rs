use crate::error::{Error, Result};
use crate::latent_field::LatentVector;
use crate::rng;

use super::inpaint::{reference_inpaint, InpaintSettings};
use super::{ConditionalGenerator, InpaintMode, PixelMask, RgbdPatch};

/// Low and high elevation colors of the two palettes.
pub const PALETTE_SAND: [[f64; 3]; 2] = [[0.62, 0.55, 0.38], [0.93, 0.87, 0.68]];
pub const PALETTE_REEF: [[f64; 3]; 2] = [[0.08, 0.22, 0.30], [0.62, 0.36, 0.48]];

const ROUGHNESS_RANGE: f64 = 1.5;
const OCTAVES: u32 = 5;
const PERSISTENCE: f64 = 0.5;
const BUMP: f64 = 0.06;
const LIGHT: [f64; 3] = [-0.48, -0.56, 0.675];

/// Procedural stand-in for a trained latent-conditioned generator.
///
/// `latent[0]` sets terrain roughness (the base frequency of a seeded
/// value-noise octave stack, clamped to `[-1.5, 1.5]`) and `latent[1]`
/// blends between the sand and reef palettes (clamped to `[0, 1]`). Further
/// components are ignored. RGB is the palette color at each pixel's
/// elevation, Lambert-shaded from the heightfield; depth is the normalized
/// heightfield flipped so that high ground is near the camera.
///
/// Noise coordinates are measured in units of `feature_scale` pixels, so
/// windows of any size show the same texture density.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceGenerator {
    pub feature_scale: f64,
    pub inpaint: InpaintSettings,
}

impl Default for ReferenceGenerator {
    fn default() -> Self {
        ReferenceGenerator::new(super::DEFAULT_PATCH_SIZE)
    }
}

impl ReferenceGenerator {
    pub fn new(patch_size: usize) -> Self {
        ReferenceGenerator {
            feature_scale: patch_size.max(1) as f64,
            inpaint: InpaintSettings::default(),
        }
    }

    pub fn with_inpaint(mut self, settings: InpaintSettings) -> Self {
        self.inpaint = settings;
        self
    }

    /// Generates a `feature_scale`-sized square patch.
    pub fn reference_generate(&self, latent: &LatentVector, seed: u64) -> Result<RgbdPatch> {
        let side = self.feature_scale as usize;
        self.generate(latent, seed, side, side)
    }

    pub(super) fn render(&self, roughness: f64, palette: f64, seed: u64, width: usize, height: usize) -> RgbdPatch {
        let base_freq = 2f64.powf(1.5 + 1.5 * roughness);
        let inv = 1.0 / self.feature_scale;
        // Sample one pixel beyond each edge for central differences.
        let (pw, ph) = (width + 2, height + 2);
        let mut height_map = vec![0.0; pw * ph];
        for j in 0..ph {
            for i in 0..pw {
                let x = (i as f64 - 0.5) * inv;
                let y = (j as f64 - 0.5) * inv;
                let mut amp = 1.0;
                let mut freq = base_freq;
                let mut h = 0.0;
                for o in 0..OCTAVES {
                    h += amp * value_noise(seed, o, x * freq, y * freq);
                    amp *= PERSISTENCE;
                    freq *= 2.0;
                }
                height_map[j * pw + i] = h;
            }
        }

        let interior = |i: usize, j: usize| height_map[(j + 1) * pw + i + 1];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..height {
            for i in 0..width {
                let h = interior(i, j);
                lo = lo.min(h);
                hi = hi.max(h);
            }
        }
        let span = if hi > lo { hi - lo } else { 1.0 };
        let light_norm = LIGHT.iter().map(|v| v * v).sum::<f64>().sqrt();
        let low = lerp3(PALETTE_SAND[0], PALETTE_REEF[0], palette);
        let high = lerp3(PALETTE_SAND[1], PALETTE_REEF[1], palette);

        let mut patch = RgbdPatch::new(width, height);
        for j in 0..height {
            for i in 0..width {
                let h = interior(i, j);
                let t = (h - lo) / span;
                // Slopes per unit of feature scale.
                let gx = (height_map[(j + 1) * pw + i + 2] - height_map[(j + 1) * pw + i]) * 0.5 * self.feature_scale;
                let gy = (height_map[(j + 2) * pw + i + 1] - height_map[j * pw + i + 1]) * 0.5 * self.feature_scale;
                let (nx, ny) = (-BUMP * gx, -BUMP * gy);
                let n_norm = (nx * nx + ny * ny + 1.0).sqrt();
                let lambert = ((nx * LIGHT[0] + ny * LIGHT[1] + LIGHT[2]) / (n_norm * light_norm)).max(0.0);
                let shade = 0.3 + 0.85 * lambert;
                let base = lerp3(low, high, t);
                let depth = if hi > lo { 1.0 - t } else { 0.5 };
                patch.set(
                    i,
                    j,
                    [
                        (base[0] * shade).clamp(0.0, 1.0),
                        (base[1] * shade).clamp(0.0, 1.0),
                        (base[2] * shade).clamp(0.0, 1.0),
                        depth.clamp(0.0, 1.0),
                    ],
                );
            }
        }
        patch
    }
}

/// Roughness and palette controls read from a latent.
pub(super) fn controls(latent: &LatentVector) -> Result<(f64, f64)> {
    if latent.dim() < 2 {
        return Err(Error::Domain(format!(
            "reference generator needs a latent of dimension >= 2, got {}",
            latent.dim()
        )));
    }
    if !latent.is_finite() {
        return Err(Error::Domain("latent has non-finite components".into()));
    }
    Ok((
        latent.0[0].clamp(-ROUGHNESS_RANGE, ROUGHNESS_RANGE),
        latent.0[1].clamp(0.0, 1.0),
    ))
}

impl ConditionalGenerator for ReferenceGenerator {
    fn generate(&self, latent: &LatentVector, seed: u64, width: usize, height: usize) -> Result<RgbdPatch> {
        let (roughness, palette) = controls(latent)?;
        if width == 0 || height == 0 {
            return Err(Error::Domain("patch dimensions must be positive".into()));
        }
        Ok(self.render(roughness, palette, seed, width, height))
    }

    fn inpaint(&self, patch: &RgbdPatch, mask: &PixelMask, mode: &InpaintMode, seed: u64) -> Result<RgbdPatch> {
        reference_inpaint(self, patch, mask, mode, seed)
    }
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn lattice(seed: u64, octave: u32, ix: i64, iy: i64) -> f64 {
    2.0 * rng::uniform(&[seed, octave as u64, rng::word(ix), rng::word(iy)]) - 1.0
}

/// Value noise in `[-1, 1]` with quintic interpolation between lattice
/// values.
fn value_noise(seed: u64, octave: u32, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let (tx, ty) = (fade(x - fx), fade(y - fy));
    let a = lattice(seed, octave, ix, iy);
    let b = lattice(seed, octave, ix + 1, iy);
    let c = lattice(seed, octave, ix, iy + 1);
    let d = lattice(seed, octave, ix + 1, iy + 1);
    let top = a + (b - a) * tx;
    let bottom = c + (d - c) * tx;
    top + (bottom - top) * ty
}
