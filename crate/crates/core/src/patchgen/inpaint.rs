use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_field::LatentVector;

use super::laplace::{box_blur, distance_to, HarmonicSystem};
use super::reference::{controls, ReferenceGenerator};
use super::{InpaintMode, PixelMask, RgbdPatch};

const DETAIL_SALT: u64 = 0x5EED_DE7A_11ED_0001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InpaintSettings {
    /// Width in pixels of the blend band next to known pixels.
    pub bandwidth: usize,
    /// Gain on the high-pass procedural detail added to unconditional fills.
    pub detail_gain: f64,
    /// Box radius separating detail from the low-pass texture.
    pub detail_radius: usize,
}

impl Default for InpaintSettings {
    fn default() -> Self {
        InpaintSettings {
            bandwidth: 8,
            detail_gain: 1.0,
            detail_radius: 2,
        }
    }
}

/// Fills the unknown pixels of `patch`.
///
/// * Unconditional: harmonic (Laplace) extension of the known pixels over the
///   unknown region, plus high-pass detail from a neutral procedural texture.
///   Detail fades in linearly over `bandwidth` pixels from the known edge.
/// * Conditional: the generator's output for the latent, corrected by a
///   harmonic blend confined to the `bandwidth`-wide band next to the known
///   pixels. The correction is pinned to zero at the band's inner edge.
///
/// Known pixels are returned unchanged.
pub fn reference_inpaint(
    generator: &ReferenceGenerator,
    patch: &RgbdPatch,
    mask: &PixelMask,
    mode: &InpaintMode,
    seed: u64,
) -> Result<RgbdPatch> {
    let (w, h) = (patch.width(), patch.height());
    if mask.width() != w || mask.height() != h {
        return Err(Error::DimensionMismatch {
            expected: w * h,
            got: mask.width() * mask.height(),
        });
    }
    if mask.unknown_count() == 0 {
        return Ok(patch.clone());
    }
    if mask.known_count() == 0 {
        return Err(Error::Domain(
            "inpainting needs at least one known pixel; generate the patch instead".into(),
        ));
    }
    let settings = &generator.inpaint;
    let known = mask.known();
    let dist = distance_to(w, h, known);

    let mut out = patch.clone();
    match mode {
        InpaintMode::Unconditional => {
            let free: Vec<bool> = known.iter().map(|k| !k).collect();
            let system = HarmonicSystem::new(w, h, &free);
            let (r0, p0) = controls(&LatentVector(vec![0.0, 0.5]))?;
            let texture = generator.render(r0, p0, seed ^ DETAIL_SALT, w, h);
            let band = settings.bandwidth.max(1) as f64;
            let mut solved = patch.pixels().to_vec();
            system.solve_lanes(&mut solved);
            for c in 0..4 {
                let t = texture.channel(c);
                let low = box_blur(&t, w, h, settings.detail_radius);
                for i in 0..w * h {
                    if !known[i] {
                        let taper = (dist[i] as f64 / band).min(1.0);
                        let detail = settings.detail_gain * taper * (t[i] - low[i]);
                        out.pixels_mut()[i][c] = (solved[i][c] + detail).clamp(0.0, 1.0);
                    }
                }
            }
        }
        InpaintMode::Conditional(latent) => {
            let (roughness, palette) = controls(latent)?;
            let source = generator.render(roughness, palette, seed, w, h);
            let in_band: Vec<bool> = (0..w * h)
                .map(|i| !known[i] && dist[i] as usize <= settings.bandwidth)
                .collect();
            let system = HarmonicSystem::new(w, h, &in_band);
            let mut correction: Vec<[f64; 4]> = (0..w * h)
                .map(|i| {
                    if known[i] {
                        std::array::from_fn(|c| patch.pixels()[i][c] - source.pixels()[i][c])
                    } else {
                        [0.0; 4]
                    }
                })
                .collect();
            system.solve_lanes(&mut correction);
            for c in 0..4 {
                for i in 0..w * h {
                    if !known[i] {
                        let v = source.pixels()[i][c] + if in_band[i] { correction[i][c] } else { 0.0 };
                        out.pixels_mut()[i][c] = v.clamp(0.0, 1.0);
                    }
                }
            }
        }
    }
    Ok(out)
}
