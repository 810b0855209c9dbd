use crate::patchgen::{luma, RgbdPatch};

use super::pca::FeatureVector;

pub const REFERENCE_FEATURE_DIM: usize = 16;

/// Maps a patch to a fixed-length feature vector. Must be deterministic.
pub trait FeatureExtractor: Send + Sync {
    fn dim(&self) -> usize;

    fn extract(&self, patch: &RgbdPatch) -> FeatureVector;
}

/// Sixteen hand-picked patch statistics:
///
/// | index  | feature                                                     |
/// |--------|-------------------------------------------------------------|
/// | 0..4   | mean of R, G, B, depth                                      |
/// | 4..8   | standard deviation of R, G, B, depth                        |
/// | 8..12  | relative horizontal / vertical gradient energy of luma, then of depth |
/// | 12..16 | mean luma of the top-left, top-right, bottom-left, bottom-right quadrants |
///
/// Gradient energies are measured on a grid of at most 16×16 block means, as
/// the mean squared forward difference divided by twice the grid variance.
/// That makes them independent of patch resolution and contrast: white
/// noise scores about 1, a field that is smooth across the patch near 0.
#[derive(Clone, Copy, Debug, Default)]
pub struct ReferenceExtractor;

impl FeatureExtractor for ReferenceExtractor {
    fn dim(&self) -> usize {
        REFERENCE_FEATURE_DIM
    }

    fn extract(&self, patch: &RgbdPatch) -> FeatureVector {
        let (w, h) = (patch.width(), patch.height());
        let px = patch.pixels();
        let n = px.len() as f64;
        let mut f = Vec::with_capacity(REFERENCE_FEATURE_DIM);

        let mut mean = [0.0; 4];
        for p in px {
            for c in 0..4 {
                mean[c] += p[c];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; 4];
        for p in px {
            for c in 0..4 {
                var[c] += (p[c] - mean[c]).powi(2);
            }
        }
        f.extend_from_slice(&mean);
        f.extend(var.iter().map(|v| (v / n).sqrt()));

        let lum: Vec<f64> = px.iter().map(luma).collect();
        let depth = patch.channel(3);
        for channel in [&lum, &depth] {
            let (dx, dy) = gradient_energy(channel, w, h);
            f.push(dx);
            f.push(dy);
        }

        // Quadrants overlap on the middle row/column when a side is odd.
        let xs = [(0, w.div_ceil(2)), (w / 2, w)];
        let ys = [(0, h.div_ceil(2)), (h / 2, h)];
        for &(y0, y1) in &ys {
            for &(x0, x1) in &xs {
                let mut s = 0.0;
                for y in y0..y1 {
                    s += lum[y * w + x0..y * w + x1].iter().sum::<f64>();
                }
                f.push(s / ((x1 - x0) * (y1 - y0)) as f64);
            }
        }
        FeatureVector(f)
    }
}

const ENERGY_GRID: usize = 16;

fn block_means(v: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (bw, bh) = (w.min(ENERGY_GRID), h.min(ENERGY_GRID));
    let mut out = vec![0.0; bw * bh];
    for by in 0..bh {
        let (y0, y1) = (by * h / bh, (by + 1) * h / bh);
        for bx in 0..bw {
            let (x0, x1) = (bx * w / bw, (bx + 1) * w / bw);
            let mut s = 0.0;
            for y in y0..y1 {
                s += v[y * w + x0..y * w + x1].iter().sum::<f64>();
            }
            out[by * bw + bx] = s / ((x1 - x0) * (y1 - y0)) as f64;
        }
    }
    (out, bw, bh)
}

fn gradient_energy(v: &[f64], w: usize, h: usize) -> (f64, f64) {
    let (v, w, h) = block_means(v, w, h);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var <= 1e-20 {
        return (0.0, 0.0);
    }
    let mut gx = 0.0;
    let mut gy = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                gx += (v[i + 1] - v[i]).powi(2);
            }
            if y + 1 < h {
                gy += (v[i + w] - v[i]).powi(2);
            }
        }
    }
    let nx = ((w.saturating_sub(1)) * h).max(1) as f64;
    let ny = (w * h.saturating_sub(1)).max(1) as f64;
    (gx / (2.0 * var * nx), gy / (2.0 * var * ny))
}
