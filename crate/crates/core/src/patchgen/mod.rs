//! RGBD patches, the conditional generator contract, and a deterministic
//! procedural reference generator.

mod inpaint;
pub mod laplace;
mod reference;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_field::LatentVector;

pub use inpaint::{reference_inpaint, InpaintSettings};
pub use reference::{ReferenceGenerator, PALETTE_REEF, PALETTE_SAND};

/// Default patch side in pixels.
pub const DEFAULT_PATCH_SIZE: usize = 224;

/// One RGBD pixel: red, green, blue, relative depth. All in `[0, 1]`.
pub type Pixel = [f64; 4];

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.w && y < self.y + self.h
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    /// Grows the rectangle by the given margins, clipped to `width × height`.
    pub fn expand(&self, left: usize, top: usize, right: usize, bottom: usize, width: usize, height: usize) -> Rect {
        let x0 = self.x.saturating_sub(left);
        let y0 = self.y.saturating_sub(top);
        let x1 = (self.right() + right).min(width);
        let y1 = (self.bottom() + bottom).min(height);
        Rect::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RgbdPatch {
    width: usize,
    height: usize,
    pixels: Vec<Pixel>,
}

impl RgbdPatch {
    pub fn new(width: usize, height: usize) -> Self {
        RgbdPatch {
            width,
            height,
            pixels: vec![[0.0; 4]; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, px: Pixel) -> Self {
        RgbdPatch {
            width,
            height,
            pixels: vec![px; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<Pixel>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: pixels.len(),
            });
        }
        let patch = RgbdPatch {
            width,
            height,
            pixels,
        };
        patch.validate()?;
        Ok(patch)
    }

    /// Every channel finite and inside `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        match self
            .pixels
            .iter()
            .flatten()
            .find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            Some(v) => Err(Error::Domain(format!("channel value {v} outside [0, 1]"))),
            None => Ok(()),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Pixel] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Pixel] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Pixel {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, px: Pixel) {
        self.pixels[y * self.width + x] = px;
    }

    pub fn luma(&self, x: usize, y: usize) -> f64 {
        luma(&self.get(x, y))
    }

    /// Values of one channel in row-major order.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.pixels.iter().map(|p| p[c]).collect()
    }

    pub fn crop(&self, r: Rect) -> RgbdPatch {
        assert!(r.right() <= self.width && r.bottom() <= self.height, "crop out of bounds");
        let mut pixels = Vec::with_capacity(r.area());
        for y in r.y..r.bottom() {
            pixels.extend_from_slice(&self.pixels[y * self.width + r.x..y * self.width + r.right()]);
        }
        RgbdPatch {
            width: r.w,
            height: r.h,
            pixels,
        }
    }

    /// Copies `src` into this patch with its top-left corner at `(x, y)`.
    pub fn paste(&mut self, src: &RgbdPatch, x: usize, y: usize) {
        assert!(x + src.width <= self.width && y + src.height <= self.height, "paste out of bounds");
        for row in 0..src.height {
            let dst = (y + row) * self.width + x;
            self.pixels[dst..dst + src.width]
                .copy_from_slice(&src.pixels[row * src.width..(row + 1) * src.width]);
        }
    }

    /// Rescales depth so its minimum maps to 0 and maximum to 1. A constant
    /// depth channel is left unchanged.
    pub fn normalize_depth(&mut self) {
        let (lo, hi) = self
            .pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[3]), hi.max(p[3])));
        if hi > lo {
            let inv = 1.0 / (hi - lo);
            for p in &mut self.pixels {
                p[3] = ((p[3] - lo) * inv).clamp(0.0, 1.0);
            }
        }
    }
}

pub fn luma(px: &Pixel) -> f64 {
    0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
}

/// Per-pixel known/unknown flags; `true` marks a known pixel to keep.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    known: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize, known: Vec<bool>) -> Result<Self> {
        if known.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: known.len(),
            });
        }
        Ok(PixelMask {
            width,
            height,
            known,
        })
    }

    pub fn all_known(width: usize, height: usize) -> Self {
        PixelMask {
            width,
            height,
            known: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let known = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        PixelMask {
            width,
            height,
            known,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_known(&self, x: usize, y: usize) -> bool {
        self.known[y * self.width + x]
    }

    pub fn known(&self) -> &[bool] {
        &self.known
    }

    pub fn known_count(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }

    pub fn unknown_count(&self) -> usize {
        self.known.len() - self.known_count()
    }
}

/// Inpainting variants: conditional inpainting also sees a latent,
/// unconditional inpainting only sees the known pixels.
#[derive(Clone, Debug, PartialEq)]
pub enum InpaintMode {
    Conditional(LatentVector),
    Unconditional,
}

/// A conditional patch generator `P(I | φ)` with an inpainting operation.
///
/// Implementations must be deterministic in their arguments, and `inpaint`
/// must return known pixels unchanged.
pub trait ConditionalGenerator: Send + Sync {
    fn generate(&self, latent: &LatentVector, seed: u64, width: usize, height: usize) -> Result<RgbdPatch>;

    fn inpaint(&self, patch: &RgbdPatch, mask: &PixelMask, mode: &InpaintMode, seed: u64) -> Result<RgbdPatch>;

    /// Whether `generate` and `inpaint` may be called from several threads
    /// at once.
    fn concurrent(&self) -> bool {
        true
    }
}

impl<G: ConditionalGenerator + ?Sized> ConditionalGenerator for &G {
    fn generate(&self, latent: &LatentVector, seed: u64, width: usize, height: usize) -> Result<RgbdPatch> {
        (**self).generate(latent, seed, width, height)
    }

    fn inpaint(&self, patch: &RgbdPatch, mask: &PixelMask, mode: &InpaintMode, seed: u64) -> Result<RgbdPatch> {
        (**self).inpaint(patch, mask, mode, seed)
    }

    fn concurrent(&self) -> bool {
        (**self).concurrent()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_and_paste_are_inverse() {
        let mut p = RgbdPatch::new(6, 5);
        for y in 0..5 {
            for x in 0..6 {
                p.set(x, y, [x as f64 / 6.0, y as f64 / 5.0, 0.5, 0.0]);
            }
        }
        let r = Rect::new(1, 2, 3, 2);
        let c = p.crop(r);
        assert_eq!(c.get(0, 0), p.get(1, 2));
        let mut q = RgbdPatch::new(6, 5);
        q.paste(&c, 1, 2);
        assert_eq!(q.get(3, 3), p.get(3, 3));
    }

    #[test]
    fn depth_normalization_spans_unit_interval() {
        let mut p = RgbdPatch::new(3, 1);
        p.set(0, 0, [0.0, 0.0, 0.0, 0.25]);
        p.set(1, 0, [0.0, 0.0, 0.0, 0.5]);
        p.set(2, 0, [0.0, 0.0, 0.0, 0.75]);
        p.normalize_depth();
        assert_eq!(p.channel(3), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn out_of_range_pixels_are_rejected() {
        assert!(RgbdPatch::from_pixels(1, 1, vec![[0.0, 1.2, 0.0, 0.0]]).is_err());
        assert!(RgbdPatch::from_pixels(2, 1, vec![[0.0; 4]]).is_err());
    }

    #[test]
    fn rect_expand_clips() {
        let r = Rect::new(2, 2, 3, 3).expand(4, 1, 10, 0, 8, 8);
        assert_eq!(r, Rect::new(0, 1, 8, 4));
    }
}
