//! Raster and binary file formats.
//!
//! * RGB: 8-bit PNG.
//! * Depth and elevation: 16-bit grayscale PNG.
//! * Exact RGBD: `rgbd.bin`, the magic `FSRGBD1\0`, width and height as
//!   little-endian `u32`, then four little-endian `f64` per pixel, row-major.

use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::patchgen::RgbdPatch;

const RGBD_MAGIC: &[u8; 8] = b"FSRGBD1\0";

pub fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn quantize_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

/// Writes RGB values in `[0, 1]` as an 8-bit PNG.
pub fn write_rgb_png(width: usize, height: usize, rgb: impl Fn(usize, usize) -> [f64; 3], path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let img = ImageBuffer::from_fn(width as u32, height as u32, |x, y| {
        Rgb(rgb(x as usize, y as usize).map(quantize_u8))
    });
    img.save(path).map_err(|e| image_err(path, e))
}

/// Writes values in `[0, 1]` as a 16-bit grayscale PNG.
pub fn write_gray16_png(width: usize, height: usize, values: &[f64], path: &Path) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::DimensionMismatch {
            expected: width * height,
            got: values.len(),
        });
    }
    ensure_parent(path)?;
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(width as u32, height as u32, |x, y| {
            Luma([quantize_u16(values[y as usize * width + x as usize])])
        });
    img.save(path).map_err(|e| image_err(path, e))
}

pub fn read_rgb_png(path: &Path) -> Result<(usize, usize, Vec<[f64; 3]>)> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    let px = img
        .pixels()
        .map(|p| p.0.map(|v| v as f64 / 255.0))
        .collect();
    Ok((w as usize, h as usize, px))
}

pub fn read_gray16_png(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma16();
    let (w, h) = img.dimensions();
    let values = img.pixels().map(|p| p.0[0] as f64 / 65535.0).collect();
    Ok((w as usize, h as usize, values))
}

pub fn write_rgb(patch: &RgbdPatch, path: &Path) -> Result<()> {
    write_rgb_png(patch.width(), patch.height(), |x, y| {
        let p = patch.get(x, y);
        [p[0], p[1], p[2]]
    }, path)
}

pub fn write_depth(patch: &RgbdPatch, path: &Path) -> Result<()> {
    write_gray16_png(patch.width(), patch.height(), &patch.channel(3), path)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Paths of the RGB and depth images written for `prefix`.
pub fn patch_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    (with_suffix(prefix, "_rgb.png"), with_suffix(prefix, "_depth.png"))
}

/// Writes `PREFIX_rgb.png` and `PREFIX_depth.png`.
pub fn write_patch(patch: &RgbdPatch, prefix: &Path) -> Result<(PathBuf, PathBuf)> {
    let (rgb, depth) = patch_paths(prefix);
    write_rgb(patch, &rgb)?;
    write_depth(patch, &depth)?;
    Ok((rgb, depth))
}

/// Reads a patch written by [`write_patch`], quantized to the file
/// precision.
pub fn read_patch(prefix: &Path) -> Result<RgbdPatch> {
    let (rgb_path, depth_path) = patch_paths(prefix);
    let (w, h, rgb) = read_rgb_png(&rgb_path)?;
    let (dw, dh, depth) = read_gray16_png(&depth_path)?;
    if (w, h) != (dw, dh) {
        return Err(Error::format(
            "patch",
            format!("rgb is {w}x{h} but depth is {dw}x{dh}"),
        ));
    }
    let pixels = rgb
        .into_iter()
        .zip(depth)
        .map(|([r, g, b], d)| [r, g, b, d])
        .collect();
    RgbdPatch::from_pixels(w, h, pixels)
}

pub fn encode_rgbd(patch: &RgbdPatch) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + patch.pixels().len() * 32);
    out.extend_from_slice(RGBD_MAGIC);
    out.extend_from_slice(&(patch.width() as u32).to_le_bytes());
    out.extend_from_slice(&(patch.height() as u32).to_le_bytes());
    for p in patch.pixels() {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_rgbd(bytes: &[u8]) -> Result<RgbdPatch> {
    if bytes.len() < 16 || &bytes[..8] != RGBD_MAGIC {
        return Err(Error::format("rgbd", "missing FSRGBD1 header"));
    }
    let w = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let h = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() != w * h * 32 {
        return Err(Error::format(
            "rgbd",
            format!("expected {} payload bytes for {w}x{h}, found {}", w * h * 32, body.len()),
        ));
    }
    let pixels = body
        .chunks_exact(32)
        .map(|c| {
            let v = |k: usize| f64::from_le_bytes(c[k * 8..k * 8 + 8].try_into().expect("8 bytes"));
            [v(0), v(1), v(2), v(3)]
        })
        .collect();
    RgbdPatch::from_pixels(w, h, pixels)
}

pub fn write_rgbd(patch: &RgbdPatch, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, encode_rgbd(patch)).map_err(|e| Error::io(path, e))
}

pub fn read_rgbd(path: &Path) -> Result<RgbdPatch> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_rgbd(&bytes)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RgbdPatch {
        let mut p = RgbdPatch::new(5, 3);
        for y in 0..3 {
            for x in 0..5 {
                p.set(x, y, [x as f64 / 4.0, y as f64 / 2.0, 0.3, (x + y) as f64 / 6.0]);
            }
        }
        p
    }

    #[test]
    fn rgbd_binary_round_trip_is_exact() {
        let p = sample();
        assert_eq!(decode_rgbd(&encode_rgbd(&p)).unwrap(), p);
        assert!(decode_rgbd(b"nope").is_err());
    }

    #[test]
    fn png_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = sample();
        write_patch(&p, &dir.path().join("tile")).unwrap();
        let q = read_patch(&dir.path().join("tile")).unwrap();
        for (a, b) in p.pixels().iter().zip(q.pixels()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 0.5 / 255.0 + 1e-12);
            }
            assert!((a[3] - b[3]).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
