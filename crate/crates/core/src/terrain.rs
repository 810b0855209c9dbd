//! Fuses a stitched RGBD raster into a point cloud and an elevation map.
//!
//! Geometry is relative: depth is per-map normalized, so heights and
//! distances carry no metric units. Height is `1 - depth`, so relief rises
//! toward the top-down camera.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::patchgen::RgbdPatch;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub position: [f64; 3],
    pub color: [f64; 3],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    /// Pixel stride used when the cloud was sampled from a raster.
    pub stride: usize,
}

/// How pixels are lifted to 3D.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum Unprojection {
    /// Top-down orthographic view; pixel `(u, v)` maps to `(u·cell, v·cell)`.
    Orthographic { cell: f64 },
    /// Top-down pinhole camera at height `distance + height_scale` above
    /// the zero plane. A pixel at depth `D` lies at range
    /// `distance + height_scale·D` along its ray.
    Pinhole {
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        distance: f64,
    },
}

impl Default for Unprojection {
    fn default() -> Self {
        Unprojection::Orthographic { cell: 1.0 }
    }
}

impl Unprojection {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Unprojection::Orthographic { cell } => cell.is_finite() && cell > 0.0,
            Unprojection::Pinhole { fx, fy, cx, cy, distance } => {
                fx > 0.0 && fy > 0.0 && cx.is_finite() && cy.is_finite() && distance.is_finite() && distance >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid unprojection {self:?}")))
        }
    }
}

/// Orthographic point cloud with unit cell size.
pub fn to_pointcloud(map: &RgbdPatch, stride: usize, height_scale: f64) -> Result<PointCloud> {
    to_pointcloud_with(map, stride, height_scale, &Unprojection::default())
}

pub fn to_pointcloud_with(
    map: &RgbdPatch,
    stride: usize,
    height_scale: f64,
    model: &Unprojection,
) -> Result<PointCloud> {
    if stride == 0 {
        return Err(Error::InvalidParams("stride must be at least 1".into()));
    }
    if !height_scale.is_finite() {
        return Err(Error::InvalidParams("height scale must be finite".into()));
    }
    model.validate()?;
    let mut points = Vec::new();
    for v in (0..map.height()).step_by(stride) {
        for u in (0..map.width()).step_by(stride) {
            let [r, g, b, d] = map.get(u, v);
            let z = height_scale * (1.0 - d);
            let (x, y) = match *model {
                Unprojection::Orthographic { cell } => (u as f64 * cell, v as f64 * cell),
                Unprojection::Pinhole { fx, fy, cx, cy, distance } => {
                    let range = distance + height_scale * d;
                    ((u as f64 - cx) * range / fx, (v as f64 - cy) * range / fy)
                }
            };
            points.push(Point {
                position: [x, y, z],
                color: [r, g, b],
            });
        }
    }
    Ok(PointCloud { points, stride })
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Splats the cloud back into a `width × height` top-down raster
    /// (orthographic, cell size `cell`). Unhit pixels are `None`.
    pub fn project_top_down(&self, width: usize, height: usize, cell: f64) -> Vec<Option<[f64; 3]>> {
        let mut out = vec![None; width * height];
        for p in &self.points {
            let u = (p.position[0] / cell).round();
            let v = (p.position[1] / cell).round();
            if u >= 0.0 && v >= 0.0 && (u as usize) < width && (v as usize) < height {
                out[v as usize * width + u as usize] = Some(p.color);
            }
        }
        out
    }
}

/// Color channel to `0..=255`, rounding halves up.
pub fn color_to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// ASCII PLY text. Positions are printed with the shortest representation
/// that parses back to the same `f64`.
///
/// ```text
/// ply
/// format ascii 1.0
/// element vertex N
/// property double x
/// property double y
/// property double z
/// property uchar red
/// property uchar green
/// property uchar blue
/// end_header
/// x y z red green blue
/// ```
pub fn ply_string(pc: &PointCloud) -> String {
    let mut out = String::with_capacity(64 * pc.len() + 200);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", pc.len());
    for axis in ["x", "y", "z"] {
        let _ = writeln!(out, "property double {axis}");
    }
    for c in ["red", "green", "blue"] {
        let _ = writeln!(out, "property uchar {c}");
    }
    out.push_str("end_header\n");
    for p in &pc.points {
        let [x, y, z] = p.position;
        let [r, g, b] = p.color.map(color_to_u8);
        let _ = writeln!(out, "{x} {y} {z} {r} {g} {b}");
    }
    out
}

pub fn export_ply(pc: &PointCloud, path: &Path) -> Result<()> {
    io::write_text(path, &ply_string(pc))
}

/// A parsed ASCII PLY vertex table.
#[derive(Clone, Debug, PartialEq)]
pub struct PlyTable {
    pub properties: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlyTable {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.properties
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::format("ply", format!("missing property `{name}`")))
    }
}

/// Reads the vertex element of an ASCII PLY file.
pub fn parse_ply(text: &str) -> Result<PlyTable> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::format("ply", "missing `ply` magic"));
    }
    let mut count = None;
    let mut properties = Vec::new();
    let mut in_vertex = false;
    loop {
        let line = lines
            .next()
            .ok_or_else(|| Error::format("ply", "header has no end_header"))?
            .trim();
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", f, _] if *f != "ascii" => {
                return Err(Error::format("ply", format!("unsupported format `{f}`")))
            }
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| Error::format("ply", "bad vertex count"))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", _, name] if in_vertex => properties.push(name.to_string()),
            _ => {}
        }
    }
    let count = count.ok_or_else(|| Error::format("ply", "no vertex element"))?;
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines.next().ok_or_else(|| Error::format("ply", "fewer vertices than declared"))?;
        let row = line
            .split_whitespace()
            .map(|w| w.parse::<f64>().map_err(|_| Error::format("ply", format!("bad number `{w}`"))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != properties.len() {
            return Err(Error::format(
                "ply",
                format!("vertex row has {} values, expected {}", row.len(), properties.len()),
            ));
        }
        rows.push(row);
    }
    Ok(PlyTable { properties, rows })
}

pub fn import_ply(path: &Path) -> Result<PointCloud> {
    let table = parse_ply(&io::read_text(path)?)?;
    let cols = ["x", "y", "z", "red", "green", "blue"]
        .map(|n| table.column(n))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let points = table
        .rows
        .iter()
        .map(|r| Point {
            position: [r[cols[0]], r[cols[1]], r[cols[2]]],
            color: [r[cols[3]] / 255.0, r[cols[4]] / 255.0, r[cols[5]] / 255.0],
        })
        .collect();
    Ok(PointCloud { points, stride: 1 })
}

/// Relative heights in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ElevationMap {
    pub width: usize,
    pub height: usize,
    pub cell: f64,
    pub values: Vec<f64>,
}

/// `height = 1 - depth` at every pixel.
pub fn elevation(map: &RgbdPatch) -> ElevationMap {
    ElevationMap {
        width: map.width(),
        height: map.height(),
        cell: 1.0,
        values: map.pixels().iter().map(|p| 1.0 - p[3]).collect(),
    }
}

impl ElevationMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// 16-bit grayscale PNG.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        io::write_gray16_png(self.width, self.height, &self.values, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> RgbdPatch {
        let mut p = RgbdPatch::new(w, h);
        for y in 0..h {
            for x in 0..w {
                p.set(x, y, [x as f64 / w as f64, y as f64 / h as f64, 0.25, x as f64 / (w - 1) as f64]);
            }
        }
        p
    }

    #[test]
    fn depth_to_height() {
        let flat = RgbdPatch::filled(3, 3, [0.2, 0.2, 0.2, 1.0]);
        assert!(to_pointcloud(&flat, 1, 5.0).unwrap().points.iter().all(|p| p.position[2] == 0.0));
        let mut one = RgbdPatch::filled(2, 2, [0.0, 0.0, 0.0, 1.0]);
        one.set(1, 0, [0.0, 0.0, 0.0, 0.0]);
        let pc = to_pointcloud(&one, 1, 2.0).unwrap();
        assert_eq!(pc.points[1].position, [1.0, 0.0, 2.0]);
    }

    #[test]
    fn stride_counts() {
        assert_eq!(to_pointcloud(&RgbdPatch::new(4, 4), 2, 1.0).unwrap().len(), 4);
        assert!(to_pointcloud(&RgbdPatch::new(4, 4), 0, 1.0).is_err());
    }

    #[test]
    fn elevation_inverts_depth() {
        // Depths k/8 so that 1 - (1 - d) is exact in binary floating point.
        let p = ramp(9, 2);
        let e = elevation(&p);
        for (h, px) in e.values.iter().zip(p.pixels()) {
            assert_eq!(1.0 - h, px[3]);
        }
        assert!(e.values.windows(2).take(8).all(|w| w[1] < w[0]));
        let half = elevation(&RgbdPatch::filled(2, 2, [0.0, 0.0, 0.0, 0.5]));
        assert!(half.values.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn top_down_projection_reproduces_rgb() {
        let p = ramp(7, 5);
        let pc = to_pointcloud(&p, 1, 3.0).unwrap();
        let back = pc.project_top_down(7, 5, 1.0);
        for (b, px) in back.iter().zip(p.pixels()) {
            assert_eq!(b.unwrap(), [px[0], px[1], px[2]]);
        }
    }

    #[test]
    fn single_white_point_layout() {
        let pc = PointCloud {
            points: vec![Point { position: [0.0; 3], color: [1.0; 3] }],
            stride: 1,
        };
        assert_eq!(
            ply_string(&pc),
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\n\
             property double z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n\
             end_header\n0 0 0 255 255 255\n"
        );
        let empty = parse_ply(&ply_string(&PointCloud::default())).unwrap();
        assert!(empty.rows.is_empty());
    }

    #[test]
    fn colors_round_half_up() {
        assert_eq!(color_to_u8(0.5), 128);
        assert_eq!(color_to_u8(0.0), 0);
        assert_eq!(color_to_u8(1.0), 255);
    }

    #[test]
    fn pinhole_center_pixel_sits_on_axis() {
        let p = RgbdPatch::filled(5, 5, [0.0, 0.0, 0.0, 0.5]);
        let model = Unprojection::Pinhole { fx: 10.0, fy: 10.0, cx: 2.0, cy: 2.0, distance: 4.0 };
        let pc = to_pointcloud_with(&p, 1, 2.0, &model).unwrap();
        assert_eq!(pc.points[12].position, [0.0, 0.0, 1.0]);
        assert_eq!(pc.points[13].position[0], 0.5);
    }
}
