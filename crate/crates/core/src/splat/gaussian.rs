use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io;
use crate::terrain::{parse_ply, PointCloud};

/// Colors are kept this far inside `(0, 1)` at initialization so that their
/// unconstrained parameters stay finite and keep a nonzero gradient.
pub const COLOR_MARGIN: f64 = 1e-4;
pub const DEFAULT_OPACITY: f64 = 0.8;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of [`sigmoid`]; `0` and `1` map to `-inf` and `+inf`.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One 3D Gaussian. Opacity and color are stored unconstrained and read
/// through a sigmoid.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    pub position: [f64; 3],
    pub scale: [f64; 3],
    /// Unit quaternion `[w, x, y, z]`.
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub color_raw: [f64; 3],
}

impl Gaussian {
    pub fn new(position: [f64; 3], scale: f64, opacity: f64, color: [f64; 3]) -> Self {
        Gaussian {
            position,
            scale: [scale; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: logit(opacity),
            color_raw: color.map(logit),
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn set_opacity(&mut self, alpha: f64) {
        self.opacity_logit = logit(alpha);
    }

    pub fn color(&self) -> [f64; 3] {
        self.color_raw.map(sigmoid)
    }

    pub fn set_color(&mut self, color: [f64; 3]) {
        self.color_raw = color.map(logit);
    }

    pub fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        let [w, x, y, z] = self.rotation;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// `R · diag(scale²) · Rᵀ`.
    pub fn covariance(&self) -> [[f64; 3]; 3] {
        let r = self.rotation_matrix();
        let s2 = self.scale.map(|s| s * s);
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| r[i][k] * s2[k] * r[j][k]).sum();
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let qn: f64 = self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (qn - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("rotation quaternion has norm {qn}")));
        }
        if self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Domain(format!("scales {:?} must be positive", self.scale)));
        }
        if self.position.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite position".into()));
        }
        if self.opacity_logit.is_nan() || self.color_raw.iter().any(|v| v.is_nan()) {
            return Err(Error::Domain("NaN appearance parameter".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianCloud {
    pub gaussians: Vec<Gaussian>,
    pub positions_frozen: bool,
}

impl GaussianCloud {
    pub fn new(gaussians: Vec<Gaussian>) -> Self {
        GaussianCloud {
            gaussians,
            positions_frozen: true,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.gaussians.iter().try_for_each(Gaussian::validate)
    }
}

/// Mean distance from each point to its nearest distinct neighbor, found
/// with a uniform bucket grid. `None` when fewer than two distinct points
/// exist.
pub fn mean_nearest_neighbor_distance(points: &[[f64; 3]]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span: Vec<f64> = (0..3).map(|k| hi[k] - lo[k]).collect();
    let max_span = span.iter().cloned().fold(0.0, f64::max);
    if max_span == 0.0 {
        return None;
    }
    // Size cells for about one point each, counting only axes whose extent
    // is at least one cell (near-planar clouds bucket in 2D).
    let mut spans = span.clone();
    spans.sort_by(|a, b| b.total_cmp(a));
    let n = points.len() as f64;
    let cell = (1..=3)
        .rev()
        .map(|m| (spans[..m].iter().product::<f64>() / n).powf(1.0 / m as f64))
        .zip((1..=3).rev())
        .find(|&(c, m)| c > 0.0 && spans[m - 1] >= c)
        .map_or(max_span, |(c, _)| c)
        .max(max_span * 1e-6);
    let key = |p: &[f64; 3]| -> [i64; 3] { [0, 1, 2].map(|k| ((p[k] - lo[k]) / cell).floor() as i64) };
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(i);
    }
    let dims = [0, 1, 2].map(|k| (span[k] / cell).floor() as i64 + 1);
    let max_ring = dims.iter().cloned().max().unwrap_or(1);
    let offsets = |c: i64, ring: i64, k: usize| (-ring).max(-c)..=ring.min(dims[k] - 1 - c);

    let mut total = 0.0;
    let mut counted = 0usize;
    for (i, p) in points.iter().enumerate() {
        let c = key(p);
        let mut best = f64::INFINITY;
        for ring in 0..=max_ring {
            // Cells in ring `ring` are at least (ring - 1)·cell away.
            if best.is_finite() && best <= (ring as f64 - 1.0) * cell {
                break;
            }
            for dz in offsets(c[2], ring, 2) {
                for dy in offsets(c[1], ring, 1) {
                    for dx in offsets(c[0], ring, 0) {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(list) = buckets.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            for &j in list {
                                if j == i {
                                    continue;
                                }
                                let q = &points[j];
                                let d2 = (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>();
                                if d2 > 0.0 {
                                    best = best.min(d2.sqrt());
                                }
                            }
                        }
                    }
                }
            }
        }
        if best.is_finite() {
            total += best;
            counted += 1;
        }
    }
    (counted > 0).then(|| total / counted as f64)
}

/// One Gaussian per point. `init_scale` defaults to the mean
/// nearest-neighbor distance (or 1 for a single point); colors are pulled
/// [`COLOR_MARGIN`] inside `(0, 1)`.
pub fn init_from_pointcloud(pc: &PointCloud, init_scale: Option<f64>, init_opacity: f64) -> Result<GaussianCloud> {
    if pc.is_empty() {
        return Err(Error::Domain("cannot initialize Gaussians from an empty point cloud".into()));
    }
    if !(0.0..=1.0).contains(&init_opacity) {
        return Err(Error::InvalidParams(format!("opacity {init_opacity} outside [0, 1]")));
    }
    let scale = match init_scale {
        Some(s) if s.is_finite() && s > 0.0 => s,
        Some(s) => return Err(Error::InvalidParams(format!("scale {s} must be positive"))),
        None => {
            let positions: Vec<[f64; 3]> = pc.points.iter().map(|p| p.position).collect();
            mean_nearest_neighbor_distance(&positions).unwrap_or(1.0)
        }
    };
    let gaussians = pc
        .points
        .iter()
        .map(|p| {
            let color = p.color.map(|c| c.clamp(COLOR_MARGIN, 1.0 - COLOR_MARGIN));
            Gaussian::new(p.position, scale, init_opacity, color)
        })
        .collect();
    Ok(GaussianCloud::new(gaussians))
}

const PLY_PROPERTIES: [&str; 14] = [
    "x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "opacity", "color_0",
    "color_1", "color_2",
];

/// ASCII PLY with raw parameters: position, scales, quaternion `[w,x,y,z]`,
/// opacity logit and unconstrained colors.
pub fn cloud_ply_string(cloud: &GaussianCloud) -> String {
    let mut out = String::from("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "comment positions_frozen {}", cloud.positions_frozen as u8);
    let _ = writeln!(out, "element vertex {}", cloud.len());
    for p in PLY_PROPERTIES {
        let _ = writeln!(out, "property double {p}");
    }
    out.push_str("end_header\n");
    for g in &cloud.gaussians {
        let values = g
            .position
            .iter()
            .chain(&g.scale)
            .chain(&g.rotation)
            .chain(std::iter::once(&g.opacity_logit))
            .chain(&g.color_raw);
        let line: Vec<String> = values.map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_cloud_ply(text: &str) -> Result<GaussianCloud> {
    let table = parse_ply(text)?;
    let cols = PLY_PROPERTIES
        .iter()
        .map(|n| table.column(n))
        .collect::<Result<Vec<_>>>()?;
    let gaussians = table
        .rows
        .iter()
        .map(|r| {
            let v = |k: usize| r[cols[k]];
            Gaussian {
                position: [v(0), v(1), v(2)],
                scale: [v(3), v(4), v(5)],
                rotation: [v(6), v(7), v(8), v(9)],
                opacity_logit: v(10),
                color_raw: [v(11), v(12), v(13)],
            }
        })
        .collect();
    let frozen = !text.lines().any(|l| l.trim() == "comment positions_frozen 0");
    let cloud = GaussianCloud {
        gaussians,
        positions_frozen: frozen,
    };
    cloud.validate()?;
    Ok(cloud)
}

pub fn write_cloud_ply(cloud: &GaussianCloud, path: &Path) -> Result<()> {
    io::write_text(path, &cloud_ply_string(cloud))
}

pub fn read_cloud_ply(path: &Path) -> Result<GaussianCloud> {
    parse_cloud_ply(&io::read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::Point;

    fn cloud_of(points: &[[f64; 3]]) -> PointCloud {
        PointCloud {
            points: points
                .iter()
                .map(|&position| Point {
                    position,
                    color: [0.5, 0.25, 1.0],
                })
                .collect(),
            stride: 1,
        }
    }

    #[test]
    fn single_point_init() {
        let c = init_from_pointcloud(&cloud_of(&[[1.0, 2.0, 3.0]]), None, DEFAULT_OPACITY).unwrap();
        assert_eq!(c.len(), 1);
        let g = &c.gaussians[0];
        assert_eq!(g.position, [1.0, 2.0, 3.0]);
        assert_eq!(g.scale, [1.0; 3]);
        assert!((g.opacity() - 0.8).abs() < 1e-15);
        let col = g.color();
        assert!((col[0] - 0.5).abs() < 1e-15 && (col[2] - (1.0 - COLOR_MARGIN)).abs() < 1e-12);
    }

    #[test]
    fn two_points_unit_apart() {
        let c = init_from_pointcloud(&cloud_of(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), None, 0.8).unwrap();
        assert!(c.gaussians.iter().all(|g| g.scale == [1.0; 3]));
    }

    #[test]
    fn nearest_neighbor_matches_brute_force() {
        let pts: Vec<[f64; 3]> = (0..60)
            .map(|i| {
                let u = |k: u64| crate::rng::uniform(&[i, k]);
                [u(0) * 10.0, u(1) * 3.0, u(2) * 0.5]
            })
            .collect();
        let brute: f64 = pts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                pts.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>().sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / pts.len() as f64;
        let fast = mean_nearest_neighbor_distance(&pts).unwrap();
        assert!((fast - brute).abs() < 1e-12, "{fast} vs {brute}");
    }

    #[test]
    fn empty_cloud_is_rejected() {
        assert!(init_from_pointcloud(&PointCloud::default(), None, 0.8).is_err());
    }

    #[test]
    fn covariance_is_symmetric_positive_definite() {
        let mut g = Gaussian::new([0.0; 3], 1.0, 0.5, [0.5; 3]);
        let q = [0.9f64, 0.1, -0.3, 0.2];
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        g.rotation = q.map(|v| v / n);
        g.scale = [0.5, 1.5, 2.0];
        let s = g.covariance();
        for i in 0..3 {
            for j in 0..3 {
                assert!((s[i][j] - s[j][i]).abs() < 1e-12);
            }
        }
        let det = s[0][0] * (s[1][1] * s[2][2] - s[1][2] * s[2][1]) - s[0][1] * (s[1][0] * s[2][2] - s[1][2] * s[2][0])
            + s[0][2] * (s[1][0] * s[2][1] - s[1][1] * s[2][0]);
        assert!((det - (0.5f64 * 1.5 * 2.0).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn ply_round_trip_is_exact() {
        let pts = [[0.1, 0.2, 0.3], [1.0 / 3.0, 2.0, -1.0]];
        let mut c = init_from_pointcloud(&cloud_of(&pts), None, 0.8).unwrap();
        c.gaussians[1].set_opacity(1.0);
        let back = parse_cloud_ply(&cloud_ply_string(&c)).unwrap();
        assert_eq!(back, c);
    }
}
