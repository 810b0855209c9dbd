use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum Projection {
    /// `u = scale·x + cx`, `v = scale·y + cy` in camera coordinates.
    Orthographic { scale: f64, cx: f64, cy: f64 },
    /// `u = fx·x/z + cx`, `v = fy·y/z + cy`.
    Pinhole { fx: f64, fy: f64, cx: f64, cy: f64 },
}

/// A camera looking down its +z axis. World points map to camera space as
/// `rotation · p + translation`; view depth is the camera-space z. Pixel
/// `(i, j)` covers `[i, i+1) × [j, j+1)` and is sampled at its center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub projection: Projection,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub background: [f64; 3],
}

/// Points closer than this to a pinhole camera plane are culled.
pub const NEAR_PLANE: f64 = 1e-6;

impl Camera {
    /// Orthographic top-down view of the world rectangle
    /// `[0, world_width) × [0, world_height)`, looking down the -z axis so
    /// higher points are nearer. A point at integer world coordinates lands
    /// on a pixel center when the image matches the world size.
    pub fn top_down(world_width: f64, world_height: f64, width: usize, height: usize) -> Self {
        let scale = (width as f64 / world_width).min(height as f64 / world_height);
        Camera {
            projection: Projection::Orthographic {
                scale,
                cx: 0.5 * scale,
                cy: 0.5 * scale,
            },
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]],
            translation: [0.0, 0.0, 0.0],
            width,
            height,
            background: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParams("camera image must be non-empty".into()));
        }
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot - expected).abs() > 1e-9 {
                    return Err(Error::InvalidParams("camera rotation is not orthonormal".into()));
                }
            }
        }
        let ok = match self.projection {
            Projection::Orthographic { scale, cx, cy } => scale > 0.0 && cx.is_finite() && cy.is_finite(),
            Projection::Pinhole { fx, fy, cx, cy } => fx > 0.0 && fy > 0.0 && cx.is_finite() && cy.is_finite(),
        };
        if !ok || self.translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("invalid camera {:?}", self.projection)));
        }
        Ok(())
    }

    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + self.translation[i])
    }

    /// Image position, view depth and the 2×3 projection Jacobian at a
    /// camera-space point, or `None` behind a pinhole camera.
    pub fn project(&self, pc: [f64; 3]) -> Option<([f64; 2], f64, [[f64; 3]; 2])> {
        match self.projection {
            Projection::Orthographic { scale, cx, cy } => Some((
                [scale * pc[0] + cx, scale * pc[1] + cy],
                pc[2],
                [[scale, 0.0, 0.0], [0.0, scale, 0.0]],
            )),
            Projection::Pinhole { fx, fy, cx, cy } => {
                let z = pc[2];
                if z <= NEAR_PLANE {
                    return None;
                }
                let iz = 1.0 / z;
                Some((
                    [fx * pc[0] * iz + cx, fy * pc[1] * iz + cy],
                    z,
                    [[fx * iz, 0.0, -fx * pc[0] * iz * iz], [0.0, fy * iz, -fy * pc[1] * iz * iz]],
                ))
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("camera serializes")
    }

    pub fn from_json(text: &str) -> Result<Camera> {
        let cam: Camera = serde_json::from_str(text).map_err(|e| Error::format("camera", e.to_string()))?;
        cam.validate()?;
        Ok(cam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_down_maps_grid_points_to_pixel_centers() {
        let cam = Camera::top_down(8.0, 8.0, 8, 8);
        cam.validate().unwrap();
        let (uv, depth, _) = cam.project(cam.to_camera([3.0, 5.0, 0.25])).unwrap();
        assert_eq!(uv, [3.5, 5.5]);
        assert_eq!(depth, -0.25);
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let mut cam = Camera::top_down(4.0, 4.0, 4, 4);
        cam.rotation[0][0] = 2.0;
        assert!(cam.validate().is_err());
    }

    #[test]
    fn pinhole_culls_points_behind() {
        let cam = Camera {
            projection: Projection::Pinhole { fx: 10.0, fy: 10.0, cx: 4.0, cy: 4.0 },
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            width: 8,
            height: 8,
            background: [0.0; 3],
        };
        assert!(cam.project([0.0, 0.0, -1.0]).is_none());
        assert_eq!(cam.project([1.0, 0.0, 2.0]).unwrap().0, [9.0, 4.0]);
        assert_eq!(Camera::from_json(&cam.to_json()).unwrap(), cam);
    }
}
