//! Gaussian-splat scene built on the fused terrain point cloud, with frozen
//! positions and refinable appearance.

pub mod camera;
pub mod gaussian;
pub mod render;
pub mod sds;

pub use camera::{Camera, Projection};
pub use gaussian::{
    init_from_pointcloud, mean_nearest_neighbor_distance, read_cloud_ply, write_cloud_ply, Gaussian, GaussianCloud,
    DEFAULT_OPACITY,
};
pub use render::{backward, pixel_gradients, render, trace_pixel, CloudGradient, PixelGradient, PixelTrace, RgbImage};
pub use sds::{refine, sds_gradient, DenoiserOracle, GroundTruthOracle, NoiseSchedule, RefineOptions, RefineResult, Weighting};
