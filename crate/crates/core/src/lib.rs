//! Procedural seafloor terrain from fractal latent fields.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`latent_field`] samples a spatial latent function with the
//!    diamond-square process.
//! 2. [`patchgen`] turns latents into RGBD patches through a
//!    [`ConditionalGenerator`](patchgen::ConditionalGenerator), and fills
//!    masked regions by inpainting.
//! 3. [`stitcher`] plans and executes map-scale generation under raster,
//!    lawn-mowing or parallel orderings.
//! 4. [`terrain`] fuses the stitched map into a point cloud and elevation map.
//! 5. [`splat`] initializes frozen-position Gaussians, renders them by
//!    front-to-back alpha compositing and refines their appearance with a
//!    score-distillation gradient.
//!
//! [`embedding`] provides the feature extractor and PCA used to define the
//! latent space, and [`eval`] the quantitative harness.

pub mod embedding;
pub mod error;
pub mod eval;
pub mod io;
pub mod latent_field;
pub mod par;
pub mod patchgen;
pub mod pipeline;
pub mod rng;
pub mod splat;
pub mod stitcher;
pub mod terrain;

pub use error::{Error, Result};
pub use latent_field::{FractalParams, LatentField, LatentVector};
pub use patchgen::{ConditionalGenerator, InpaintMode, PixelMask, ReferenceGenerator, RgbdPatch};
pub use stitcher::{Pattern, StitchPlan, TerrainMap};
