//! Map-scale assembly: vertex patches conditioned on the latent field, gap
//! regions filled by inpainting, under raster, lawn-mowing or parallel
//! orderings.

mod execute;
mod map;
mod plan;

pub use execute::{execute_plan, FillMode};
pub use map::{seam_registry, SeamOrientation, SeamSegment, TerrainMap};
pub use plan::{
    plan, plan_lawnmower, plan_parallel, plan_raster, task_seed, Pattern, StitchGeometry, StitchPlan, Task,
    TaskKind, DEFAULT_CONTEXT,
};
