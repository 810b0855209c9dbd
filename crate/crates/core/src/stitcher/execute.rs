use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::patchgen::{ConditionalGenerator, InpaintMode, PixelMask, Rect, RgbdPatch};

use super::map::TerrainMap;
use super::plan::{StitchPlan, Task};

/// How tasks with dependencies fill their region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillMode {
    /// Inpaint from the known pixels alone.
    #[default]
    Unconditional,
    /// Inpaint conditioned on the task's latent.
    Conditional,
}

impl FillMode {
    pub fn name(self) -> &'static str {
        match self {
            FillMode::Unconditional => "uncond",
            FillMode::Conditional => "cond",
        }
    }
}

impl fmt::Display for FillMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FillMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uncond" | "unconditional" => Ok(FillMode::Unconditional),
            "cond" | "conditional" => Ok(FillMode::Conditional),
            other => Err(Error::InvalidParams(format!(
                "unknown inpaint mode `{other}` (expected cond or uncond)"
            ))),
        }
    }
}

fn check_output(patch: &RgbdPatch, rect: &Rect) -> Result<()> {
    if (patch.width(), patch.height()) != (rect.w, rect.h) {
        return Err(Error::DimensionMismatch {
            expected: rect.area(),
            got: patch.width() * patch.height(),
        });
    }
    patch.validate()
}

fn run_task(
    plan: &StitchPlan,
    task: &Task,
    canvas: &RgbdPatch,
    owner: &[u32],
    generator: &dyn ConditionalGenerator,
    fill: FillMode,
) -> Result<RgbdPatch> {
    let owned = task.owned;
    if task.depends_on.is_empty() {
        let patch = generator.generate(&task.latent, task.seed, owned.w, owned.h)?;
        check_output(&patch, &owned)?;
        return Ok(patch);
    }
    let window = task.window;
    let ancestors = plan.ancestors(task.id);
    let map_width = canvas.width();
    let mut input = canvas.crop(window);
    let mask = PixelMask::from_fn(window.w, window.h, |x, y| {
        let o = owner[(window.y + y) * map_width + window.x + x] as usize;
        ancestors[o]
    });
    for (px, &known) in input.pixels_mut().iter_mut().zip(mask.known()) {
        if !known {
            *px = [0.0; 4];
        }
    }
    let mode = match fill {
        FillMode::Unconditional => InpaintMode::Unconditional,
        FillMode::Conditional => InpaintMode::Conditional(task.latent.clone()),
    };
    let out = generator.inpaint(&input, &mask, &mode, task.seed)?;
    check_output(&out, &window)?;
    Ok(out.crop(Rect::new(owned.x - window.x, owned.y - window.y, owned.w, owned.h)))
}

/// Runs every task of `plan`, one dependency level at a time.
///
/// Tasks in a level read only pixels written by earlier levels, run on up
/// to `workers` threads, and their outputs are written back in task-id
/// order. The result is therefore the same for any worker count. A
/// generator that is not safe for concurrent use always runs on one thread.
pub fn execute_plan(
    plan: &StitchPlan,
    generator: &dyn ConditionalGenerator,
    fill: FillMode,
    workers: usize,
) -> Result<TerrainMap> {
    plan.validate()?;
    let levels = plan.levels()?;
    let owner = plan.owner_map()?;
    let workers = if generator.concurrent() { workers.max(1) } else { 1 };
    let mut canvas = RgbdPatch::new(plan.width(), plan.height());

    par::with_workers(workers, || -> Result<()> {
        for level in &levels {
            let snapshot = &canvas;
            let run = |&id: &usize| run_task(plan, &plan.tasks[id], snapshot, &owner, generator, fill);
            let outputs: Vec<Result<RgbdPatch>> = if workers > 1 {
                par::map_collect(level, run)
            } else {
                level.iter().map(run).collect()
            };
            let mut written = Vec::with_capacity(level.len());
            for (&id, out) in level.iter().zip(outputs) {
                let patch = out.map_err(|e| Error::Task {
                    task_id: id,
                    source: Box::new(e),
                })?;
                written.push((id, patch));
            }
            for (id, patch) in written {
                let r = plan.tasks[id].owned;
                canvas.paste(&patch, r.x, r.y);
            }
        }
        Ok(())
    })?;

    TerrainMap::from_plan(canvas, plan.clone())
}
