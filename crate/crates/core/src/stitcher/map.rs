use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::patchgen::{Rect, RgbdPatch};

use super::plan::{StitchPlan, Task, TaskKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeamOrientation {
    /// Boundary between columns `position - 1` and `position`.
    Vertical,
    /// Boundary between rows `position - 1` and `position`.
    Horizontal,
}

/// A straight run of pixel pairs where two tasks meet. `tasks.0` owns the
/// left (or upper) side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeamSegment {
    pub tasks: (u32, u32),
    pub orientation: SeamOrientation,
    pub position: usize,
    pub start: usize,
    pub end: usize,
}

impl SeamSegment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Pixel pairs straddling the boundary, as `((x, y), (x, y))`.
    pub fn pixel_pairs(&self) -> impl Iterator<Item = ((usize, usize), (usize, usize))> + '_ {
        (self.start..self.end).map(move |t| match self.orientation {
            SeamOrientation::Vertical => ((self.position - 1, t), (self.position, t)),
            SeamOrientation::Horizontal => ((t, self.position - 1), (t, self.position)),
        })
    }
}

/// Every boundary between pixels with different owners, grouped into
/// maximal straight runs with the same owner pair.
pub fn seam_registry(owner: &[u32], width: usize, height: usize) -> Vec<SeamSegment> {
    let mut seams = Vec::new();
    let mut scan = |orientation, outer: usize, inner: usize, at: &dyn Fn(usize, usize) -> (u32, u32)| {
        for pos in 1..outer {
            let mut current: Option<SeamSegment> = None;
            for t in 0..inner {
                let (a, b) = at(pos, t);
                let extend = matches!(current, Some(s) if s.tasks == (a, b) && a != b);
                if extend {
                    if let Some(s) = current.as_mut() {
                        s.end = t + 1;
                    }
                    continue;
                }
                if let Some(s) = current.take() {
                    seams.push(s);
                }
                if a != b {
                    current = Some(SeamSegment {
                        tasks: (a, b),
                        orientation,
                        position: pos,
                        start: t,
                        end: t + 1,
                    });
                }
            }
            if let Some(s) = current {
                seams.push(s);
            }
        }
    };
    scan(SeamOrientation::Vertical, width, height, &|x, y| {
        (owner[y * width + x - 1], owner[y * width + x])
    });
    scan(SeamOrientation::Horizontal, height, width, &|y, x| {
        (owner[(y - 1) * width + x], owner[y * width + x])
    });
    seams
}

/// A stitched RGBD raster with per-pixel ownership and the seams between
/// owners.
#[derive(Clone, Debug, PartialEq)]
pub struct TerrainMap {
    pixels: RgbdPatch,
    owner: Vec<u32>,
    seams: Vec<SeamSegment>,
    plan: Option<StitchPlan>,
}

impl TerrainMap {
    pub fn new(pixels: RgbdPatch, owner: Vec<u32>, plan: Option<StitchPlan>) -> Result<Self> {
        let (w, h) = (pixels.width(), pixels.height());
        if owner.len() != w * h {
            return Err(Error::DimensionMismatch {
                expected: w * h,
                got: owner.len(),
            });
        }
        let seams = seam_registry(&owner, w, h);
        Ok(TerrainMap {
            pixels,
            owner,
            seams,
            plan,
        })
    }

    /// A map made of one patch and no seams.
    pub fn single(patch: RgbdPatch) -> Self {
        let n = patch.width() * patch.height();
        TerrainMap {
            pixels: patch,
            owner: vec![0; n],
            seams: Vec::new(),
            plan: None,
        }
    }

    pub fn from_plan(pixels: RgbdPatch, plan: StitchPlan) -> Result<Self> {
        let owner = plan.owner_map()?;
        if (pixels.width(), pixels.height()) != (plan.width(), plan.height()) {
            return Err(Error::DimensionMismatch {
                expected: plan.width() * plan.height(),
                got: pixels.width() * pixels.height(),
            });
        }
        Self::new(pixels, owner, Some(plan))
    }

    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    pub fn rgbd(&self) -> &RgbdPatch {
        &self.pixels
    }

    pub fn owner(&self, x: usize, y: usize) -> u32 {
        self.owner[y * self.width() + x]
    }

    pub fn owners(&self) -> &[u32] {
        &self.owner
    }

    pub fn seams(&self) -> &[SeamSegment] {
        &self.seams
    }

    pub fn plan(&self) -> Option<&StitchPlan> {
        self.plan.as_ref()
    }

    pub fn crop(&self, r: Rect) -> RgbdPatch {
        self.pixels.crop(r)
    }

    /// The vertex patch area of a task's grid cell.
    pub fn vertex_tile(&self, task: &Task) -> Result<RgbdPatch> {
        let plan = self
            .plan
            .as_ref()
            .ok_or_else(|| Error::Domain("map has no stitch plan".into()))?;
        Ok(self.crop(plan.geometry.rect(TaskKind::Vertex, task.row, task.col)))
    }

    pub fn seams_csv(&self) -> String {
        let mut out = String::from("task_a,task_b,orientation,position,start,end\n");
        for s in &self.seams {
            let o = match s.orientation {
                SeamOrientation::Vertical => "vertical",
                SeamOrientation::Horizontal => "horizontal",
            };
            let _ = writeln!(out, "{},{},{o},{},{},{}", s.tasks.0, s.tasks.1, s.position, s.start, s.end);
        }
        out
    }

    /// Writes `rgb.png`, `depth.png`, `rgbd.bin`, `seams.csv` and, when the
    /// map came from a plan, `plan.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_rgb(&self.pixels, &dir.join("rgb.png"))?;
        io::write_depth(&self.pixels, &dir.join("depth.png"))?;
        io::write_rgbd(&self.pixels, &dir.join("rgbd.bin"))?;
        io::write_text(&dir.join("seams.csv"), &self.seams_csv())?;
        if let Some(plan) = &self.plan {
            io::write_text(&dir.join("plan.json"), &plan.to_json())?;
        }
        Ok(())
    }

    /// Loads a map saved by [`TerrainMap::save`]. Ownership comes from
    /// `plan.json`; without it the map is treated as a single tile.
    pub fn load(dir: &Path) -> Result<Self> {
        let pixels = io::read_rgbd(&dir.join("rgbd.bin"))?;
        let plan_path = dir.join("plan.json");
        if plan_path.exists() {
            let plan = StitchPlan::from_json(&io::read_text(&plan_path)?)?;
            Self::from_plan(pixels, plan)
        } else {
            Ok(Self::single(pixels))
        }
    }
}
