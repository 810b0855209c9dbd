use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_field::{LatentField, LatentVector};
use crate::patchgen::{Rect, DEFAULT_PATCH_SIZE};
use crate::rng;

/// Context pixels an inpaint window reaches past the region a task owns.
pub const DEFAULT_CONTEXT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Raster,
    Lawnmower,
    Parallel,
}

impl Pattern {
    pub const ALL: [Pattern; 3] = [Pattern::Raster, Pattern::Lawnmower, Pattern::Parallel];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::Raster => "raster",
            Pattern::Lawnmower => "lawnmower",
            Pattern::Parallel => "parallel",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raster" => Ok(Pattern::Raster),
            "lawnmower" => Ok(Pattern::Lawnmower),
            "parallel" => Ok(Pattern::Parallel),
            other => Err(Error::InvalidParams(format!(
                "unknown pattern `{other}` (expected raster, lawnmower or parallel)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Vertex,
    HGap,
    VGap,
    CenterGap,
}

impl TaskKind {
    fn code(self) -> u64 {
        match self {
            TaskKind::Vertex => 0,
            TaskKind::HGap => 1,
            TaskKind::VGap => 2,
            TaskKind::CenterGap => 3,
        }
    }

    /// Stage of this kind in the parallel plan, starting at 1.
    pub fn stage(self) -> usize {
        self.code() as usize + 1
    }
}

/// Tiling of the map: `rows × cols` vertex patches of side `patch`,
/// separated by gaps of width `gap`.
///
/// ```text
///  +-------+---+-------+
///  | V 0,0 | H | V 0,1 |      V: vertex patch, patch × patch
///  +-------+---+-------+      H: horizontal gap, gap × patch
///  |   V   | C |   V   |      V (middle row): vertical gap, patch × gap
///  +-------+---+-------+      C: center gap, gap × gap
///  | V 1,0 | H | V 1,1 |
///  +-------+---+-------+
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StitchGeometry {
    pub rows: usize,
    pub cols: usize,
    pub patch: usize,
    pub gap: usize,
    pub context: usize,
}

impl StitchGeometry {
    /// Geometry with gap `patch / 2` and the default context width.
    pub fn new(rows: usize, cols: usize, patch: usize) -> Self {
        let gap = patch / 2;
        StitchGeometry {
            rows,
            cols,
            patch,
            gap,
            context: DEFAULT_CONTEXT.min(gap),
        }
    }

    pub fn with_gap(mut self, gap: usize, context: usize) -> Self {
        self.gap = gap;
        self.context = context;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidParams(format!(
                "grid must be at least 1x1, got {}x{}",
                self.rows, self.cols
            )));
        }
        if self.patch < 2 {
            return Err(Error::InvalidParams("patch size must be at least 2".into()));
        }
        if self.gap == 0 {
            return Err(Error::InvalidParams("gap width must be positive".into()));
        }
        if self.context == 0 || self.context > self.gap || self.context > self.patch {
            return Err(Error::InvalidParams(format!(
                "context width {} must lie in 1..={}",
                self.context,
                self.gap.min(self.patch)
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.patch + self.gap
    }

    pub fn width(&self) -> usize {
        self.cols * self.patch + (self.cols - 1) * self.gap
    }

    pub fn height(&self) -> usize {
        self.rows * self.patch + (self.rows - 1) * self.gap
    }

    pub fn rect(&self, kind: TaskKind, row: usize, col: usize) -> Rect {
        let (x, y) = (col * self.stride(), row * self.stride());
        let (p, g) = (self.patch, self.gap);
        match kind {
            TaskKind::Vertex => Rect::new(x, y, p, p),
            TaskKind::HGap => Rect::new(x + p, y, g, p),
            TaskKind::VGap => Rect::new(x, y + p, p, g),
            TaskKind::CenterGap => Rect::new(x + p, y + p, g, g),
        }
    }

    /// Normalized latent-field coordinates of a map position. Vertex patch
    /// centers land on an evenly spaced grid spanning the unit square.
    pub fn field_position(&self, px: f64, py: f64) -> (f64, f64) {
        let half = self.patch as f64 / 2.0;
        let axis = |p: f64, n: usize| {
            if n == 1 {
                0.5
            } else {
                ((p - half) / ((n - 1) * self.stride()) as f64).clamp(0.0, 1.0)
            }
        };
        (axis(px, self.cols), axis(py, self.rows))
    }
}

impl Default for StitchGeometry {
    fn default() -> Self {
        StitchGeometry::new(4, 4, DEFAULT_PATCH_SIZE)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub kind: TaskKind,
    pub row: usize,
    pub col: usize,
    pub depends_on: Vec<usize>,
    pub seed: u64,
    pub latent: LatentVector,
    /// Pixels this task writes.
    pub owned: Rect,
    /// Pixels this task reads; those owned by ancestors are known.
    pub window: Rect,
}

/// Per-task seed. Keyed by kind and grid position only, so it does not
/// depend on the pattern.
pub fn task_seed(global_seed: u64, kind: TaskKind, row: usize, col: usize) -> u64 {
    rng::hash(&[global_seed, kind.code(), row as u64, col as u64])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StitchPlan {
    pub pattern: Pattern,
    pub geometry: StitchGeometry,
    pub global_seed: u64,
    pub tasks: Vec<Task>,
}

fn intersects(a: &Rect, b: &Rect) -> bool {
    a.x < b.right() && b.x < a.right() && a.y < b.bottom() && b.y < a.bottom()
}

fn make_task(
    geometry: &StitchGeometry,
    field: &LatentField,
    global_seed: u64,
    kind: TaskKind,
    row: usize,
    col: usize,
    owned: Rect,
) -> Result<Task> {
    let (cx, cy) = geometry.rect(kind, row, col).center();
    let (u, v) = geometry.field_position(cx, cy);
    Ok(Task {
        id: 0,
        kind,
        row,
        col,
        depends_on: Vec::new(),
        seed: task_seed(global_seed, kind, row, col),
        latent: field.sample_unit(u, v)?,
        owned,
        window: owned,
    })
}

pub fn plan(pattern: Pattern, geometry: StitchGeometry, field: &LatentField, global_seed: u64) -> Result<StitchPlan> {
    match pattern {
        Pattern::Raster => plan_raster(geometry, field, global_seed),
        Pattern::Lawnmower => plan_lawnmower(geometry, field, global_seed),
        Pattern::Parallel => plan_parallel(geometry, field, global_seed),
    }
}

/// Row-by-row plan, every row scanned left to right.
pub fn plan_raster(geometry: StitchGeometry, field: &LatentField, global_seed: u64) -> Result<StitchPlan> {
    let order = (0..geometry.rows)
        .flat_map(|r| (0..geometry.cols).map(move |c| (r, c)))
        .collect();
    sequential_plan(Pattern::Raster, geometry, field, global_seed, order)
}

/// Row-by-row plan with alternating scan direction.
pub fn plan_lawnmower(geometry: StitchGeometry, field: &LatentField, global_seed: u64) -> Result<StitchPlan> {
    let cols = geometry.cols;
    let order = (0..geometry.rows)
        .flat_map(|r| {
            (0..cols).map(move |i| if r % 2 == 0 { (r, i) } else { (r, cols - 1 - i) })
        })
        .collect();
    sequential_plan(Pattern::Lawnmower, geometry, field, global_seed, order)
}

/// One tile per vertex. A tile owns its vertex patch plus the gaps above and
/// to the left of it, so ownership is the same for both scan orders. Each
/// tile after the first is inpainted from the pixels its predecessors in
/// scan order have written inside its window.
fn sequential_plan(
    pattern: Pattern,
    geometry: StitchGeometry,
    field: &LatentField,
    global_seed: u64,
    order: Vec<(usize, usize)>,
) -> Result<StitchPlan> {
    geometry.validate()?;
    let (w, h) = (geometry.width(), geometry.height());
    let k = geometry.context;
    let mut tasks = Vec::with_capacity(order.len());
    for r in 0..geometry.rows {
        for c in 0..geometry.cols {
            let v = geometry.rect(TaskKind::Vertex, r, c);
            let left = if c > 0 { geometry.gap } else { 0 };
            let top = if r > 0 { geometry.gap } else { 0 };
            let owned = Rect::new(v.x - left, v.y - top, v.w + left, v.h + top);
            let mut task = make_task(&geometry, field, global_seed, TaskKind::Vertex, r, c, owned)?;
            task.id = tasks.len();
            task.window = owned.expand(k, k, k, k, w, h);
            tasks.push(task);
        }
    }
    let id = |(r, c): (usize, usize)| r * geometry.cols + c;
    for (pos, &cell) in order.iter().enumerate() {
        let me = id(cell);
        let window = tasks[me].window;
        let mut deps: Vec<usize> = order[..pos]
            .iter()
            .map(|&earlier| id(earlier))
            .filter(|&e| intersects(&tasks[e].owned, &window))
            .collect();
        if pos > 0 {
            deps.push(id(order[pos - 1]));
        }
        deps.sort_unstable();
        deps.dedup();
        tasks[me].depends_on = deps;
    }
    Ok(StitchPlan {
        pattern,
        geometry,
        global_seed,
        tasks,
    })
}

/// Four-stage plan: all vertex patches, then horizontal gaps, vertical
/// gaps and center gaps. Each gap depends on the earlier-stage tasks whose
/// pixels fall inside its window.
pub fn plan_parallel(geometry: StitchGeometry, field: &LatentField, global_seed: u64) -> Result<StitchPlan> {
    geometry.validate()?;
    let (w, h) = (geometry.width(), geometry.height());
    let k = geometry.context;
    let (rows, cols) = (geometry.rows, geometry.cols);
    let mut tasks: Vec<Task> = Vec::new();
    let stages = [
        (TaskKind::Vertex, rows, cols),
        (TaskKind::HGap, rows, cols - 1),
        (TaskKind::VGap, rows - 1, cols),
        (TaskKind::CenterGap, rows - 1, cols - 1),
    ];
    for (kind, nr, nc) in stages {
        let first_of_stage = tasks.len();
        for r in 0..nr {
            for c in 0..nc {
                let owned = geometry.rect(kind, r, c);
                let mut task = make_task(&geometry, field, global_seed, kind, r, c, owned)?;
                task.id = tasks.len();
                task.window = match kind {
                    TaskKind::Vertex => owned,
                    TaskKind::HGap => owned.expand(k, 0, k, 0, w, h),
                    TaskKind::VGap | TaskKind::CenterGap => owned.expand(k, k, k, k, w, h),
                };
                task.depends_on = tasks[..first_of_stage]
                    .iter()
                    .filter(|t| intersects(&t.owned, &task.window))
                    .map(|t| t.id)
                    .collect();
                tasks.push(task);
            }
        }
    }
    Ok(StitchPlan {
        pattern: Pattern::Parallel,
        geometry,
        global_seed,
        tasks,
    })
}

impl StitchPlan {
    pub fn grid_dims(&self) -> (usize, usize) {
        (self.geometry.rows, self.geometry.cols)
    }

    pub fn width(&self) -> usize {
        self.geometry.width()
    }

    pub fn height(&self) -> usize {
        self.geometry.height()
    }

    pub fn vertex_tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(|t| t.kind == TaskKind::Vertex)
    }

    /// Tasks grouped into dependency levels: level 0 has no dependencies and
    /// every task sits one level above its deepest dependency. Ids within a
    /// level are ascending.
    pub fn levels(&self) -> Result<Vec<Vec<usize>>> {
        let n = self.tasks.len();
        for (i, t) in self.tasks.iter().enumerate() {
            if t.id != i {
                return Err(Error::Plan(format!("task at index {i} has id {}", t.id)));
            }
            if let Some(&d) = t.depends_on.iter().find(|&&d| d >= n || d == i) {
                return Err(Error::Plan(format!("task {i} has invalid dependency {d}")));
            }
        }
        let mut indegree: Vec<usize> = self.tasks.iter().map(|t| t.depends_on.len()).collect();
        let mut dependents = vec![Vec::new(); n];
        for t in &self.tasks {
            for &d in &t.depends_on {
                dependents[d].push(t.id);
            }
        }
        let mut depth = vec![0usize; n];
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = ready.pop() {
            seen += 1;
            for &j in &dependents[i] {
                depth[j] = depth[j].max(depth[i] + 1);
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push(j);
                }
            }
        }
        if seen < n {
            let stuck: Vec<usize> = (0..n).filter(|&i| indegree[i] > 0).collect();
            return Err(Error::Plan(format!("dependency cycle among tasks {stuck:?}")));
        }
        let mut levels = vec![Vec::new(); depth.iter().max().map_or(0, |d| d + 1)];
        for (i, d) in depth.into_iter().enumerate() {
            levels[d].push(i);
        }
        Ok(levels)
    }

    /// Number of tasks on the longest dependency chain.
    pub fn critical_path(&self) -> Result<usize> {
        self.levels().map(|l| l.len())
    }

    /// `result[j]` is true when task `j` is a transitive dependency of `id`.
    pub fn ancestors(&self, id: usize) -> Vec<bool> {
        let mut seen = vec![false; self.tasks.len()];
        let mut stack: Vec<usize> = self.tasks[id].depends_on.clone();
        while let Some(j) = stack.pop() {
            if !std::mem::replace(&mut seen[j], true) {
                stack.extend(&self.tasks[j].depends_on);
            }
        }
        seen
    }

    /// Owning task of every map pixel, row-major. Fails unless the owned
    /// rectangles tile the map exactly.
    pub fn owner_map(&self) -> Result<Vec<u32>> {
        let (w, h) = (self.width(), self.height());
        let mut owner = vec![u32::MAX; w * h];
        for t in &self.tasks {
            let r = t.owned;
            if r.right() > w || r.bottom() > h {
                return Err(Error::Plan(format!("task {} owns pixels outside the map", t.id)));
            }
            for y in r.y..r.bottom() {
                for slot in &mut owner[y * w + r.x..y * w + r.right()] {
                    if *slot != u32::MAX {
                        return Err(Error::Plan(format!(
                            "tasks {} and {} both own a pixel in row {y}",
                            *slot, t.id
                        )));
                    }
                    *slot = t.id as u32;
                }
            }
        }
        if let Some(i) = owner.iter().position(|&o| o == u32::MAX) {
            return Err(Error::Plan(format!("pixel ({}, {}) has no owner", i % w, i / w)));
        }
        Ok(owner)
    }

    /// Checks ids, acyclicity, exact pixel ownership and that every window
    /// contains the region its task owns.
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.levels()?;
        self.owner_map()?;
        for t in &self.tasks {
            let (o, w) = (t.owned, t.window);
            if o.x < w.x || o.y < w.y || o.right() > w.right() || o.bottom() > w.bottom() {
                return Err(Error::Plan(format!("task {} owns pixels outside its window", t.id)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<StitchPlan> {
        let plan: StitchPlan =
            serde_json::from_str(text).map_err(|e| Error::format("stitch plan", e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }
}
