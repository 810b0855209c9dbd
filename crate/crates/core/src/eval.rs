//! Quantitative harness: latent round-trip error, seam discontinuity,
//! critical-path lengths and local diversity.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{FeatureExtractor, PcaModel};
use crate::error::{Error, Result};
use crate::io;
use crate::latent_field::LatentVector;
use crate::par;
use crate::patchgen::{luma, RgbdPatch};
use crate::stitcher::{FillMode, Pattern, SeamSegment, StitchPlan, TerrainMap};

/// Report preamble. The latent MSE mirrors only the embedding-based
/// (DINO-style) evaluation: the reference extractor followed by PCA plays
/// the embedding's role, and there is no CLIP-style column.
pub const REPORT_HEADER: &[&str] = &[
    "latent MSE: conditioning latent vs PCA projection of the reference-extractor features of each vertex tile",
    "only the embedding-branch (DINO-style) evaluation is mirrored; no CLIP-style column is computed",
    "seam score: squared luma step across ownership boundaries minus the median same-owner neighbor step",
];

/// Published averages of the trained-model pipeline. They are measured in a
/// different embedding space and are listed for context only.
pub const PUBLISHED_LATENT_MSE_CLIP: f64 = 0.034;
pub const PUBLISHED_LATENT_MSE_DINO: f64 = 3.34;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileMse {
    pub task_id: usize,
    pub row: usize,
    pub col: usize,
    pub mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentMse {
    pub tiles: Vec<TileMse>,
    pub mean: f64,
}

/// Per vertex tile, the mean squared difference between the latent the
/// tile was conditioned on and the PCA projection of its features.
pub fn latent_mse(
    map: &TerrainMap,
    plan: &StitchPlan,
    extractor: &dyn FeatureExtractor,
    pca: &PcaModel,
) -> Result<LatentMse> {
    if extractor.dim() != pca.feature_dim() {
        return Err(Error::Domain(format!(
            "extractor yields {} features, PCA expects {}",
            extractor.dim(),
            pca.feature_dim()
        )));
    }
    if (map.width(), map.height()) != (plan.width(), plan.height()) {
        return Err(Error::Domain(format!(
            "map is {}x{}, plan covers {}x{}",
            map.width(),
            map.height(),
            plan.width(),
            plan.height()
        )));
    }
    let vertices: Vec<_> = plan.vertex_tasks().collect();
    if let Some(t) = vertices.iter().find(|t| t.latent.dim() != pca.latent_dim()) {
        return Err(Error::Domain(format!(
            "task {} has a {}-d latent, PCA is {}-d",
            t.id,
            t.latent.dim(),
            pca.latent_dim()
        )));
    }
    let tiles = par::map_collect(&vertices, |t| -> Result<TileMse> {
        let tile = map.crop(plan.geometry.rect(t.kind, t.row, t.col));
        let z = pca.project(&extractor.extract(&tile))?;
        Ok(TileMse {
            task_id: t.id,
            row: t.row,
            col: t.col,
            mse: t.latent.squared_distance(&z) / z.dim() as f64,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mean = tiles.iter().map(|t| t.mse).sum::<f64>() / tiles.len().max(1) as f64;
    Ok(LatentMse { tiles, mean })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentScore {
    pub segment: SeamSegment,
    /// Mean of `step² - baseline` over the segment's pixel pairs.
    pub mean_excess: f64,
    /// Mean of `max(step² - baseline, 0)`.
    pub mean_positive: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeamScore {
    pub segments: Vec<SegmentScore>,
    /// Median squared luma step between same-owner 4-neighbors.
    pub baseline: f64,
    /// Mean positive excess over every seam pixel pair.
    pub aggregate: f64,
    pub warning: Option<String>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn interior_steps(map: &TerrainMap) -> Vec<f64> {
    let (w, h) = (map.width(), map.height());
    let px = map.rgbd();
    let l: Vec<f64> = px.pixels().iter().map(luma).collect();
    let owner = map.owners();
    let mut steps = Vec::with_capacity(2 * w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w && owner[i] == owner[i + 1] {
                steps.push((l[i + 1] - l[i]).powi(2));
            }
            if y + 1 < h && owner[i] == owner[i + w] {
                steps.push((l[i + w] - l[i]).powi(2));
            }
        }
    }
    steps
}

pub fn seam_score(map: &TerrainMap) -> SeamScore {
    let baseline = median(interior_steps(map));
    let px = map.rgbd();
    if map.seams().is_empty() {
        log::warn!("seam registry is empty; seam score is 0");
        return SeamScore {
            segments: Vec::new(),
            baseline,
            aggregate: 0.0,
            warning: Some("empty seam registry".into()),
        };
    }
    scores_for(map.seams(), px, baseline)
}

fn scores_for(seams: &[SeamSegment], px: &RgbdPatch, baseline: f64) -> SeamScore {
    let mut total = 0.0;
    let mut count = 0usize;
    let segments = seams
        .iter()
        .map(|s| {
            let mut excess = 0.0;
            let mut positive = 0.0;
            for ((ax, ay), (bx, by)) in s.pixel_pairs() {
                let e = (px.luma(bx, by) - px.luma(ax, ay)).powi(2) - baseline;
                excess += e;
                positive += e.max(0.0);
            }
            total += positive;
            count += s.len();
            let n = s.len().max(1) as f64;
            SegmentScore {
                segment: *s,
                mean_excess: excess / n,
                mean_positive: positive / n,
            }
        })
        .collect();
    SeamScore {
        segments,
        baseline,
        aggregate: total / count.max(1) as f64,
        warning: None,
    }
}

/// Scores an arbitrary seam list against a map's pixels, for registries
/// that do not come from the map's own ownership.
pub fn seam_score_with(map: &TerrainMap, seams: &[SeamSegment]) -> SeamScore {
    if seams.is_empty() {
        return seam_score(&TerrainMap::single(map.rgbd().clone()));
    }
    scores_for(seams, map.rgbd(), median(interior_steps(map)))
}

/// Two patches of equal height placed side by side with no blending.
pub fn naive_concat(left: &RgbdPatch, right: &RgbdPatch) -> Result<TerrainMap> {
    if left.height() != right.height() {
        return Err(Error::DimensionMismatch {
            expected: left.height(),
            got: right.height(),
        });
    }
    let (wl, h) = (left.width(), left.height());
    let w = wl + right.width();
    let mut pixels = RgbdPatch::new(w, h);
    pixels.paste(left, 0, 0);
    pixels.paste(right, wl, 0);
    let owner = (0..w * h).map(|i| u32::from(i % w >= wl)).collect();
    TerrainMap::new(pixels, owner, None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPathRow {
    pub pattern: Pattern,
    pub rows: usize,
    pub cols: usize,
    pub tasks: usize,
    pub stages: usize,
}

pub fn critical_path_row(plan: &StitchPlan) -> Result<CriticalPathRow> {
    Ok(CriticalPathRow {
        pattern: plan.pattern,
        rows: plan.geometry.rows,
        cols: plan.geometry.cols,
        tasks: plan.tasks.len(),
        stages: plan.critical_path()?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityRow {
    pub s: f64,
    /// Mean Euclidean distance between PCA embeddings of 4-adjacent vertex
    /// tiles.
    pub index: f64,
    pub tiles: usize,
    pub pairs: usize,
}

pub const MIN_DIVERSITY_TILES: usize = 10;

/// One row per scale factor. Each group holds the maps generated at that
/// scale; every map must carry its stitch plan.
pub fn diversity_index(
    groups: &[(f64, Vec<TerrainMap>)],
    extractor: &dyn FeatureExtractor,
    pca: &PcaModel,
) -> Result<Vec<DiversityRow>> {
    if groups.len() < 2 {
        return Err(Error::Domain(format!("need at least 2 scale values, got {}", groups.len())));
    }
    groups
        .iter()
        .map(|(s, maps)| {
            let mut tiles = 0;
            let mut pairs = 0;
            let mut total = 0.0;
            for map in maps {
                let plan = map
                    .plan()
                    .ok_or_else(|| Error::Domain("diversity needs maps with stitch plans".into()))?;
                let (rows, cols) = plan.grid_dims();
                let cells: Vec<(usize, usize)> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
                let embeddings = par::map_collect(&cells, |&(r, c)| -> Result<LatentVector> {
                    let tile = map.crop(plan.geometry.rect(crate::stitcher::TaskKind::Vertex, r, c));
                    pca.project(&extractor.extract(&tile))
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                tiles += embeddings.len();
                for r in 0..rows {
                    for c in 0..cols {
                        let e = &embeddings[r * cols + c];
                        if c + 1 < cols {
                            total += e.squared_distance(&embeddings[r * cols + c + 1]).sqrt();
                            pairs += 1;
                        }
                        if r + 1 < rows {
                            total += e.squared_distance(&embeddings[(r + 1) * cols + c]).sqrt();
                            pairs += 1;
                        }
                    }
                }
            }
            if tiles < MIN_DIVERSITY_TILES || pairs == 0 {
                return Err(Error::Domain(format!(
                    "scale {s}: {tiles} tiles, need at least {MIN_DIVERSITY_TILES} with adjacent pairs"
                )));
            }
            Ok(DiversityRow {
                s: *s,
                index: total / pairs as f64,
                tiles,
                pairs,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternMse {
    pub pattern: Pattern,
    pub fill: String,
    pub result: LatentMse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedSeamScore {
    pub label: String,
    pub score: SeamScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublishedContext {
    pub note: String,
    pub latent_mse_clip: f64,
    pub latent_mse_dino: f64,
}

impl Default for PublishedContext {
    fn default() -> Self {
        PublishedContext {
            note: "trained-model averages from the original evaluation; different embedding space, not comparable"
                .into(),
            latent_mse_clip: PUBLISHED_LATENT_MSE_CLIP,
            latent_mse_dino: PUBLISHED_LATENT_MSE_DINO,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub header: Vec<String>,
    pub latent_mse: Vec<PatternMse>,
    pub seams: Vec<NamedSeamScore>,
    pub critical_paths: Vec<CriticalPathRow>,
    pub diversity: Vec<DiversityRow>,
    pub context: PublishedContext,
}

impl EvalReport {
    pub fn new() -> Self {
        EvalReport {
            header: REPORT_HEADER.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn add_latent_mse(&mut self, pattern: Pattern, fill: FillMode, result: LatentMse) {
        self.latent_mse.push(PatternMse {
            pattern,
            fill: fill.name().into(),
            result,
        });
    }

    pub fn add_seams(&mut self, label: impl Into<String>, score: SeamScore) {
        self.seams.push(NamedSeamScore {
            label: label.into(),
            score,
        });
    }

    /// Summary without per-tile and per-segment detail.
    pub fn summary_json(&self) -> String {
        let latent: Vec<_> = self
            .latent_mse
            .iter()
            .map(|p| serde_json::json!({"pattern": p.pattern, "fill": p.fill, "mean": p.result.mean, "tiles": p.result.tiles.len()}))
            .collect();
        let seams: Vec<_> = self
            .seams
            .iter()
            .map(|s| serde_json::json!({"label": s.label, "aggregate": s.score.aggregate, "baseline": s.score.baseline, "segments": s.score.segments.len(), "warning": s.score.warning}))
            .collect();
        let summary = serde_json::json!({
            "header": self.header,
            "latent_mse": latent,
            "seams": seams,
            "critical_paths": self.critical_paths,
            "diversity": self.diversity,
            "published_context": self.context,
        });
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    }

    fn csv_with_header(&self, body: String) -> String {
        let mut out: String = self.header.iter().map(|h| format!("# {h}\n")).collect();
        out.push_str(&body);
        out
    }

    pub fn latent_mse_csv(&self) -> String {
        let mut body = String::from("pattern,fill,task_id,row,col,mse\n");
        for p in &self.latent_mse {
            for t in &p.result.tiles {
                body.push_str(&format!("{},{},{},{},{},{}\n", p.pattern, p.fill, t.task_id, t.row, t.col, t.mse));
            }
        }
        self.csv_with_header(body)
    }

    pub fn seams_csv(&self) -> String {
        let mut body = String::from("label,task_a,task_b,orientation,position,start,end,mean_excess,mean_positive\n");
        for s in &self.seams {
            for g in &s.score.segments {
                let seg = &g.segment;
                let orientation = match seg.orientation {
                    crate::stitcher::SeamOrientation::Vertical => "vertical",
                    crate::stitcher::SeamOrientation::Horizontal => "horizontal",
                };
                body.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    s.label,
                    seg.tasks.0,
                    seg.tasks.1,
                    orientation,
                    seg.position,
                    seg.start,
                    seg.end,
                    g.mean_excess,
                    g.mean_positive
                ));
            }
        }
        self.csv_with_header(body)
    }

    pub fn critical_path_csv(&self) -> String {
        let mut body = String::from("pattern,rows,cols,tasks,stages\n");
        for r in &self.critical_paths {
            body.push_str(&format!("{},{},{},{},{}\n", r.pattern, r.rows, r.cols, r.tasks, r.stages));
        }
        self.csv_with_header(body)
    }

    pub fn diversity_csv(&self) -> String {
        let mut body = String::from("s,index,tiles,pairs\n");
        for r in &self.diversity {
            body.push_str(&format!("{},{},{},{}\n", r.s, r.index, r.tiles, r.pairs));
        }
        self.csv_with_header(body)
    }

    /// Writes `summary.json` and one CSV per metric into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        io::write_text(&dir.join("summary.json"), &self.summary_json())?;
        io::write_text(&dir.join("latent_mse.csv"), &self.latent_mse_csv())?;
        io::write_text(&dir.join("seams.csv"), &self.seams_csv())?;
        io::write_text(&dir.join("critical_path.csv"), &self.critical_path_csv())?;
        io::write_text(&dir.join("diversity.csv"), &self.diversity_csv())?;
        Ok(())
    }
}
