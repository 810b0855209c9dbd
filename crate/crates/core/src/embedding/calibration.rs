//! Ties a generator's native control vector to the PCA latent space.
//!
//! A trained conditional model consumes PCA coordinates of image features
//! directly. The procedural reference generator instead takes a control
//! vector (roughness, palette). [`Calibration`] fits the affine map
//! `latent ≈ forward · controls + offset` on a generated corpus and inverts it
//! by least squares, so a [`CalibratedGenerator`] can be conditioned on PCA
//! latents.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::latent_field::LatentVector;
use crate::patchgen::{ConditionalGenerator, InpaintMode, PixelMask, RgbdPatch};
use crate::{par, rng};

use super::extractor::FeatureExtractor;
use super::pca::{fit_pca, FeatureVector, PcaModel};

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    /// `d × k` matrix from controls to latents.
    pub forward: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
    /// Correlation between each control and its best affine readout from the
    /// latent, measured on the fitting corpus.
    pub recovery: Vec<f64>,
}

/// Solves `min ‖X β − y‖²` through the normal equations.
fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let p = rows[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (r, &t) in rows.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += r[i] * r[j];
            }
            a[i][p] += r[i] * t;
        }
    }
    solve_augmented(a)
}

fn solve_augmented(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let p = a.len();
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::Domain("calibration system is singular".into()));
        }
        a.swap(col, pivot);
        for row in 0..p {
            if row != col {
                let factor = a[row][col] / a[col][col];
                for k in col..=p {
                    a[row][k] -= factor * a[col][k];
                }
            }
        }
    }
    Ok((0..p).map(|i| a[i][p] / a[i][i]).collect())
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

impl Calibration {
    pub fn fit(controls: &[Vec<f64>], latents: &[LatentVector]) -> Result<Calibration> {
        if controls.is_empty() || controls.len() != latents.len() {
            return Err(Error::InvalidParams("calibration needs matching, non-empty samples".into()));
        }
        let k = controls[0].len();
        let d = latents[0].dim();
        let design: Vec<Vec<f64>> = controls
            .iter()
            .map(|c| c.iter().copied().chain(std::iter::once(1.0)).collect())
            .collect();
        let mut forward = Vec::with_capacity(d);
        let mut offset = Vec::with_capacity(d);
        for dim in 0..d {
            let y: Vec<f64> = latents.iter().map(|l| l.0[dim]).collect();
            let beta = least_squares(&design, &y)?;
            forward.push(beta[..k].to_vec());
            offset.push(beta[k]);
        }

        let latent_design: Vec<Vec<f64>> = latents
            .iter()
            .map(|l| l.0.iter().copied().chain(std::iter::once(1.0)).collect())
            .collect();
        let mut recovery = Vec::with_capacity(k);
        for j in 0..k {
            let y: Vec<f64> = controls.iter().map(|c| c[j]).collect();
            let beta = least_squares(&latent_design, &y)?;
            let fitted: Vec<f64> = latent_design
                .iter()
                .map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum())
                .collect();
            recovery.push(correlation(&y, &fitted));
        }
        Ok(Calibration {
            forward,
            offset,
            recovery,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.forward.len()
    }

    pub fn control_dim(&self) -> usize {
        self.forward.first().map_or(0, Vec::len)
    }

    pub fn to_latent(&self, controls: &[f64]) -> Result<LatentVector> {
        if controls.len() != self.control_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.control_dim(),
                got: controls.len(),
            });
        }
        Ok(LatentVector(
            self.forward
                .iter()
                .zip(&self.offset)
                .map(|(row, o)| o + row.iter().zip(controls).map(|(a, b)| a * b).sum::<f64>())
                .collect(),
        ))
    }

    /// Least-squares controls whose predicted latent is closest to `latent`.
    pub fn to_controls(&self, latent: &LatentVector) -> Result<LatentVector> {
        if latent.dim() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                got: latent.dim(),
            });
        }
        let k = self.control_dim();
        let target: Vec<f64> = latent.0.iter().zip(&self.offset).map(|(l, o)| l - o).collect();
        let mut a = vec![vec![0.0; k + 1]; k];
        for (row, t) in self.forward.iter().zip(&target) {
            for i in 0..k {
                for j in 0..k {
                    a[i][j] += row[i] * row[j];
                }
                a[i][k] += row[i] * t;
            }
        }
        solve_augmented(a).map(LatentVector)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("kind,values\n");
        let mut row = |kind: &str, v: &[f64]| {
            out.push_str(kind);
            for x in v {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        };
        for r in &self.forward {
            row("forward", r);
        }
        row("offset", &self.offset);
        row("recovery", &self.recovery);
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Calibration> {
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let (mut forward, mut offset, mut recovery) = (Vec::new(), None, None);
        for record in reader.records() {
            let record = record.map_err(|e| Error::format("calibration", e.to_string()))?;
            let values = record
                .iter()
                .skip(1)
                .map(|s| s.parse::<f64>().map_err(|_| Error::format("calibration", format!("bad number `{s}`"))))
                .collect::<Result<Vec<_>>>()?;
            match &record[0] {
                "forward" => forward.push(values),
                "offset" => offset = Some(values),
                "recovery" => recovery = Some(values),
                other => return Err(Error::format("calibration", format!("unknown row `{other}`"))),
            }
        }
        let offset = offset.ok_or_else(|| Error::format("calibration", "missing offset"))?;
        if forward.len() != offset.len() || forward.is_empty() {
            return Err(Error::format("calibration", "forward rows do not match offset"));
        }
        Ok(Calibration {
            forward,
            offset,
            recovery: recovery.unwrap_or_default(),
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Calibration> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }
}

/// PCA model plus calibration fitted on the same generated corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSpace {
    pub pca: PcaModel,
    pub calibration: Calibration,
}

/// Generates a `grid × grid` corpus over roughness in `[-1, 1]` and palette
/// in `[0, 1]`, fits a `d`-component PCA to its features, and calibrates the
/// generator's controls against the PCA latents.
pub fn fit_latent_space(
    generator: &dyn ConditionalGenerator,
    extractor: &dyn FeatureExtractor,
    patch_size: usize,
    d: usize,
    grid: usize,
    seed: u64,
) -> Result<LatentSpace> {
    if grid < 2 {
        return Err(Error::InvalidParams("calibration grid needs at least 2 steps".into()));
    }
    let controls: Vec<Vec<f64>> = (0..grid * grid)
        .map(|i| {
            let (a, b) = (i / grid, i % grid);
            let t = |k: usize| k as f64 / (grid - 1) as f64;
            vec![-1.0 + 2.0 * t(a), t(b)]
        })
        .collect();
    let features: Vec<FeatureVector> = par::map_range(controls.len(), |i| {
        generator
            .generate(
                &LatentVector(controls[i].clone()),
                rng::hash(&[seed, i as u64]),
                patch_size,
                patch_size,
            )
            .map(|p| extractor.extract(&p))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let pca = fit_pca(&features, d)?;
    let latents = features
        .iter()
        .map(|f| pca.project(f))
        .collect::<Result<Vec<_>>>()?;
    let calibration = Calibration::fit(&controls, &latents)?;
    Ok(LatentSpace { pca, calibration })
}

/// Wraps a control-driven generator so it accepts PCA latents.
#[derive(Clone, Debug)]
pub struct CalibratedGenerator<G> {
    pub inner: G,
    pub calibration: Calibration,
}

impl<G: ConditionalGenerator> CalibratedGenerator<G> {
    pub fn new(inner: G, calibration: Calibration) -> Self {
        CalibratedGenerator { inner, calibration }
    }
}

impl<G: ConditionalGenerator> ConditionalGenerator for CalibratedGenerator<G> {
    fn generate(&self, latent: &LatentVector, seed: u64, width: usize, height: usize) -> Result<RgbdPatch> {
        let controls = self.calibration.to_controls(latent)?;
        self.inner.generate(&controls, seed, width, height)
    }

    fn inpaint(&self, patch: &RgbdPatch, mask: &PixelMask, mode: &InpaintMode, seed: u64) -> Result<RgbdPatch> {
        let mode = match mode {
            InpaintMode::Conditional(latent) => InpaintMode::Conditional(self.calibration.to_controls(latent)?),
            InpaintMode::Unconditional => InpaintMode::Unconditional,
        };
        self.inner.inpaint(patch, mask, &mode, seed)
    }

    fn concurrent(&self) -> bool {
        self.inner.concurrent()
    }
}
