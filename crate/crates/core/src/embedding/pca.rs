use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_field::LatentVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// A fitted principal-component projection.
///
/// `components` holds `d` orthonormal rows of length `D`, ordered by
/// descending explained variance. Each row's largest-magnitude entry is
/// positive. When the corpus has rank below `d`, the missing rows are zero
/// and `rank_deficient` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub rank_deficient: bool,
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order with matching unit eigenvectors
/// (as rows).
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let total: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k][i]).collect())
        .collect();
    (values, vectors)
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn mean_and_covariance(corpus: &[FeatureVector]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = corpus.len();
    let dim = corpus[0].dim();
    let mut mean = vec![0.0; dim];
    for f in corpus {
        for (m, x) in mean.iter_mut().zip(&f.0) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![vec![0.0; dim]; dim];
    for f in corpus {
        let c: Vec<f64> = f.0.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..dim {
            for j in i..dim {
                cov[i][j] += c[i] * c[j];
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for i in 0..dim {
        for j in i..dim {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }
    }
    (mean, cov)
}

/// Fits a `d`-component PCA to `corpus` via Jacobi eigendecomposition of
/// its sample covariance.
pub fn fit_pca(corpus: &[FeatureVector], d: usize) -> Result<PcaModel> {
    if d == 0 {
        return Err(Error::InvalidParams("PCA needs at least one component".into()));
    }
    if corpus.len() < d {
        return Err(Error::InvalidParams(format!(
            "corpus of {} vectors cannot support {d} components",
            corpus.len()
        )));
    }
    let dim = corpus[0].dim();
    if d > dim {
        return Err(Error::InvalidParams(format!(
            "{d} components requested from {dim}-dimensional features"
        )));
    }
    for f in corpus {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.dim(),
            });
        }
        if f.0.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("corpus contains non-finite features".into()));
        }
    }
    let (mean, cov) = mean_and_covariance(corpus);
    let (values, vectors) = jacobi_eigen(&cov);
    let scale = values.first().copied().unwrap_or(0.0).abs();
    let rank = values.iter().filter(|&&l| l > 1e-12 * scale && l > 1e-300).count();
    let mut components = Vec::with_capacity(d);
    let mut explained_variance = Vec::with_capacity(d);
    for k in 0..d {
        if k < rank {
            let mut row = vectors[k].clone();
            canonical_sign(&mut row);
            components.push(row);
            explained_variance.push(values[k]);
        } else {
            components.push(vec![0.0; dim]);
            explained_variance.push(values[k].max(0.0));
        }
    }
    let rank_deficient = rank < d;
    if rank_deficient {
        log::warn!("PCA corpus has rank {rank} < {d}; padding with zero components");
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        rank_deficient,
    })
}

impl PcaModel {
    pub fn feature_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.components.len()
    }

    /// `components · (f − mean)`.
    pub fn project(&self, f: &FeatureVector) -> Result<LatentVector> {
        if f.dim() != self.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim(),
                got: f.dim(),
            });
        }
        let centered: Vec<f64> = f.0.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        Ok(LatentVector(
            self.components
                .iter()
                .map(|row| row.iter().zip(&centered).map(|(a, b)| a * b).sum())
                .collect(),
        ))
    }

    /// `mean + componentsᵀ · latent`.
    pub fn reconstruct(&self, latent: &LatentVector) -> Result<FeatureVector> {
        if latent.dim() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                got: latent.dim(),
            });
        }
        let mut out = self.mean.clone();
        for (row, &z) in self.components.iter().zip(&latent.0) {
            for (o, c) in out.iter_mut().zip(row) {
                *o += c * z;
            }
        }
        Ok(FeatureVector(out))
    }

    /// CSV layout: a `kind,f_0..` header, one `mean` row, `d` `component`
    /// rows, then one `variance` row holding the `d` explained variances.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        if self.rank_deficient {
            out.push_str("# rank_deficient\n");
        }
        out.push_str("kind");
        for k in 0..self.feature_dim() {
            let _ = write!(out, ",f_{k}");
        }
        out.push('\n');
        let row = |out: &mut String, kind: &str, values: &[f64]| {
            out.push_str(kind);
            for v in values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        };
        row(&mut out, "mean", &self.mean);
        for c in &self.components {
            row(&mut out, "component", c);
        }
        row(&mut out, "variance", &self.explained_variance);
        out
    }

    pub fn from_csv_str(text: &str) -> Result<PcaModel> {
        let rank_deficient = text.lines().any(|l| l.trim() == "# rank_deficient");
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut mean = None;
        let mut components = Vec::new();
        let mut variance = None;
        for record in reader.records() {
            let record = record.map_err(|e| Error::format("PCA model", e.to_string()))?;
            let values = record
                .iter()
                .skip(1)
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::format("PCA model", format!("bad number `{s}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            match &record[0] {
                "mean" => mean = Some(values),
                "component" => components.push(values),
                "variance" => variance = Some(values),
                other => return Err(Error::format("PCA model", format!("unknown row kind `{other}`"))),
            }
        }
        let mean = mean.ok_or_else(|| Error::format("PCA model", "missing mean row"))?;
        let explained_variance = variance.ok_or_else(|| Error::format("PCA model", "missing variance row"))?;
        if components.is_empty()
            || components.iter().any(|c| c.len() != mean.len())
            || explained_variance.len() != components.len()
        {
            return Err(Error::format("PCA model", "inconsistent row lengths"));
        }
        Ok(PcaModel {
            mean,
            components,
            explained_variance,
            rank_deficient,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<PcaModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }
}
