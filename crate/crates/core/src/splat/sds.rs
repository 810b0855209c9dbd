//! Score-distillation refinement of Gaussian appearance.
//!
//! A rendered view is noised to `x_t = √ᾱ_t·I + √(1-ᾱ_t)·ε`, a denoiser
//! predicts the noise, and the residual `w(t)(ε̂ - ε)` is pushed back
//! through the compositing equation as a constant upstream gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

use super::camera::Camera;
use super::gaussian::GaussianCloud;
use super::render::{backward, render, CloudGradient, RgbImage};

pub const TRAIN_STEPS: usize = 1000;

/// Cumulative signal levels `ᾱ_t` for `t` in `0..steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// β rising linearly from 1e-4 to 2e-2 over 1000 steps.
    pub fn linear() -> Self {
        Self::linear_betas(1e-4, 2e-2, TRAIN_STEPS)
    }

    pub fn linear_betas(beta_start: f64, beta_end: f64, steps: usize) -> Self {
        assert!(steps >= 2);
        let mut acc = 1.0;
        let alpha_bar = (0..steps)
            .map(|t| {
                let beta = beta_start + (beta_end - beta_start) * t as f64 / (steps - 1) as f64;
                acc *= 1.0 - beta;
                acc
            })
            .collect();
        NoiseSchedule { alpha_bar }
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar
            .get(t)
            .copied()
            .ok_or_else(|| Error::Domain(format!("timestep {t} outside 0..{}", self.steps())))
    }
}

/// Predicts the noise that was added to an image at timestep `t`.
pub trait DenoiserOracle: Sync {
    fn schedule(&self) -> &NoiseSchedule;
    fn predict_noise(&self, noisy: &RgbImage, t: usize) -> Result<RgbImage>;
}

/// Knows the clean target and inverts the forward-noising identity exactly.
#[derive(Clone, Debug)]
pub struct GroundTruthOracle {
    pub target: RgbImage,
    pub schedule: NoiseSchedule,
}

impl GroundTruthOracle {
    pub fn new(target: RgbImage) -> Self {
        GroundTruthOracle {
            target,
            schedule: NoiseSchedule::linear(),
        }
    }
}

impl DenoiserOracle for GroundTruthOracle {
    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn predict_noise(&self, noisy: &RgbImage, t: usize) -> Result<RgbImage> {
        if (noisy.width, noisy.height) != (self.target.width, self.target.height) {
            return Err(Error::DimensionMismatch {
                expected: self.target.pixels.len(),
                got: noisy.pixels.len(),
            });
        }
        let ab = self.schedule.alpha_bar(t)?;
        let (signal, sigma) = (ab.sqrt(), (1.0 - ab).sqrt());
        let pixels = noisy
            .pixels
            .iter()
            .zip(&self.target.pixels)
            .map(|(x, x0)| [0, 1, 2].map(|c| (x[c] - signal * x0[c]) / sigma))
            .collect();
        Ok(RgbImage {
            width: noisy.width,
            height: noisy.height,
            pixels,
        })
    }
}

/// Timestep weighting `w(t)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Constant,
    /// `w(t) = 1 - ᾱ_t`.
    NoiseVariance,
}

impl Weighting {
    pub fn weight(self, alpha_bar: f64) -> f64 {
        match self {
            Weighting::Constant => 1.0,
            Weighting::NoiseVariance => 1.0 - alpha_bar,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SdsStep {
    pub gradient: CloudGradient,
    pub render: RgbImage,
    /// `w(t)(ε̂ - ε)` per pixel.
    pub residual: RgbImage,
    /// Mean squared residual over pixels and channels.
    pub loss: f64,
}

pub fn sds_gradient(
    cloud: &GaussianCloud,
    camera: &Camera,
    oracle: &dyn DenoiserOracle,
    t: usize,
    weighting: Weighting,
    noise_seed: u64,
) -> Result<SdsStep> {
    if !cloud.positions_frozen {
        return Err(Error::Domain("refinement requires frozen positions".into()));
    }
    let ab = oracle.schedule().alpha_bar(t)?;
    let w = weighting.weight(ab);
    let image = render(cloud, camera);
    let noise: Vec<[f64; 3]> = (0..image.pixels.len())
        .map(|p| [0u64, 1, 2].map(|c| rng::gaussian(&[noise_seed, t as u64, p as u64, c])))
        .collect();
    let (signal, sigma) = (ab.sqrt(), (1.0 - ab).sqrt());
    let noisy = RgbImage {
        width: image.width,
        height: image.height,
        pixels: image
            .pixels
            .iter()
            .zip(&noise)
            .map(|(x, e)| [0, 1, 2].map(|c| signal * x[c] + sigma * e[c]))
            .collect(),
    };
    let predicted = oracle.predict_noise(&noisy, t)?;
    if predicted.pixels.len() != noise.len() {
        return Err(Error::DimensionMismatch {
            expected: noise.len(),
            got: predicted.pixels.len(),
        });
    }
    let residual = RgbImage {
        width: image.width,
        height: image.height,
        pixels: predicted
            .pixels
            .iter()
            .zip(&noise)
            .map(|(p, e)| [0, 1, 2].map(|c| w * (p[c] - e[c])))
            .collect(),
    };
    let loss = residual.pixels.iter().flatten().map(|v| v * v).sum::<f64>() / (3 * noise.len()).max(1) as f64;
    let gradient = backward(cloud, camera, &residual);
    Ok(SdsStep {
        gradient,
        render: image,
        residual,
        loss,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineOptions {
    pub iterations: usize,
    pub step_size: f64,
    /// Timesteps are drawn uniformly from `t_min..=t_max`.
    pub t_min: usize,
    pub t_max: usize,
    pub weighting: Weighting,
    pub seed: u64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            iterations: 200,
            step_size: 0.05,
            t_min: 20,
            t_max: 980,
            weighting: Weighting::Constant,
            seed: 0,
        }
    }
}

/// Supervising view: a camera and the denoiser that judges its render.
pub type View<'a> = (Camera, &'a dyn DenoiserOracle);

#[derive(Clone, Debug)]
pub struct RefineResult {
    pub cloud: GaussianCloud,
    /// Mean squared residual per iteration.
    pub loss: Vec<f64>,
    /// Monitor value before the first iteration and after each one.
    pub monitor: Vec<f64>,
}

pub fn timestep(options: &RefineOptions, iteration: usize) -> usize {
    let span = (options.t_max - options.t_min + 1) as f64;
    let u = rng::uniform(&[options.seed, iteration as u64, 0x7473]);
    options.t_min + ((u * span) as usize).min(options.t_max - options.t_min)
}

/// Plain gradient descent on opacity and color, cycling through `views`.
pub fn refine(
    cloud: &GaussianCloud,
    views: &[View<'_>],
    options: &RefineOptions,
    monitor: Option<&dyn Fn(&GaussianCloud) -> f64>,
) -> Result<RefineResult> {
    if views.is_empty() && options.iterations > 0 {
        return Err(Error::InvalidParams("refinement needs at least one view".into()));
    }
    if options.t_min > options.t_max || !(options.step_size.is_finite() && options.step_size >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "bad refine options: t {}..={}, step {}",
            options.t_min, options.t_max, options.step_size
        )));
    }
    let mut cloud = cloud.clone();
    let mut loss = Vec::with_capacity(options.iterations);
    let mut trace = Vec::new();
    if let Some(m) = monitor {
        trace.push(m(&cloud));
    }
    for it in 0..options.iterations {
        let (camera, oracle) = &views[it % views.len()];
        let t = timestep(options, it);
        let noise_seed = rng::hash(&[options.seed, it as u64]);
        let step = sds_gradient(&cloud, camera, *oracle, t, options.weighting, noise_seed)?;
        for (g, (dl, dc)) in cloud
            .gaussians
            .iter_mut()
            .zip(step.gradient.opacity_logit.iter().zip(&step.gradient.color_raw))
        {
            g.opacity_logit -= options.step_size * dl;
            for c in 0..3 {
                g.color_raw[c] -= options.step_size * dc[c];
            }
        }
        loss.push(step.loss);
        if let Some(m) = monitor {
            trace.push(m(&cloud));
        }
    }
    Ok(RefineResult {
        cloud,
        loss,
        monitor: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_is_decreasing() {
        let s = NoiseSchedule::linear();
        assert_eq!(s.steps(), 1000);
        assert!((s.alpha_bar(0).unwrap() - (1.0 - 1e-4)).abs() < 1e-15);
        assert!(s.alpha_bar(999).unwrap() < 1e-4);
        assert!(s.alpha_bar(1000).is_err());
    }

    #[test]
    fn timesteps_stay_in_range() {
        let o = RefineOptions::default();
        for i in 0..2000 {
            let t = timestep(&o, i);
            assert!((o.t_min..=o.t_max).contains(&t));
        }
    }
}
