//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::time::{Duration, Instant};

use fractalsea_core::embedding::{fit_latent_space, fit_pca, CalibratedGenerator, FeatureVector, LatentSpace, ReferenceExtractor};
use fractalsea_core::eval::{diversity_index, latent_mse, naive_concat, seam_score};
use fractalsea_core::latent_field::{generate_field, FractalParams, LatentVector};
use fractalsea_core::patchgen::{ConditionalGenerator, InpaintMode, PixelMask, ReferenceGenerator, RgbdPatch};
use fractalsea_core::pipeline::{read_manifest, run_pipeline, PipelineConfig};
use fractalsea_core::splat::{
    pixel_gradients, refine, render, sds_gradient, trace_pixel, Camera, DenoiserOracle, Gaussian, GaussianCloud,
    GroundTruthOracle, RefineOptions, RgbImage, Weighting,
};
use fractalsea_core::stitcher::{self, execute_plan, FillMode, Pattern, StitchGeometry};
use fractalsea_core::{io, rng};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(elapsed: Duration, budget: Duration) -> Result<(), String> {
    check(elapsed < budget, || format!("took {elapsed:.2?}, budget {budget:.0?}"))
}

fn scalar_corners(values: [f64; 4], dim: usize, seed: u64) -> [LatentVector; 4] {
    let mut k = 0u64;
    values.map(|v| {
        k += 1;
        LatentVector((0..dim).map(|j| v + j as f64 * rng::uniform(&[seed, k, j as u64])).collect())
    })
}

fn bilinear_degeneration() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for n in 1..=8u32 {
        for d in [1usize, 2, 4] {
            let corners = scalar_corners([0.7, -1.3, 2.9, 0.11], d, n as u64);
            let field = generate_field(&FractalParams::new(n, 0.0, 17 + n as u64, corners.clone())).map_err(|e| e.to_string())?;
            let last = field.resolution() - 1;
            for y in 0..=last {
                for x in 0..=last {
                    let (u, v) = (x as f64 / last as f64, y as f64 / last as f64);
                    for k in 0..d {
                        let expected = (1.0 - u) * (1.0 - v) * corners[0].0[k]
                            + u * (1.0 - v) * corners[1].0[k]
                            + (1.0 - u) * v * corners[2].0[k]
                            + u * v * corners[3].0[k];
                        worst = worst.max((field.vertex(x, y)[k] - expected).abs());
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    within_budget(elapsed, Duration::from_secs(1))?;
    Ok(format!("max deviation {worst:e} in {elapsed:.2?}"))
}

fn fractal_noise_scaling() -> Outcome {
    let start = Instant::now();
    let zero = || scalar_corners([0.0; 4], 1, 0).map(|_| LatentVector(vec![0.0]));
    let center_std = |s: f64| -> Result<f64, String> {
        let mut sq = 0.0;
        let mut sum = 0.0;
        for seed in 0..1000u64 {
            let field = generate_field(&FractalParams::new(4, s, seed, zero())).map_err(|e| e.to_string())?;
            let mid = field.resolution() / 2;
            let offset = field.vertex(mid, mid)[0];
            sum += offset;
            sq += offset * offset;
        }
        let mean = sum / 1000.0;
        Ok((sq / 1000.0 - mean * mean).sqrt())
    };
    let ratio = center_std(0.6)? / center_std(0.3)?;
    let elapsed = start.elapsed();
    check((ratio - 2.0).abs() <= 0.1, || format!("std ratio {ratio}"))?;
    within_budget(elapsed, Duration::from_secs(10))?;
    Ok(format!("std ratio {ratio:.6} in {elapsed:.2?}"))
}

/// Cyclic Jacobi written independently of the library.
fn oracle_jacobi(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..200 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-300 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = 0.5 * (2.0 * m[p][q]).atan2(m[q][q] - m[p][p]);
                let (s, c) = theta.sin_cos();
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

fn flip_to_canonical(v: &mut [f64]) {
    let big = v.iter().enumerate().fold(0, |b, (i, x)| if x.abs() > v[b].abs() { i } else { b });
    if v[big] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn pca_oracle_equivalence() -> Outcome {
    let mut worst_value: f64 = 0.0;
    let mut worst_vector: f64 = 0.0;
    let mut worst_nalgebra: f64 = 0.0;
    for trial in 0..100u64 {
        let dim = 2 + (trial % 7) as usize;
        let n = 40 + (trial % 13) as usize;
        let corpus: Vec<FeatureVector> = (0..n)
            .map(|i| {
                FeatureVector(
                    (0..dim)
                        .map(|k| (k as f64 + 1.0) * rng::gaussian(&[trial, i as u64, k as u64]) + 0.3 * rng::gaussian(&[trial, i as u64, 99]))
                        .collect(),
                )
            })
            .collect();
        let d = 1 + (trial as usize % dim);
        let model = fit_pca(&corpus, d).map_err(|e| e.to_string())?;

        let mean: Vec<f64> = (0..dim).map(|k| corpus.iter().map(|f| f.0[k]).sum::<f64>() / n as f64).collect();
        let cov: Vec<Vec<f64>> = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| corpus.iter().map(|f| (f.0[i] - mean[i]) * (f.0[j] - mean[j])).sum::<f64>() / (n - 1) as f64)
                    .collect()
            })
            .collect();
        let (values, vectors) = oracle_jacobi(&cov);
        let scale = values[0].abs();
        let na = nalgebra::DMatrix::from_fn(dim, dim, |i, j| cov[i][j]).symmetric_eigen();
        let mut na_values: Vec<f64> = na.eigenvalues.iter().copied().collect();
        na_values.sort_by(|a, b| b.total_cmp(a));
        for k in 0..d {
            worst_value = worst_value.max((model.explained_variance[k] - values[k]).abs() / scale);
            worst_nalgebra = worst_nalgebra.max((model.explained_variance[k] - na_values[k]).abs() / scale);
            let mut v = vectors[k].clone();
            flip_to_canonical(&mut v);
            let dev = v.iter().zip(&model.components[k]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst_vector = worst_vector.max(dev);
        }
    }
    check(worst_value <= 1e-9 && worst_nalgebra <= 1e-9 && worst_vector <= 1e-9, || {
        format!("eigenvalue rel dev {worst_value:e} (nalgebra {worst_nalgebra:e}), component dev {worst_vector:e}")
    })?;
    Ok(format!(
        "eigenvalue rel dev {worst_value:e} (nalgebra {worst_nalgebra:e}), component dev {worst_vector:e}"
    ))
}

/// Latent space at patch size `p` and a calibrated reference generator.
fn scenario(p: usize) -> Result<(LatentSpace, CalibratedGenerator<ReferenceGenerator>), String> {
    let g = ReferenceGenerator::new(p);
    let space = fit_latent_space(&g, &ReferenceExtractor, p, 2, 6, 7).map_err(|e| e.to_string())?;
    let cg = CalibratedGenerator::new(g, space.calibration.clone());
    Ok((space, cg))
}

fn random_corners(space: &LatentSpace, seed: u64) -> [LatentVector; 4] {
    [0u64, 1, 2, 3].map(|k| {
        let c = [
            -0.8 + 1.6 * rng::uniform(&[seed, k, 0]),
            0.1 + 0.8 * rng::uniform(&[seed, k, 1]),
        ];
        space.calibration.to_latent(&c).expect("calibrated corners")
    })
}

fn deterministic_parallelism() -> Outcome {
    let start = Instant::now();
    let p = 224;
    let (space, cg) = scenario(p)?;
    let geometry = StitchGeometry::new(4, 4, p);
    for seed in 0..10u64 {
        let field = generate_field(&FractalParams::new(3, 0.3, seed, random_corners(&space, seed))).map_err(|e| e.to_string())?;
        let plan = stitcher::plan(Pattern::Parallel, geometry, &field, seed).map_err(|e| e.to_string())?;
        let one = execute_plan(&plan, &cg, FillMode::default(), 1).map_err(|e| e.to_string())?;
        let eight = execute_plan(&plan, &cg, FillMode::default(), 8).map_err(|e| e.to_string())?;
        check(io::encode_rgbd(one.rgbd()) == io::encode_rgbd(eight.rgbd()), || {
            format!("seed {seed}: maps differ")
        })?;
    }
    let elapsed = start.elapsed();
    within_budget(elapsed, Duration::from_secs(120))?;
    Ok(format!("10 seeds byte-identical at P={p} in {elapsed:.2?}"))
}

fn critical_path() -> Outcome {
    let field = generate_field(&FractalParams::new(2, 0.0, 0, scalar_corners([0.0; 4], 2, 0))).map_err(|e| e.to_string())?;
    for rows in 2..=16 {
        for cols in 2..=16 {
            let geometry = StitchGeometry::new(rows, cols, 8);
            for pattern in Pattern::ALL {
                let plan = stitcher::plan(pattern, geometry, &field, 1).map_err(|e| e.to_string())?;
                let stages = plan.critical_path().map_err(|e| e.to_string())?;
                let expected = if pattern == Pattern::Parallel { 4 } else { rows * cols };
                check(stages == expected, || format!("{pattern} {rows}x{cols}: {stages} stages, expected {expected}"))?;
            }
        }
    }
    Ok("parallel 4 stages, raster/lawnmower rows·cols, for every grid 2x2..16x16".into())
}

fn known_pixel_preservation() -> Outcome {
    let g = ReferenceGenerator::new(32);
    for trial in 0..200u64 {
        let (w, h) = (8 + (trial % 25) as usize, 8 + (trial * 7 % 25) as usize);
        let latent = LatentVector(vec![rng::uniform(&[trial, 1]) * 2.0 - 1.0, rng::uniform(&[trial, 2])]);
        let patch = g.generate(&latent, trial, w, h).map_err(|e| e.to_string())?;
        let density = 0.1 + 0.8 * rng::uniform(&[trial, 3]);
        let mut mask = PixelMask::from_fn(w, h, |x, y| rng::uniform(&[trial, 4, x as u64, y as u64]) < density);
        if mask.known_count() == 0 || mask.unknown_count() == 0 {
            mask = PixelMask::from_fn(w, h, |x, _| x < w / 2);
        }
        let mode = if trial % 2 == 0 {
            InpaintMode::Unconditional
        } else {
            InpaintMode::Conditional(LatentVector(vec![0.3, 0.6]))
        };
        let out = g.inpaint(&patch, &mask, &mode, trial ^ 0xABCD).map_err(|e| e.to_string())?;
        for y in 0..h {
            for x in 0..w {
                if mask.is_known(x, y) {
                    let (a, b) = (patch.get(x, y), out.get(x, y));
                    check(a.map(f64::to_bits) == b.map(f64::to_bits), || {
                        format!("trial {trial}: known pixel ({x},{y}) changed")
                    })?;
                }
            }
        }
    }
    Ok("200 random masks, both modes, known pixels bit-identical".into())
}

fn seam_improvement() -> Outcome {
    let p = 32;
    let (space, cg) = scenario(p)?;
    let geometry = StitchGeometry::new(1, 2, p);
    let mut lines = Vec::new();
    let mut means = Vec::new();
    for fill in [FillMode::Unconditional, FillMode::Conditional] {
        let (mut blended, mut naive, mut wins) = (0.0, 0.0, 0);
        for seed in 0..50u64 {
            let field = generate_field(&FractalParams::new(1, 0.6, seed, random_corners(&space, seed + 100))).map_err(|e| e.to_string())?;
            let plan = stitcher::plan(Pattern::Parallel, geometry, &field, seed).map_err(|e| e.to_string())?;
            let map = execute_plan(&plan, &cg, fill, 1).map_err(|e| e.to_string())?;
            let tiles: Vec<RgbdPatch> = plan.vertex_tasks().map(|t| map.vertex_tile(t).expect("plan present")).collect();
            let concat = naive_concat(&tiles[0], &tiles[1]).map_err(|e| e.to_string())?;
            let (b, n) = (seam_score(&map).aggregate, seam_score(&concat).aggregate);
            blended += b / 50.0;
            naive += n / 50.0;
            wins += usize::from(b < n);
        }
        lines.push(format!("{}: blended {blended:.3e} vs naive {naive:.3e} ({wins}/50 pairs lower)", fill.name()));
        means.push((fill, blended, naive));
    }
    let cond = means[1].1;
    let uncond = means[0].1;
    lines.push(format!(
        "cond vs uncond: {cond:.3e} vs {uncond:.3e} ({} lower)",
        if uncond < cond { "uncond" } else { "cond" }
    ));
    for (fill, b, n) in &means {
        check(b < n, || format!("{}: blended {b} not below naive {n}", fill.name()))?;
    }
    Ok(lines.join("; "))
}

fn table1_direction() -> Outcome {
    let p = 32;
    let (space, cg) = scenario(p)?;
    let geometry = StitchGeometry::new(4, 4, p);
    let mean = |fill: FillMode| -> Result<[f64; 3], String> {
        let mut sums = [0.0; 3];
        for seed in 0..20u64 {
            let field = generate_field(&FractalParams::new(3, 0.3, seed, random_corners(&space, seed))).map_err(|e| e.to_string())?;
            for (k, pattern) in Pattern::ALL.iter().enumerate() {
                let plan = stitcher::plan(*pattern, geometry, &field, seed).map_err(|e| e.to_string())?;
                let map = execute_plan(&plan, &cg, fill, 1).map_err(|e| e.to_string())?;
                sums[k] += latent_mse(&map, &plan, &ReferenceExtractor, &space.pca).map_err(|e| e.to_string())?.mean / 20.0;
            }
        }
        Ok(sums)
    };
    let fmt = |m: &[f64; 3]| format!("raster {:.4e}, lawnmower {:.4e}, parallel {:.4e}", m[0], m[1], m[2]);
    let default_fill = FillMode::default();
    let assembled = mean(default_fill)?;
    let conditional = mean(FillMode::Conditional)?;
    let detail = format!(
        "{} fill: {}; cond fill (reported only): {}; published real-model averages CLIP 0.034 / DINO 3.34 (context, not comparable)",
        default_fill.name(),
        fmt(&assembled),
        fmt(&conditional)
    );
    check(assembled[2] <= assembled[0] && assembled[2] <= assembled[1], || detail.clone())?;
    Ok(detail)
}

fn random_scene(seed: u64, n: usize) -> GaussianCloud {
    let u = |i: usize, k: u64| rng::uniform(&[seed, i as u64, k]);
    GaussianCloud::new(
        (0..n)
            .map(|i| {
                let mut g = Gaussian::new(
                    [2.0 + 4.0 * u(i, 0), 2.0 + 4.0 * u(i, 1), u(i, 2)],
                    0.6 + 1.2 * u(i, 3),
                    0.2 + 0.7 * u(i, 4),
                    [u(i, 5), u(i, 6), u(i, 7)],
                );
                let q = [1.0, u(i, 9) - 0.5, u(i, 10) - 0.5, u(i, 11) - 0.5];
                let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                g.rotation = q.map(|v| v / norm);
                g.scale[1] *= 0.5 + u(i, 8);
                g
            })
            .collect(),
    )
}

fn compositing_correctness() -> Outcome {
    let mut cam = Camera::top_down(8.0, 8.0, 8, 8);
    cam.background = [0.1, 0.2, 0.3];
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let cloud = random_scene(seed, 10);
        for y in 0..8 {
            for x in 0..8 {
                let t = trace_pixel(&cloud, &cam, x, y);
                let total: f64 = t.contributions.iter().map(|c| c.weight).sum::<f64>() + t.transmittance;
                worst = worst.max((total - 1.0).abs());
            }
        }
        let mut permuted = cloud.clone();
        permuted.gaussians.reverse();
        permuted.gaussians.rotate_left(seed as usize % 10);
        check(render(&cloud, &cam) == render(&permuted, &cam), || format!("seed {seed}: permutation changed render"))?;
    }
    check(worst <= 1e-12, || format!("conservation error {worst:e}"))?;

    let cam = Camera::top_down(4.0, 4.0, 4, 4);
    let front = Gaussian::new([1.0, 1.0, 2.0], 0.5, 1.0, [0.3, 0.6, 0.9]);
    let behind_a = Gaussian::new([1.2, 0.8, 0.0], 0.7, 0.5, [1.0, 0.0, 0.0]);
    let behind_b = Gaussian::new([0.9, 1.1, 1.0], 1.1, 0.9, [0.0, 1.0, 0.0]);
    let a = render(&GaussianCloud::new(vec![front.clone(), behind_a]), &cam).get(1, 1);
    let b = render(&GaussianCloud::new(vec![front, behind_b]), &cam).get(1, 1);
    check(a == b, || format!("occlusion failed: {a:?} vs {b:?}"))?;

    let two = GaussianCloud::new(vec![
        Gaussian::new([1.0, 1.0, 0.0], 0.5, 1.0, [0.0; 3]),
        Gaussian::new([1.0, 1.0, 1.0], 0.5, 0.6, [1.0; 3]),
    ]);
    let luma = render(&two, &cam).get(1, 1)[0];
    check((luma - 0.6).abs() < 1e-12, || format!("two-layer case gave {luma}"))?;
    Ok(format!("conservation error {worst:e}; occlusion, permutation and two-layer (0.6) cases hold"))
}

fn sds_fixed_point_and_descent() -> Outcome {
    let cam8 = Camera::top_down(8.0, 8.0, 8, 8);
    let cloud = random_scene(5, 10);
    let oracle = GroundTruthOracle::new(render(&cloud, &cam8));
    for t in [20, 400, 980] {
        let step = sds_gradient(&cloud, &cam8, &oracle, t, Weighting::Constant, t as u64).map_err(|e| e.to_string())?;
        let r = step.residual.pixels.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        check(r < 1e-9, || format!("residual {r:e} at target, t={t}"))?;
    }

    let n = 32;
    let cloud = GaussianCloud::new(
        (0..n * n)
            .map(|i| {
                let (x, y) = ((i % n) as f64, (i / n) as f64);
                let c = [1u64, 2, 3].map(|k| rng::uniform(&[k, i as u64]));
                Gaussian::new([x, y, 0.1 * rng::uniform(&[5, i as u64])], 1.0, 0.8, c)
            })
            .collect(),
    );
    let cam = Camera::top_down(32.0, 32.0, n, n);
    let target = RgbImage {
        width: n,
        height: n,
        pixels: (0..n * n)
            .map(|i| {
                let (x, y) = ((i % n) as f64 / n as f64, (i / n) as f64 / n as f64);
                [0.2 + 0.6 * x, 0.3 + 0.4 * y, 0.5 + 0.3 * (x - y)]
            })
            .collect(),
    };
    let oracle = GroundTruthOracle::new(target.clone());
    let options = RefineOptions {
        iterations: 200,
        ..RefineOptions::default()
    };
    let monitor_cam = cam.clone();
    let monitor = move |c: &GaussianCloud| render(c, &monitor_cam).mean_abs_difference(&target);
    let views = [(cam, &oracle as &dyn DenoiserOracle)];
    let out = refine(&cloud, &views, &options, Some(&monitor)).map_err(|e| e.to_string())?;
    let m = &out.monitor;
    if let Some(i) = (0..m.len() - 50).find(|&i| m[i + 50] >= m[i]) {
        return Err(format!("no decrease over iterations {i}..{}: {} -> {}", i + 50, m[i], m[i + 50]));
    }
    for (a, b) in cloud.gaussians.iter().zip(&out.cloud.gaussians) {
        check(a.position.map(f64::to_bits) == b.position.map(f64::to_bits), || "a position moved".into())?;
    }
    Ok(format!(
        "residual 0 at target; mean |render - target| {:.4} -> {:.4}, decreasing over every 50-iteration window; positions unchanged",
        m[0],
        m[m.len() - 1]
    ))
}

fn gradient_check() -> Outcome {
    let cam = Camera::top_down(8.0, 8.0, 8, 8);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..20 {
        let cloud = random_scene(1000 + seed, 5);
        for (x, y) in [(3, 3), (4, 4), (5, 3), (2, 5)] {
            for pg in pixel_gradients(&cloud, &cam, x, y) {
                let i = pg.index;
                let at = |f: &dyn Fn(&mut Gaussian)| {
                    let mut c = cloud.clone();
                    f(&mut c.gaussians[i]);
                    render(&c, &cam).get(x, y)
                };
                let a = cloud.gaussians[i].opacity();
                let (plus, minus) = (at(&|g| g.set_opacity(a + h)), at(&|g| g.set_opacity(a - h)));
                let col = cloud.gaussians[i].color();
                for ch in 0..3 {
                    worst = worst.max(((plus[ch] - minus[ch]) / (2.0 * h) - pg.d_opacity[ch]).abs());
                    let shifted = |d: f64| {
                        move |g: &mut Gaussian| {
                            let mut c = col;
                            c[ch] += d;
                            g.set_color(c);
                        }
                    };
                    let fd = (at(&shifted(h))[ch] - at(&shifted(-h))[ch]) / (2.0 * h);
                    worst = worst.max((fd - pg.d_color[ch]).abs());
                    checked += 2;
                }
            }
        }
    }
    check(worst <= 1e-5 && checked > 0, || format!("max abs error {worst:e} over {checked} derivatives"))?;
    Ok(format!("max abs error {worst:e} over {checked} derivatives"))
}

fn diversity_trend() -> Outcome {
    let p = 32;
    let (space, cg) = scenario(p)?;
    let geometry = StitchGeometry::new(4, 4, p);
    let corners = random_corners(&space, 7);
    let mut groups = Vec::new();
    for s in [0.0, 0.3, 0.6] {
        let mut maps = Vec::new();
        for seed in 0..20u64 {
            let field = generate_field(&FractalParams::new(3, s, seed, corners.clone())).map_err(|e| e.to_string())?;
            let plan = stitcher::plan(Pattern::Parallel, geometry, &field, seed).map_err(|e| e.to_string())?;
            maps.push(execute_plan(&plan, &cg, FillMode::default(), 1).map_err(|e| e.to_string())?);
        }
        groups.push((s, maps));
    }
    let rows = diversity_index(&groups, &ReferenceExtractor, &space.pca).map_err(|e| e.to_string())?;
    let detail = rows.iter().map(|r| format!("s={} {:.4}", r.s, r.index)).collect::<Vec<_>>().join(", ");
    check(rows.windows(2).all(|w| w[1].index >= w[0].index), || detail.clone())?;
    Ok(detail)
}

fn end_to_end_reproducibility() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut config = PipelineConfig {
        seed: 2024,
        ..PipelineConfig::default()
    };
    let mut manifests = Vec::new();
    for run in ["a", "b"] {
        config.output = tmp.path().join(run);
        run_pipeline(&config).map_err(|e| e.to_string())?;
        manifests.push(read_manifest(&config.output).map_err(|e| e.to_string())?);
    }
    let elapsed = start.elapsed();
    let (a, b) = (&manifests[0], &manifests[1]);
    check(a.reproducible_part() == b.reproducible_part(), || "manifests differ".into())?;
    for entry in &a.files {
        let x = std::fs::read(tmp.path().join("a").join(&entry.path)).map_err(|e| e.to_string())?;
        let y = std::fs::read(tmp.path().join("b").join(&entry.path)).map_err(|e| e.to_string())?;
        check(x == y, || format!("{} differs", entry.path))?;
    }
    let per_run = elapsed / 2;
    within_budget(per_run, Duration::from_secs(300))?;
    Ok(format!(
        "{} artifacts byte-identical across two runs; {}x{} grid at P={} took {per_run:.2?} per run",
        a.files.len(),
        config.grid.rows,
        config.grid.cols,
        config.grid.patch
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("bilinear degeneration at s=0", bilinear_degeneration),
        ("fractal noise scaling", fractal_noise_scaling),
        ("PCA oracle equivalence", pca_oracle_equivalence),
        ("deterministic parallelism", deterministic_parallelism),
        ("critical path", critical_path),
        ("known-pixel preservation", known_pixel_preservation),
        ("seam improvement", seam_improvement),
        ("latent MSE direction", table1_direction),
        ("compositing correctness", compositing_correctness),
        ("SDS fixed point and descent", sds_fixed_point_and_descent),
        ("gradient check", gradient_check),
        ("diversity trend", diversity_trend),
        ("end-to-end reproducibility", end_to_end_reproducibility),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("{:>2}. {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {label}: {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {label}: {detail} [{elapsed:.2?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
