//! Discrete Laplace (membrane) solves on pixel grids, plus the small raster
//! helpers the inpainting code needs.

use std::collections::VecDeque;

const NONE: u32 = u32::MAX;

/// Five-point Laplacian restricted to a set of free pixels.
///
/// Free pixels satisfy `deg(p)·u(p) = Σ u(q)` over their in-grid 4-neighbors
/// `q`; fixed pixels act as Dirichlet data and the grid border is a natural
/// (zero-flux) boundary. A connected free region that touches no fixed pixel
/// has no unique solution and is filled with the mean of all fixed values.
#[derive(Debug)]
pub struct HarmonicSystem {
    width: usize,
    height: usize,
    /// Pixel index of each unknown.
    unknowns: Vec<usize>,
    /// Unknown number of each pixel, or `NONE`.
    slot: Vec<u32>,
    degree: Vec<f64>,
    /// Free left/up neighbors of each unknown; absent ones point at the
    /// zero slot one past the last unknown.
    lower: Vec<[u32; 2]>,
    /// Free right/down neighbors, padded the same way.
    upper: Vec<[u32; 2]>,
    /// Pivots of the modified incomplete Cholesky preconditioner.
    pivots: Vec<f64>,
    /// Pixels of free regions with no Dirichlet contact.
    floating: Vec<usize>,
}

impl HarmonicSystem {
    pub fn new(width: usize, height: usize, free: &[bool]) -> Self {
        assert_eq!(free.len(), width * height);
        let anchored = anchored_free_pixels(width, height, free);
        let mut unknowns = Vec::new();
        let mut slot = vec![NONE; width * height];
        let mut floating = Vec::new();
        for i in 0..width * height {
            if free[i] {
                if anchored[i] {
                    slot[i] = unknowns.len() as u32;
                    unknowns.push(i);
                } else {
                    floating.push(i);
                }
            }
        }
        let n = unknowns.len() as u32;
        let degree: Vec<f64> = unknowns
            .iter()
            .map(|&i| neighbors(i, width, height).count() as f64)
            .collect();
        let link = |q: Option<usize>| q.map(|q| slot[q]).filter(|&s| s != NONE).unwrap_or(n);
        let mut lower = Vec::with_capacity(unknowns.len());
        let mut upper = Vec::with_capacity(unknowns.len());
        for &i in &unknowns {
            let (x, y) = (i % width, i / width);
            lower.push([link((x > 0).then(|| i - 1)), link((y > 0).then(|| i - width))]);
            upper.push([
                link((x + 1 < width).then(|| i + 1)),
                link((y + 1 < height).then(|| i + width)),
            ]);
        }
        let pivots = mic_pivots(&degree, &lower, &upper);
        HarmonicSystem {
            width,
            height,
            unknowns,
            slot,
            degree,
            lower,
            upper,
            pivots,
            floating,
        }
    }

    pub fn unknown_count(&self) -> usize {
        self.unknowns.len()
    }

    /// Overwrites the free entries of `values` with the harmonic extension
    /// of the fixed entries.
    pub fn solve(&self, values: &mut [f64]) {
        let mut lanes: Vec<[f64; 1]> = values.iter().map(|&v| [v]).collect();
        self.solve_lanes(&mut lanes);
        for (v, l) in values.iter_mut().zip(&lanes) {
            *v = l[0];
        }
    }

    /// [`solve`](Self::solve) for `L` independent right-hand sides at once.
    /// Each lane gets exactly the result of solving it alone. Conjugate
    /// gradients with a modified incomplete Cholesky preconditioner;
    /// sequential and deterministic.
    pub fn solve_lanes<const L: usize>(&self, values: &mut [[f64; L]]) {
        assert_eq!(values.len(), self.width * self.height);
        let n = self.unknowns.len();
        let is_fixed = |i: usize| self.slot[i] == NONE && self.floating.binary_search(&i).is_err();

        if !self.floating.is_empty() {
            let mut sum = [0.0; L];
            let mut count = 0usize;
            for i in (0..values.len()).filter(|&i| is_fixed(i)) {
                for l in 0..L {
                    sum[l] += values[i][l];
                }
                count += 1;
            }
            let fill = sum.map(|s| if count > 0 { s / count as f64 } else { 0.5 });
            for &i in &self.floating {
                values[i] = fill;
            }
        }
        if n == 0 {
            return;
        }

        // Right-hand side from Dirichlet neighbors; initial guess from their mean.
        let mut b = vec![[0.0; L]; n];
        let mut guess = [0.0; L];
        let mut guess_count = 0usize;
        for (k, &i) in self.unknowns.iter().enumerate() {
            for q in neighbors(i, self.width, self.height) {
                if self.slot[q] == NONE {
                    for l in 0..L {
                        b[k][l] += values[q][l];
                        guess[l] += values[q][l];
                    }
                    guess_count += 1;
                }
            }
        }
        let guess = guess.map(|g| g / guess_count.max(1) as f64);
        let mut x = vec![guess; n + 1];
        x[n] = [0.0; L];

        // Work vectors carry one trailing zero entry for absent neighbors.
        let mut r = vec![[0.0; L]; n];
        self.apply(&x, &mut r);
        for k in 0..n {
            for l in 0..L {
                r[k][l] = b[k][l] - r[k][l];
            }
        }
        let tol2 = lane_dot(&b, &b).map(|bb| (1e-10 * bb.sqrt().max(1e-300)).powi(2));
        let mut z = vec![[0.0; L]; n + 1];
        self.precondition(&r, &mut z);
        let mut p = z.clone();
        let mut ap = vec![[0.0; L]; n];
        let mut rz = lane_dot(&r, &z[..n]);
        let mut rr = lane_dot(&r, &r);
        let mut active = [true; L];
        let max_iter = 10 * n + 100;
        for _ in 0..max_iter {
            for l in 0..L {
                active[l] = active[l] && rr[l] > tol2[l];
            }
            if !active.contains(&true) {
                break;
            }
            self.apply(&p, &mut ap);
            let pap = lane_dot(&p[..n], &ap);
            let mut alpha = [0.0; L];
            for l in 0..L {
                if active[l] && pap[l] <= 0.0 {
                    active[l] = false;
                }
                if active[l] {
                    alpha[l] = rz[l] / pap[l];
                }
            }
            rr = [0.0; L];
            for k in 0..n {
                for l in 0..L {
                    x[k][l] += alpha[l] * p[k][l];
                    r[k][l] -= alpha[l] * ap[k][l];
                    rr[l] += r[k][l] * r[k][l];
                }
            }
            self.precondition(&r, &mut z);
            let rz_next = lane_dot(&r, &z[..n]);
            let mut beta = [0.0; L];
            for l in 0..L {
                if active[l] {
                    beta[l] = rz_next[l] / rz[l];
                    rz[l] = rz_next[l];
                }
            }
            for k in 0..n {
                for l in 0..L {
                    if active[l] {
                        p[k][l] = z[k][l] + beta[l] * p[k][l];
                    }
                }
            }
        }
        for (k, &i) in self.unknowns.iter().enumerate() {
            values[i] = x[k];
        }
    }

    /// `z = M⁻¹ r` with `M = (D + L) D⁻¹ (D + L)ᵀ`, where `L` is the strict
    /// lower part of the system matrix and `D` the pivots.
    fn precondition<const L: usize>(&self, r: &[[f64; L]], z: &mut [[f64; L]]) {
        let n = r.len();
        z[n] = [0.0; L];
        for k in 0..n {
            let [a, b] = self.lower[k];
            let inv = 1.0 / self.pivots[k];
            for l in 0..L {
                z[k][l] = (r[k][l] + z[a as usize][l] + z[b as usize][l]) * inv;
            }
        }
        for k in (0..n).rev() {
            let [a, b] = self.upper[k];
            let inv = 1.0 / self.pivots[k];
            for l in 0..L {
                z[k][l] += (z[a as usize][l] + z[b as usize][l]) * inv;
            }
        }
    }

    /// `out = A v`; `v` has the trailing zero entry.
    fn apply<const L: usize>(&self, v: &[[f64; L]], out: &mut [[f64; L]]) {
        for k in 0..out.len() {
            let [a, b] = self.lower[k];
            let [c, d] = self.upper[k];
            for l in 0..L {
                out[k][l] = self.degree[k] * v[k][l]
                    - v[a as usize][l]
                    - v[b as usize][l]
                    - v[c as usize][l]
                    - v[d as usize][l];
            }
        }
    }
}

fn lane_dot<const L: usize>(a: &[[f64; L]], b: &[[f64; L]]) -> [f64; L] {
    let mut acc = [0.0; L];
    for (x, y) in a.iter().zip(b) {
        for l in 0..L {
            acc[l] += x[l] * y[l];
        }
    }
    acc
}

/// Relaxation of the row-sum compensation; 1 is full MIC(0), 0 is IC(0).
const MIC_RELAXATION: f64 = 0.95;

/// Pivots of MIC(0) for a matrix with diagonal `degree` and -1 couplings
/// along the links. Dropped fill-in is moved onto the diagonal so row sums
/// are preserved up to the relaxation.
fn mic_pivots(degree: &[f64], lower: &[[u32; 2]], upper: &[[u32; 2]]) -> Vec<f64> {
    let n = degree.len();
    let upper_count = |j: usize| upper[j].iter().filter(|&&s| (s as usize) < n).count() as f64;
    let mut pivots = vec![0.0; n];
    for k in 0..n {
        let mut d = degree[k];
        for &s in &lower[k] {
            let j = s as usize;
            if j < n {
                d -= (1.0 + MIC_RELAXATION * (upper_count(j) - 1.0)) / pivots[j];
            }
        }
        pivots[k] = d.max(0.05 * degree[k]);
    }
    pivots
}

fn neighbors(i: usize, width: usize, height: usize) -> impl Iterator<Item = usize> {
    let x = i % width;
    let y = i / width;
    let left = (x > 0).then(|| i - 1);
    let right = (x + 1 < width).then(|| i + 1);
    let up = (y > 0).then(|| i - width);
    let down = (y + 1 < height).then(|| i + width);
    [left, right, up, down].into_iter().flatten()
}

/// Marks free pixels whose connected free region touches a fixed pixel.
fn anchored_free_pixels(width: usize, height: usize, free: &[bool]) -> Vec<bool> {
    let mut anchored = vec![false; free.len()];
    let mut queue = VecDeque::new();
    for i in 0..free.len() {
        if free[i] && neighbors(i, width, height).any(|q| !free[q]) {
            anchored[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        for q in neighbors(i, width, height) {
            if free[q] && !anchored[q] {
                anchored[q] = true;
                queue.push_back(q);
            }
        }
    }
    anchored
}

/// City-block distance from every pixel to the nearest `source` pixel
/// (`u32::MAX` when there is none).
pub fn distance_to(width: usize, height: usize, source: &[bool]) -> Vec<u32> {
    let mut dist = vec![u32::MAX; width * height];
    let mut queue = VecDeque::new();
    for (i, &s) in source.iter().enumerate() {
        if s {
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let d = dist[i] + 1;
        for q in neighbors(i, width, height) {
            if dist[q] > d {
                dist[q] = d;
                queue.push_back(q);
            }
        }
    }
    dist
}

/// Separable box blur with clamped borders.
pub fn box_blur(values: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return values.to_vec();
    }
    let r = radius as isize;
    let norm = 1.0 / (2 * radius + 1) as f64;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            let s: f64 = (-r..=r)
                .map(|d| values[y * width + clamp(x as isize + d, width)])
                .sum();
            tmp[y * width + x] = s * norm;
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            let s: f64 = (-r..=r)
                .map(|d| tmp[clamp(y as isize + d, height) * width + x])
                .sum();
            out[y * width + x] = s * norm;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_ramp_between_dirichlet_columns() {
        // Left column 0, right column 1, natural boundary top and bottom:
        // the harmonic solution is the linear ramp in x.
        let (w, h) = (9, 5);
        let free: Vec<bool> = (0..w * h).map(|i| i % w != 0 && i % w != w - 1).collect();
        let mut v: Vec<f64> = (0..w * h).map(|i| if i % w == w - 1 { 1.0 } else { 0.0 }).collect();
        HarmonicSystem::new(w, h, &free).solve(&mut v);
        for y in 0..h {
            for x in 0..w {
                let expected = x as f64 / (w - 1) as f64;
                assert!((v[y * w + x] - expected).abs() < 1e-8, "({x},{y})");
            }
        }
    }

    #[test]
    fn constant_boundary_gives_constant_fill() {
        let (w, h) = (12, 10);
        let free: Vec<bool> = (0..w * h).map(|i| (i % w) > 2 && (i / w) > 1).collect();
        let mut v = vec![0.37; w * h];
        for (i, f) in free.iter().enumerate() {
            if *f {
                v[i] = 0.0;
            }
        }
        HarmonicSystem::new(w, h, &free).solve(&mut v);
        assert!(v.iter().all(|x| (x - 0.37).abs() < 1e-9));
    }

    #[test]
    fn floating_regions_take_the_fixed_mean() {
        let (w, h) = (3, 1);
        let mut v = vec![0.0; 3];
        let free = vec![true, true, true];
        HarmonicSystem::new(w, h, &free).solve(&mut v);
        assert_eq!(v, vec![0.5; 3]);
    }

    #[test]
    fn lanes_match_separate_solves() {
        let (w, h) = (23, 17);
        let free: Vec<bool> = (0..w * h).map(|i| (i * 37 + i / w) % 7 != 0).collect();
        let lanes: Vec<[f64; 3]> = (0..w * h)
            .map(|i| [(i % 11) as f64 / 10.0, ((i * 5) % 13) as f64 / 12.0, 0.25])
            .collect();
        let system = HarmonicSystem::new(w, h, &free);
        let mut together = lanes.clone();
        system.solve_lanes(&mut together);
        for l in 0..3 {
            let mut alone: Vec<f64> = lanes.iter().map(|v| v[l]).collect();
            system.solve(&mut alone);
            for i in 0..w * h {
                assert_eq!(together[i][l].to_bits(), alone[i].to_bits());
            }
        }
    }

    #[test]
    fn distances_are_city_block() {
        let src = vec![true, false, false, false, false, false];
        let d = distance_to(3, 2, &src);
        assert_eq!(d, vec![0, 1, 2, 1, 2, 3]);
    }

    #[test]
    fn box_blur_preserves_constants() {
        let v = vec![0.25; 20];
        assert!(box_blur(&v, 5, 4, 2).iter().all(|x| (x - 0.25).abs() < 1e-15));
    }
}
