//! Brute-force references shared by the integration tests. Nothing here calls
//! into the solvers under test.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// `argmin_{z ∈ [lo, hi]} ½(z − x)² + λ|z| + (ν/2)z²`, written out by cases.
pub fn scalar_prox(x: f64, lam: f64, nu: f64, lo: f64, hi: f64) -> f64 {
    let shrunk = if x > lam {
        x - lam
    } else if x < -lam {
        x + lam
    } else {
        0.0
    };
    (shrunk / (1.0 + nu)).max(lo).min(hi)
}

/// Exact minimizer of `½hᵀGh − cᵀh` over `h ≥ 0` by enumerating every support.
pub fn nnls_by_supports(g: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
    let k = c.len();
    let value = |h: &DVector<f64>| 0.5 * h.dot(&(g * h)) - c.dot(h);
    let mut best = DVector::zeros(k);
    let mut best_val = 0.0;
    for mask in 1u32..(1 << k) {
        let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let gs = DMatrix::from_fn(idx.len(), idx.len(), |a, b| g[(idx[a], idx[b])]);
        let cs = DVector::from_fn(idx.len(), |a, _| c[idx[a]]);
        let Ok(sol) = gs.svd(true, true).solve(&cs, 1e-13) else {
            continue;
        };
        if sol.iter().any(|&x| x < 0.0) {
            continue;
        }
        let mut h = DVector::zeros(k);
        for (a, &i) in idx.iter().enumerate() {
            h[i] = sol[a];
        }
        let val = value(&h);
        if val < best_val {
            best_val = val;
            best = h;
        }
    }
    best
}

pub struct EncodeProblem<'a> {
    pub v: &'a [f64],
    pub w: &'a DMatrix<f64>,
    pub lambda: f64,
    pub lo: f64,
    pub hi: f64,
    pub nu1: f64,
    pub nu2: f64,
}

impl EncodeProblem<'_> {
    pub fn objective(&self, h: &DVector<f64>, r: &DVector<f64>) -> f64 {
        let v = DVector::from_column_slice(self.v);
        let e = &v - self.w * h - r;
        0.5 * e.norm_squared()
            + self.lambda * r.iter().map(|x| x.abs()).sum::<f64>()
            + 0.5 * self.nu1 * h.norm_squared()
            + 0.5 * self.nu2 * r.norm_squared()
    }

    /// Alternates exact block minimizations in `h` and `r` until the objective
    /// the per-sweep decrease is negligible.
    pub fn alternating_oracle(&self) -> (DVector<f64>, DVector<f64>, f64) {
        let k = self.w.ncols();
        let v = DVector::from_column_slice(self.v);
        let mut g = self.w.transpose() * self.w;
        for i in 0..k {
            g[(i, i)] += self.nu1;
        }
        let mut h = DVector::zeros(k);
        let mut r = DVector::zeros(v.len());
        let mut prev = self.objective(&h, &r);
        for _ in 0..200_000 {
            let c = self.w.transpose() * (&v - &r);
            h = nnls_by_supports(&g, &c);
            let x = &v - self.w * &h;
            r = x.map(|xi| scalar_prox(xi, self.lambda, self.nu2, self.lo, self.hi));
            let cur = self.objective(&h, &r);
            if prev - cur <= 1e-13 * cur.max(1e-12) {
                prev = cur;
                break;
            }
            prev = cur;
        }
        (h, r, prev)
    }
}

/// Projection onto `{x ≥ 0, Σ c(x_i) ≤ 1}` with every coordinate restricted
/// to the grid `{0, step, 2·step, …, zmax}`.
///
/// For a multiplier `μ` each coordinate minimizes `½(z − y_i)² + μ c(z)` by
/// scanning the grid, and `μ` is bisected until the constraint is met. The
/// final bracket gives an infeasible and a feasible grid point; every mix of
/// their coordinates is tried and the closest feasible one wins.
pub fn dual_grid_projection(y: &[f64], c: impl Fn(f64) -> f64, zmax: f64, step: f64) -> Vec<f64> {
    let m = (zmax / step).floor() as usize;
    let grid: Vec<f64> = (0..=m).map(|i| i as f64 * step).collect();
    let cost: Vec<f64> = grid.iter().map(|&z| c(z)).collect();
    let solve = |mu: f64| -> Vec<f64> {
        y.iter()
            .map(|&yi| {
                let mut best = (f64::INFINITY, 0.0);
                for (z, cz) in grid.iter().zip(&cost) {
                    let val = 0.5 * (z - yi) * (z - yi) + mu * cz;
                    if val < best.0 {
                        best = (val, *z);
                    }
                }
                best.1
            })
            .collect()
    };
    let total = |x: &[f64]| x.iter().map(|&z| c(z)).sum::<f64>();
    let x0 = solve(0.0);
    if total(&x0) <= 1.0 {
        return x0;
    }
    // total(solve(mu)) is nonincreasing in mu
    let (mut lo, mut hi) = (0.0, 1.0);
    while total(&solve(hi)) > 1.0 {
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if total(&solve(mid)) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (xl, xh) = (solve(lo), solve(hi));
    let dist = |x: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let mut best = xh.clone();
    for mask in 0..1usize << y.len() {
        let mix: Vec<f64> = (0..y.len()).map(|i| if mask >> i & 1 == 1 { xl[i] } else { xh[i] }).collect();
        if total(&mix) <= 1.0 && dist(&mix) < dist(&best) {
            best = mix;
        }
    }
    best
}

/// Grid projection onto the probability simplex: hands out `1/step` units one
/// at a time to the coordinate whose squared distance drops the most. For a
/// separable convex objective under a sum constraint, greedy allocation is exact.
pub fn simplex_grid_projection(y: &[f64], step: f64) -> Vec<f64> {
    let units = (1.0 / step).round() as usize;
    let mut x = vec![0usize; y.len()];
    let gain = |k: usize, yi: f64| {
        let (a, b) = (k as f64 * step, (k + 1) as f64 * step);
        (b - yi).powi(2) - (a - yi).powi(2)
    };
    for _ in 0..units {
        let i = (0..y.len())
            .min_by(|&a, &b| gain(x[a], y[a]).total_cmp(&gain(x[b], y[b])))
            .unwrap();
        x[i] += 1;
    }
    x.iter().map(|&k| k as f64 * step).collect()
}

/// Per-coordinate grid minimizer of `½(z − x)² + λ|z|` over `[lo, hi]`.
pub fn grid_prox(x: f64, lam: f64, lo: f64, hi: f64, step: f64) -> f64 {
    let m = ((hi - lo) / step).round() as i64;
    let mut best = (f64::INFINITY, lo);
    for i in 0..=m {
        let z = lo + i as f64 * step;
        let val = 0.5 * (z - x) * (z - x) + lam * z.abs();
        if val < best.0 {
            best = (val, z);
        }
    }
    best.1
}
