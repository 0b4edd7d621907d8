//! Closed-form proximal maps and Euclidean projections.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, Axis};

use crate::error::{Error, Result};
use crate::model::{ColumnConstraint, OutlierBox};

const POWER_ITER_TOL: f64 = 1e-6;
const POWER_ITER_MAX: usize = 200;
const BISECTION_MAX: usize = 200;

fn check_lambda(lam: f64) -> Result<()> {
    if lam >= 0.0 && lam.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("lambda", format!("threshold must be finite and >= 0, got {lam}")))
    }
}

#[inline]
pub fn soft_threshold_scalar(x: f64, lam: f64) -> f64 {
    if x > lam {
        x - lam
    } else if x < -lam {
        x + lam
    } else {
        0.0
    }
}

/// Piecewise prox of `lam|z|` restricted to `[-m, m]`.
#[inline]
pub fn box_soft_threshold_scalar(x: f64, lam: f64, m: f64) -> f64 {
    let a = x.abs();
    if a < lam {
        0.0
    } else if a <= lam + m {
        x - x.signum() * lam
    } else {
        x.signum() * m
    }
}

/// Entrywise `sign(x)·max(|x| − lam, 0)`.
pub fn soft_threshold(x: ArrayView1<f64>, lam: f64) -> Result<Array1<f64>> {
    check_lambda(lam)?;
    Ok(x.mapv(|v| soft_threshold_scalar(v, lam)))
}

/// Soft-threshold followed by a clamp to `[-m, m]`.
pub fn box_soft_threshold(x: ArrayView1<f64>, lam: f64, m: f64) -> Result<Array1<f64>> {
    check_lambda(lam)?;
    if !(m > 0.0) {
        return Err(Error::invalid("m", format!("box bound must be > 0, got {m}")));
    }
    if m.is_infinite() {
        return soft_threshold(x, lam);
    }
    Ok(x.mapv(|v| box_soft_threshold_scalar(v, lam, m)))
}

/// Minimizer over the outlier box of `½(z − x)² + lam|z| + nu/2 z²`.
///
/// The problem is a one-dimensional convex program, so the constrained
/// minimizer is the unconstrained one clamped to the box.
#[inline]
pub(crate) fn outlier_prox_scalar(x: f64, lam: f64, nu: f64, bound: OutlierBox) -> f64 {
    match bound {
        OutlierBox::SignedBox { m } if nu == 0.0 && m.is_finite() => box_soft_threshold_scalar(x, lam, m),
        _ => bound.clamp(soft_threshold_scalar(x, lam) / (1.0 + nu)),
    }
}

pub fn project_nonneg(x: ArrayView1<f64>) -> Array1<f64> {
    x.mapv(|v| v.max(0.0))
}

/// `P₊(y) / max(1, ‖P₊(y)‖₂)`.
pub fn project_nonneg_l2_ball(y: ArrayView1<f64>) -> Array1<f64> {
    let mut x = y.to_owned();
    project_nonneg_l2_ball_mut(x.view_mut());
    x
}

fn project_nonneg_l2_ball_mut(mut x: ArrayViewMut1<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
    let norm = x.dot(&x).sqrt();
    if norm > 1.0 {
        x.mapv_inplace(|v| v / norm);
    }
}

/// Projection onto `{x >= 0, sum(x) = 1}` by sorting and thresholding.
pub fn project_simplex(y: ArrayView1<f64>) -> Array1<f64> {
    let mut x = y.to_owned();
    project_simplex_mut(x.view_mut());
    x
}

fn project_simplex_mut(mut x: ArrayViewMut1<f64>) {
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    x.mapv_inplace(|v| (v - theta).max(0.0));
}

/// Projection onto `{x >= 0, g1‖x‖₁ + g2/2 ‖x‖₂² <= 1}`.
///
/// The primal solution is `max(y − μ g1, 0) / (1 + μ g2)` for the multiplier
/// `μ >= 0` at which the constraint is tight; the constraint value is
/// monotone in `μ`, so `μ` is found by bisection.
pub fn project_elastic_net_ball(y: ArrayView1<f64>, g1: f64, g2: f64) -> Result<Array1<f64>> {
    ColumnConstraint::ElasticNetBall { gamma1: g1, gamma2: g2 }.validate()?;
    let mut x = y.to_owned();
    project_elastic_net_mut(x.view_mut(), g1, g2);
    Ok(x)
}

fn elastic_value(y: ArrayView1<f64>, mu: f64, g1: f64, g2: f64) -> f64 {
    let scale = 1.0 / (1.0 + mu * g2);
    y.iter()
        .map(|&v| {
            let z = (v - mu * g1).max(0.0) * scale;
            g1 * z + 0.5 * g2 * z * z
        })
        .sum()
}

fn project_elastic_net_mut(mut x: ArrayViewMut1<f64>, g1: f64, g2: f64) {
    if elastic_value(x.view(), 0.0, g1, g2) <= 1.0 {
        x.mapv_inplace(|v| v.max(0.0));
        return;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while elastic_value(x.view(), hi, g1, g2) > 1.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..BISECTION_MAX {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if elastic_value(x.view(), mid, g1, g2) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // `hi` is always on the feasible side.
    let scale = 1.0 / (1.0 + hi * g2);
    x.mapv_inplace(|v| (v - hi * g1).max(0.0) * scale);
}

/// Entrywise clamp onto the outlier box.
pub fn project_box(x: ArrayView1<f64>, bound: OutlierBox) -> Array1<f64> {
    x.mapv(|v| bound.clamp(v))
}

/// Projects a single column in place onto the given constraint set.
pub fn project_column(col: ArrayViewMut1<f64>, constraint: ColumnConstraint) {
    match constraint {
        ColumnConstraint::UnitNonnegL2Ball => project_nonneg_l2_ball_mut(col),
        ColumnConstraint::NonnegOrthant => {
            let mut col = col;
            col.mapv_inplace(|v| v.max(0.0));
        }
        ColumnConstraint::ProbabilitySimplex => project_simplex_mut(col),
        ColumnConstraint::ElasticNetBall { gamma1, gamma2 } => project_elastic_net_mut(col, gamma1, gamma2),
    }
}

/// Column-wise projection `P_C(W)`.
pub fn project_columns(w: &mut Array2<f64>, constraint: ColumnConstraint) {
    for col in w.axis_iter_mut(Axis(1)) {
        project_column(col, constraint);
    }
}

/// Squared spectral norm `‖W‖₂²` by power iteration on `WᵀW`.
pub fn spectral_norm_sq(w: ArrayView2<f64>) -> f64 {
    let gram = w.t().dot(&w);
    largest_eigenvalue_psd(gram.view())
}

/// Largest eigenvalue of a symmetric PSD matrix, power iteration from the all-ones vector.
pub(crate) fn largest_eigenvalue_psd(g: ArrayView2<f64>) -> f64 {
    let n = g.nrows();
    if n == 0 || g.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let mut x = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    if g.dot(&x).iter().all(|&v| v == 0.0) {
        // all-ones start lies in the null space; restart on the largest diagonal entry
        let (i, _) = g
            .diag()
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        x.fill(0.0);
        x[i] = 1.0;
    }
    let mut estimate = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let y = g.dot(&x);
        let next = x.dot(&y);
        let norm = y.dot(&y).sqrt();
        if norm == 0.0 {
            return estimate;
        }
        x = y / norm;
        let done = (next - estimate).abs() <= POWER_ITER_TOL * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}
