//! Batch robust NMF over the full data matrix: block projected gradient
//! (BPGD) and a nine-update ADMM cycle (BADMM).

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;

use crate::error::{check_finite, Error, Result};
use crate::linalg::{shifted, Cholesky};
use crate::model::{Dictionary, HyperParams, TraceRecord};
use crate::online::{frobenius_distance, random_dictionary};
use crate::prox::{largest_eigenvalue_psd, outlier_prox_scalar, project_columns, soft_threshold_scalar};
use crate::seed::{rng_for, stream};

/// Outer-loop controls for the batch solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchConfig {
    pub max_outer: usize,
    /// Stop once the relative objective change drops below this (default 1e-3,
    /// the same threshold the online encoder uses).
    pub tol: f64,
    pub record_wall_clock: bool,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            max_outer: 500,
            tol: 1e-3,
            record_wall_clock: true,
        }
    }
}

/// Final factors and the per-iteration trace.
///
/// The trace row `t` holds the objective after `t` outer iterations, divided
/// by `N` so it is on the same per-sample scale as the online surrogate.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub w: Dictionary,
    pub h: Array2<f64>,
    pub r: Array2<f64>,
    /// Unnormalized objective `½‖V − WH − R‖² + λ‖R‖₁,₁` at the returned factors.
    pub objective: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRecord>,
}

/// `½‖V − WH − R‖_F² + λ‖R‖₁,₁`
pub fn batch_objective(
    v: ArrayView2<f64>,
    w: ArrayView2<f64>,
    h: ArrayView2<f64>,
    r: ArrayView2<f64>,
    lambda: f64,
) -> f64 {
    let wh = w.dot(&h);
    objective_with_product(v, wh.view(), r, lambda)
}

fn objective_with_product(v: ArrayView2<f64>, wh: ArrayView2<f64>, r: ArrayView2<f64>, lambda: f64) -> f64 {
    let mut sq = 0.0;
    let mut l1 = 0.0;
    Zip::from(&v).and(&wh).and(&r).for_each(|&vi, &whi, &ri| {
        let e = vi - whi - ri;
        sq += e * e;
        l1 += ri.abs();
    });
    0.5 * sq + lambda * l1
}

struct Start {
    w: Array2<f64>,
    h: Array2<f64>,
}

fn check_input(v: ArrayView2<f64>, params: &HyperParams, cfg: &BatchConfig) -> Result<()> {
    params.validate()?;
    if v.is_empty() {
        return Err(Error::invalid("V", "must have at least one row and column"));
    }
    check_finite("V", v.iter())?;
    if cfg.max_outer == 0 {
        return Err(Error::invalid("max_outer", "must be >= 1"));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    Ok(())
}

/// `W₀` exactly as the online engine draws it, `H₀` uniform on `[0,1]`.
fn initial_factors(f: usize, n: usize, params: &HyperParams) -> Result<Start> {
    let w = random_dictionary(f, params)?.into_matrix();
    let mut rng = rng_for(params.seed, stream::COEF_INIT);
    let h = Array2::from_shape_simple_fn((params.k, n), || rng.random::<f64>());
    Ok(Start { w, h })
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    if prev == 0.0 {
        if cur == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (prev - cur).abs() / prev.abs()
    }
}

struct Tracer {
    started: Instant,
    record_wall_clock: bool,
    n: f64,
    trace: Vec<TraceRecord>,
}

impl Tracer {
    fn new(cfg: &BatchConfig, n: usize) -> Self {
        Tracer {
            started: Instant::now(),
            record_wall_clock: cfg.record_wall_clock,
            n: n as f64,
            trace: Vec::new(),
        }
    }

    fn push(&mut self, t: usize, objective: f64, drift: f64) {
        let wall = if self.record_wall_clock {
            self.started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        self.trace.push(TraceRecord {
            t,
            wall_clock_s: wall,
            surrogate_loss: objective / self.n,
            regret_loss: None,
            dict_drift: drift,
        });
    }
}

/// Block coordinate descent with projected gradient steps on `H` and `W` and
/// an exact proximal step on `R`. Starts from the seeded initialization.
pub fn bpgd(v: ArrayView2<f64>, params: &HyperParams, cfg: &BatchConfig) -> Result<BatchResult> {
    check_input(v, params, cfg)?;
    let start = initial_factors(v.nrows(), v.ncols(), params)?;
    bpgd_from(v, start.w, start.h, params, cfg)
}

/// BPGD from explicit `W₀`, `H₀` (with `R₀ = 0`).
pub fn bpgd_from(
    v: ArrayView2<f64>,
    w0: Array2<f64>,
    h0: Array2<f64>,
    params: &HyperParams,
    cfg: &BatchConfig,
) -> Result<BatchResult> {
    check_input(v, params, cfg)?;
    let (f, n) = v.dim();
    check_factors(f, n, params.k, &w0, &h0)?;
    let column = params.constraint.column;
    let outlier = params.constraint.outlier;
    let lambda = params.lambda;
    let kappa_h = params.kappa_bar;
    let kappa_w = params.kappa_tilde;

    let mut w = w0;
    project_columns(&mut w, column);
    let mut h = h0.mapv(|x| x.max(0.0));
    let mut r = Array2::<f64>::zeros((f, n));
    let mut tracer = Tracer::new(cfg, n);
    let mut prev = batch_objective(v, w.view(), h.view(), r.view(), lambda);
    tracer.push(0, prev, 0.0);

    let mut iterations = 0;
    for it in 1..=cfg.max_outer {
        iterations = it;
        // H⁺ = P₊(H − η₁ Wᵀ(WH + R − V)), η₁ = κ/‖W‖₂²
        let gram = w.t().dot(&w);
        let lip = largest_eigenvalue_psd(gram.view());
        if lip > 0.0 {
            let eta1 = kappa_h / lip;
            let mut resid = w.dot(&h);
            resid += &r;
            resid -= &v;
            let grad = w.t().dot(&resid);
            Zip::from(&mut h)
                .and(&grad)
                .par_for_each(|hi, &g| *hi = (*hi - eta1 * g).max(0.0));
        }
        // R⁺ = box soft-threshold of V − WH⁺
        let wh = w.dot(&h);
        Zip::from(&mut r)
            .and(&v)
            .and(&wh)
            .par_for_each(|ri, &vi, &whi| *ri = outlier_prox_scalar(vi - whi, lambda, 0.0, outlier));
        // W⁺ = P_C(W − η₂ (WH⁺ + R⁺ − V)H⁺ᵀ), η₂ = κ/‖H⁺H⁺ᵀ‖_F
        let hht = h.dot(&h.t());
        let hht_norm = hht.iter().map(|x| x * x).sum::<f64>().sqrt();
        let previous_w = w.clone();
        if hht_norm > 0.0 {
            let eta2 = kappa_w / hht_norm;
            let mut resid = wh;
            resid += &r;
            resid -= &v;
            let g = resid.dot(&h.t());
            w.scaled_add(-eta2, &g);
            project_columns(&mut w, column);
        }
        let obj = batch_objective(v, w.view(), h.view(), r.view(), lambda);
        tracer.push(it, obj, frobenius_distance(previous_w.view(), w.view()));
        let change = relative_change(prev, obj);
        prev = obj;
        if change < cfg.tol {
            break;
        }
    }
    Ok(BatchResult {
        w: Dictionary::from_parts(w, column),
        h,
        r,
        objective: prev,
        iterations,
        trace: tracer.trace,
    })
}

fn check_factors(f: usize, n: usize, k: usize, w: &Array2<f64>, h: &Array2<f64>) -> Result<()> {
    use crate::error::check_len;
    check_len("W₀ rows", f, w.nrows())?;
    check_len("W₀ cols", k, w.ncols())?;
    check_len("H₀ rows", k, h.nrows())?;
    check_len("H₀ cols", n, h.ncols())?;
    check_finite("W₀", w.iter())?;
    check_finite("H₀", h.iter())
}

/// ADMM with splits `H = U`, `R = Q`, `W = Ψ`. The reported factors are the
/// projected splits `(Ψ, U, Q)`, which are exactly feasible.
///
/// The penalty on the dictionary split is `ρ₃·N`, so the `W` step coincides
/// with the online ADMM dictionary step applied to the batch averages
/// `HHᵀ/N` and `(V − R)Hᵀ/N`.
pub fn badmm(v: ArrayView2<f64>, params: &HyperParams, cfg: &BatchConfig) -> Result<BatchResult> {
    check_input(v, params, cfg)?;
    let start = initial_factors(v.nrows(), v.ncols(), params)?;
    badmm_from(v, start.w, start.h, params, cfg)
}

/// BADMM from explicit `W₀`, `H₀` (with `R₀ = 0`).
pub fn badmm_from(
    v: ArrayView2<f64>,
    w0: Array2<f64>,
    h0: Array2<f64>,
    params: &HyperParams,
    cfg: &BatchConfig,
) -> Result<BatchResult> {
    check_input(v, params, cfg)?;
    let (f, n) = v.dim();
    let k = params.k;
    check_factors(f, n, k, &w0, &h0)?;
    let column = params.constraint.column;
    let outlier = params.constraint.outlier;
    let lambda = params.lambda;
    // The W-split acts on sums over N columns, while the online update works
    // with averages; scaling by N makes ρ₃ mean the same thing in both.
    let (rho1, rho2, rho3) = (params.rho1, params.rho2, params.rho3 * n as f64);

    let mut psi = w0;
    project_columns(&mut psi, column);
    let mut w = psi.clone();
    let mut u = h0.mapv(|x| x.max(0.0));
    let mut q = Array2::<f64>::zeros((f, n));
    let mut r = q.clone();
    let mut alpha = Array2::<f64>::zeros((k, n));
    let mut beta = Array2::<f64>::zeros((f, n));
    let mut d = Array2::<f64>::zeros((f, k));

    let mut tracer = Tracer::new(cfg, n);
    let mut prev = batch_objective(v, psi.view(), u.view(), q.view(), lambda);
    tracer.push(0, prev, 0.0);

    let mut iterations = 0;
    for it in 1..=cfg.max_outer {
        iterations = it;
        // H⁺ = (WᵀW + ρ₁I)⁻¹(Wᵀ(V − R) + ρ₁U − A)
        let chol_h = Cholesky::factor(shifted(w.t().dot(&w).view(), rho1).view())?;
        let vr = &v - &r;
        let mut h = w.t().dot(&vr);
        h.scaled_add(rho1, &u);
        h -= &alpha;
        chol_h.solve_columns(&mut h);
        // R⁺ = S_λ(ρ₂Q + V − B − WH⁺)/(1 + ρ₂)
        let wh = w.dot(&h);
        Zip::from(&mut r)
            .and(&q)
            .and(&v)
            .and(&beta)
            .and(&wh)
            .par_for_each(|ri, &qi, &vi, &bi, &whi| {
                *ri = soft_threshold_scalar(rho2 * qi + vi - bi - whi, lambda) / (1.0 + rho2);
            });
        // W⁺ = ((V − R⁺)H⁺ᵀ − D + ρ₃Ψ)(H⁺H⁺ᵀ + ρ₃I)⁻¹
        let chol_w = Cholesky::factor(shifted(h.dot(&h.t()).view(), rho3).view())?;
        let vr = &v - &r;
        w = vr.dot(&h.t());
        w -= &d;
        w.scaled_add(rho3, &psi);
        chol_w.solve_rows(&mut w);
        // projected splits
        Zip::from(&mut u)
            .and(&h)
            .and(&alpha)
            .par_for_each(|ui, &hi, &ai| *ui = (hi + ai / rho1).max(0.0));
        Zip::from(&mut q)
            .and(&r)
            .and(&beta)
            .par_for_each(|qi, &ri, &bi| *qi = outlier.clamp(ri + bi / rho2));
        let previous_psi = psi.clone();
        Zip::from(&mut psi).and(&w).and(&d).for_each(|pi, &wi, &di| *pi = wi + di / rho3);
        project_columns(&mut psi, column);
        // dual ascent
        Zip::from(&mut alpha)
            .and(&h)
            .and(&u)
            .par_for_each(|ai, &hi, &ui| *ai += rho1 * (hi - ui));
        Zip::from(&mut beta)
            .and(&r)
            .and(&q)
            .par_for_each(|bi, &ri, &qi| *bi += rho2 * (ri - qi));
        Zip::from(&mut d).and(&w).and(&psi).for_each(|di, &wi, &pi| *di += rho3 * (wi - pi));

        let obj = batch_objective(v, psi.view(), u.view(), q.view(), lambda);
        tracer.push(it, obj, frobenius_distance(previous_psi.view(), psi.view()));
        let change = relative_change(prev, obj);
        prev = obj;
        if change < cfg.tol {
            break;
        }
    }
    Ok(BatchResult {
        w: Dictionary::from_parts(psi, column),
        h: u,
        r: q,
        objective: prev,
        iterations,
        trace: tracer.trace,
    })
}
