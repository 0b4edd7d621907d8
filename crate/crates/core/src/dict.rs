//! Dictionary update: minimize `½tr(WᵀWA) − tr(WᵀB)` over the column
//! constraint set, warm-started from the previous dictionary.

use ndarray::{Array2, ArrayView2, Zip};

use crate::encode::Solver;
use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg::{shifted, Cholesky};
use crate::model::{Dictionary, HyperParams, SufficientStats};
use crate::prox::project_columns;

/// Result of a dictionary update, with the iteration count for diagnostics.
#[derive(Debug, Clone)]
pub struct DictUpdate {
    pub dictionary: Dictionary,
    pub objective: f64,
    pub iterations: usize,
}

/// `½tr(WᵀWA) − tr(WᵀB)`
pub fn dict_objective(w: ArrayView2<f64>, a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let wa = w.dot(&a);
    objective_with_product(w, wa.view(), b)
}

fn objective_with_product(w: ArrayView2<f64>, wa: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let mut quad = 0.0;
    let mut lin = 0.0;
    Zip::from(&w).and(&wa).and(&b).for_each(|&wi, &wai, &bi| {
        quad += wi * wai;
        lin += wi * bi;
    });
    0.5 * quad - lin
}

/// Relative-change stopping rule. The dictionary objective can be zero away
/// from the optimum (e.g. at `W = 0`), so a zero previous value only counts as
/// converged when the new value is zero too.
fn dict_converged(prev: f64, cur: f64, eps: f64) -> bool {
    if prev == 0.0 {
        return cur == 0.0;
    }
    (cur - prev).abs() / prev.abs() < eps
}

fn check_stats(w: &Dictionary, stats: &SufficientStats) -> Result<()> {
    let (f, k) = (w.f(), w.k());
    check_len("dict update (A rows)", k, stats.a.nrows())?;
    check_len("dict update (A cols)", k, stats.a.ncols())?;
    check_len("dict update (B rows)", f, stats.b.nrows())?;
    check_len("dict update (B cols)", k, stats.b.ncols())?;
    check_finite("sufficient stats", stats.a.iter().chain(stats.b.iter()))?;
    if stats.samples_seen == 0 {
        return Err(Error::NoSamples);
    }
    Ok(())
}

/// Projected gradient with step `kappa_tilde / ‖A‖_F`.
pub fn dict_update_pgd(w_init: &Dictionary, stats: &SufficientStats, params: &HyperParams) -> Result<DictUpdate> {
    dict_update_pgd_traced(w_init, stats, params, None)
}

/// As [`dict_update_pgd`], recording the objective at every iterate.
pub fn dict_update_pgd_traced(
    w_init: &Dictionary,
    stats: &SufficientStats,
    params: &HyperParams,
    mut history: Option<&mut Vec<f64>>,
) -> Result<DictUpdate> {
    check_stats(w_init, stats)?;
    let (a, b) = (stats.a.view(), stats.b.view());
    let a_norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut w = w_init.matrix().clone();
    let mut wa = w.dot(&a);
    let mut prev = objective_with_product(w.view(), wa.view(), b);
    if let Some(hist) = history.as_deref_mut() {
        hist.push(prev);
    }
    if a_norm == 0.0 {
        return Ok(DictUpdate {
            dictionary: w_init.clone(),
            objective: prev,
            iterations: 0,
        });
    }
    let eta = params.kappa_tilde / a_norm;
    let constraint = w_init.constraint();
    let mut iterations = 0;
    for _ in 0..params.max_iter_dict {
        iterations += 1;
        // W ← P_C(W − η(WA − B))
        Zip::from(&mut w)
            .and(&wa)
            .and(&b)
            .for_each(|wi, &wai, &bi| *wi -= eta * (wai - bi));
        project_columns(&mut w, constraint);
        wa = w.dot(&a);
        let obj = objective_with_product(w.view(), wa.view(), b);
        if let Some(hist) = history.as_deref_mut() {
            hist.push(obj);
        }
        let done = dict_converged(prev, obj, params.eps_dict);
        prev = obj;
        if done {
            break;
        }
    }
    Ok(DictUpdate {
        dictionary: Dictionary::from_parts(w, constraint),
        objective: prev,
        iterations,
    })
}

/// ADMM on the split `W = Q`; returns the projected iterate `Q`.
pub fn dict_update_admm(w_init: &Dictionary, stats: &SufficientStats, params: &HyperParams) -> Result<DictUpdate> {
    check_stats(w_init, stats)?;
    let (a, b) = (stats.a.view(), stats.b.view());
    let rho = params.rho3;
    if !(rho > 0.0) {
        return Err(Error::invalid("rho3", "must be > 0"));
    }
    let constraint = w_init.constraint();
    let mut q = w_init.matrix().clone();
    let mut prev = dict_objective(q.view(), a, b);
    if a.iter().all(|&x| x == 0.0) {
        return Ok(DictUpdate {
            dictionary: w_init.clone(),
            objective: prev,
            iterations: 0,
        });
    }
    let chol = Cholesky::factor(shifted(a, rho).view())?;
    let mut d = Array2::<f64>::zeros(q.raw_dim());
    let mut iterations = 0;
    for _ in 0..params.max_iter_dict {
        iterations += 1;
        // W ← (B − D + ρQ)(A + ρI)⁻¹
        let mut w = Array2::<f64>::zeros(q.raw_dim());
        Zip::from(&mut w)
            .and(&b)
            .and(&d)
            .and(&q)
            .for_each(|wi, &bi, &di, &qi| *wi = bi - di + rho * qi);
        chol.solve_rows(&mut w);
        // Q ← P_C(W + D/ρ)
        Zip::from(&mut q)
            .and(&w)
            .and(&d)
            .for_each(|qi, &wi, &di| *qi = wi + di / rho);
        project_columns(&mut q, constraint);
        Zip::from(&mut d)
            .and(&w)
            .and(&q)
            .for_each(|di, &wi, &qi| *di += rho * (wi - qi));
        let obj = dict_objective(q.view(), a, b);
        let done = dict_converged(prev, obj, params.eps_dict);
        prev = obj;
        if done {
            break;
        }
    }
    Ok(DictUpdate {
        dictionary: Dictionary::from_parts(q, constraint),
        objective: prev,
        iterations,
    })
}

pub fn dict_update(
    solver: Solver,
    w_init: &Dictionary,
    stats: &SufficientStats,
    params: &HyperParams,
) -> Result<DictUpdate> {
    match solver {
        Solver::Pgd => dict_update_pgd(w_init, stats, params),
        Solver::Admm => dict_update_admm(w_init, stats, params),
    }
}
