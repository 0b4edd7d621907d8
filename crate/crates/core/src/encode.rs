//! Per-sample encoding: solve for the coefficient vector `h >= 0` and the
//! outlier vector `r` in the outlier box, for a fixed dictionary.

use ndarray::{Array1, ArrayView1, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg::{shifted, Cholesky};
use crate::model::{objective_from_residual, Dictionary, EncodeResult, HyperParams};
use crate::prox::{largest_eigenvalue_psd, outlier_prox_scalar, soft_threshold_scalar};

/// Which algorithm solves the subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Pgd,
    Admm,
}

/// Starting point for `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HInit {
    #[default]
    Zeros,
    /// Entries i.i.d. uniform on `[0, 1]`, seeded by `EncodeConfig::init_seed`.
    Uniform01,
}

#[derive(Debug, Clone, Copy)]
pub struct EncodeConfig<'a> {
    pub solver: Solver,
    pub params: &'a HyperParams,
    pub h_init: HInit,
    pub init_seed: u64,
}

impl<'a> EncodeConfig<'a> {
    pub fn new(solver: Solver, params: &'a HyperParams) -> Self {
        EncodeConfig {
            solver,
            params,
            h_init: HInit::Zeros,
            init_seed: 0,
        }
    }

    pub fn with_init(self, h_init: HInit, init_seed: u64) -> Self {
        EncodeConfig {
            h_init,
            init_seed,
            ..self
        }
    }
}

/// Encoder bound to one dictionary. Precomputes `WᵀW`, the Lipschitz constant
/// and (for ADMM) the Cholesky factor, so a mini-batch shares them.
pub struct Encoder<'a> {
    w: ArrayView2<'a, f64>,
    cfg: EncodeConfig<'a>,
    /// `‖W‖₂² + ν₁`
    lipschitz: f64,
    chol: Option<Cholesky>,
}

impl<'a> Encoder<'a> {
    pub fn new(w: ArrayView2<'a, f64>, cfg: EncodeConfig<'a>) -> Result<Self> {
        let p = cfg.params;
        if !(p.eps_encode > 0.0) {
            return Err(Error::invalid("eps_encode", "must be > 0"));
        }
        if p.max_iter_encode == 0 {
            return Err(Error::invalid("max_iter_encode", "must be >= 1"));
        }
        check_len("encoder (K)", p.k, w.ncols())?;
        check_finite("dictionary", w.iter())?;
        let gram = w.t().dot(&w);
        let (lipschitz, chol) = match cfg.solver {
            Solver::Pgd => (largest_eigenvalue_psd(gram.view()) + p.nu1, None),
            Solver::Admm => {
                if !(p.rho1 > 0.0 && p.rho2 > 0.0) {
                    return Err(Error::invalid("rho", "ADMM penalties must be > 0"));
                }
                let m = shifted(gram.view(), p.rho1 + p.nu1);
                (0.0, Some(Cholesky::factor(m.view())?))
            }
        };
        Ok(Encoder { w, cfg, lipschitz, chol })
    }

    pub fn for_dictionary(dict: &'a Dictionary, cfg: EncodeConfig<'a>) -> Result<Self> {
        Self::new(dict.view(), cfg)
    }

    fn initial_h(&self) -> Array1<f64> {
        let k = self.w.ncols();
        match self.cfg.h_init {
            HInit::Zeros => Array1::zeros(k),
            HInit::Uniform01 => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.init_seed);
                Array1::from_shape_fn(k, |_| rng.random::<f64>())
            }
        }
    }

    pub fn encode(&self, v: ArrayView1<f64>) -> Result<EncodeResult> {
        let h0 = self.initial_h();
        let r0 = Array1::zeros(self.w.nrows());
        self.run(v, h0, r0, None)
    }

    /// Like [`Encoder::encode`], recording the objective after every iteration
    /// (index 0 holds the objective at the starting point).
    pub fn encode_traced(&self, v: ArrayView1<f64>, history: &mut Vec<f64>) -> Result<EncodeResult> {
        let h0 = self.initial_h();
        let r0 = Array1::zeros(self.w.nrows());
        self.run(v, h0, r0, Some(history))
    }

    /// Starts from an explicit `(h, r)`; `h` is clipped to the orthant and `r` to the box.
    pub fn encode_from(&self, v: ArrayView1<f64>, h0: ArrayView1<f64>, r0: ArrayView1<f64>) -> Result<EncodeResult> {
        check_len("encode (h0)", self.w.ncols(), h0.len())?;
        check_len("encode (r0)", self.w.nrows(), r0.len())?;
        let bound = self.cfg.params.constraint.outlier;
        self.run(v, h0.mapv(|x| x.max(0.0)), r0.mapv(|x| bound.clamp(x)), None)
    }

    fn run(
        &self,
        v: ArrayView1<f64>,
        h0: Array1<f64>,
        r0: Array1<f64>,
        history: Option<&mut Vec<f64>>,
    ) -> Result<EncodeResult> {
        check_len("encode (v)", self.w.nrows(), v.len())?;
        check_finite("sample", v.iter())?;
        match self.cfg.solver {
            Solver::Pgd => Ok(self.run_pgd(v, h0, r0, history)),
            Solver::Admm => Ok(self.run_admm(v, h0, r0, history)),
        }
    }

    fn run_pgd(
        &self,
        v: ArrayView1<f64>,
        mut h: Array1<f64>,
        mut r: Array1<f64>,
        mut history: Option<&mut Vec<f64>>,
    ) -> EncodeResult {
        let p = self.cfg.params;
        let w = self.w;
        let bound = p.constraint.outlier;
        let eta = if self.lipschitz > 0.0 {
            p.kappa_bar / self.lipschitz
        } else {
            0.0
        };
        let mut wh = w.dot(&h);
        let mut resid = &v - &wh - &r;
        let mut prev = objective_from_residual(resid.view(), h.view(), r.view(), p);
        if let Some(hist) = history.as_deref_mut() {
            hist.push(prev);
        }
        let mut iterations = 0;
        let mut converged = false;
        for _ in 0..p.max_iter_encode {
            iterations += 1;
            if eta > 0.0 {
                // resid = v − Wh − r, so ∇q(h) = −Wᵀ resid + ν₁h
                let grad_neg = w.t().dot(&resid);
                let shrink = eta * p.lambda_h_l1;
                Zip::from(&mut h).and(&grad_neg).for_each(|hi, &g| {
                    *hi = (*hi + eta * (g - p.nu1 * *hi) - shrink).max(0.0);
                });
                wh = w.dot(&h);
            }
            Zip::from(&mut r)
                .and(&v)
                .and(&wh)
                .for_each(|ri, &vi, &whi| *ri = outlier_prox_scalar(vi - whi, p.lambda, p.nu2, bound));
            Zip::from(&mut resid)
                .and(&v)
                .and(&wh)
                .and(&r)
                .for_each(|e, &vi, &whi, &ri| *e = vi - whi - ri);
            let obj = objective_from_residual(resid.view(), h.view(), r.view(), p);
            if let Some(hist) = history.as_deref_mut() {
                hist.push(obj);
            }
            let done = relative_change_below(prev, obj, p.eps_encode);
            prev = obj;
            if done {
                converged = true;
                break;
            }
        }
        EncodeResult {
            h,
            r,
            objective: prev,
            iterations,
            converged,
        }
    }

    fn run_admm(
        &self,
        v: ArrayView1<f64>,
        mut h: Array1<f64>,
        mut r: Array1<f64>,
        mut history: Option<&mut Vec<f64>>,
    ) -> EncodeResult {
        let p = self.cfg.params;
        let w = self.w;
        let bound = p.constraint.outlier;
        let chol = self.chol.as_ref().expect("ADMM encoder carries a factorization");
        let (rho1, rho2) = (p.rho1, p.rho2);
        let r_scale = 1.0 / (1.0 + rho2 + p.nu2);

        let mut u = h.clone();
        let mut q = r.mapv(|x| bound.clamp(x));
        let mut alpha = Array1::<f64>::zeros(h.len());
        let mut beta = Array1::<f64>::zeros(r.len());

        let split_objective = |u: &Array1<f64>, q: &Array1<f64>| {
            let resid = &v - &w.dot(u) - q;
            objective_from_residual(resid.view(), u.view(), q.view(), p)
        };
        let mut prev = split_objective(&u, &q);
        if let Some(hist) = history.as_deref_mut() {
            hist.push(prev);
        }
        let mut iterations = 0;
        let mut converged = false;
        for _ in 0..p.max_iter_encode {
            iterations += 1;
            // h ← (WᵀW + (ρ₁+ν₁)I)⁻¹ (Wᵀ(v − r) + ρ₁u − α)
            let mut rhs = w.t().dot(&(&v - &r));
            Zip::from(&mut rhs)
                .and(&u)
                .and(&alpha)
                .for_each(|b, &ui, &ai| *b += rho1 * ui - ai);
            chol.solve_in_place(rhs.view_mut());
            h = rhs;
            let wh = w.dot(&h);
            // r ← S_λ(ρ₂q + v − β − Wh) / (1 + ρ₂ + ν₂)
            Zip::from(&mut r)
                .and(&q)
                .and(&v)
                .and(&beta)
                .and(&wh)
                .for_each(|ri, &qi, &vi, &bi, &whi| {
                    *ri = soft_threshold_scalar(rho2 * qi + vi - bi - whi, p.lambda) * r_scale;
                });
            let shrink = p.lambda_h_l1 / rho1;
            Zip::from(&mut u)
                .and(&h)
                .and(&alpha)
                .for_each(|ui, &hi, &ai| *ui = (hi + ai / rho1 - shrink).max(0.0));
            Zip::from(&mut q)
                .and(&r)
                .and(&beta)
                .for_each(|qi, &ri, &bi| *qi = bound.clamp(ri + bi / rho2));
            Zip::from(&mut alpha)
                .and(&h)
                .and(&u)
                .for_each(|ai, &hi, &ui| *ai += rho1 * (hi - ui));
            Zip::from(&mut beta)
                .and(&r)
                .and(&q)
                .for_each(|bi, &ri, &qi| *bi += rho2 * (ri - qi));

            let obj = split_objective(&u, &q);
            if let Some(hist) = history.as_deref_mut() {
                hist.push(obj);
            }
            let done = relative_change_below(prev, obj, p.eps_encode);
            prev = obj;
            if done {
                converged = true;
                break;
            }
        }
        EncodeResult {
            h: u,
            r: q,
            objective: prev,
            iterations,
            converged,
        }
    }
}

/// `|cur − prev| / prev < eps`, treating a zero previous value as converged.
pub(crate) fn relative_change_below(prev: f64, cur: f64, eps: f64) -> bool {
    if prev == 0.0 {
        return true;
    }
    (cur - prev).abs() / prev.abs() < eps
}

/// Encodes one sample by alternating projected-gradient steps on `h` with an
/// exact box-soft-threshold step on `r`.
pub fn encode_pgd(v: ArrayView1<f64>, dict: &Dictionary, cfg: EncodeConfig<'_>) -> Result<EncodeResult> {
    Encoder::for_dictionary(dict, EncodeConfig { solver: Solver::Pgd, ..cfg })?.encode(v)
}

/// Encodes one sample by ADMM on the split `h = u`, `r = q`.
pub fn encode_admm(v: ArrayView1<f64>, dict: &Dictionary, cfg: EncodeConfig<'_>) -> Result<EncodeResult> {
    Encoder::for_dictionary(dict, EncodeConfig { solver: Solver::Admm, ..cfg })?.encode(v)
}

/// Dispatches on `cfg.solver`.
pub fn encode(v: ArrayView1<f64>, dict: &Dictionary, cfg: EncodeConfig<'_>) -> Result<EncodeResult> {
    Encoder::for_dictionary(dict, cfg)?.encode(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tilde_ell, ColumnConstraint, ConstraintSpec, OutlierBox};
    use ndarray::{array, Array2};

    fn params(f: usize, k: usize) -> HyperParams {
        HyperParams {
            k,
            ..HyperParams::canonical(f)
        }
    }

    #[test]
    fn identity_dictionary_exact_fit() {
        let mut p = params(2, 2);
        p.lambda = 1.0 / 2f64.sqrt();
        let dict = Dictionary::new(Array2::eye(2), ColumnConstraint::UnitNonnegL2Ball).unwrap();
        let v = array![0.5, 0.5];
        let res = encode_pgd(v.view(), &dict, EncodeConfig::new(Solver::Pgd, &p)).unwrap();
        assert!((res.h[0] - 0.5).abs() < 1e-9 && (res.h[1] - 0.5).abs() < 1e-9);
        assert_eq!(res.r, array![0.0, 0.0]);
        assert!(res.objective < 1e-12);

        let res = encode_admm(v.view(), &dict, EncodeConfig::new(Solver::Admm, &p)).unwrap();
        assert!(res.objective <= 1e-6, "{}", res.objective);
    }

    #[test]
    fn zero_dictionary_gives_closed_form_r() {
        let mut p = params(2, 2);
        p.lambda = 1.0;
        let dict = Dictionary::new(Array2::zeros((2, 2)), ColumnConstraint::UnitNonnegL2Ball).unwrap();
        let v = array![2.0, 0.0];
        let res = encode_pgd(v.view(), &dict, EncodeConfig::new(Solver::Pgd, &p)).unwrap();
        assert_eq!(res.r, array![1.0, 0.0]);
        assert_eq!(res.h, array![0.0, 0.0]);
        // ½·1² + 1·1
        assert!((res.objective - 1.5).abs() < 1e-15);
    }

    #[test]
    fn admm_recovers_v_when_unpenalized() {
        let mut p = params(3, 3);
        p.lambda = 0.0;
        p.constraint = ConstraintSpec {
            column: ColumnConstraint::UnitNonnegL2Ball,
            outlier: OutlierBox::Unbounded,
        };
        p.eps_encode = 1e-12;
        p.max_iter_encode = 5000;
        let dict = Dictionary::new(Array2::eye(3), ColumnConstraint::UnitNonnegL2Ball).unwrap();
        let v = array![0.2, 0.9, 0.4];
        let res = encode_admm(v.view(), &dict, EncodeConfig::new(Solver::Admm, &p)).unwrap();
        let gap = &v - &res.h - &res.r;
        assert!(gap.dot(&gap).sqrt() <= 1e-6);
    }

    #[test]
    fn outputs_are_feasible() {
        let p = params(4, 2);
        let w = array![[0.5, 0.1], [0.5, 0.2], [0.5, 0.3], [0.5, 0.9]];
        let dict = Dictionary::new(w, ColumnConstraint::UnitNonnegL2Ball).unwrap();
        let v = array![3.0, -2.0, 0.1, 0.7];
        for solver in [Solver::Pgd, Solver::Admm] {
            let res = encode(v.view(), &dict, EncodeConfig::new(solver, &p)).unwrap();
            assert!(res.h.iter().all(|&x| x >= 0.0));
            assert!(p.constraint.outlier.contains_exact(res.r.view()));
            let direct = tilde_ell(v.view(), dict.view(), res.h.view(), res.r.view(), &p).unwrap();
            assert!((direct - res.objective).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_mismatched_sample() {
        let p = params(2, 2);
        let dict = Dictionary::new(Array2::eye(2), ColumnConstraint::UnitNonnegL2Ball).unwrap();
        let v = array![1.0, 2.0, 3.0];
        assert!(encode_pgd(v.view(), &dict, EncodeConfig::new(Solver::Pgd, &p)).is_err());
        let v = array![1.0, f64::INFINITY];
        assert!(matches!(
            encode_admm(v.view(), &dict, EncodeConfig::new(Solver::Admm, &p)),
            Err(Error::NonFinite(_))
        ));
    }
}
