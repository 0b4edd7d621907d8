//! Shared domain types.
//!
//! Every matrix follows the column-as-sample convention: column `j` of a data
//! matrix `V` (F×N) is sample `j`, the dictionary `W` is F×K and the
//! coefficient matrix `H` is K×N.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

/// Absolute slack used by every feasibility predicate.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// Feasible set for each column of the dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnConstraint {
    /// `{x >= 0, ||x||_2 <= 1}`
    #[default]
    UnitNonnegL2Ball,
    /// `{x >= 0}`
    NonnegOrthant,
    /// `{x >= 0, sum(x) = 1}`
    ProbabilitySimplex,
    /// `{x >= 0, gamma1 ||x||_1 + gamma2/2 ||x||_2^2 <= 1}`
    ElasticNetBall { gamma1: f64, gamma2: f64 },
}

impl ColumnConstraint {
    pub fn validate(&self) -> Result<()> {
        if let ColumnConstraint::ElasticNetBall { gamma1, gamma2 } = *self {
            if !(gamma1 >= 0.0 && gamma2 >= 0.0) || !(gamma1 + gamma2 > 0.0) {
                return Err(Error::invalid(
                    "elastic_net_ball",
                    format!("need gamma1, gamma2 >= 0 and gamma1 + gamma2 > 0, got ({gamma1}, {gamma2})"),
                ));
            }
            if !gamma1.is_finite() || !gamma2.is_finite() {
                return Err(Error::invalid("elastic_net_ball", "gammas must be finite"));
            }
        }
        Ok(())
    }

    pub fn is_feasible_column(&self, x: ArrayView1<f64>) -> bool {
        if x.iter().any(|&v| !v.is_finite() || v < -FEASIBILITY_SLACK) {
            return false;
        }
        match *self {
            ColumnConstraint::NonnegOrthant => true,
            ColumnConstraint::UnitNonnegL2Ball => x.dot(&x).sqrt() <= 1.0 + FEASIBILITY_SLACK,
            ColumnConstraint::ProbabilitySimplex => (x.sum() - 1.0).abs() <= FEASIBILITY_SLACK,
            ColumnConstraint::ElasticNetBall { gamma1, gamma2 } => {
                let l1: f64 = x.iter().map(|v| v.abs()).sum();
                gamma1 * l1 + 0.5 * gamma2 * x.dot(&x) <= 1.0 + FEASIBILITY_SLACK
            }
        }
    }

    pub fn is_feasible(&self, w: ArrayView2<f64>) -> bool {
        w.axis_iter(Axis(1)).all(|c| self.is_feasible_column(c))
    }
}

/// Feasible set for an outlier vector `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutlierBox {
    /// `|r_i| <= m`; `m = +inf` is allowed and behaves like `Unbounded`.
    SignedBox { m: f64 },
    /// `0 <= r_i <= m`
    NonnegBox { m: f64 },
    Unbounded,
}

impl Default for OutlierBox {
    fn default() -> Self {
        OutlierBox::SignedBox { m: 1.0 }
    }
}

impl OutlierBox {
    /// Box half-width, `+inf` when unbounded.
    pub fn bound(&self) -> f64 {
        match *self {
            OutlierBox::SignedBox { m } | OutlierBox::NonnegBox { m } => m,
            OutlierBox::Unbounded => f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        match *self {
            OutlierBox::NonnegBox { .. } => 0.0,
            _ => -self.bound(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.bound();
        if !(m > 0.0) {
            return Err(Error::invalid("m", format!("outlier bound must be > 0, got {m}")));
        }
        Ok(())
    }

    pub fn contains(&self, r: ArrayView1<f64>) -> bool {
        let (lo, hi) = (self.lower(), self.bound());
        r.iter()
            .all(|&x| !x.is_nan() && x >= lo - FEASIBILITY_SLACK && x <= hi + FEASIBILITY_SLACK)
    }

    /// Membership without slack.
    pub fn contains_exact(&self, r: ArrayView1<f64>) -> bool {
        let (lo, hi) = (self.lower(), self.bound());
        r.iter().all(|&x| x >= lo && x <= hi)
    }

    #[inline]
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower(), self.bound())
    }
}

/// Dictionary constraint plus outlier constraint.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub column: ColumnConstraint,
    pub outlier: OutlierBox,
}

impl ConstraintSpec {
    pub fn validate(&self) -> Result<()> {
        self.column.validate()?;
        self.outlier.validate()
    }
}

/// Hyperparameters shared by the online and batch solvers.
///
/// `HyperParams::canonical(f)` gives the standard setting: `lambda = 1/sqrt(F)`,
/// `M = 1`, `K = 49`, `kappa = 0.7`, `rho = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Weight of the l1 penalty on the outlier vector.
    pub lambda: f64,
    /// Latent dimension.
    pub k: usize,
    /// Mini-batch size.
    pub tau: usize,
    /// Encode step-size factor, step is `kappa_bar / L`.
    pub kappa_bar: f64,
    /// Dictionary step-size factor, step is `kappa_tilde / ||A||_F`.
    pub kappa_tilde: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub eps_encode: f64,
    pub max_iter_encode: usize,
    pub eps_dict: f64,
    pub max_iter_dict: usize,
    /// Tikhonov weight on `h`.
    pub nu1: f64,
    /// Tikhonov weight on `r`.
    pub nu2: f64,
    /// l1 weight on `h`.
    pub lambda_h_l1: f64,
    pub constraint: ConstraintSpec,
    pub seed: u64,
}

impl HyperParams {
    pub fn canonical(f: usize) -> Self {
        HyperParams {
            lambda: 1.0 / (f.max(1) as f64).sqrt(),
            k: 49,
            tau: 1,
            kappa_bar: 0.7,
            kappa_tilde: 0.7,
            rho1: 1.0,
            rho2: 1.0,
            rho3: 1.0,
            eps_encode: 1e-3,
            max_iter_encode: 50,
            eps_dict: 1e-4,
            max_iter_dict: 200,
            nu1: 0.0,
            nu2: 0.0,
            lambda_h_l1: 0.0,
            constraint: ConstraintSpec::default(),
            seed: 0,
        }
    }

    /// Outlier box half-width `M`.
    pub fn m(&self) -> f64 {
        self.constraint.outlier.bound()
    }

    pub fn validate(&self) -> Result<()> {
        fn nonneg(name: &'static str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")))
            }
        }
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
            }
        }
        fn unit(name: &'static str, v: f64) -> Result<()> {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must lie in (0, 1], got {v}")))
            }
        }
        nonneg("lambda", self.lambda)?;
        if self.k == 0 {
            return Err(Error::invalid("k", "must be >= 1"));
        }
        if self.tau == 0 {
            return Err(Error::invalid("tau", "must be >= 1"));
        }
        unit("kappa_bar", self.kappa_bar)?;
        unit("kappa_tilde", self.kappa_tilde)?;
        positive("rho1", self.rho1)?;
        positive("rho2", self.rho2)?;
        positive("rho3", self.rho3)?;
        positive("eps_encode", self.eps_encode)?;
        positive("eps_dict", self.eps_dict)?;
        if self.max_iter_encode == 0 {
            return Err(Error::invalid("max_iter_encode", "must be >= 1"));
        }
        if self.max_iter_dict == 0 {
            return Err(Error::invalid("max_iter_dict", "must be >= 1"));
        }
        nonneg("nu1", self.nu1)?;
        nonneg("nu2", self.nu2)?;
        nonneg("lambda_h_l1", self.lambda_h_l1)?;
        self.constraint.validate()
    }
}

/// F×K nonnegative basis matrix together with the constraint its columns obey.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    matrix: Array2<f64>,
    constraint: ColumnConstraint,
}

impl Dictionary {
    /// Wraps `matrix`, rejecting it unless every column is feasible.
    pub fn new(matrix: Array2<f64>, constraint: ColumnConstraint) -> Result<Self> {
        constraint.validate()?;
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::invalid("dictionary", "needs at least one row and column"));
        }
        check_finite("dictionary", matrix.iter())?;
        if !constraint.is_feasible(matrix.view()) {
            return Err(Error::invalid("dictionary", "columns violate the constraint set"));
        }
        Ok(Dictionary { matrix, constraint })
    }

    /// Projects every column of `matrix` onto the constraint set.
    pub fn projected(mut matrix: Array2<f64>, constraint: ColumnConstraint) -> Result<Self> {
        constraint.validate()?;
        check_finite("dictionary", matrix.iter())?;
        crate::prox::project_columns(&mut matrix, constraint);
        Ok(Dictionary { matrix, constraint })
    }

    pub(crate) fn from_parts(matrix: Array2<f64>, constraint: ColumnConstraint) -> Self {
        Dictionary { matrix, constraint }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }

    pub fn constraint(&self) -> ColumnConstraint {
        self.constraint
    }

    /// Ambient dimension F.
    pub fn f(&self) -> usize {
        self.matrix.nrows()
    }

    /// Latent dimension K.
    pub fn k(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_feasible(&self) -> bool {
        self.constraint.is_feasible(self.matrix.view())
    }
}

/// Output of one per-sample encode.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeResult {
    pub h: Array1<f64>,
    pub r: Array1<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Running averages `A = mean(h hᵀ)` and `B = mean((v - r) hᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub samples_seen: usize,
}

impl SufficientStats {
    pub fn zeros(f: usize, k: usize) -> Self {
        SufficientStats {
            a: Array2::zeros((k, k)),
            b: Array2::zeros((f, k)),
            samples_seen: 0,
        }
    }

    /// Folds one encoded sample into the averages.
    pub fn push(&mut self, v: ArrayView1<f64>, h: ArrayView1<f64>, r: ArrayView1<f64>) -> Result<()> {
        let (f, k) = self.b.dim();
        check_len("sufficient stats (v)", f, v.len())?;
        check_len("sufficient stats (r)", f, r.len())?;
        check_len("sufficient stats (h)", k, h.len())?;
        self.samples_seen += 1;
        let w = 1.0 / self.samples_seen as f64;
        for i in 0..k {
            for j in 0..k {
                let cur = self.a[[i, j]];
                self.a[[i, j]] = cur + (h[i] * h[j] - cur) * w;
            }
        }
        for i in 0..f {
            let d = v[i] - r[i];
            for j in 0..k {
                let cur = self.b[[i, j]];
                self.b[[i, j]] = cur + (d * h[j] - cur) * w;
            }
        }
        Ok(())
    }
}

/// One row of a convergence trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub wall_clock_s: f64,
    pub surrogate_loss: f64,
    pub regret_loss: Option<f64>,
    pub dict_drift: f64,
}

/// Per-sample objective
/// `½‖v − Wh − r‖² + λ‖r‖₁ + ν₁/2‖h‖² + ν₂/2‖r‖² + λ_h‖h‖₁`.
pub fn tilde_ell(
    v: ArrayView1<f64>,
    w: ArrayView2<f64>,
    h: ArrayView1<f64>,
    r: ArrayView1<f64>,
    params: &HyperParams,
) -> Result<f64> {
    let (f, k) = w.dim();
    check_len("tilde_ell (v)", f, v.len())?;
    check_len("tilde_ell (r)", f, r.len())?;
    check_len("tilde_ell (h)", k, h.len())?;
    check_finite("tilde_ell (v)", v.iter())?;
    check_finite("tilde_ell (W)", w.iter())?;
    check_finite("tilde_ell (h)", h.iter())?;
    check_finite("tilde_ell (r)", r.iter())?;
    let resid = &v - &w.dot(&h) - r;
    Ok(objective_from_residual(resid.view(), h, r, params))
}

/// Objective given a precomputed residual `v − Wh − r`.
pub(crate) fn objective_from_residual(
    resid: ArrayView1<f64>,
    h: ArrayView1<f64>,
    r: ArrayView1<f64>,
    params: &HyperParams,
) -> f64 {
    let mut obj = 0.5 * resid.dot(&resid) + params.lambda * l1(r);
    if params.nu1 != 0.0 {
        obj += 0.5 * params.nu1 * h.dot(&h);
    }
    if params.nu2 != 0.0 {
        obj += 0.5 * params.nu2 * r.dot(&r);
    }
    if params.lambda_h_l1 != 0.0 {
        obj += params.lambda_h_l1 * l1(h);
    }
    obj
}

/// Part of the per-sample objective that does not depend on `W`:
/// `½‖v − r‖² + λ‖r‖₁` plus the regularizers on `h` and `r`.
pub(crate) fn constant_term(
    v: ArrayView1<f64>,
    h: ArrayView1<f64>,
    r: ArrayView1<f64>,
    params: &HyperParams,
) -> f64 {
    let d = &v - &r;
    objective_from_residual(d.view(), h, r, params)
}

pub(crate) fn l1(x: ArrayView1<f64>) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}
