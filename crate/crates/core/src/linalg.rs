//! Dense Cholesky factorization for the small K×K systems in the ADMM steps.

use ndarray::{Array2, ArrayView2, ArrayViewMut1, Axis};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Lower-triangular factor `L` with `L Lᵀ = M`.
#[derive(Debug, Clone)]
pub(crate) struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    pub fn factor(m: ArrayView2<f64>) -> Result<Self> {
        let n = m.nrows();
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = m[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > 0.0) {
                return Err(Error::invalid("cholesky", "matrix is not positive definite"));
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = m[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve_in_place(&self, mut b: ArrayViewMut1<f64>) {
        let n = self.l.nrows();
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[[i, k]] * b[k];
            }
            b[i] = s / self.l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[[k, i]] * b[k];
            }
            b[i] = s / self.l[[i, i]];
        }
    }

    /// Solves `M X = B`, columns in parallel.
    pub fn solve_columns(&self, b: &mut Array2<f64>) {
        b.axis_iter_mut(Axis(1))
            .into_par_iter()
            .for_each(|col| self.solve_in_place(col));
    }

    /// Solves `X M = B` for symmetric `M`, i.e. `M Xᵀ = Bᵀ` row by row.
    pub fn solve_rows(&self, b: &mut Array2<f64>) {
        for row in b.axis_iter_mut(Axis(0)) {
            self.solve_in_place(row);
        }
    }
}

/// `m + shift·I`
pub(crate) fn shifted(m: ArrayView2<f64>, shift: f64) -> Array2<f64> {
    let mut out = m.to_owned();
    for i in 0..out.nrows() {
        out[[i, i]] += shift;
    }
    out
}
