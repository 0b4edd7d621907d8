//! Reconstruction quality: PSNR and residual-based outlier estimates.

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{check_len, Error, Result};

/// `W H`
pub fn reconstruct(w: ArrayView2<f64>, h: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_len("reconstruct (K)", w.ncols(), h.nrows())?;
    Ok(w.dot(&h))
}

/// `V − W H`, the outlier estimate for methods without an explicit outlier matrix.
pub fn residual_outliers(v: ArrayView2<f64>, w: ArrayView2<f64>, h: ArrayView2<f64>) -> Result<Array2<f64>> {
    let wh = reconstruct(w, h)?;
    check_len("residual (F)", v.nrows(), wh.nrows())?;
    check_len("residual (N)", v.ncols(), wh.ncols())?;
    Ok(&v - &wh)
}

/// `−10 log₁₀(mse)`; a perfect reconstruction gives `+∞`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// PSNR of `Ŵ Ĥ` against the clean data.
pub fn psnr_batch(v_clean: ArrayView2<f64>, w: ArrayView2<f64>, h: ArrayView2<f64>) -> Result<f64> {
    let wh = reconstruct(w, h)?;
    check_len("psnr (F)", v_clean.nrows(), wh.nrows())?;
    check_len("psnr (N)", v_clean.ncols(), wh.ncols())?;
    if v_clean.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut sq = 0.0;
    Zip::from(&v_clean).and(&wh).for_each(|&a, &b| sq += (a - b) * (a - b));
    Ok(psnr_from_mse(sq / v_clean.len() as f64))
}

/// PSNR of the final dictionary applied to the coefficient history of an
/// online run. `h_history` holds one coefficient column per processed sample,
/// aligned with the columns of `v_clean`.
pub fn psnr_online(v_clean: ArrayView2<f64>, w_final: ArrayView2<f64>, h_history: Option<ArrayView2<f64>>) -> Result<f64> {
    let h = h_history.ok_or(Error::MissingHistory)?;
    psnr_batch(v_clean, w_final, h)
}

/// Formats a PSNR value for CSV output, writing `inf` for a perfect reconstruction.
pub fn format_psnr(psnr: f64) -> String {
    if psnr == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{psnr}")
    }
}
