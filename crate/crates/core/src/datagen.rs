//! Synthetic data, outlier contamination and stream preparation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::seed::{rng_for, stream};

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub f: usize,
    /// Rank of the ground-truth factorization.
    pub k_true: usize,
    pub n: usize,
    /// Fraction of contaminated columns.
    pub nu: f64,
    /// Fraction of entries corrupted within a contaminated column.
    pub nu_tilde: f64,
    /// Add standard-normal observation noise.
    pub noise: bool,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.f == 0 || self.n == 0 || self.k_true == 0 {
            return Err(Error::invalid("synth", "F, K° and N must all be >= 1"));
        }
        check_fraction("nu", self.nu)?;
        check_fraction("nu_tilde", self.nu_tilde)
    }
}

fn check_fraction(name: &'static str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must lie in [0, 1], got {x}")))
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct SynthData {
    /// Observed, contaminated and noisy data.
    pub v: Array2<f64>,
    pub v_clean: Array2<f64>,
    pub r_true: Array2<f64>,
}

fn count(frac: f64, total: usize) -> usize {
    ((frac * total as f64).floor() as usize).min(total)
}

/// `V° = clip(W°H°)` with half-normal factors of scale `1/√K°`, then
/// `V = clip(V° + R° + noise)`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let (f, k, n) = (spec.f, spec.k_true, spec.n);
    let mut rng = rng_for(spec.seed, stream::SYNTH_FACTORS);
    let w = half_normal_matrix(f, k, k, &mut rng);
    let h = half_normal_matrix(k, n, k, &mut rng);
    let v_clean = w.dot(&h).mapv(clip01);

    let r_true = outlier_matrix(f, n, spec.nu, spec.nu_tilde, 1.0, &mut rng_for(spec.seed, stream::SYNTH_OUTLIERS));
    let mut v = &v_clean + &r_true;
    if spec.noise {
        let mut noise_rng = rng_for(spec.seed, stream::SYNTH_NOISE);
        v.mapv_inplace(|x| {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            x + z
        });
    }
    v.mapv_inplace(clip01);
    Ok(SynthData { v, v_clean, r_true })
}

/// Half-normal draws `|N(0,1)|/√K°` as used for the ground-truth factors.
pub fn half_normal_matrix(rows: usize, cols: usize, k_true: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let scale = 1.0 / (k_true.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(rng);
        z.abs() * scale
    })
}

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// `⌊νN⌋` columns chosen uniformly, each with `⌊ν̃F⌋` entries drawn from `U[−m, m]`.
fn outlier_matrix(f: usize, n: usize, nu: f64, nu_tilde: f64, m: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut r = Array2::zeros((f, n));
    let cols = count(nu, n);
    let support = count(nu_tilde, f);
    if cols == 0 || support == 0 {
        return r;
    }
    let values = Uniform::new_inclusive(-m, m).expect("finite bound");
    let mut chosen = index::sample(rng, n, cols).into_vec();
    chosen.sort_unstable();
    for j in chosen {
        let mut rows = index::sample(rng, f, support).into_vec();
        rows.sort_unstable();
        for i in rows {
            let mut x = values.sample(rng);
            // keep the support exact even on a zero draw
            while x == 0.0 {
                x = values.sample(rng);
            }
            r[[i, j]] = x;
        }
    }
    r
}

/// Contaminates clean data in the same way as [`generate_synthetic`], without
/// observation noise. Values are drawn on `[−m, m]`; the result is clipped to `[0,1]`.
pub fn contaminate(v_clean: ArrayView2<f64>, nu: f64, nu_tilde: f64, m: f64, seed: u64) -> Result<(Array2<f64>, Array2<f64>)> {
    check_fraction("nu", nu)?;
    check_fraction("nu_tilde", nu_tilde)?;
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::invalid("m", format!("must be finite and > 0, got {m}")));
    }
    check_finite("V_clean", v_clean.iter())?;
    let (f, n) = v_clean.dim();
    let r = outlier_matrix(f, n, nu, nu_tilde, m, &mut rng_for(seed, stream::SYNTH_OUTLIERS));
    let v = (&v_clean + &r).mapv(clip01);
    Ok((v, r))
}

/// Column order of the replicated, optionally shuffled stream.
pub fn stream_order(n: usize, replicate: usize, shuffle: bool, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..replicate).flat_map(|_| 0..n).collect();
    if shuffle {
        let mut rng = rng_for(seed, stream::SHUFFLE);
        order.shuffle(&mut rng);
    }
    order
}

/// Scales a column so its maximum entry is 1; all-zero columns pass through.
/// Returns the factor applied.
pub fn normalize_column(col: &mut Array1<f64>) -> f64 {
    let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max > 0.0 && max.is_finite() {
        let s = 1.0 / max;
        col.mapv_inplace(|x| x * s);
        s
    } else {
        1.0
    }
}

/// Columns of `V` replicated `p` times, optionally shuffled, each scaled to unit maximum.
pub fn prepare_stream(v: ArrayView2<f64>, replicate: usize, shuffle: bool, seed: u64) -> Result<Vec<Array1<f64>>> {
    if v.is_empty() {
        return Err(Error::invalid("V", "must have at least one row and column"));
    }
    if replicate == 0 {
        return Err(Error::invalid("replicate", "must be >= 1"));
    }
    Ok(stream_order(v.ncols(), replicate, shuffle, seed)
        .into_iter()
        .map(|j| {
            let mut col = v.index_axis(Axis(1), j).to_owned();
            normalize_column(&mut col);
            col
        })
        .collect())
}

/// Mini-batch size heuristic `max(1, round(5e-5·N))`.
pub fn psnr_rule_of_thumb_tau(n: usize) -> usize {
    ((5e-5 * n as f64).round() as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spec() -> SynthSpec {
        SynthSpec {
            f: 20,
            k_true: 4,
            n: 30,
            nu: 0.5,
            nu_tilde: 0.2,
            noise: true,
            seed: 9,
        }
    }

    #[test]
    fn ranges_and_counts() {
        let d = generate_synthetic(&spec()).unwrap();
        assert!(d.v.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(d.v_clean.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let cols: Vec<usize> = d
            .r_true
            .columns()
            .into_iter()
            .map(|c| c.iter().filter(|&&x| x != 0.0).count())
            .collect();
        assert_eq!(cols.iter().filter(|&&c| c > 0).count(), 15);
        assert!(cols.iter().all(|&c| c == 0 || c == 4));
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic(&spec()).unwrap();
        let b = generate_synthetic(&spec()).unwrap();
        assert_eq!(a.v, b.v);
        assert_eq!(a.r_true, b.r_true);
    }

    #[test]
    fn empty_support_means_no_outliers() {
        let s = SynthSpec {
            nu_tilde: 0.01,
            ..spec()
        };
        let d = generate_synthetic(&s).unwrap();
        assert!(d.r_true.iter().all(|&x| x == 0.0));
        let s = SynthSpec { noise: false, ..s };
        let d = generate_synthetic(&s).unwrap();
        assert_eq!(d.v, d.v_clean);
    }

    #[test]
    fn contaminate_without_columns_is_identity() {
        let v = array![[0.1, 0.5], [0.9, 0.3]];
        let (out, r) = contaminate(v.view(), 0.0, 0.5, 1.0, 1).unwrap();
        assert_eq!(out, v);
        assert!(r.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn stream_identity_and_scaling() {
        let v = array![[0.5, 0.0, 0.2], [0.25, 0.0, 0.4]];
        let s = prepare_stream(v.view(), 1, false, 0).unwrap();
        assert_eq!(s[0], array![1.0, 0.5]);
        assert_eq!(s[1], array![0.0, 0.0]);
        assert_eq!(s[2], array![0.5, 1.0]);
    }

    #[test]
    fn tau_rule() {
        assert_eq!(psnr_rule_of_thumb_tau(100_000), 5);
        assert_eq!(psnr_rule_of_thumb_tau(100), 1);
        assert_eq!(psnr_rule_of_thumb_tau(20_000), 1);
    }
}
