//! Streaming factorization: encode each incoming sample against the current
//! dictionary, fold it into the running averages, then update the dictionary.

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use rand::Rng;
use rayon::prelude::*;

use crate::dict::dict_update;
use crate::encode::{EncodeConfig, Encoder, HInit, Solver};
use crate::error::{check_finite, check_len, Error, Result};
use crate::model::{constant_term, Dictionary, EncodeResult, HyperParams, SufficientStats, TraceRecord};
use crate::seed::{derive_seed, rng_for, stream};

/// Solver selection and bookkeeping options for the online loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineConfig {
    pub encode_solver: Solver,
    pub dict_solver: Solver,
    pub h_init: HInit,
    /// Keep every `(v, h, r)` so that history-based evaluations are possible.
    pub retain_history: bool,
    /// When false, traces record `0` for the wall-clock column.
    pub record_wall_clock: bool,
}

impl OnlineConfig {
    pub fn new(solver: Solver) -> Self {
        OnlineConfig {
            encode_solver: solver,
            dict_solver: solver,
            h_init: HInit::Zeros,
            retain_history: false,
            record_wall_clock: true,
        }
    }
}

/// Receives one trace row per online step.
pub trait TraceSink {
    fn record(&mut self, rec: &TraceRecord) -> Result<()>;
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, rec: &TraceRecord) -> Result<()> {
        self.push(rec.clone());
        Ok(())
    }
}

/// Sink that drops every record.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _rec: &TraceRecord) -> Result<()> {
        Ok(())
    }
}

/// Per-sample history kept in evaluation mode.
#[derive(Debug, Clone, Default)]
pub struct History {
    pub v: Vec<Array1<f64>>,
    pub h: Vec<Array1<f64>>,
    pub r: Vec<Array1<f64>>,
}

impl History {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Coefficient vectors stacked as a K×t matrix.
    pub fn coefficients(&self) -> Array2<f64> {
        stack_columns(&self.h)
    }

    pub fn outliers(&self) -> Array2<f64> {
        stack_columns(&self.r)
    }
}

fn stack_columns(cols: &[Array1<f64>]) -> Array2<f64> {
    let rows = cols.first().map_or(0, |c| c.len());
    let mut out = Array2::zeros((rows, cols.len()));
    for (j, c) in cols.iter().enumerate() {
        out.column_mut(j).assign(c);
    }
    out
}

/// Running statistics of the clean stream, for the regret loss
/// `(1/t) Σ ½‖v°_i − W h_i‖² = ½c° − tr(WᵀB°) + ½tr(WᵀWA)`.
#[derive(Debug, Clone)]
struct CleanStats {
    b: Array2<f64>,
    c: f64,
}

/// State of the online algorithm.
#[derive(Debug, Clone)]
pub struct OnlineState {
    pub dict: Dictionary,
    pub stats: SufficientStats,
    pub t: usize,
    pub trace: Vec<TraceRecord>,
    params: HyperParams,
    /// Running average of the `W`-independent part of the per-sample objective.
    loss_const: f64,
    clean: Option<CleanStats>,
    history: Option<History>,
    elapsed: Duration,
}

impl OnlineState {
    /// Draws `W₀` uniformly on `[0,1]`, projects it column-wise, and zeroes the statistics.
    pub fn init(f: usize, params: &HyperParams) -> Result<Self> {
        params.validate()?;
        if f == 0 {
            return Err(Error::invalid("f", "must be >= 1"));
        }
        let w0 = random_dictionary(f, params)?;
        Self::with_dictionary(w0, params)
    }

    /// Starts from a given dictionary (e.g. to share `W₀` across solvers).
    pub fn with_dictionary(dict: Dictionary, params: &HyperParams) -> Result<Self> {
        params.validate()?;
        check_len("initial dictionary (K)", params.k, dict.k())?;
        if dict.constraint() != params.constraint.column {
            return Err(Error::invalid("dictionary", "constraint differs from the configured one"));
        }
        Ok(OnlineState {
            stats: SufficientStats::zeros(dict.f(), dict.k()),
            dict,
            t: 0,
            trace: Vec::new(),
            params: params.clone(),
            loss_const: 0.0,
            clean: None,
            history: None,
            elapsed: Duration::ZERO,
        })
    }

    pub fn params(&self) -> &HyperParams {
        &self.params
    }

    pub fn history(&self) -> Option<&History> {
        self.history.as_ref()
    }

    /// One online step on a mini-batch.
    pub fn step(&mut self, batch: &[ArrayView1<f64>], cfg: &OnlineConfig) -> Result<TraceRecord> {
        self.step_inner(batch, None, cfg)
    }

    /// One online step that also tracks the regret against the clean samples.
    ///
    /// Once used, every later step must supply clean samples too.
    pub fn step_with_clean(
        &mut self,
        batch: &[ArrayView1<f64>],
        clean: &[ArrayView1<f64>],
        cfg: &OnlineConfig,
    ) -> Result<TraceRecord> {
        check_len("clean batch", batch.len(), clean.len())?;
        self.step_inner(batch, Some(clean), cfg)
    }

    fn step_inner(
        &mut self,
        batch: &[ArrayView1<f64>],
        clean: Option<&[ArrayView1<f64>]>,
        cfg: &OnlineConfig,
    ) -> Result<TraceRecord> {
        let f = self.dict.f();
        for (i, v) in batch.iter().enumerate() {
            check_len("sample", f, v.len()).map_err(|e| self.sample_error(i, e))?;
            check_finite("sample", v.iter()).map_err(|e| self.sample_error(i, e))?;
        }
        if let Some(clean) = clean {
            for v in clean {
                check_len("clean sample", f, v.len())?;
            }
            if self.clean.is_none() {
                if self.t > 0 {
                    return Err(Error::invalid("clean", "clean samples must be supplied from the first step"));
                }
                self.clean = Some(CleanStats {
                    b: Array2::zeros((f, self.dict.k())),
                    c: 0.0,
                });
            }
        } else if self.clean.is_some() {
            return Err(Error::invalid("clean", "clean samples were supplied earlier and are required"));
        }
        if cfg.retain_history && self.history.is_none() {
            if self.t > 0 {
                return Err(Error::invalid("retain_history", "must be enabled from the first step"));
            }
            self.history = Some(History::default());
        }

        let started = Instant::now();
        let results = self.encode_batch(batch, cfg)?;
        for (i, (v, res)) in batch.iter().zip(&results).enumerate() {
            self.fold_sample(v.view(), res, clean.map(|c| c[i]))?;
        }
        let previous = self.dict.matrix().clone();
        if !batch.is_empty() {
            let update = dict_update(cfg.dict_solver, &self.dict, &self.stats, &self.params)?;
            self.dict = update.dictionary;
        }
        let drift = frobenius_distance(previous.view(), self.dict.view());
        self.elapsed += started.elapsed();

        let rec = TraceRecord {
            t: self.t,
            wall_clock_s: if cfg.record_wall_clock {
                self.elapsed.as_secs_f64()
            } else {
                0.0
            },
            surrogate_loss: self.surrogate_loss()?,
            regret_loss: self.clean.as_ref().map(|c| self.regret_from_stats(c)),
            dict_drift: drift,
        };
        self.trace.push(rec.clone());
        Ok(rec)
    }

    fn sample_error(&self, offset: usize, e: Error) -> Error {
        Error::Sample {
            index: self.t + offset,
            source: Box::new(e),
        }
    }

    fn encode_batch(&self, batch: &[ArrayView1<f64>], cfg: &OnlineConfig) -> Result<Vec<EncodeResult>> {
        let base = derive_seed(self.params.seed, stream::ENCODE_INIT);
        let ecfg = EncodeConfig::new(cfg.encode_solver, &self.params);
        let encoder = Encoder::for_dictionary(&self.dict, ecfg)?;
        let encode_one = |i: usize, v: &ArrayView1<f64>| -> Result<EncodeResult> {
            let index = self.t + i;
            match cfg.h_init {
                HInit::Zeros => encoder.encode(v.view()),
                HInit::Uniform01 => {
                    let seeded = EncodeConfig::new(cfg.encode_solver, &self.params)
                        .with_init(HInit::Uniform01, derive_seed(base, index as u64));
                    Encoder::for_dictionary(&self.dict, seeded)?.encode(v.view())
                }
            }
            .map_err(|e| self.sample_error(i, e))
        };
        if batch.len() > 1 {
            batch.par_iter().enumerate().map(|(i, v)| encode_one(i, v)).collect()
        } else {
            batch.iter().enumerate().map(|(i, v)| encode_one(i, v)).collect()
        }
    }

    fn fold_sample(&mut self, v: ArrayView1<f64>, res: &EncodeResult, clean: Option<ArrayView1<f64>>) -> Result<()> {
        self.stats.push(v, res.h.view(), res.r.view())?;
        self.t += 1;
        let w = 1.0 / self.t as f64;
        let c = constant_term(v, res.h.view(), res.r.view(), &self.params);
        self.loss_const += (c - self.loss_const) * w;
        if let (Some(cs), Some(vc)) = (self.clean.as_mut(), clean) {
            let (f, k) = cs.b.dim();
            for i in 0..f {
                for j in 0..k {
                    let cur = cs.b[[i, j]];
                    cs.b[[i, j]] = cur + (vc[i] * res.h[j] - cur) * w;
                }
            }
            cs.c += (vc.dot(&vc) - cs.c) * w;
        }
        if let Some(hist) = self.history.as_mut() {
            hist.v.push(v.to_owned());
            hist.h.push(res.h.clone());
            hist.r.push(res.r.clone());
        }
        Ok(())
    }

    /// Surrogate loss at the current dictionary,
    /// `½tr(WᵀWA) − tr(WᵀB) + c_t`.
    pub fn surrogate_loss(&self) -> Result<f64> {
        self.surrogate_loss_at(self.dict.view())
    }

    /// Surrogate loss evaluated at an arbitrary dictionary.
    pub fn surrogate_loss_at(&self, w: ArrayView2<f64>) -> Result<f64> {
        if self.t == 0 {
            return Err(Error::NoSamples);
        }
        check_len("surrogate (F)", self.dict.f(), w.nrows())?;
        check_len("surrogate (K)", self.dict.k(), w.ncols())?;
        let val = trace_quadratic(w, self.stats.a.view(), self.stats.b.view()) + self.loss_const;
        // exact value is nonnegative; only cancellation can push it below zero
        Ok(val.max(0.0))
    }

    fn regret_from_stats(&self, clean: &CleanStats) -> f64 {
        let w = self.dict.view();
        let val = trace_quadratic(w, self.stats.a.view(), clean.b.view()) + 0.5 * clean.c;
        val.max(0.0)
    }

    /// Regret from the clean running statistics, if clean samples were supplied.
    pub fn tracked_regret(&self) -> Option<f64> {
        self.clean.as_ref().map(|c| self.regret_from_stats(c))
    }

    /// `(1/t) Σ ½‖v°_i − W_t h_i‖²` from the retained coefficient history.
    /// `clean_history` holds the clean samples as columns, in stream order.
    pub fn regret_loss(&self, clean_history: ArrayView2<f64>) -> Result<f64> {
        let hist = self.history.as_ref().ok_or(Error::MissingHistory)?;
        if self.t == 0 {
            return Err(Error::NoSamples);
        }
        check_len("clean history (samples)", hist.len(), clean_history.ncols())?;
        check_len("clean history (F)", self.dict.f(), clean_history.nrows())?;
        let w = self.dict.view();
        let mut total = 0.0;
        for (h, vc) in hist.h.iter().zip(clean_history.columns()) {
            let e = &vc - &w.dot(h);
            total += 0.5 * e.dot(&e);
        }
        Ok(total / self.t as f64)
    }

    /// Feeds an entire sample stream through the engine, `tau` samples per step.
    /// A final short batch is processed as-is.
    pub fn consume<I, S>(&mut self, source: I, cfg: &OnlineConfig, sink: &mut S) -> Result<()>
    where
        I: IntoIterator<Item = Result<Array1<f64>>>,
        S: TraceSink + ?Sized,
    {
        let tau = self.params.tau;
        let mut pending: Vec<Array1<f64>> = Vec::with_capacity(tau);
        for (index, item) in (self.t..).zip(source) {
            let v = item.map_err(|e| Error::Sample {
                index,
                source: Box::new(e),
            })?;
            pending.push(v);
            if pending.len() == tau {
                self.flush(&mut pending, cfg, sink)?;
            }
        }
        if !pending.is_empty() {
            self.flush(&mut pending, cfg, sink)?;
        }
        Ok(())
    }

    fn flush<S: TraceSink + ?Sized>(
        &mut self,
        pending: &mut Vec<Array1<f64>>,
        cfg: &OnlineConfig,
        sink: &mut S,
    ) -> Result<()> {
        let views: Vec<ArrayView1<f64>> = pending.iter().map(|v| v.view()).collect();
        let rec = self.step(&views, cfg)?;
        sink.record(&rec)?;
        pending.clear();
        Ok(())
    }
}

/// `½tr(WᵀWA) − tr(WᵀB)`
fn trace_quadratic(w: ArrayView2<f64>, a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let wa = w.dot(&a);
    let mut val = 0.0;
    Zip::from(&w).and(&wa).and(&b).for_each(|&wi, &wai, &bi| {
        val += 0.5 * wi * wai - wi * bi;
    });
    val
}

pub(crate) fn frobenius_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let mut s = 0.0;
    Zip::from(&a).and(&b).for_each(|&x, &y| s += (x - y) * (x - y));
    s.sqrt()
}

/// Uniform `[0,1]` entries from the seeded dictionary stream, projected onto the constraint set.
pub fn random_dictionary(f: usize, params: &HyperParams) -> Result<Dictionary> {
    let mut rng = rng_for(params.seed, stream::DICT_INIT);
    let w = Array2::from_shape_simple_fn((f, params.k), || rng.random::<f64>());
    Dictionary::projected(w, params.constraint.column)
}

/// Runs the online algorithm over `source` and returns the final dictionary.
pub fn run_stream<I, S>(
    source: I,
    f: usize,
    params: &HyperParams,
    cfg: &OnlineConfig,
    sink: &mut S,
) -> Result<Dictionary>
where
    I: IntoIterator<Item = Result<Array1<f64>>>,
    S: TraceSink + ?Sized,
{
    let mut state = OnlineState::init(f, params)?;
    state.consume(source, cfg, sink)?;
    Ok(state.dict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn params(f: usize, k: usize) -> HyperParams {
        HyperParams {
            k,
            seed: 11,
            ..HyperParams::canonical(f)
        }
    }

    #[test]
    fn init_is_feasible_and_deterministic() {
        let p = params(6, 3);
        let a = OnlineState::init(6, &p).unwrap();
        let b = OnlineState::init(6, &p).unwrap();
        assert_eq!(a.dict, b.dict);
        assert!(a.dict.is_feasible());
        assert!(a.stats.a.iter().all(|&x| x == 0.0));
        assert!(a.stats.b.iter().all(|&x| x == 0.0));
        assert_eq!(a.t, 0);
        assert!(matches!(a.surrogate_loss(), Err(Error::NoSamples)));
    }

    #[test]
    fn first_step_statistics() {
        let p = params(3, 2);
        let cfg = OnlineConfig {
            retain_history: true,
            ..OnlineConfig::new(Solver::Pgd)
        };
        let mut s = OnlineState::init(3, &p).unwrap();
        let w0 = s.dict.clone();
        let v = array![0.9, 0.2, 0.4];
        s.step(&[v.view()], &cfg).unwrap();
        let hist = s.history().unwrap();
        // the encode used W₀
        let again = Encoder::for_dictionary(&w0, EncodeConfig::new(Solver::Pgd, &p))
            .unwrap()
            .encode(v.view())
            .unwrap();
        assert_eq!(hist.h[0], again.h);
        let h = &hist.h[0];
        let r = &hist.r[0];
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(s.stats.a[[i, j]], h[i] * h[j]);
            }
        }
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(s.stats.b[[i, j]], (v[i] - r[i]) * h[j]);
            }
        }
    }

    #[test]
    fn empty_source_keeps_initial_dictionary() {
        let p = params(4, 2);
        let w0 = OnlineState::init(4, &p).unwrap().dict;
        let mut sink = Vec::new();
        let out = run_stream(std::iter::empty(), 4, &p, &OnlineConfig::new(Solver::Admm), &mut sink).unwrap();
        assert_eq!(out, w0);
        assert!(sink.is_empty());
    }

    #[test]
    fn single_batch_gives_one_row() {
        let p = HyperParams { tau: 3, ..params(2, 1) };
        let samples = vec![Ok(array![0.1, 0.2]), Ok(array![0.3, 0.1]), Ok(array![0.5, 0.5])];
        let mut sink = Vec::new();
        run_stream(samples, 2, &p, &OnlineConfig::new(Solver::Pgd), &mut sink).unwrap();
        assert_eq!(sink.len(), 1);
        assert_eq!(sink[0].t, 3);
    }

    #[test]
    fn source_errors_carry_the_sample_index() {
        let p = params(2, 1);
        let samples = vec![
            Ok(array![0.1, 0.2]),
            Err(Error::Format {
                line: 3,
                reason: "bad".into(),
            }),
        ];
        let err = run_stream(samples, 2, &p, &OnlineConfig::new(Solver::Pgd), &mut NullSink).unwrap_err();
        assert!(matches!(err, Error::Sample { index: 1, .. }), "{err}");
    }

    #[test]
    fn clean_samples_must_be_consistent() {
        let p = params(2, 1);
        let cfg = OnlineConfig::new(Solver::Pgd);
        let mut s = OnlineState::init(2, &p).unwrap();
        let v = array![0.1, 0.2];
        s.step_with_clean(&[v.view()], &[v.view()], &cfg).unwrap();
        assert!(s.step(&[v.view()], &cfg).is_err());
        assert!(s.tracked_regret().is_some());
    }
}
