//! Online nonnegative matrix factorization with sparse, bounded outliers.
//!
//! Each sample `v` is modeled as `W h + r` with `h ≥ 0` and a sparse outlier
//! `r` confined to a box. The online engine encodes samples one mini-batch at a
//! time, keeps running sufficient statistics, and refreshes the dictionary `W`
//! by minimizing a quadratic surrogate. Both the per-sample encode and the
//! dictionary update come in a projected-gradient and an ADMM flavor. Batch
//! solvers over the full data matrix are included for comparison.
//!
//! ```
//! use ndarray::array;
//! use ronmf::{run_stream, HyperParams, OnlineConfig, Solver};
//!
//! let params = HyperParams { k: 2, ..HyperParams::canonical(3) };
//! let samples = vec![array![0.2, 0.9, 0.1], array![0.8, 0.1, 0.4]];
//! let mut trace = Vec::new();
//! let w = run_stream(samples.into_iter().map(Ok), 3, &params, &OnlineConfig::new(Solver::Pgd), &mut trace)?;
//! assert!(w.is_feasible());
//! assert_eq!(trace.len(), 2);
//! # Ok::<(), ronmf::Error>(())
//! ```

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod datagen;
pub mod dict;
pub mod encode;
mod error;
pub mod io;
mod linalg;
pub mod metrics;
mod model;
pub mod online;
pub mod prox;
pub mod seed;

pub use batch::{badmm, bpgd, batch_objective, BatchConfig, BatchResult};
pub use dict::{dict_objective, dict_update, dict_update_admm, dict_update_pgd, DictUpdate};
pub use encode::{encode, encode_admm, encode_pgd, EncodeConfig, Encoder, HInit, Solver};
pub use error::{Error, Result};
pub use model::{
    tilde_ell, ColumnConstraint, ConstraintSpec, Dictionary, EncodeResult, HyperParams, OutlierBox, SufficientStats,
    TraceRecord, FEASIBILITY_SLACK,
};
pub use online::{run_stream, OnlineConfig, OnlineState, TraceSink};
