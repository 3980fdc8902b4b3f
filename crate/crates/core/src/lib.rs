//! L1-regularized structure learning of binary pairwise Markov random fields
//! by stochastic proximal gradient, with per-iteration checkable bounds on
//! the Gibbs-sampling gradient error and the adaptive `tau` strategy (TAY)
//! built on them.
//!
//! Module map:
//!
//! - [`model`]: feature layout, parameters, datasets, soft-thresholding.
//! - [`exact`]: brute-force enumeration oracle for small `p`.
//! - [`gibbs`]: multi-chain systematic-scan sampler and gradient oracle.
//! - [`bounds`]: Dobrushin influence bound, scan product, error bounds.
//! - [`optimizer`]: SPG driver with fixed, increasing and TAY schedules.
//! - [`eval`]: synthetic ground truth, ROC AUC, bound tightness.
//! - [`io`]: CSV/JSON formats.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default) and sequentially otherwise; outputs are identical either way.

// `!(x >= 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod eval;
pub mod exact;
pub mod gibbs;
pub mod io;
pub mod model;
pub mod numeric;
pub mod optimizer;
pub mod par;

pub use error::{MrfError, Result};
pub use model::{Assignment, Dataset, FeatureIndexer, ModelParams};
