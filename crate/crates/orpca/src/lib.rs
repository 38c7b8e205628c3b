//! Tuning-free online robust PCA.
//!
//! A stream of data vectors `z_t` is split into a low-rank part `L r_t` that
//! lives in a slowly learned subspace and a sparse outlier part `e_t`. Every
//! sub-problem is solved by plain gradient descent on a Hadamard-product
//! parametrization started from a tiny scale, so sparsity and shrinkage come
//! from the optimization dynamics instead of hand-tuned penalty weights.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom of this file fix it to `f64`, which is what the
//! command-line tool and the test suite use.

// Comparisons like `!(x > 0)` are written that way on purpose: they also
// reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod engine;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod solvers;
pub mod synthetic;

pub use baseline::{
    baseline_update_l, soft_threshold, solve_r_ridge, BaselineState, ExplicitRpca,
};
pub use engine::{run_stream, EngineConfig, EngineState, OnlineRpca, StreamReport};
pub use error::{Error, Result};
pub use metrics::{explained_variance, mean_trace, support_f1, EvTrace};
pub use model::{
    derive_basis, fidelity_loss, Budget, ExplicitParams, ImplicitHyperParams, SampleDecomposition,
    StepRule, StreamSample, SubspaceState,
};
pub use scalar::Scalar;
pub use synthetic::{generate, preset, SyntheticConfig, SyntheticDataset};

/// Implicit-regularization engine in double precision.
pub type Engine = OnlineRpca<f64>;
/// Explicit-regularization baseline in double precision.
pub type Baseline = ExplicitRpca<f64>;
/// Engine configuration in double precision.
pub type Config = EngineConfig<f64>;
/// Hyperparameters in double precision.
pub type HyperParams = ImplicitHyperParams<f64>;
/// Synthetic dataset in double precision.
pub type Dataset = SyntheticDataset<f64>;
/// Per-stream report in double precision.
pub type Report = StreamReport<f64>;
