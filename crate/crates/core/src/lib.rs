//! Linear sketches for residual norm estimation on turnstile streams.
//!
//! Two estimation problems are covered:
//!
//! * **Low-rank residuals.** A matrix `A` is compressed into a small bilinear
//!   sketch `S·A·T` maintained under single-entry updates ([`bilinear`]), and
//!   the rank-k tail `‖A − A_k‖_F` is read off the sketch by a small dense
//!   SVD ([`linalg`]). The sketching maps `S`, `T` come from the sparse
//!   oblivious families in [`transforms`] (CountSketch, dense JL, OSNAP,
//!   dense Gaussian) and their two-stage compositions.
//!
//! * **k-sparse residuals.** A vector stream is fed to a CountSketch table
//!   plus a pluggable `ℓ_p^p` accumulator ([`vector`], [`lp`]); the top-k
//!   candidate coordinates are subtracted from the accumulator to estimate
//!   `‖x − x_k‖_p^p` for `p > 2`, and the k-sparse recovery `x̂_J` is
//!   returned as a side product.
//!
//! [`testkit`] holds brute-force oracles (an independent Jacobi SVD,
//! exact top-k tails) and adversarial instance generators used by the
//! test suites and the CLI `gen`/`exact` commands.

pub mod bilinear;
pub mod error;
pub mod hash;
pub mod linalg;
pub mod lp;
pub mod testkit;
pub mod transforms;
pub mod vector;

pub use bilinear::{batch_estimate, BatchEstimate, BilinearSketchState};
pub use error::{Error, Result};
pub use hash::derive_seed;
pub use linalg::{frobenius_norm, rank_k_residual, singular_values, DenseMatrix, SingularSpectrum};
pub use lp::{ExactLpBackend, LpEstimator};
pub use transforms::{
    apply_left, apply_right, build_composed, build_sketch, compose, ComposedSketch, SeededSketch,
    SketchFamily, SketchOperator, SketchSpec,
};
pub use vector::{bucket_count, ResidualPipeline, TopKCandidates, VectorCountSketch};
