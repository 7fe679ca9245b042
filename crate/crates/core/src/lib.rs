//! Numerical laboratory for the law of the iterated logarithm in
//! finite-dimensional Banach spaces.
//!
//! The crate pairs analytic evaluators with a Monte Carlo path simulator:
//!
//! - [`banach`]: norms on ℝ^d, dual-ball suprema of quadratic forms and the
//!   truncated second-moment function `H(t)`.
//! - [`slowvary`]: slowly varying normalizers `h`, `Ψ(x) = √(x h(x))`, its
//!   inverse, `H_q` membership diagnostics and normalizing-sequence checks.
//! - [`constants`]: series classification and the limit constants `C₀`,
//!   `λ`, `α₀`, `σ²`, `β₀`.
//! - [`fuknagaev`]: Klein–Rio and Fuk–Nagaev type tail bounds with explicit
//!   constants, plus a Monte Carlo falsification harness.
//! - [`simulate`]: distributions, partial-sum paths, truncated paths and
//!   mean-norm curves.
//! - [`cli`]: the `lil-lab` batch runner.
//!
//! Runnable walkthroughs live in `examples/`; run them with
//! `cargo run --release --example <name>`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod banach;
pub mod cli;
pub mod constants;
pub mod error;
pub mod fuknagaev;
pub mod rng;
pub mod simulate;
pub mod slowvary;
pub mod stats;

pub use banach::{
    dual_ball_sup, h_eval, norm, trunc_cov_empirical, EmpiricalMoment, HModel, HSource, NormKind,
    SpaceSpec, TruncatedCov, TruncatedMoment,
};
pub use error::{Error, Result};
pub use simulate::{DistSpec, ScalarLaw};
pub use slowvary::{Normalizer, SlowVaryFn};
