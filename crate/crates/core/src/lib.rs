//! Simulation and verification toolkit for Bahadur-Kiefer remainders of
//! GARCH sequences.
//!
//! The crate simulates GARCH(p, q) paths, decides stationarity through the
//! top Lyapunov exponent, builds the stationary marginal law as a volatility
//! mixture, evaluates empirical and quantile processes exactly at their jump
//! points and measures how fast the remainder
//! `sup_y |f(Q(y)) q_n(y) - alpha_n(y)|` shrinks with the sample size.

// `!(a <= b)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bahadur;
pub mod empirical;
pub mod error;
pub mod garch;
pub mod harness;
pub mod innovations;
pub mod law;
pub mod marginal;
pub mod rng;

pub use bahadur::{bk_remainder, bk_statistics, rate_fit, BkResult, RateConstants, RateFit};
pub use empirical::{ProcessEvaluation, SortedSample};
pub use error::{Error, Result};
pub use garch::{
    arch_infinity_coeffs, companion_matrix, is_stationary, lyapunov_exponent, simulate, GarchParams,
    LyapunovEstimate, PathSample, StationarityReport, Verdict,
};
pub use harness::{run_experiment, summarize, ExperimentConfig, ExperimentResult, Summary};
pub use innovations::{Family, InnovationModel, InnovationSpec};
pub use law::Law;
pub use marginal::{build_marginal, pit, MarginalModel};
