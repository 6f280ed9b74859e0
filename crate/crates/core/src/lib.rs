//! Simulation and joint drift/volatility estimation for ergodic jump-diffusion
//! processes observed at discrete (possibly irregular) times.
//!
//! The estimator minimizes a Gaussian quasi-likelihood contrast in which each
//! squared increment is centered and scaled by approximations of the filtered
//! conditional moments `m` and `m2`, and weighted by a smooth threshold
//! function that suppresses increments large enough to contain a jump.
//!
//! * [`model`] — coefficient functions, jump law, compensated drift, and the
//!   continuous generator.
//! * [`simulate`] — sampling grids and path generation with recorded jump truth.
//! * [`kernels`] — smooth truncation functions, including oscillating families
//!   with vanishing moments.
//! * [`moments`] — interchangeable approximations of `m` and `m2`.
//! * [`contrast`] — contrast evaluation, derivative-free and closed-form
//!   estimators, asymptotic covariance.
//! * [`mc`] — replicated simulate→estimate experiments and empirical
//!   diagnostics of the filter and the conditional moments.

// negated comparisons like `!(x > 0.0)` are deliberate: they treat NaN as
// invalid input instead of silently accepting it
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod contrast;
pub mod kernels;
pub mod mc;
pub mod model;
pub mod moments;
pub mod optim;
pub mod quad;
pub mod simulate;

pub use contrast::{
    estimate_asymptotic_covariance, estimate_generic, estimate_linear_closed_form,
    evaluate_contrast, weight, ClosedFormOptions, ContrastProblem, EstimationResult,
    GenericOptions,
};
pub use kernels::{phi0_eval, TruncationKernel};
pub use model::{JumpFamily, JumpLaw, ModelSpec, ParameterBox};
pub use moments::{FilterConfig, MomentApproximator, Variant};
pub use simulate::{simulate_path, PathSample, SamplingGrid};
