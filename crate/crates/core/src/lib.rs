//! # odeclass
//!
//! Numerical companion to the theory of smoothness and metric entropy of ODE
//! solution classes.
//!
//! - [`deriv`]: combinatorial expansions of `y^(k)` in terms of the partials of
//!   `f`, high-order Taylor integration, and certification of the factorial
//!   derivative bounds.
//! - [`covering`]: closed-form covering-number bounds with minimization over
//!   the smoothness index.
//! - [`rates`]: critical radii, rate functions and the entropy-integral radius.
//! - [`estimators`]: spline kernels, a QCQP solver, norm-constrained kernel
//!   regression, nonlinear least squares and the Picard-iteration estimator.
//! - [`gronwall`]: Gronwall-type stability bounds and their numerical check.
//! - [`harness`]: Monte-Carlo experiments, rate regression and CSV/JSON output.
//!
//! All asymptotic constants hidden by the theory are set to one; reports carry
//! an `asymptotic_constants_unity` flag to make this explicit.

pub mod covering;
pub mod deriv;
pub mod error;
pub mod estimators;
pub mod gronwall;
pub mod harness;
pub mod numeric;
pub mod rates;

pub use error::{Error, Result};
