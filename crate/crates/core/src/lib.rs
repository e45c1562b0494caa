//! Minimal lp-norm residual fitting of nonlinear equations by iteratively
//! reweighted least squares, for `1 <= p < 2`.
//!
//! The toolkit alternates weighted Gauss-Newton / Levenberg-Marquardt solves
//! with closed-form weight updates and a shrinking smoothing level. It
//! ships a convexified variant (a proximal anchor restores local strong
//! convexity on hard problems such as phase retrieval), diagnostics for the
//! coercivity and convexity conditions behind the convergence guarantees, a
//! greedy sparse-recovery harness, and a seeded experiment runner.
//!
//! Entry points:
//! - [`irls::run_nr_irls`] / [`irls::run_convexified`]: single solves.
//! - [`irls::multistart_convexified`]: the two-stage multistart strategy.
//! - [`greedy::greedy_sparse_recovery`]: sparse recovery on top of the solver.
//! - [`problems::make_instance`]: seeded test-problem generators.
//! - [`diagnostics`]: empirical condition estimates.

// Negated comparisons like `!(x > 0.0)` are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod functional;
pub mod greedy;
pub mod inner_solver;
pub mod irls;
pub mod model;
pub mod problems;
pub mod util;

pub use error::{Error, Result};
pub use model::{IrlsConfig, IrlsState, ResidualMap, SolveReport, Termination, Weights};
