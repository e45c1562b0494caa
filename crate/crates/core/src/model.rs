//! Core contracts: the residual-map abstraction and the value types shared by
//! the solvers and diagnostics.

use std::time::Duration;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::inner_solver::InnerSolverOptions;

/// A nonlinear map `A: R^k -> R^m` together with the data needed to fit
/// `A(x) ~ y` in a residual sense.
///
/// Implementations are pure value objects: evaluation is deterministic and
/// reentrant, so maps can be shared freely across threads.
pub trait ResidualMap: Send + Sync {
    /// Input dimension `k`.
    fn dim_in(&self) -> usize;

    /// Output dimension `m`.
    fn dim_out(&self) -> usize;

    /// Evaluate the map at `x` (length `dim_in`), yielding a vector of
    /// length `dim_out`.
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Whether [`ResidualMap::jacobian`] returns an analytic Jacobian.
    fn has_jacobian(&self) -> bool {
        false
    }

    /// The `m x k` Jacobian at `x`, if the map provides one.
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// Strictly positive, finite weight vector for the weighted least squares
/// subproblems.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(DVector<f64>);

impl Weights {
    pub fn new(w: DVector<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::EmptyResidual);
        }
        if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig(
                "weights must be strictly positive and finite".into(),
            ));
        }
        Ok(Weights(w))
    }

    /// The all-ones weight of length `m` (the IRLS initialization).
    pub fn ones(m: usize) -> Self {
        Weights(DVector::from_element(m, 1.0))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Parameters of the outer reweighting iteration.
#[derive(Debug, Clone)]
pub struct IrlsConfig {
    /// Residual norm exponent, `1 <= p <= 2`. Values below 2 are the
    /// intended use; `p = 2` degenerates to plain least squares.
    pub p: f64,
    /// Fixed floor in the epsilon update rule.
    pub eps_tilde: f64,
    /// Machine guard: the run stops once `eps` falls to this level, which
    /// caps the weights at `eps_hard_floor^(p-2)`.
    pub eps_hard_floor: f64,
    /// Maximum number of outer (reweighting) iterations.
    pub max_outer_iters: usize,
    /// Convexification weight. Zero selects the plain algorithm, positive
    /// values add the proximal term `2*omega*||x - x_prev||^2` to each
    /// inner problem.
    pub omega: f64,
    /// Options of the inner weighted least squares solver.
    pub inner: InnerSolverOptions,
    /// Terminate once `eps <= stop_eps`.
    pub stop_eps: f64,
    /// When the iteration stalls while the residual-driven schedule is
    /// frozen above `eps_tilde`, shrink `eps` by this factor (clamped to
    /// `eps_tilde`) and continue instead of terminating. Set to 1 to keep
    /// the frozen-schedule behavior; stalls then end the run.
    pub stall_eps_decay: f64,
}

impl Default for IrlsConfig {
    fn default() -> Self {
        IrlsConfig {
            p: 1.0,
            eps_tilde: 1e-8,
            eps_hard_floor: 1e-8,
            max_outer_iters: 50,
            omega: 0.0,
            inner: InnerSolverOptions::default(),
            stop_eps: 0.0,
            stall_eps_decay: 0.5,
        }
    }
}

impl IrlsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1.0..=2.0).contains(&self.p) {
            return Err(Error::InvalidP(self.p));
        }
        if !(self.eps_tilde > 0.0 && self.eps_tilde.is_finite()) {
            return Err(Error::InvalidConfig("eps_tilde must be positive".into()));
        }
        if !(self.eps_hard_floor > 0.0 && self.eps_hard_floor.is_finite()) {
            return Err(Error::InvalidConfig(
                "eps_hard_floor must be positive".into(),
            ));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidConfig(
                "max_outer_iters must be at least 1".into(),
            ));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidConfig("omega must be nonnegative".into()));
        }
        if !(self.stop_eps >= 0.0) {
            return Err(Error::InvalidConfig("stop_eps must be nonnegative".into()));
        }
        if !(self.stall_eps_decay > 0.0 && self.stall_eps_decay <= 1.0) {
            return Err(Error::InvalidConfig(
                "stall_eps_decay must lie in (0, 1]".into(),
            ));
        }
        self.inner.validate()
    }
}

/// One snapshot of the outer iteration: the triple `(x^n, w^n, eps_n)`
/// together with the energy value at that state.
#[derive(Debug, Clone)]
pub struct IrlsState {
    pub n: usize,
    pub x: DVector<f64>,
    pub w: Weights,
    pub eps: f64,
    pub j_value: f64,
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// `eps` reached exactly zero (the data is matched exactly).
    EpsZero,
    /// `eps` fell to `stop_eps` or to the hard floor.
    EpsBelowFloor,
    MaxIters,
    InnerSolverFailure,
    /// The energy stopped decreasing while `eps` was stuck.
    Stalled,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::EpsZero => "eps_zero",
            Termination::EpsBelowFloor => "eps_below_floor",
            Termination::MaxIters => "max_iters",
            Termination::InnerSolverFailure => "inner_solver_failure",
            Termination::Stalled => "stalled",
        }
    }
}

/// Full record of one outer run: every state snapshot plus the final
/// iterate and its lp residual.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterates: Vec<IrlsState>,
    pub termination: Termination,
    pub final_x: DVector<f64>,
    /// `||A(final_x) - y||_p`.
    pub final_lp_residual: f64,
    pub wall_time: Duration,
}

impl SolveReport {
    pub fn final_state(&self) -> &IrlsState {
        self.iterates
            .last()
            .expect("solve reports always carry at least one state")
    }

    /// Final smoothing level `eps`.
    pub fn final_eps(&self) -> f64 {
        self.final_state().eps
    }

    pub fn outer_iterations(&self) -> usize {
        self.final_state().n
    }
}

/// Central-difference Jacobian of `map` at `x` with absolute step `h`.
///
/// Entry `(i, j)` is `(A_i(x + h e_j) - A_i(x - h e_j)) / (2 h)`.
pub fn finite_difference_jacobian(
    map: &dyn ResidualMap,
    x: &DVector<f64>,
    h: f64,
) -> Result<DMatrix<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig("step h must be positive".into()));
    }
    if x.len() != map.dim_in() {
        return Err(Error::DimensionMismatch {
            expected: map.dim_in(),
            got: x.len(),
        });
    }
    let (m, k) = (map.dim_out(), map.dim_in());
    let mut jac = DMatrix::zeros(m, k);
    let mut probe = x.clone();
    for j in 0..k {
        probe[j] = x[j] + h;
        let plus = map.eval(&probe);
        probe[j] = x[j] - h;
        let minus = map.eval(&probe);
        probe[j] = x[j];
        if plus.iter().chain(minus.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation("finite-difference jacobian"));
        }
        for i in 0..m {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}
