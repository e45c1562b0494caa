//! Damped Gauss-Newton / Levenberg-Marquardt solver for the per-iteration
//! weighted nonlinear least squares problem
//!
//! ```text
//! min_x  F(x) = ||A(x) - y||^2_{l2(w)} + 2*omega*||x - u||^2
//! ```
//!
//! The proximal term (the Moreau anchor of the convexified outer algorithm)
//! enters the normal equations as `2*omega*I` on the matrix and
//! `2*omega*(x - u)` on the gradient side.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::functional::{residual, weighted_sq_residual_of};
use crate::model::{ResidualMap, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Undamped steps with a halving line search.
    GaussNewton,
    /// Adaptive damping with monotone acceptance.
    LevenbergMarquardt,
}

/// Shape of the damping term added to the normal matrix.
///
/// The textbook Levenberg choice is `lambda * I`; `lambda * diag(J^T W J)`
/// (Marquardt scaling) is available as an alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Damping {
    Identity,
    GramDiagonal,
}

#[derive(Debug, Clone)]
pub struct InnerSolverOptions {
    pub method: Method,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub damping: Damping,
}

impl Default for InnerSolverOptions {
    fn default() -> Self {
        InnerSolverOptions {
            method: Method::LevenbergMarquardt,
            max_iters: 200,
            grad_tol: 1e-10,
            step_tol: 1e-12,
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            damping: Damping::Identity,
        }
    }
}

impl InnerSolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("inner max_iters must be >= 1".into()));
        }
        if !(self.grad_tol > 0.0 && self.step_tol > 0.0 && self.lambda_init > 0.0) {
            return Err(Error::InvalidConfig(
                "inner tolerances and lambda_init must be positive".into(),
            ));
        }
        if !(self.lambda_up > 1.0 && self.lambda_down > 0.0 && self.lambda_down < 1.0) {
            return Err(Error::InvalidConfig(
                "need lambda_up > 1 > lambda_down > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Proximal anchor `2*omega*||x - center||^2` added to the inner objective.
#[derive(Debug, Clone)]
pub struct ProximalTerm {
    pub omega: f64,
    pub center: DVector<f64>,
}

impl ProximalTerm {
    pub fn new(omega: f64, center: DVector<f64>) -> Result<Self> {
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(Error::InvalidConfig("omega must be nonnegative".into()));
        }
        Ok(ProximalTerm { omega, center })
    }

    /// No proximal contribution (plain weighted least squares).
    pub fn none(k: usize) -> Self {
        ProximalTerm {
            omega: 0.0,
            center: DVector::zeros(k),
        }
    }
}

/// Outcome of one inner solve.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub x: DVector<f64>,
    pub converged: bool,
    /// Final objective value `F(x)`.
    pub objective: f64,
    /// Objective values along accepted steps, starting at `F(x0)`.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

fn prox_value(prox: &ProximalTerm, x: &DVector<f64>) -> f64 {
    if prox.omega == 0.0 {
        0.0
    } else {
        2.0 * prox.omega * (x - &prox.center).norm_squared()
    }
}

fn objective(
    map: &dyn ResidualMap,
    x: &DVector<f64>,
    y: &DVector<f64>,
    w: &Weights,
    prox: &ProximalTerm,
) -> Result<f64> {
    let r = residual(map, x, y)?;
    Ok(weighted_sq_residual_of(&r, w)? + prox_value(prox, x))
}

/// Gauss-Newton normal system at `x`: returns the matrix
/// `J^T W J + 2*omega*I` and the right-hand side
/// `-(J^T W r + 2*omega*(x - center))` with `r = A(x) - y`.
pub fn gn_normal_matrix(
    map: &dyn ResidualMap,
    x: &DVector<f64>,
    y: &DVector<f64>,
    w: &Weights,
    prox: &ProximalTerm,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let r = residual(map, x, y)?;
    if r.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: r.len(),
        });
    }
    let jac = map.jacobian(x).ok_or(Error::JacobianUnavailable)?;
    let k = map.dim_in();
    let mut weighted_jac = jac.clone();
    for (i, wi) in w.as_vector().iter().enumerate() {
        weighted_jac.row_mut(i).scale_mut(*wi);
    }
    let mut matrix = jac.transpose() * &weighted_jac;
    let weighted_r = DVector::from_iterator(
        r.len(),
        r.iter().zip(w.as_vector().iter()).map(|(ri, wi)| wi * ri),
    );
    let mut rhs = -(jac.transpose() * weighted_r);
    if prox.omega > 0.0 {
        for i in 0..k {
            matrix[(i, i)] += 2.0 * prox.omega;
        }
        rhs -= 2.0 * prox.omega * (x - &prox.center);
    }
    Ok((matrix, rhs))
}

/// Solve the damped normal system `(G + lambda*D) d = rhs`, retrying with a
/// trace-scaled ridge when the factorization signals near-singularity.
fn solve_damped(g: &DMatrix<f64>, rhs: &DVector<f64>, lambda: f64, damping: Damping) -> Option<DVector<f64>> {
    let k = g.nrows();
    let mut m = g.clone();
    match damping {
        Damping::Identity => {
            for i in 0..k {
                m[(i, i)] += lambda;
            }
        }
        Damping::GramDiagonal => {
            for i in 0..k {
                m[(i, i)] += lambda * g[(i, i)].max(1e-300);
            }
        }
    }
    if let Some(chol) = m.clone().cholesky() {
        return Some(chol.solve(rhs));
    }
    // Near-singular: add a tiny ridge and retry once.
    let ridge = 1e-14 * m.trace().abs().max(1.0);
    for i in 0..k {
        m[(i, i)] += ridge;
    }
    m.cholesky().map(|chol| chol.solve(rhs))
}

/// Minimize `||A(x) - y||^2_{l2(w)} + 2*omega*||x - center||^2` starting from
/// `x0`. Steps are accepted only if they strictly decrease the objective, so
/// the returned trace is monotone.
pub fn lm_solve(
    map: &dyn ResidualMap,
    y: &DVector<f64>,
    w: &Weights,
    x0: &DVector<f64>,
    prox: &ProximalTerm,
    opts: &InnerSolverOptions,
) -> Result<InnerSolution> {
    opts.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation("inner solver start point"));
    }
    if prox.center.len() != map.dim_in() {
        return Err(Error::DimensionMismatch {
            expected: map.dim_in(),
            got: prox.center.len(),
        });
    }

    let mut x = x0.clone();
    let mut fx = objective(map, &x, y, w, prox)?;
    if !fx.is_finite() {
        return Err(Error::NonFiniteEvaluation("inner objective at start"));
    }
    let mut trace = vec![fx];
    let mut lambda = match opts.method {
        Method::GaussNewton => 0.0,
        Method::LevenbergMarquardt => opts.lambda_init,
    };
    let mut polished = false;
    const LAMBDA_MAX: f64 = 1e12;

    for iter in 0..opts.max_iters {
        let (g, rhs) = gn_normal_matrix(map, &x, y, w, prox)?;
        if rhs.norm() <= opts.grad_tol {
            return Ok(InnerSolution {
                objective: fx,
                x,
                converged: true,
                trace,
                iterations: iter,
            });
        }

        let accepted = match opts.method {
            Method::GaussNewton => {
                let d = solve_damped(&g, &rhs, 0.0, opts.damping)
                    .ok_or(Error::SingularNormalEquations { lambda: 0.0 })?;
                if d.norm() <= opts.step_tol {
                    return Ok(InnerSolution {
                        objective: fx,
                        x,
                        converged: true,
                        trace,
                        iterations: iter,
                    });
                }
                // Halving line search keeps descent monotone without damping.
                let mut t = 1.0;
                let mut took = false;
                for _ in 0..40 {
                    let cand = &x + t * &d;
                    let f_cand = objective(map, &cand, y, w, prox)?;
                    if f_cand.is_finite() && f_cand < fx {
                        x = cand;
                        fx = f_cand;
                        took = true;
                        break;
                    }
                    t *= 0.5;
                }
                took
            }
            Method::LevenbergMarquardt => loop {
                let Some(d) = solve_damped(&g, &rhs, lambda, opts.damping) else {
                    lambda = if lambda == 0.0 { opts.lambda_init } else { lambda * opts.lambda_up };
                    if lambda > LAMBDA_MAX {
                        return Err(Error::SingularNormalEquations { lambda });
                    }
                    continue;
                };
                if d.norm() <= opts.step_tol {
                    // The admissible step has shrunk to nothing.
                    return Ok(InnerSolution {
                        objective: fx,
                        x,
                        converged: true,
                        trace,
                        iterations: iter,
                    });
                }
                let cand = &x + &d;
                let f_cand = objective(map, &cand, y, w, prox)?;
                if f_cand.is_finite() && f_cand < fx {
                    x = cand;
                    fx = f_cand;
                    lambda = (lambda * opts.lambda_down).max(1e-300);
                    break true;
                }
                // First rejection: try the undamped step once. Near the
                // minimizer the strict decrease falls below float
                // resolution, but on locally quadratic objectives the pure
                // step still lands on the exact solution.
                if !polished {
                    polished = true;
                    if let Some(d0) = solve_damped(&g, &rhs, 0.0, opts.damping) {
                        let cand0 = &x + &d0;
                        let f0 = objective(map, &cand0, y, w, prox)?;
                        if f0.is_finite() && f0 <= fx {
                            x = cand0;
                            fx = f0;
                            trace.push(fx);
                            return Ok(InnerSolution {
                                objective: fx,
                                x,
                                converged: true,
                                trace,
                                iterations: iter + 1,
                            });
                        }
                    }
                }
                lambda *= opts.lambda_up;
                if lambda > LAMBDA_MAX {
                    return Err(Error::SingularNormalEquations { lambda });
                }
            },
        };

        if accepted {
            trace.push(fx);
        } else {
            // Gauss-Newton exhausted the line search; no progress possible.
            return Ok(InnerSolution {
                objective: fx,
                x,
                converged: false,
                trace,
                iterations: iter + 1,
            });
        }
    }

    Ok(InnerSolution {
        objective: fx,
        x,
        converged: false,
        trace,
        iterations: opts.max_iters,
    })
}
