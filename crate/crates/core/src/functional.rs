//! The auxiliary energy driving the reweighting scheme, the smoothed lp
//! residual, the closed-form weight update, and the epsilon schedule.
//!
//! The energy is
//!
//! ```text
//! J(x, w, eps) = p/2 [ sum_i w_i r_i^2 + sum_i ( eps^2 w_i + (2-p)/p w_i^(p/(p-2)) ) ]
//! ```
//!
//! with `r = A(x) - y`. Minimizing over strictly positive `w` at fixed `x`
//! gives `w_i = (r_i^2 + eps^2)^((p-2)/2)`, at which point `J` collapses to
//! the smoothed residual `f_eps(x) = sum_i (r_i^2 + eps^2)^(p/2)`. The `p/2`
//! prefactor is what makes that identity exact; it does not move any argmin.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{ResidualMap, Weights};

/// Result of one epsilon update: the residual extremes and the new value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonUpdate {
    /// `min_i |r_i|`.
    pub n_min: f64,
    /// `max_i |r_i|`.
    pub m_max: f64,
    pub next_eps: f64,
}

fn check_p(p: f64) -> Result<()> {
    if (1.0..=2.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidP(p))
    }
}

pub(crate) fn residual(
    map: &dyn ResidualMap,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    if x.len() != map.dim_in() {
        return Err(Error::DimensionMismatch {
            expected: map.dim_in(),
            got: x.len(),
        });
    }
    if y.len() != map.dim_out() {
        return Err(Error::DimensionMismatch {
            expected: map.dim_out(),
            got: y.len(),
        });
    }
    Ok(map.eval(x) - y)
}

/// `sum_i w_i (A_i(x) - y_i)^2`, the weighted squared residual.
pub fn weighted_sq_residual(
    map: &dyn ResidualMap,
    x: &DVector<f64>,
    y: &DVector<f64>,
    w: &Weights,
) -> Result<f64> {
    let r = residual(map, x, y)?;
    weighted_sq_residual_of(&r, w)
}

pub fn weighted_sq_residual_of(r: &DVector<f64>, w: &Weights) -> Result<f64> {
    if r.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: r.len(),
        });
    }
    Ok(r.iter()
        .zip(w.as_vector().iter())
        .map(|(ri, wi)| wi * ri * ri)
        .sum())
}

/// The energy `J(x, w, eps)` at the given state.
///
/// `p = 2` is accepted as a degenerate case where the `w^(p/(p-2))` term is
/// defined as zero.
pub fn eval_energy(
    map: &dyn ResidualMap,
    x: &DVector<f64>,
    y: &DVector<f64>,
    w: &Weights,
    eps: f64,
    p: f64,
) -> Result<f64> {
    let r = residual(map, x, y)?;
    energy_of_residual(&r, w, eps, p)
}

pub fn energy_of_residual(r: &DVector<f64>, w: &Weights, eps: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    if r.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: r.len(),
        });
    }
    let mut total = 0.0;
    for (ri, wi) in r.iter().zip(w.as_vector().iter()) {
        let penalty = if p == 2.0 {
            0.0
        } else {
            (2.0 - p) / p * wi.powf(p / (p - 2.0))
        };
        total += wi * ri * ri + eps * eps * wi + penalty;
    }
    Ok(p / 2.0 * total)
}

/// The smoothed lp residual `f_eps(x) = sum_i ((A_i(x) - y_i)^2 + eps^2)^(p/2)`.
pub fn eval_smoothed_residual(
    map: &dyn ResidualMap,
    x: &DVector<f64>,
    y: &DVector<f64>,
    eps: f64,
    p: f64,
) -> Result<f64> {
    let r = residual(map, x, y)?;
    smoothed_residual_of(&r, eps, p)
}

pub fn smoothed_residual_of(r: &DVector<f64>, eps: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    if r.is_empty() {
        return Err(Error::EmptyResidual);
    }
    Ok(r.iter().map(|ri| (ri * ri + eps * eps).powf(p / 2.0)).sum())
}

/// The minimizer of `J(x, ., eps)` over strictly positive weights:
/// `w_i = (r_i^2 + eps^2)^((p-2)/2)`. Requires `eps > 0` so the weights
/// stay finite.
pub fn optimal_weights(residual: &DVector<f64>, eps: f64, p: f64) -> Result<Weights> {
    check_p(p)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::NonPositiveEps(eps));
    }
    if residual.is_empty() {
        return Err(Error::EmptyResidual);
    }
    let w = residual.map(|ri| (ri * ri + eps * eps).powf((p - 2.0) / 2.0));
    Weights::new(w)
}

/// The epsilon schedule: `eps_{n+1} = min(max(N, eps_tilde), eps_n, M)` with
/// `N = min_i |r_i|` and `M = max_i |r_i|`. Never increases `eps`; reaches
/// zero exactly when the residual vanishes.
pub fn update_epsilon(residual: &DVector<f64>, eps_n: f64, eps_tilde: f64) -> Result<EpsilonUpdate> {
    if residual.is_empty() {
        return Err(Error::EmptyResidual);
    }
    if !(eps_tilde > 0.0) {
        return Err(Error::InvalidConfig("eps_tilde must be positive".into()));
    }
    let n_min = residual.iter().fold(f64::INFINITY, |a, r| a.min(r.abs()));
    let m_max = residual.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let next_eps = n_min.max(eps_tilde).min(eps_n).min(m_max);
    Ok(EpsilonUpdate {
        n_min,
        m_max,
        next_eps,
    })
}

/// Gradient of the energy in `x`: `p * J^T W r` with `J` the map Jacobian.
///
/// The weight and penalty terms do not depend on `x`, so this is also the
/// x-gradient of the full energy.
pub fn grad_energy_x(
    map: &dyn ResidualMap,
    x: &DVector<f64>,
    y: &DVector<f64>,
    w: &Weights,
    p: f64,
) -> Result<DVector<f64>> {
    check_p(p)?;
    let r = residual(map, x, y)?;
    if r.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: r.len(),
        });
    }
    let jac = map.jacobian(x).ok_or(Error::JacobianUnavailable)?;
    let weighted = DVector::from_iterator(
        r.len(),
        r.iter().zip(w.as_vector().iter()).map(|(ri, wi)| wi * ri),
    );
    Ok(p * jac.transpose() * weighted)
}

/// Gradient of the smoothed residual `f_eps` at `x`, i.e. the energy
/// gradient taken at the optimal weights for `(x, eps)`.
pub fn grad_smoothed_residual(
    map: &dyn ResidualMap,
    x: &DVector<f64>,
    y: &DVector<f64>,
    eps: f64,
    p: f64,
) -> Result<DVector<f64>> {
    let r = residual(map, x, y)?;
    let w = optimal_weights(&r, eps, p)?;
    grad_energy_x(map, x, y, &w, p)
}

/// `(sum_i |v_i|^p)^(1/p)` for `p >= 1`.
pub fn lp_norm(v: &DVector<f64>, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidP(p));
    }
    Ok(v.iter().map(|vi| vi.abs().powf(p)).sum::<f64>().powf(1.0 / p))
}

/// `(sum_i w_i v_i^2)^(1/2)`.
pub fn weighted_l2_norm(v: &DVector<f64>, w: &Weights) -> Result<f64> {
    Ok(weighted_sq_residual_of(v, w)?.sqrt())
}
