//! Empirical checks of the structural conditions behind the convergence
//! theory: two-sided coercivity of the map, strong convexity probes, the
//! per-step descent ratios, the convex-combination Lipschitz bound, and the
//! error-decay constants.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::functional::{eval_energy, lp_norm, optimal_weights, residual, smoothed_residual_of, weighted_sq_residual_of};
use crate::model::{ResidualMap, SolveReport, Weights};

/// Empirical two-sided coercivity bounds
/// `alpha ||x*-z|| <= ||A(x*)-A(z)||_p <= beta ||x*-z||` over a sample set.
#[derive(Debug, Clone, Copy)]
pub struct BccEstimate {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub num_samples: usize,
    pub p: f64,
}

/// Error-recursion constants `mu` (contraction factor) and `nu` (offset).
#[derive(Debug, Clone, Copy)]
pub struct DecayConstants {
    pub mu: f64,
    pub nu: f64,
    pub c_hat: f64,
    pub beta: f64,
    pub m: usize,
    pub p: f64,
    /// Whether `mu < 1`, i.e. the error recursion contracts.
    pub contraction: bool,
}

/// Outcome of fitting a linear decay rate to an error trace.
#[derive(Debug, Clone, Copy)]
pub struct ErrorDecayFit {
    /// Per-step contraction factor, absent when the trace never decreases.
    pub mu_empirical: Option<f64>,
    /// Terminal plateau of the error sequence.
    pub plateau: f64,
    pub no_decay: bool,
}

/// Ratio sweep of `||A(x*)-A(z)||_p / ||x*-z||_2` over the samples.
pub fn estimate_bcc(
    map: &dyn ResidualMap,
    x_star: &DVector<f64>,
    samples: &[DVector<f64>],
    p: f64,
) -> Result<BccEstimate> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("need at least one sample".into()));
    }
    let a_star = map.eval(x_star);
    let mut alpha_hat = f64::INFINITY;
    let mut beta_hat: f64 = 0.0;
    for z in samples {
        let dist = (x_star - z).norm();
        if dist < 1e-14 {
            return Err(Error::DegenerateSample);
        }
        let ratio = lp_norm(&(&a_star - map.eval(z)), p)? / dist;
        alpha_hat = alpha_hat.min(ratio);
        beta_hat = beta_hat.max(ratio);
    }
    Ok(BccEstimate {
        alpha_hat,
        beta_hat,
        num_samples: samples.len(),
        p,
    })
}

/// Radius of the ball containing all iterates:
/// `R* = J0^(1/p)/alpha + ||A(x*)-y||_p/alpha + ||x*||_2`.
pub fn compute_r_star_bound(
    j0: f64,
    alpha: f64,
    lp_residual_at_xstar: f64,
    xstar_norm: f64,
    p: f64,
) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::NonPositiveAlpha(alpha));
    }
    Ok(j0.powf(1.0 / p) / alpha + lp_residual_at_xstar / alpha + xstar_norm)
}

/// Data-only upper bound `R^ = (J0^(1/p) + 3 ||A(0)-y||_p) / alpha`.
pub fn compute_r_hat(j0: f64, alpha: f64, lp_residual_at_zero: f64, p: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::NonPositiveAlpha(alpha));
    }
    Ok((j0.powf(1.0 / p) + 3.0 * lp_residual_at_zero) / alpha)
}

fn fd_hessian<F: Fn(&DVector<f64>) -> f64>(
    objective: &F,
    x: &DVector<f64>,
    h: f64,
) -> Result<DMatrix<f64>> {
    let k = x.len();
    let mut hess = DMatrix::zeros(k, k);
    let f0 = objective(x);
    if !f0.is_finite() {
        return Err(Error::NonFiniteEvaluation("strong-convexity probe"));
    }
    let mut probe = x.clone();
    for i in 0..k {
        // Diagonal second difference.
        probe[i] = x[i] + h;
        let fp = objective(&probe);
        probe[i] = x[i] - h;
        let fm = objective(&probe);
        probe[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..k {
            probe[i] = x[i] + h;
            probe[j] = x[j] + h;
            let fpp = objective(&probe);
            probe[j] = x[j] - h;
            let fpm = objective(&probe);
            probe[i] = x[i] - h;
            probe[j] = x[j] + h;
            let fmp = objective(&probe);
            probe[j] = x[j] - h;
            let fmm = objective(&probe);
            probe[i] = x[i];
            probe[j] = x[j];
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    if hess.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation("strong-convexity probe"));
    }
    Ok(hess)
}

/// Smallest eigenvalue of the finite-difference Hessian of `objective`,
/// minimized over the center and `num_probes` random points in the ball of
/// the given radius. Negative values flag local nonconvexity.
pub fn probe_strong_convexity<F: Fn(&DVector<f64>) -> f64>(
    objective: F,
    x_center: &DVector<f64>,
    radius: f64,
    num_probes: usize,
    rng_seed: u64,
) -> Result<f64> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidConfig("probe radius must be positive".into()));
    }
    let h = 1e-5 * radius;
    let k = x_center.len();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut c_estimate = f64::INFINITY;
    for probe_idx in 0..=num_probes {
        let point = if probe_idx == 0 {
            x_center.clone()
        } else {
            let mut dir = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = dir.norm();
            if norm > 0.0 {
                dir /= norm;
            }
            let u: f64 = rng.random();
            x_center + dir * (radius * u.powf(1.0 / k as f64))
        };
        let hess = fd_hessian(&objective, &point, h)?;
        let eigen = hess.symmetric_eigenvalues();
        c_estimate = c_estimate.min(eigen.min());
    }
    Ok(c_estimate)
}

/// Per-step descent ratios
/// `(J(x^n,w^n,e_n) - J(x^{n+1},w^n,e_n)) / ||x^n - x^{n+1}||^2`
/// along a trace; steps that barely move are skipped. The running minimum
/// is the empirical strong-convexity constant of the inner problems.
pub fn check_uscc1_on_trace(
    report: &SolveReport,
    map: &dyn ResidualMap,
    y: &DVector<f64>,
    p: f64,
) -> Result<Vec<f64>> {
    if report.iterates.len() < 2 {
        return Err(Error::TraceTooShort {
            need: 2,
            got: report.iterates.len(),
        });
    }
    let mut ratios = Vec::new();
    for pair in report.iterates.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let step = (&prev.x - &next.x).norm();
        if step < 1e-14 {
            continue;
        }
        let j_prev = eval_energy(map, &prev.x, y, &prev.w, prev.eps, p)?;
        let j_next = eval_energy(map, &next.x, y, &prev.w, prev.eps, p)?;
        ratios.push((j_prev - j_next) / (step * step));
    }
    Ok(ratios)
}

/// Smallest admissible constant in the convex-combination bound
/// `|t (F(x_t)-F(x_a)) + (1-t)(F(x_t)-F(x_b))| <= L t(1-t) ||x_a-x_b||^2`
/// with `F` the weighted squared residual and `x_t = t x_a + (1-t) x_b`,
/// maximized over the supplied interior grid.
pub fn check_lipcond(
    map: &dyn ResidualMap,
    y: &DVector<f64>,
    w: &Weights,
    x_a: &DVector<f64>,
    x_b: &DVector<f64>,
    t_grid: &[f64],
) -> Result<f64> {
    let gap2 = (x_a - x_b).norm_squared();
    if gap2.sqrt() < 1e-14 {
        return Err(Error::DegeneratePair);
    }
    if t_grid.is_empty() {
        return Err(Error::InvalidConfig("t grid must be nonempty".into()));
    }
    let f = |x: &DVector<f64>| -> Result<f64> {
        weighted_sq_residual_of(&residual(map, x, y)?, w)
    };
    let f_a = f(x_a)?;
    let f_b = f(x_b)?;
    let mut l_estimate: f64 = 0.0;
    for &t in t_grid {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "t values must lie strictly inside (0, 1), got {t}"
            )));
        }
        let x_t = x_a * t + x_b * (1.0 - t);
        let f_t = f(&x_t)?;
        let lhs = (t * (f_t - f_a) + (1.0 - t) * (f_t - f_b)).abs();
        l_estimate = l_estimate.max(lhs / (t * (1.0 - t) * gap2));
    }
    Ok(l_estimate)
}

/// The error-recursion constants
/// `mu = 2^(1+2/p) (m^2+1) beta^2 / c_hat` and
/// `nu = 2^(1+2/p) (m^2+1-2^(-2/p)) / c_hat`.
pub fn compute_mu_nu(p: f64, m: usize, beta: f64, c_hat: f64) -> Result<DecayConstants> {
    if !(c_hat > 0.0) {
        return Err(Error::NonPositiveCHat(c_hat));
    }
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidP(p));
    }
    let lead = 2.0f64.powf(1.0 + 2.0 / p);
    let m2 = (m * m) as f64;
    let mu = lead * (m2 + 1.0) * beta * beta / c_hat;
    let nu = lead * (m2 + 1.0 - 2.0f64.powf(-2.0 / p)) / c_hat;
    Ok(DecayConstants {
        mu,
        nu,
        c_hat,
        beta,
        m,
        p,
        contraction: mu < 1.0,
    })
}

/// Fit a geometric decay rate to a raw error sequence `E^n`. The plateau is
/// estimated by the Shanks transform of the most reliable triple, then the
/// rate comes from a least squares fit of `log(E^n - plateau)` over the
/// longest strictly decreasing suffix.
pub fn fit_error_decay_values(errors: &[f64]) -> Result<ErrorDecayFit> {
    if errors.len() < 4 {
        return Err(Error::TraceTooShort {
            need: 4,
            got: errors.len(),
        });
    }
    // Longest strictly decreasing suffix.
    let mut start = errors.len() - 1;
    while start > 0 && errors[start - 1] > errors[start] {
        start -= 1;
    }
    let suffix = &errors[start..];
    let last = *errors.last().unwrap();
    if suffix.len() < 3 {
        return Ok(ErrorDecayFit {
            mu_empirical: None,
            plateau: last,
            no_decay: true,
        });
    }

    // Shanks transform: exact for E^n = a q^n + c; pick the triple with the
    // largest denominator to stay clear of cancellation.
    let mut plateau = 0.0;
    let mut best_den = 0.0;
    for win in suffix.windows(3) {
        let den = win[2] + win[0] - 2.0 * win[1];
        if den.abs() > best_den {
            best_den = den.abs();
            plateau = (win[2] * win[0] - win[1] * win[1]) / den;
        }
    }
    if best_den == 0.0 {
        return Ok(ErrorDecayFit {
            mu_empirical: None,
            plateau: last,
            no_decay: true,
        });
    }
    plateau = plateau.clamp(0.0, last);

    // Least squares slope of log(E^n - plateau) against n.
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (i, e) in suffix.iter().enumerate() {
        let d = e - plateau;
        if d > 0.0 && d.is_finite() {
            pts.push((i as f64, d.ln()));
        }
    }
    if pts.len() < 2 {
        return Ok(ErrorDecayFit {
            mu_empirical: None,
            plateau,
            no_decay: true,
        });
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|(x, _)| x).sum();
    let sy: f64 = pts.iter().map(|(_, y)| y).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    Ok(ErrorDecayFit {
        mu_empirical: Some(slope.exp()),
        plateau,
        no_decay: false,
    })
}

/// [`fit_error_decay_values`] applied to `E^n = ||x^n - x*||^2` along a
/// solve trace.
pub fn fit_error_decay(report: &SolveReport, x_star: &DVector<f64>) -> Result<ErrorDecayFit> {
    let errors: Vec<f64> = report
        .iterates
        .iter()
        .map(|s| (&s.x - x_star).norm_squared())
        .collect();
    fit_error_decay_values(&errors)
}

/// Samplewise check of the weighted-norm characterization of smoothed
/// minimizers: whenever a challenger is no better than `z` in the weighted
/// norm built from `z`, it must not beat `z` in the smoothed residual
/// either.
pub fn verify_feps_characterization(
    map: &dyn ResidualMap,
    y: &DVector<f64>,
    z: &DVector<f64>,
    eps: f64,
    p: f64,
    challengers: &[DVector<f64>],
) -> Result<bool> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveEps(eps));
    }
    let r_z = residual(map, z, y)?;
    let w_z = optimal_weights(&r_z, eps, p)?;
    let base = weighted_sq_residual_of(&r_z, &w_z)?;
    let f_z = smoothed_residual_of(&r_z, eps, p)?;
    for challenger in challengers {
        let r_c = residual(map, challenger, y)?;
        let weighted = weighted_sq_residual_of(&r_c, &w_z)?;
        if weighted >= base {
            let f_c = smoothed_residual_of(&r_c, eps, p)?;
            if f_z > f_c + 1e-10 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irls::run_nr_irls;
    use crate::model::{IrlsConfig, IrlsState, Termination};
    use crate::problems::{make_simple_1d, IdentityMap, LinearMap};
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bcc_on_toy_map_stays_within_closed_form() {
        // On [0, 1] the ratio (1 + |x + x*|^p)^(1/p) lies in [1, (1+2^p)^(1/p)].
        let map = make_simple_1d();
        let x_star = dvector![0.305];
        let samples: Vec<DVector<f64>> = (0..=20).map(|i| dvector![i as f64 * 0.05]).collect();
        for p in [1.0, 1.5, 2.0] {
            let est = estimate_bcc(&map, &x_star, &samples, p).unwrap();
            assert!(est.alpha_hat >= 1.0 - 1e-12);
            assert!(est.beta_hat <= (1.0 + 2f64.powf(p)).powf(1.0 / p) + 1e-12);
        }
    }

    #[test]
    fn bcc_isometry_is_exactly_one() {
        let map = IdentityMap::new(3);
        let x_star = dvector![0.1, 0.2, 0.3];
        let samples = vec![dvector![1.0, 0.0, 0.0], dvector![-0.4, 0.5, 2.0]];
        let est = estimate_bcc(&map, &x_star, &samples, 2.0).unwrap();
        assert_abs_diff_eq!(est.alpha_hat, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.beta_hat, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bcc_three_point_hand_oracle() {
        let map = make_simple_1d();
        let p = 1.5;
        let x_star = dvector![0.25];
        let samples = vec![dvector![0.0], dvector![0.5], dvector![1.0]];
        let mut ratios = Vec::new();
        for z in &samples {
            let diff = map.eval(&x_star) - map.eval(z);
            let num = (diff[0].abs().powf(p) + diff[1].abs().powf(p)).powf(1.0 / p);
            ratios.push(num / (x_star[0] - z[0]).abs());
        }
        let est = estimate_bcc(&map, &x_star, &samples, p).unwrap();
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = ratios.iter().cloned().fold(0.0f64, f64::max);
        assert_abs_diff_eq!(est.alpha_hat, min, epsilon = 1e-14);
        assert_abs_diff_eq!(est.beta_hat, max, epsilon = 1e-14);
    }

    #[test]
    fn bcc_nested_samples_widen() {
        let map = make_simple_1d();
        let x_star = dvector![0.25];
        let small = vec![dvector![0.1], dvector![0.6]];
        let mut large = small.clone();
        large.push(dvector![0.9]);
        large.push(dvector![0.0]);
        let a = estimate_bcc(&map, &x_star, &small, 1.3).unwrap();
        let b = estimate_bcc(&map, &x_star, &large, 1.3).unwrap();
        assert!(b.alpha_hat <= a.alpha_hat);
        assert!(b.beta_hat >= a.beta_hat);
    }

    #[test]
    fn radius_bounds() {
        assert_abs_diff_eq!(
            compute_r_star_bound(1.0, 1.0, 0.0, 0.0, 1.0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            compute_r_hat(1.0, 1.0, 2.0, 1.0).unwrap(),
            7.0,
            epsilon = 1e-15
        );
        // 1/alpha scaling.
        assert_abs_diff_eq!(
            compute_r_hat(1.0, 0.5, 2.0, 1.0).unwrap(),
            14.0,
            epsilon = 1e-15
        );
        assert!(compute_r_star_bound(1.0, 0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn convexity_probe_quadratics() {
        let sq = |x: &DVector<f64>| x.norm_squared();
        let c = probe_strong_convexity(sq, &dvector![0.2, -0.1], 1.0, 20, 4).unwrap();
        assert_abs_diff_eq!(c, 2.0, epsilon = 1e-4);

        let saddle = |x: &DVector<f64>| x[0] * x[0] - x[1] * x[1];
        let c = probe_strong_convexity(saddle, &dvector![0.0, 0.0], 1.0, 20, 4).unwrap();
        assert_abs_diff_eq!(c, -2.0, epsilon = 1e-4);
    }

    #[test]
    fn convexity_probe_matches_gram_eigenvalue() {
        // For a linear map the energy Hessian is p * A^T W A; the probe
        // must land on its smallest eigenvalue (direct eigensolve oracle).
        let a = dmatrix![1.0, 0.2; -0.3, 0.8; 0.5, 0.5];
        let map = LinearMap::new(a.clone()).unwrap();
        let y = dvector![0.4, -0.2, 0.9];
        let w = Weights::new(dvector![0.5, 1.5, 2.0]).unwrap();
        let p = 1.4;
        let objective = |x: &DVector<f64>| eval_energy(&map, x, &y, &w, 0.3, p).unwrap();
        let c = probe_strong_convexity(objective, &dvector![0.0, 0.0], 1.0, 10, 11).unwrap();

        let wm = DMatrix::from_diagonal(w.as_vector());
        let gram = a.transpose() * wm * &a;
        let lambda_min = (p * gram).symmetric_eigenvalues().min();
        assert_abs_diff_eq!(c, lambda_min, epsilon = 1e-4 * (1.0 + lambda_min.abs()));
    }

    #[test]
    fn uscc1_ratios_on_linear_runs() {
        // Quadratic objective identity: with x^{n+1} the exact minimizer of
        // the weighted problem, each ratio is (p/2) d^T G d / ||d||^2 with
        // G the weighted Gram, hence at least (p/2) lambda_min(G).
        let a = dmatrix![1.0, 0.0; 0.0, 1.0; 1.0, 1.0];
        let map = LinearMap::new(a.clone()).unwrap();
        let y = dvector![1.0, -2.0, 0.5];
        let p = 1.3;
        let config = IrlsConfig {
            p,
            max_outer_iters: 30,
            ..Default::default()
        };
        let report = run_nr_irls(&map, &y, &config, &dvector![3.0, 3.0]).unwrap();
        let ratios = check_uscc1_on_trace(&report, &map, &y, p).unwrap();
        assert!(!ratios.is_empty());
        for r in &ratios {
            assert!(*r >= -1e-10, "negative descent ratio {r}");
        }

        // The first step runs at unit weights; its ratio obeys the Gram
        // bound exactly.
        let gram = a.transpose() * &a;
        let sigma = gram.symmetric_eigenvalues().min();
        assert!(ratios[0] >= p / 2.0 * sigma - 1e-8);
    }

    #[test]
    fn uscc1_skips_duplicate_iterates() {
        let map = make_simple_1d();
        let y = dvector![0.0, 0.0];
        let w = Weights::ones(2);
        let state = |x: f64| IrlsState {
            n: 0,
            x: dvector![x],
            w: w.clone(),
            eps: 1.0,
            j_value: 0.0,
        };
        let report = SolveReport {
            iterates: vec![state(1.0), state(1.0), state(0.5)],
            termination: Termination::MaxIters,
            final_x: dvector![0.5],
            final_lp_residual: 0.0,
            wall_time: std::time::Duration::ZERO,
        };
        let ratios = check_uscc1_on_trace(&report, &map, &y, 1.0).unwrap();
        assert_eq!(ratios.len(), 1);
        assert!(ratios.iter().all(|r| r.is_finite()));
    }

    #[test]
    fn lipcond_linear_map_is_gram_quadratic_form() {
        let a = dmatrix![1.0, 0.5; 0.0, 2.0; 1.0, -1.0];
        let map = LinearMap::new(a.clone()).unwrap();
        let y = dvector![0.1, 0.2, 0.3];
        let w = Weights::new(dvector![1.0, 0.5, 2.0]).unwrap();
        let x_a = dvector![1.0, 0.0];
        let x_b = dvector![-0.5, 1.0];
        let l = check_lipcond(&map, &y, &w, &x_a, &x_b, &[0.2, 0.5, 0.8]).unwrap();
        let diff = &x_a - &x_b;
        let wm = DMatrix::from_diagonal(w.as_vector());
        let gram = a.transpose() * wm * &a;
        let expected = (diff.transpose() * gram * &diff)[(0, 0)] / diff.norm_squared();
        assert_abs_diff_eq!(l, expected, epsilon = 1e-9 * (1.0 + expected));
    }

    #[test]
    fn lipcond_affine_objective_is_zero() {
        // A constant map makes the weighted residual constant, so the
        // convex-combination defect vanishes.
        let map = LinearMap::new(DMatrix::zeros(2, 2)).unwrap();
        let y = dvector![1.0, 1.0];
        let w = Weights::ones(2);
        let l = check_lipcond(&map, &y, &w, &dvector![0.0, 0.0], &dvector![1.0, 1.0], &[0.5])
            .unwrap();
        assert_abs_diff_eq!(l, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn lipcond_single_point_hand_value() {
        // Map (x, x^2), y = 0, unit weights, x_a = 0, x_b = 1, t = 1/2:
        // F(z) = z^2 + z^4, F(1/2) = 0.3125, F(0) = 0, F(1) = 2, so
        // |0.5*0.3125 + 0.5*(0.3125 - 2)| / (0.25 * 1) = 2.75.
        let map = make_simple_1d();
        let y = dvector![0.0, 0.0];
        let w = Weights::ones(2);
        let l = check_lipcond(&map, &y, &w, &dvector![0.0], &dvector![1.0], &[0.5]).unwrap();
        assert_abs_diff_eq!(l, 2.75, epsilon = 1e-12);
    }

    #[test]
    fn mu_nu_frozen_values() {
        let d = compute_mu_nu(1.0, 2, 1.0, 80.0).unwrap();
        assert_abs_diff_eq!(d.mu, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.nu, 0.475, epsilon = 1e-15);
        assert!(d.contraction);

        let d = compute_mu_nu(2.0, 2, 1.0, 40.0).unwrap();
        assert_abs_diff_eq!(d.mu, 0.5, epsilon = 1e-15);

        // 1/c_hat scaling.
        let tenfold = compute_mu_nu(1.0, 2, 1.0, 800.0).unwrap();
        assert_abs_diff_eq!(tenfold.mu, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(tenfold.nu, 0.0475, epsilon = 1e-15);

        assert!(compute_mu_nu(1.0, 2, 1.0, 0.0).is_err());
    }

    #[test]
    fn mu_nu_monotonicity() {
        let base = compute_mu_nu(1.5, 3, 1.2, 50.0).unwrap();
        let bigger_m = compute_mu_nu(1.5, 4, 1.2, 50.0).unwrap();
        let bigger_beta = compute_mu_nu(1.5, 3, 1.5, 50.0).unwrap();
        let bigger_chat = compute_mu_nu(1.5, 3, 1.2, 60.0).unwrap();
        assert!(bigger_m.mu > base.mu && bigger_m.nu > base.nu);
        assert!(bigger_beta.mu > base.mu);
        assert!(bigger_chat.mu < base.mu && bigger_chat.nu < base.nu);
    }

    #[test]
    fn decay_fit_pure_geometric() {
        let errors: Vec<f64> = (0..24).map(|n| 0.5f64.powi(n)).collect();
        let fit = fit_error_decay_values(&errors).unwrap();
        assert!(!fit.no_decay);
        assert_abs_diff_eq!(fit.mu_empirical.unwrap(), 0.5, epsilon = 1e-6);
    }

    #[test]
    fn decay_fit_constant_trace() {
        let errors = vec![0.3; 8];
        let fit = fit_error_decay_values(&errors).unwrap();
        assert!(fit.no_decay);
        assert!(fit.mu_empirical.is_none());
        assert_abs_diff_eq!(fit.plateau, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn decay_fit_geometric_with_plateau() {
        let errors: Vec<f64> = (0..20).map(|n| 0.3f64.powi(n) + 0.01).collect();
        let fit = fit_error_decay_values(&errors).unwrap();
        assert!((fit.mu_empirical.unwrap() - 0.3).abs() <= 5e-2);
        assert!((fit.plateau - 0.01).abs() <= 1e-3);
    }

    #[test]
    fn decay_fit_from_report() {
        let w = Weights::ones(2);
        let xs = [1.0, 0.5, 0.25, 0.125, 0.0625];
        let iterates: Vec<IrlsState> = xs
            .iter()
            .enumerate()
            .map(|(n, x)| IrlsState {
                n,
                x: dvector![*x],
                w: w.clone(),
                eps: 1.0,
                j_value: 0.0,
            })
            .collect();
        let report = SolveReport {
            iterates,
            termination: Termination::MaxIters,
            final_x: dvector![0.0625],
            final_lp_residual: 0.0,
            wall_time: std::time::Duration::ZERO,
        };
        let fit = fit_error_decay(&report, &dvector![0.0]).unwrap();
        // E^n = (0.5^n)^2 = 0.25^n.
        assert_abs_diff_eq!(fit.mu_empirical.unwrap(), 0.25, epsilon = 1e-6);
    }

    #[test]
    fn feps_characterization_on_converged_run() {
        let map = make_simple_1d();
        let y = dvector![0.0, 0.9];
        // Frozen-schedule mode: the run settles at the natural eps fixpoint
        // where the final iterate minimizes the smoothed residual exactly.
        let config = IrlsConfig {
            p: 1.2,
            max_outer_iters: 100,
            stall_eps_decay: 1.0,
            ..Default::default()
        };
        let report = run_nr_irls(&map, &y, &config, &dvector![1.0]).unwrap();
        let eps = report.final_eps().max(1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let challengers: Vec<DVector<f64>> = (0..1000)
            .map(|_| &report.final_x + dvector![rng.random::<f64>() * 2.0 - 1.0])
            .collect();
        let ok = verify_feps_characterization(&map, &y, &report.final_x, eps, 1.2, &challengers)
            .unwrap();
        assert!(ok);
    }

    #[test]
    fn feps_characterization_edge_cases() {
        let map = make_simple_1d();
        let y = dvector![0.0, 0.9];
        let z = dvector![0.4];
        // Challenger set {z} is vacuously fine.
        assert!(
            verify_feps_characterization(&map, &y, &z, 0.5, 1.0, std::slice::from_ref(&z))
                .unwrap()
        );
        // A challenger strictly better in the weighted norm fails the
        // premise, so it imposes no constraint.
        let better = dvector![0.9];
        assert!(
            verify_feps_characterization(&map, &y, &z, 0.5, 1.0, &[better]).unwrap()
        );
        assert!(verify_feps_characterization(&map, &y, &z, 0.0, 1.0, &[]).is_err());
    }
}
