//! Outer drivers: the nonlinear-residual reweighting iteration, its
//! convexified variant with a proximal anchor, and the multistart strategy
//! that seeds the convexified runs from least squares critical points.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functional::{
    eval_energy, lp_norm, optimal_weights, residual, smoothed_residual_of, update_epsilon,
};
use crate::inner_solver::{lm_solve, ProximalTerm};
use crate::model::{IrlsConfig, IrlsState, ResidualMap, SolveReport, Termination, Weights};
use rand::SeedableRng;

/// How multistart start points are produced.
#[derive(Debug, Clone)]
pub enum StartSampler {
    /// Uniform in the ball of the given radius around the origin.
    RandomInBall { radius: f64 },
    UserProvided(Vec<DVector<f64>>),
}

/// Start points for the multistart strategy.
#[derive(Debug, Clone)]
pub struct MultistartPlan {
    pub num_starts: usize,
    pub sampler: StartSampler,
}

impl MultistartPlan {
    pub fn random_in_ball(num_starts: usize, radius: f64) -> Self {
        MultistartPlan {
            num_starts,
            sampler: StartSampler::RandomInBall { radius },
        }
    }

    pub fn from_points(points: Vec<DVector<f64>>) -> Self {
        MultistartPlan {
            num_starts: points.len(),
            sampler: StartSampler::UserProvided(points),
        }
    }

    /// Materialize the start points for a problem of dimension `dim`.
    pub fn sample_starts(&self, dim: usize, rng: &mut ChaCha8Rng) -> Result<Vec<DVector<f64>>> {
        if self.num_starts == 0 {
            return Err(Error::InvalidConfig("need at least one start".into()));
        }
        match &self.sampler {
            StartSampler::UserProvided(points) => {
                if points.len() != self.num_starts {
                    return Err(Error::InvalidConfig(
                        "num_starts disagrees with provided points".into(),
                    ));
                }
                for pt in points {
                    if pt.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: pt.len(),
                        });
                    }
                }
                Ok(points.clone())
            }
            StartSampler::RandomInBall { radius } => {
                if !(*radius >= 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidConfig("radius must be nonnegative".into()));
                }
                let mut starts = Vec::with_capacity(self.num_starts);
                for _ in 0..self.num_starts {
                    let mut dir = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let norm = dir.norm();
                    if norm > 0.0 {
                        dir /= norm;
                    }
                    let u: f64 = rng.random();
                    starts.push(dir * (radius * u.powf(1.0 / dim as f64)));
                }
                Ok(starts)
            }
        }
    }
}

fn check_problem(map: &dyn ResidualMap, y: &DVector<f64>, x_start: &DVector<f64>) -> Result<()> {
    if map.dim_out() < map.dim_in() {
        return Err(Error::InvalidDims(format!(
            "solver requires m >= k, got m = {}, k = {}",
            map.dim_out(),
            map.dim_in()
        )));
    }
    if y.len() != map.dim_out() {
        return Err(Error::DimensionMismatch {
            expected: map.dim_out(),
            got: y.len(),
        });
    }
    if x_start.len() != map.dim_in() {
        return Err(Error::DimensionMismatch {
            expected: map.dim_in(),
            got: x_start.len(),
        });
    }
    if x_start.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation("start point"));
    }
    Ok(())
}

/// Shared outer loop. `anchor` decides whether inner solves carry the
/// proximal term centered at the previous iterate.
fn run_outer(
    map: &dyn ResidualMap,
    y: &DVector<f64>,
    config: &IrlsConfig,
    x_start: &DVector<f64>,
    anchor: bool,
) -> Result<SolveReport> {
    config.validate()?;
    check_problem(map, y, x_start)?;
    let t0 = Instant::now();
    let p = config.p;
    let m = map.dim_out();

    let mut states: Vec<IrlsState> = Vec::new();
    let mut x = x_start.clone();
    let mut eps;
    let mut w;

    if anchor {
        // Convexified initialization: x^1 is the start point itself and the
        // first smoothing level comes from its residual (eps_0 = 1).
        let r = residual(map, &x, y)?;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation("residual at start"));
        }
        eps = update_epsilon(&r, 1.0, config.eps_tilde)?.next_eps;
        w = if eps > 0.0 {
            // The hard floor caps the recorded weights at eps_hard_floor^(p-2).
            optimal_weights(&r, eps.max(config.eps_hard_floor), p)?
        } else {
            Weights::ones(m)
        };
        let j = smoothed_residual_of(&r, eps, p)?;
        states.push(IrlsState {
            n: 1,
            x: x.clone(),
            w: w.clone(),
            eps,
            j_value: j,
        });
        if let Some(report) = early_termination(&states, config, t0, map, y, p)? {
            return Ok(report);
        }
    } else {
        // Plain initialization: unit weights, eps_0 = 1.
        eps = 1.0;
        w = Weights::ones(m);
        let j = eval_energy(map, &x, y, &w, eps, p)?;
        states.push(IrlsState {
            n: 0,
            x: x.clone(),
            w: w.clone(),
            eps,
            j_value: j,
        });
    }

    let mut stall_count = 0usize;
    let mut window: std::collections::VecDeque<(f64, f64)> = std::collections::VecDeque::new();
    let mut termination = Termination::MaxIters;

    for _ in 0..config.max_outer_iters {
        let prox = if anchor {
            ProximalTerm::new(config.omega, x.clone())?
        } else {
            ProximalTerm::none(map.dim_in())
        };
        let sol = match lm_solve(map, y, &w, &x, &prox, &config.inner) {
            Ok(sol) => sol,
            Err(_) => {
                termination = Termination::InnerSolverFailure;
                break;
            }
        };
        x = sol.x;
        let r = residual(map, &x, y)?;
        if r.iter().any(|v| !v.is_finite()) {
            termination = Termination::InnerSolverFailure;
            break;
        }

        let eps_prev = eps;
        let j_prev = states.last().map(|s| s.j_value).unwrap_or(f64::INFINITY);
        eps = update_epsilon(&r, eps, config.eps_tilde)?.next_eps;
        if eps > 0.0 {
            // Weight cap at the machine-guard level; binding only on the
            // final state since the run stops once eps reaches the floor.
            w = optimal_weights(&r, eps.max(config.eps_hard_floor), p)?;
        }
        let j = smoothed_residual_of(&r, eps, p)?;
        let n = states.last().map(|s| s.n).unwrap_or(0) + 1;
        states.push(IrlsState {
            n,
            x: x.clone(),
            w: w.clone(),
            eps,
            j_value: j,
        });

        if eps == 0.0 {
            termination = Termination::EpsZero;
            break;
        }
        if eps <= config.stop_eps || eps <= config.eps_hard_floor {
            termination = Termination::EpsBelowFloor;
            break;
        }
        let mut decayed = false;
        if config.stall_eps_decay < 1.0 && eps > config.eps_tilde {
            // Escape hatches for a frozen or near-frozen schedule. Forcing
            // eps down preserves the whole descent chain, so both are safe:
            // a hard stall, or eps barely moving across a window while the
            // energy has flattened out.
            let hard_stall = stall_count >= 4 && j_prev - j < 1e-15 && eps == eps_prev;
            window.push_back((eps, j));
            if window.len() > 11 {
                window.pop_front();
            }
            let creeping = window.len() == 11 && {
                let (eps0, j0) = window[0];
                eps >= 0.9 * eps0 && j0 - j < 1e-4 * (1.0 + j.abs())
            };
            if hard_stall || creeping {
                eps = (eps * config.stall_eps_decay).max(config.eps_tilde);
                w = optimal_weights(&r, eps.max(config.eps_hard_floor), p)?;
                stall_count = 0;
                window.clear();
                decayed = true;
            }
        }
        if !decayed {
            if j_prev - j < 1e-15 && eps == eps_prev {
                stall_count += 1;
                if stall_count >= 5 {
                    termination = Termination::Stalled;
                    break;
                }
            } else {
                stall_count = 0;
            }
        }
    }

    finish_report(states, termination, t0, map, y, p)
}

fn early_termination(
    states: &[IrlsState],
    config: &IrlsConfig,
    t0: Instant,
    map: &dyn ResidualMap,
    y: &DVector<f64>,
    p: f64,
) -> Result<Option<SolveReport>> {
    let eps = states.last().expect("nonempty").eps;
    let termination = if eps == 0.0 {
        Some(Termination::EpsZero)
    } else if eps <= config.stop_eps || eps <= config.eps_hard_floor {
        Some(Termination::EpsBelowFloor)
    } else {
        None
    };
    match termination {
        Some(t) => Ok(Some(finish_report(states.to_vec(), t, t0, map, y, p)?)),
        None => Ok(None),
    }
}

fn finish_report(
    states: Vec<IrlsState>,
    termination: Termination,
    t0: Instant,
    map: &dyn ResidualMap,
    y: &DVector<f64>,
    p: f64,
) -> Result<SolveReport> {
    let final_x = states
        .last()
        .expect("outer loop always records at least one state")
        .x
        .clone();
    let final_lp_residual = lp_norm(&residual(map, &final_x, y)?, p)?;
    Ok(SolveReport {
        iterates: states,
        termination,
        final_x,
        final_lp_residual,
        wall_time: t0.elapsed(),
    })
}

/// The plain reweighting iteration: alternate weighted least squares solves
/// with the epsilon schedule and the closed-form weight update, starting
/// from unit weights and `eps_0 = 1`.
pub fn run_nr_irls(
    map: &dyn ResidualMap,
    y: &DVector<f64>,
    config: &IrlsConfig,
    x_start: &DVector<f64>,
) -> Result<SolveReport> {
    if config.omega != 0.0 {
        return Err(Error::InvalidConfig(
            "plain runs require omega = 0; use run_convexified".into(),
        ));
    }
    run_outer(map, y, config, x_start, false)
}

/// The convexified iteration: each inner solve carries the proximal term
/// `2*omega*||x - x_prev||^2`, restoring local strong convexity.
pub fn run_convexified(
    map: &dyn ResidualMap,
    y: &DVector<f64>,
    config: &IrlsConfig,
    x_start: &DVector<f64>,
) -> Result<SolveReport> {
    if !(config.omega > 0.0) {
        return Err(Error::InvalidConfig(
            "convexified runs require omega > 0".into(),
        ));
    }
    run_outer(map, y, config, x_start, true)
}

/// Two-stage multistart: from each start point solve the unweighted least
/// squares problem to a critical point, then run the reweighting iteration
/// (convexified when `config.omega > 0`) from there. Returns the report
/// with the smallest final lp residual together with all per-start reports;
/// ties break toward the lowest start index.
pub fn multistart_convexified(
    map: &dyn ResidualMap,
    y: &DVector<f64>,
    config: &IrlsConfig,
    plan: &MultistartPlan,
    seed: u64,
) -> Result<(SolveReport, Vec<SolveReport>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts = plan.sample_starts(map.dim_in(), &mut rng)?;

    let branches: Vec<Result<SolveReport>> = starts
        .par_iter()
        .map(|start| {
            let l2_sol = lm_solve(
                map,
                y,
                &Weights::ones(map.dim_out()),
                start,
                &ProximalTerm::none(map.dim_in()),
                &config.inner,
            )?;
            if config.omega > 0.0 {
                run_convexified(map, y, config, &l2_sol.x)
            } else {
                run_nr_irls(map, y, config, &l2_sol.x)
            }
        })
        .collect();

    let reports: Vec<SolveReport> = branches.into_iter().filter_map(|b| b.ok()).collect();
    if reports.is_empty() {
        return Err(Error::AllStartsFailed(starts.len()));
    }
    let mut best = 0;
    for (i, rep) in reports.iter().enumerate() {
        if rep.final_lp_residual < reports[best].final_lp_residual {
            best = i;
        }
    }
    let best_report = reports[best].clone();
    Ok((best_report, reports))
}
