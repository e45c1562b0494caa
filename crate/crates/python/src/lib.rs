//! Python bindings exposing the solver, the problem generators, the greedy
//! recovery harness, and the main diagnostics.

use std::sync::Arc;

use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nrirls::diagnostics as diag;
use nrirls::error::Error;
use nrirls::functional;
use nrirls::greedy::{greedy_sparse_recovery, relative_error, GreedyOptions};
use nrirls::irls::{multistart_convexified, run_convexified, run_nr_irls, MultistartPlan};
use nrirls::model::{IrlsConfig, ResidualMap, SolveReport};
use nrirls::problems::{
    self, io as problem_io, make_instance, restrict_to_support, zero_pad, InstanceParams,
    NoiseSpec, ProblemInstance,
};

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Parse { .. } | Error::InvalidConfig(_) | Error::InvalidP(_) => {
            PyValueError::new_err(err.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn vec_to_dvector(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

/// Solver options mirroring the Rust configuration.
#[pyclass(name = "IrlsOptions", skip_from_py_object)]
#[derive(Clone)]
struct PyIrlsOptions {
    inner: IrlsConfig,
}

#[pymethods]
impl PyIrlsOptions {
    #[new]
    #[pyo3(signature = (p=1.0, omega=0.0, eps_tilde=1e-8, stop_eps=0.0, max_outer_iters=50))]
    fn new(p: f64, omega: f64, eps_tilde: f64, stop_eps: f64, max_outer_iters: usize) -> Self {
        PyIrlsOptions {
            inner: IrlsConfig {
                p,
                omega,
                eps_tilde,
                stop_eps,
                max_outer_iters,
                ..Default::default()
            },
        }
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega
    }

    fn __repr__(&self) -> String {
        format!(
            "IrlsOptions(p={}, omega={}, eps_tilde={}, stop_eps={}, max_outer_iters={})",
            self.inner.p,
            self.inner.omega,
            self.inner.eps_tilde,
            self.inner.stop_eps,
            self.inner.max_outer_iters
        )
    }
}

/// Trace and outcome of one solve.
#[pyclass(name = "Report")]
struct PyReport {
    inner: SolveReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn final_x(&self) -> Vec<f64> {
        self.inner.final_x.iter().copied().collect()
    }

    #[getter]
    fn final_lp_residual(&self) -> f64 {
        self.inner.final_lp_residual
    }

    #[getter]
    fn termination(&self) -> String {
        self.inner.termination.as_str().to_string()
    }

    #[getter]
    fn final_eps(&self) -> f64 {
        self.inner.final_eps()
    }

    #[getter]
    fn outer_iterations(&self) -> usize {
        self.inner.outer_iterations()
    }

    /// Epsilon values along the trace.
    #[getter]
    fn eps_trace(&self) -> Vec<f64> {
        self.inner.iterates.iter().map(|s| s.eps).collect()
    }

    /// Energy values along the trace (nonincreasing).
    #[getter]
    fn energy_trace(&self) -> Vec<f64> {
        self.inner.iterates.iter().map(|s| s.j_value).collect()
    }

    /// Iterates along the trace.
    #[getter]
    fn x_trace(&self) -> Vec<Vec<f64>> {
        self.inner
            .iterates
            .iter()
            .map(|s| s.x.iter().copied().collect())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(termination={}, lp_residual={:.6e}, outer_iterations={})",
            self.inner.termination.as_str(),
            self.inner.final_lp_residual,
            self.inner.outer_iterations()
        )
    }
}

/// A generated (or loaded) test problem.
#[pyclass(name = "Problem")]
struct PyProblem {
    inner: ProblemInstance,
}

#[pymethods]
impl PyProblem {
    /// The toy map x -> (x, x^2) with the given measurements.
    #[staticmethod]
    #[pyo3(signature = (y=(0.0, 0.9), p=1.0))]
    fn simple_1d(y: (f64, f64), p: f64) -> PyResult<Self> {
        let params = InstanceParams::simple_1d([y.0, y.1], p);
        Ok(PyProblem {
            inner: make_instance(&params, None, 0).map_err(to_py_err)?,
        })
    }

    /// Sparse phase retrieval with Gaussian measurement vectors.
    #[staticmethod]
    #[pyo3(signature = (n=20, m=12, k=1, kappa=1.0, p=1.0, seed=0, alpha_p=0.0))]
    fn phase_retrieval(
        n: usize,
        m: usize,
        k: usize,
        kappa: f64,
        p: f64,
        seed: u64,
        alpha_p: f64,
    ) -> PyResult<Self> {
        let params = InstanceParams::phase_retrieval(n, m, k, kappa, p);
        let noise = (alpha_p > 0.0).then_some(NoiseSpec {
            alpha_p,
            ..Default::default()
        });
        Ok(PyProblem {
            inner: make_instance(&params, noise.as_ref(), seed).map_err(to_py_err)?,
        })
    }

    /// Nonlinearly perturbed Gaussian sensing map.
    #[staticmethod]
    #[pyo3(signature = (n=20, m=12, k=1, rho=0.0, p=1.0, seed=0))]
    fn perturbed_rip(n: usize, m: usize, k: usize, rho: f64, p: f64, seed: u64) -> PyResult<Self> {
        let params = InstanceParams::perturbed_rip(n, m, k, rho, p);
        Ok(PyProblem {
            inner: make_instance(&params, None, seed).map_err(to_py_err)?,
        })
    }

    /// Parse a problem from its text representation.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(PyProblem {
            inner: problem_io::parse_instance("<python>", text).map_err(to_py_err)?,
        })
    }

    /// The problem-file representation.
    fn to_text(&self) -> String {
        problem_io::write_instance(&self.inner)
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y.iter().copied().collect()
    }

    #[getter]
    fn x_star(&self) -> Vec<f64> {
        self.inner.x_star.iter().copied().collect()
    }

    #[getter]
    fn support(&self) -> Option<Vec<usize>> {
        self.inner.support.clone()
    }

    #[getter]
    fn family(&self) -> String {
        self.inner.family.as_str().to_string()
    }

    #[getter]
    fn dim_in(&self) -> usize {
        self.inner.map.dim_in()
    }

    #[getter]
    fn dim_out(&self) -> usize {
        self.inner.map.dim_out()
    }

    /// Evaluate the map.
    fn eval(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if x.len() != self.inner.map.dim_in() {
            return Err(PyValueError::new_err("wrong input dimension"));
        }
        Ok(self
            .inner
            .map
            .eval(&vec_to_dvector(x))
            .iter()
            .copied()
            .collect())
    }

    /// The map Jacobian as a list of rows.
    fn jacobian(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let jac = self
            .inner
            .map
            .jacobian(&vec_to_dvector(x))
            .ok_or_else(|| PyRuntimeError::new_err("map has no jacobian"))?;
        Ok((0..jac.nrows())
            .map(|i| jac.row(i).iter().copied().collect())
            .collect())
    }

    /// Run the reweighting solver from a start point. When `support` is
    /// given, the map is restricted to those coordinates first and the
    /// returned iterates live in the restricted space.
    #[pyo3(signature = (options, x0, support=None))]
    fn solve(
        &self,
        options: &PyIrlsOptions,
        x0: Vec<f64>,
        support: Option<Vec<usize>>,
    ) -> PyResult<PyReport> {
        let config = &options.inner;
        let x0 = vec_to_dvector(x0);
        let report = match support {
            Some(sup) => {
                let restricted =
                    restrict_to_support(self.inner.map.share(), &sup).map_err(to_py_err)?;
                if config.omega > 0.0 {
                    run_convexified(&restricted, &self.inner.y, config, &x0)
                } else {
                    run_nr_irls(&restricted, &self.inner.y, config, &x0)
                }
            }
            None => {
                if config.omega > 0.0 {
                    run_convexified(self.inner.map.as_dyn(), &self.inner.y, config, &x0)
                } else {
                    run_nr_irls(self.inner.map.as_dyn(), &self.inner.y, config, &x0)
                }
            }
        }
        .map_err(to_py_err)?;
        Ok(PyReport { inner: report })
    }

    /// Two-stage multistart (least squares critical points, then the
    /// reweighting iteration), returning the best report.
    #[pyo3(signature = (options, num_starts=3, radius=1.0, seed=0, support=None))]
    fn multistart_solve(
        &self,
        options: &PyIrlsOptions,
        num_starts: usize,
        radius: f64,
        seed: u64,
        support: Option<Vec<usize>>,
    ) -> PyResult<PyReport> {
        let plan = MultistartPlan::random_in_ball(num_starts, radius);
        let report = match support {
            Some(sup) => {
                let restricted =
                    restrict_to_support(self.inner.map.share(), &sup).map_err(to_py_err)?;
                multistart_convexified(&restricted, &self.inner.y, &options.inner, &plan, seed)
            }
            None => multistart_convexified(
                self.inner.map.as_dyn(),
                &self.inner.y,
                &options.inner,
                &plan,
                seed,
            ),
        }
        .map_err(to_py_err)?
        .0;
        Ok(PyReport { inner: report })
    }

    /// Greedy sparse recovery; returns a dict with the estimate, support,
    /// success flag, relative error, and per-step residuals.
    #[pyo3(signature = (options, max_sparsity, num_starts=3, radius=1.0, seed=0, success_threshold=0.01))]
    fn greedy_recover(
        &self,
        py: Python<'_>,
        options: &PyIrlsOptions,
        max_sparsity: usize,
        num_starts: usize,
        radius: f64,
        seed: u64,
        success_threshold: f64,
    ) -> PyResult<Py<pyo3::types::PyDict>> {
        let shared: Arc<dyn ResidualMap> = self.inner.map.share();
        let opts = GreedyOptions {
            max_sparsity,
            success_threshold,
            sign_invariant: self.inner.family == problems::Family::PhaseRetrieval,
        };
        let plan = MultistartPlan::random_in_ball(num_starts, radius);
        let report = greedy_sparse_recovery(
            &shared,
            &self.inner.y,
            Some(&self.inner.x_star),
            &opts,
            &options.inner,
            &plan,
            seed,
        )
        .map_err(to_py_err)?;
        let dict = pyo3::types::PyDict::new(py);
        dict.set_item("estimate", report.estimate.iter().copied().collect::<Vec<f64>>())?;
        dict.set_item(
            "support",
            report.support_trace.last().cloned().unwrap_or_default(),
        )?;
        dict.set_item("success", report.success)?;
        dict.set_item("rel_error", report.rel_error)?;
        dict.set_item("steps_used", report.steps_used)?;
        dict.set_item("per_step_residuals", report.per_step_residuals.clone())?;
        Ok(dict.unbind())
    }

    /// Empirical coercivity bounds around the ground truth.
    #[pyo3(signature = (p=1.0, num_samples=200, radius=1.0, seed=0))]
    fn bcc_estimate(
        &self,
        p: f64,
        num_samples: usize,
        radius: f64,
        seed: u64,
    ) -> PyResult<(f64, f64)> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = self.inner.map.dim_in();
        let samples: Vec<DVector<f64>> = (0..num_samples.max(1))
            .map(|_| {
                if self.inner.family == problems::Family::Simple1d {
                    DVector::from_vec(vec![rng.random::<f64>()])
                } else {
                    let dir = DVector::from_fn(k, |_, _| {
                        rng.sample::<f64, _>(rand_distr::StandardNormal)
                    });
                    let norm = dir.norm().max(1e-12);
                    let u: f64 = rng.random();
                    &self.inner.x_star + dir * (radius * u.powf(1.0 / k as f64) / norm)
                }
            })
            .filter(|z| (z - &self.inner.x_star).norm() > 1e-12)
            .collect();
        let est = diag::estimate_bcc(self.inner.map.as_dyn(), &self.inner.x_star, &samples, p)
            .map_err(to_py_err)?;
        Ok((est.alpha_hat, est.beta_hat))
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(family={}, n={}, m={})",
            self.inner.family.as_str(),
            self.inner.map.dim_in(),
            self.inner.map.dim_out()
        )
    }
}

/// The energy J(x, w, eps) given a residual vector and weights.
#[pyfunction]
fn energy(residual: Vec<f64>, weights: Vec<f64>, eps: f64, p: f64) -> PyResult<f64> {
    let w = nrirls::model::Weights::new(vec_to_dvector(weights)).map_err(to_py_err)?;
    functional::energy_of_residual(&vec_to_dvector(residual), &w, eps, p).map_err(to_py_err)
}

/// The smoothed residual f_eps given a residual vector.
#[pyfunction]
fn smoothed_residual(residual: Vec<f64>, eps: f64, p: f64) -> PyResult<f64> {
    functional::smoothed_residual_of(&vec_to_dvector(residual), eps, p).map_err(to_py_err)
}

/// The minimizing weights (r_i^2 + eps^2)^((p-2)/2).
#[pyfunction]
fn optimal_weights(residual: Vec<f64>, eps: f64, p: f64) -> PyResult<Vec<f64>> {
    let w = functional::optimal_weights(&vec_to_dvector(residual), eps, p).map_err(to_py_err)?;
    Ok(w.as_vector().iter().copied().collect())
}

/// The epsilon update min(max(min|r|, eps_tilde), eps, max|r|).
#[pyfunction]
fn update_epsilon(residual: Vec<f64>, eps: f64, eps_tilde: f64) -> PyResult<f64> {
    Ok(functional::update_epsilon(&vec_to_dvector(residual), eps, eps_tilde)
        .map_err(to_py_err)?
        .next_eps)
}

/// Error-recursion constants (mu, nu) for the given parameters.
#[pyfunction]
fn mu_nu(p: f64, m: usize, beta: f64, c_hat: f64) -> PyResult<(f64, f64)> {
    let d = diag::compute_mu_nu(p, m, beta, c_hat).map_err(to_py_err)?;
    Ok((d.mu, d.nu))
}

/// Relative recovery error, optionally modulo a sign flip.
#[pyfunction]
#[pyo3(signature = (estimate, x_star, sign_invariant=false))]
fn recovery_error(estimate: Vec<f64>, x_star: Vec<f64>, sign_invariant: bool) -> f64 {
    relative_error(
        &vec_to_dvector(estimate),
        &vec_to_dvector(x_star),
        sign_invariant,
    )
}

/// Zero-pad a restricted vector onto a support.
#[pyfunction]
fn pad_support(x: Vec<f64>, support: Vec<usize>, n: usize) -> PyResult<Vec<f64>> {
    if x.len() != support.len() {
        return Err(PyValueError::new_err("x and support lengths differ"));
    }
    Ok(zero_pad(&vec_to_dvector(x), &support, n).iter().copied().collect())
}

#[pymodule]
fn nrirls_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyIrlsOptions>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(smoothed_residual, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_weights, m)?)?;
    m.add_function(wrap_pyfunction!(update_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(mu_nu, m)?)?;
    m.add_function(wrap_pyfunction!(recovery_error, m)?)?;
    m.add_function(wrap_pyfunction!(pad_support, m)?)?;
    Ok(())
}
