//! Command-line front end: single solves, diagnostics, and batched seeded
//! experiments with CSV output.

pub mod config;
pub mod experiment;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use crate::diagnostics::{
    check_lipcond, check_uscc1_on_trace, compute_mu_nu, compute_r_hat, estimate_bcc,
    probe_strong_convexity,
};
use crate::error::{Error, Result};
use crate::functional::{eval_energy, lp_norm, weighted_sq_residual};
use crate::irls::{multistart_convexified, run_convexified, run_nr_irls, MultistartPlan};
use crate::model::{IrlsConfig, ResidualMap, SolveReport, Weights};
use crate::problems::{io::load_instance, Family, ProblemInstance};
use crate::util::fmt_f64;

#[derive(Parser)]
#[command(
    name = "nrirls",
    about = "Minimal lp-norm residual fitting of nonlinear equations by iteratively reweighted least squares"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Solve a problem file and print the final iterate and residual.
    Solve(SolveArgs),
    /// Run a seeded experiment batch from a config file, writing CSVs.
    Experiment(ExperimentArgs),
    /// Estimate the structural condition numbers of a problem.
    Diagnose(DiagnoseArgs),
    /// Generate a seeded problem instance and write it as a problem file.
    Generate(GenerateArgs),
}

#[derive(Args, Clone)]
pub struct SolverFlags {
    /// Residual exponent, 1 <= p <= 2.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// Convexification weight; 0 runs the plain algorithm.
    #[arg(long, default_value_t = 0.0)]
    pub omega: f64,
    /// Floor of the epsilon schedule.
    #[arg(long = "eps-tilde", default_value_t = 1e-8)]
    pub eps_tilde: f64,
    /// Terminate once eps falls to this value.
    #[arg(long = "stop-eps", default_value_t = 0.0)]
    pub stop_eps: f64,
    /// Maximum outer iterations.
    #[arg(long = "max-iters", default_value_t = 50)]
    pub max_iters: usize,
    /// Seed for every random choice made by the command.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of multistart points.
    #[arg(long, default_value_t = 1)]
    pub starts: usize,
    /// Radius of the ball the start points are drawn from.
    #[arg(long = "start-radius", default_value_t = 1.0)]
    pub start_radius: f64,
}

impl SolverFlags {
    pub fn to_config(&self) -> IrlsConfig {
        IrlsConfig {
            p: self.p,
            eps_tilde: self.eps_tilde,
            stop_eps: self.stop_eps,
            max_outer_iters: self.max_iters,
            omega: self.omega,
            ..Default::default()
        }
    }
}

#[derive(Args)]
pub struct SolveArgs {
    /// Problem file (see the problems module documentation for the format).
    pub problem: PathBuf,
    #[command(flatten)]
    pub flags: SolverFlags,
    /// Explicit start point as comma-separated values (overrides --starts).
    #[arg(long)]
    pub x0: Option<String>,
    /// Write the outer trace as CSV (columns n,eps,J,lp_residual,step_norm).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExperimentArgs {
    /// Experiment config file (key=value lines).
    pub config: PathBuf,
    /// Override the problem sizes: desk (N=20, m=12) or paper (N=80, m=30).
    #[arg(long)]
    pub scale: Option<String>,
    /// Override the output path prefix.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct DiagnoseArgs {
    /// Problem file.
    pub problem: PathBuf,
    #[command(flatten)]
    pub flags: SolverFlags,
    /// Number of sample points for the coercivity estimate.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Sampling radius around the reference point.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Report the error-recursion constants for this strong-convexity
    /// constant (requires --beta).
    #[arg(long = "c-hat")]
    pub c_hat: Option<f64>,
    /// Coercivity upper bound used with --c-hat.
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Output problem file.
    pub out: PathBuf,
    /// simple_1d | perturbed_rip | phase_retrieval
    #[arg(long, default_value = "phase_retrieval")]
    pub family: String,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 12)]
    pub m: usize,
    /// Sparsity of the ground truth.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Decay rate of the sorted magnitudes.
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    /// Nonlinearity strength of the perturbed sensing family.
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    /// Solution norm (defaults per family).
    #[arg(long)]
    pub norm: Option<f64>,
    /// Residual exponent recorded in the metadata.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// Impulse probability of Bernoulli-Gaussian measurement noise.
    #[arg(long = "alpha-p", default_value_t = 0.0)]
    pub alpha_p: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Measurements of the toy family.
    #[arg(long)]
    pub y: Option<String>,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Experiment(args) => cmd_experiment(&args),
        Command::Diagnose(args) => cmd_diagnose(&args),
        Command::Generate(args) => cmd_generate(&args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    use crate::problems::{make_instance, io::save_instance, InstanceParams, NoiseSpec};
    let mut params = match args.family.as_str() {
        "simple_1d" => {
            let y = match &args.y {
                Some(text) => {
                    let v = parse_vector(text)?;
                    if v.len() != 2 {
                        return Err(Error::InvalidConfig("toy y needs two values".into()));
                    }
                    [v[0], v[1]]
                }
                None => [0.0, 0.9],
            };
            InstanceParams::simple_1d(y, args.p)
        }
        "perturbed_rip" => InstanceParams::perturbed_rip(args.n, args.m, args.k, args.rho, args.p),
        "phase_retrieval" => {
            InstanceParams::phase_retrieval(args.n, args.m, args.k, args.kappa, args.p)
        }
        other => {
            return Err(Error::InvalidConfig(format!("unknown family `{other}`")));
        }
    };
    params.kappa = args.kappa;
    if let Some(norm) = args.norm {
        params.norm = norm;
    }
    let noise = (args.alpha_p > 0.0).then_some(NoiseSpec {
        alpha_p: args.alpha_p,
        ..Default::default()
    });
    let instance = make_instance(&params, noise.as_ref(), args.seed)?;
    save_instance(&instance, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn parse_vector(text: &str) -> Result<DVector<f64>> {
    let values = text
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad number `{}` in --x0", tok.trim())))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DVector::from_vec(values))
}

/// Sensing instances are underdetermined on the full space; solves happen
/// on the stored support restriction. Returns the map to solve on and the
/// support when a restriction was applied.
fn solve_map(instance: &ProblemInstance) -> Result<(std::sync::Arc<dyn ResidualMap>, Option<Vec<usize>>)> {
    if instance.map.dim_in() <= instance.map.dim_out() {
        return Ok((instance.map.share(), None));
    }
    match &instance.support {
        Some(support) => {
            let restricted = crate::problems::restrict_to_support(instance.map.share(), support)?;
            Ok((std::sync::Arc::new(restricted), Some(support.clone())))
        }
        None => Err(Error::InvalidConfig(
            "underdetermined instance carries no support to restrict to".into(),
        )),
    }
}

fn solve_instance(
    map: &dyn ResidualMap,
    y: &DVector<f64>,
    flags: &SolverFlags,
    x0: Option<DVector<f64>>,
) -> Result<SolveReport> {
    let config = flags.to_config();
    match x0 {
        Some(start) => {
            if config.omega > 0.0 {
                run_convexified(map, y, &config, &start)
            } else {
                run_nr_irls(map, y, &config, &start)
            }
        }
        None => {
            let plan = MultistartPlan::random_in_ball(flags.starts.max(1), flags.start_radius);
            let (best, _) = multistart_convexified(map, y, &config, &plan, flags.seed)?;
            Ok(best)
        }
    }
}

/// Render the outer trace as CSV.
pub fn trace_csv(report: &SolveReport, map: &dyn ResidualMap, y: &DVector<f64>, p: f64) -> String {
    let mut out = String::from("n,eps,J,lp_residual,step_norm\n");
    let mut prev: Option<&DVector<f64>> = None;
    for state in &report.iterates {
        let residual = lp_norm(&(map.eval(&state.x) - y), p).unwrap_or(f64::NAN);
        let step = prev.map(|xp| (&state.x - xp).norm()).unwrap_or(0.0);
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            state.n,
            fmt_f64(state.eps),
            fmt_f64(state.j_value),
            fmt_f64(residual),
            fmt_f64(step)
        ));
        prev = Some(&state.x);
    }
    out
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let instance = load_instance(&args.problem)?;
    let x0 = args.x0.as_deref().map(parse_vector).transpose()?;
    let (map, support) = solve_map(&instance)?;
    let report = solve_instance(map.as_ref(), &instance.y, &args.flags, x0)?;
    let full_x = match &support {
        Some(sup) => crate::problems::zero_pad(&report.final_x, sup, instance.map.dim_in()),
        None => report.final_x.clone(),
    };
    let xs: Vec<String> = full_x.iter().map(|v| format!("{v}")).collect();
    println!("final_x: [{}]", xs.join(", "));
    if let Some(sup) = &support {
        let s: Vec<String> = sup.iter().map(|i| i.to_string()).collect();
        println!("restricted_to_support: [{}]", s.join(", "));
    }
    println!("lp_residual: {}", report.final_lp_residual);
    println!("termination: {}", report.termination.as_str());
    println!("outer_iterations: {}", report.outer_iterations());
    println!("final_eps: {}", report.final_eps());
    if let Some(path) = &args.out {
        let csv = trace_csv(&report, map.as_ref(), &instance.y, args.flags.p);
        std::fs::write(path, csv)?;
        println!("trace written to {}", path.display());
    }
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let mut config = config::ExperimentConfig::load(&args.config)?;
    if let Some(scale) = &args.scale {
        config.apply_scale(scale)?;
    }
    if let Some(out) = &args.out {
        config.output_prefix = out.clone();
    }
    let outcome = experiment::run_experiment(&config)?;
    println!(
        "wrote {} records to {} and {} summary rows to {}",
        outcome.records,
        outcome.records_path.display(),
        outcome.summary_rows,
        outcome.summary_path.display()
    );
    Ok(())
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<()> {
    let instance = load_instance(&args.problem)?;
    let map = instance.map.as_dyn();
    let p = args.flags.p;
    let y = &instance.y;

    // Coercivity sweep around the reference point. The toy family lives on
    // [0, 1], where its closed-form bounds hold; other families are probed
    // in a ball around the ground truth.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.flags.seed);
    let samples: Vec<DVector<f64>> = (0..args.samples.max(1))
        .map(|_| match instance.family {
            Family::Simple1d => DVector::from_vec(vec![rng.random::<f64>()]),
            _ => {
                let k = map.dim_in();
                let mut dir = DVector::from_fn(k, |_, _| {
                    rng.sample::<f64, _>(rand_distr::StandardNormal)
                });
                let norm = dir.norm();
                if norm > 0.0 {
                    dir /= norm;
                }
                let u: f64 = rng.random();
                &instance.x_star + dir * (args.radius * u.powf(1.0 / k as f64))
            }
        })
        .filter(|z| (z - &instance.x_star).norm() > 1e-12)
        .collect();
    let bcc = estimate_bcc(map, &instance.x_star, &samples, p)?;
    println!("alpha_hat: {}", bcc.alpha_hat);
    println!("beta_hat: {}", bcc.beta_hat);

    // Boundedness radius from the data alone.
    let w0 = Weights::ones(map.dim_out());
    let x0 = DVector::zeros(map.dim_in());
    let j0 = eval_energy(map, &x0, y, &w0, 1.0, p)?;
    let res0 = lp_norm(&(map.eval(&x0) - y), p)?;
    let r_hat = compute_r_hat(j0, bcc.alpha_hat, res0, p)?;
    println!("r_hat: {r_hat}");

    // A solve provides the trace-based diagnostics.
    let (target, _) = solve_map(&instance)?;
    let report = solve_instance(target.as_ref(), y, &args.flags, None)?;
    println!("solve_termination: {}", report.termination.as_str());
    println!("solve_lp_residual: {}", report.final_lp_residual);

    let ratios = check_uscc1_on_trace(&report, target.as_ref(), y, p).unwrap_or_default();
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_ratio.is_finite() {
        println!("uscc1_min_ratio: {min_ratio}");
    } else {
        println!("uscc1_min_ratio: n/a");
    }

    // Strong convexity of the final weighted objective around the solution.
    let final_state = report.final_state();
    let w_final = final_state.w.clone();
    let solve_target = target.as_ref();
    let objective = |x: &DVector<f64>| {
        weighted_sq_residual(solve_target, x, y, &w_final).unwrap_or(f64::INFINITY)
    };
    let c = probe_strong_convexity(
        objective,
        &report.final_x,
        args.radius.min(0.5),
        20,
        args.flags.seed,
    )?;
    println!("strong_convexity_estimate: {c}");

    // Convex-combination Lipschitz constant between the first two distinct
    // iterates of the trace.
    let lip = report
        .iterates
        .windows(2)
        .find(|pair| (&pair[0].x - &pair[1].x).norm() > 1e-12)
        .map(|pair| {
            check_lipcond(
                solve_target,
                y,
                &pair[0].w,
                &pair[0].x,
                &pair[1].x,
                &[0.1, 0.25, 0.5, 0.75, 0.9],
            )
        })
        .transpose()?;
    match lip {
        Some(l) => println!("lipcond_estimate: {l}"),
        None => println!("lipcond_estimate: n/a"),
    }

    if let Some(c_hat) = args.c_hat {
        let beta = args.beta.unwrap_or(bcc.beta_hat);
        let d = compute_mu_nu(p, map.dim_out(), beta, c_hat)?;
        println!("mu: {}", d.mu);
        println!("nu: {}", d.nu);
        println!("contraction: {}", d.contraction);
    }
    Ok(())
}
