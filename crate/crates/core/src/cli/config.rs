//! Flat key=value experiment configuration files, one experiment per file.
//!
//! ```text
//! # lines starting with # are comments
//! family=phase_retrieval        # simple_1d | perturbed_rip | phase_retrieval | impulsive_noise
//! p=1,1.5                      # grids are comma-separated lists
//! k=1,3
//! kappa=1
//! rho=0,0.5                    # perturbed_rip only
//! alpha_p=0.3,0.1              # impulsive_noise only
//! n=20
//! m=12
//! trials=20
//! mode=greedy                  # greedy | support (solve on the true support)
//! success_threshold=0.01
//! omega=100
//! eps_tilde=1e-8
//! stop_eps=0
//! max_outer_iters=50
//! num_starts=3
//! start_radius=1
//! base_seed=12345
//! out=runs/pr                  # writes runs/pr_records.csv + runs/pr_summary.csv
//! record_runtime=false         # keep false for bit-identical reruns
//! starts=0,0.25,0.5,0.75,1     # simple_1d start grid
//! y=0,0.9                      # simple_1d measurements
//! ```

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentFamily {
    Simple1d,
    PerturbedRip,
    PhaseRetrieval,
    ImpulsiveNoise,
}

impl ExperimentFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentFamily::Simple1d => "simple_1d",
            ExperimentFamily::PerturbedRip => "perturbed_rip",
            ExperimentFamily::PhaseRetrieval => "phase_retrieval",
            ExperimentFamily::ImpulsiveNoise => "impulsive_noise",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "simple_1d" => Some(ExperimentFamily::Simple1d),
            "perturbed_rip" => Some(ExperimentFamily::PerturbedRip),
            "phase_retrieval" => Some(ExperimentFamily::PhaseRetrieval),
            "impulsive_noise" => Some(ExperimentFamily::ImpulsiveNoise),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryMode {
    /// Full greedy support search.
    Greedy,
    /// Solve restricted to the true support.
    Support,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub family: ExperimentFamily,
    pub p_grid: Vec<f64>,
    pub k_grid: Vec<usize>,
    pub rho_grid: Vec<f64>,
    pub kappa_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub mode: RecoveryMode,
    pub success_threshold: f64,
    pub omega: f64,
    pub eps_tilde: f64,
    pub stop_eps: f64,
    pub max_outer_iters: usize,
    pub num_starts: usize,
    pub start_radius: f64,
    pub base_seed: u64,
    pub output_prefix: PathBuf,
    pub record_runtime: bool,
    /// Solution norm of the sparse families.
    pub norm: f64,
    /// Start grid of the toy family.
    pub starts_1d: Vec<f64>,
    /// Measurements of the toy family.
    pub y_simple: [f64; 2],
}

impl ExperimentConfig {
    /// Family-specific defaults; explicit keys override them.
    pub fn defaults(family: ExperimentFamily) -> Self {
        let (omega, threshold, norm, kappa) = match family {
            ExperimentFamily::Simple1d => (0.0, 1e-3, 1.0, 1.0),
            ExperimentFamily::PerturbedRip => (0.0, 0.01, 0.015, 1.0),
            ExperimentFamily::PhaseRetrieval => (100.0, 0.01, 1.0, 1.0),
            ExperimentFamily::ImpulsiveNoise => (100.0, 0.05, 1.0, 0.5),
        };
        ExperimentConfig {
            family,
            p_grid: vec![1.0],
            k_grid: vec![1],
            rho_grid: vec![0.0],
            kappa_grid: vec![kappa],
            alpha_grid: vec![0.0],
            n: 20,
            m: 12,
            trials: 20,
            mode: RecoveryMode::Greedy,
            success_threshold: threshold,
            omega,
            eps_tilde: 1e-8,
            stop_eps: 0.0,
            max_outer_iters: 50,
            num_starts: 3,
            start_radius: norm,
            base_seed: 0,
            output_prefix: PathBuf::from("experiment"),
            record_runtime: false,
            norm,
            starts_1d: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            y_simple: [0.0, 0.9],
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn parse(path_label: &str, text: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path_label.to_string(),
            line,
            msg,
        };

        // The family decides the defaults, so find it first.
        let mut family = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(value) = line.strip_prefix("family=") {
                family = Some(
                    ExperimentFamily::parse(value.trim())
                        .ok_or_else(|| err(i + 1, format!("unknown family `{}`", value.trim())))?,
                );
            }
        }
        let family = family.ok_or_else(|| err(1, "missing `family` key".into()))?;
        let mut config = Self::defaults(family);

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, "expected key=value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| err(line_no, format!("bad {what} value `{value}`"));
            match key {
                "family" => {}
                "p" => config.p_grid = parse_list(value).map_err(|_| bad("p"))?,
                "k" => config.k_grid = parse_list(value).map_err(|_| bad("k"))?,
                "rho" => config.rho_grid = parse_list(value).map_err(|_| bad("rho"))?,
                "kappa" => config.kappa_grid = parse_list(value).map_err(|_| bad("kappa"))?,
                "alpha_p" => config.alpha_grid = parse_list(value).map_err(|_| bad("alpha_p"))?,
                "n" => config.n = value.parse().map_err(|_| bad("n"))?,
                "m" => config.m = value.parse().map_err(|_| bad("m"))?,
                "trials" => config.trials = value.parse().map_err(|_| bad("trials"))?,
                "mode" => {
                    config.mode = match value {
                        "greedy" => RecoveryMode::Greedy,
                        "support" => RecoveryMode::Support,
                        _ => return Err(bad("mode")),
                    }
                }
                "success_threshold" => {
                    config.success_threshold = value.parse().map_err(|_| bad("success_threshold"))?
                }
                "omega" => config.omega = value.parse().map_err(|_| bad("omega"))?,
                "eps_tilde" => config.eps_tilde = value.parse().map_err(|_| bad("eps_tilde"))?,
                "stop_eps" => config.stop_eps = value.parse().map_err(|_| bad("stop_eps"))?,
                "max_outer_iters" => {
                    config.max_outer_iters = value.parse().map_err(|_| bad("max_outer_iters"))?
                }
                "num_starts" => config.num_starts = value.parse().map_err(|_| bad("num_starts"))?,
                "start_radius" => {
                    config.start_radius = value.parse().map_err(|_| bad("start_radius"))?
                }
                "base_seed" => config.base_seed = value.parse().map_err(|_| bad("base_seed"))?,
                "out" => config.output_prefix = PathBuf::from(value),
                "record_runtime" => {
                    config.record_runtime = value.parse().map_err(|_| bad("record_runtime"))?
                }
                "norm" => config.norm = value.parse().map_err(|_| bad("norm"))?,
                "starts" => config.starts_1d = parse_list(value).map_err(|_| bad("starts"))?,
                "y" => {
                    let vals: Vec<f64> = parse_list(value).map_err(|_| bad("y"))?;
                    if vals.len() != 2 {
                        return Err(err(line_no, "y needs exactly two values".into()));
                    }
                    config.y_simple = [vals[0], vals[1]];
                }
                _ => return Err(err(line_no, format!("unknown key `{key}`"))),
            }
        }
        config.validate(path_label)?;
        Ok(config)
    }

    fn validate(&self, path_label: &str) -> Result<()> {
        let bad = |msg: &str| Error::Parse {
            path: path_label.to_string(),
            line: 0,
            msg: msg.to_string(),
        };
        if self.trials == 0 {
            return Err(bad("trials must be at least 1"));
        }
        if self.p_grid.is_empty() || self.k_grid.is_empty() {
            return Err(bad("grids must be nonempty"));
        }
        if self.family == ExperimentFamily::Simple1d && self.starts_1d.is_empty() {
            return Err(bad("the toy family needs at least one start"));
        }
        for p in &self.p_grid {
            if !(1.0..=2.0).contains(p) {
                return Err(bad("p values must lie in [1, 2]"));
            }
        }
        Ok(())
    }

    /// `desk` is the fast default size; `paper` selects the larger setting.
    pub fn apply_scale(&mut self, scale: &str) -> Result<()> {
        match scale {
            "desk" => {
                self.n = 20;
                self.m = 12;
            }
            "paper" => {
                self.n = 80;
                self.m = 30;
            }
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown scale `{scale}` (expected desk or paper)"
                )))
            }
        }
        Ok(())
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, ()> {
    let items = value
        .split(',')
        .map(|tok| tok.trim().parse::<T>().map_err(|_| ()))
        .collect::<std::result::Result<Vec<T>, ()>>()?;
    if items.is_empty() {
        Err(())
    } else {
        Ok(items)
    }
}
