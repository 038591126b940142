use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use opendyn::conditions::ConditionParams;
use opendyn::inducing::default_base;
use opendyn::maps::IntervalMap;
use opendyn::open_system::Hole;

use crate::CliError;

/// Experiment keys shared by the config file and the command line. Every key is
/// optional here; [`Settings::resolve`] fills in the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Map spec: logistic:<λ>, tent:<s>, doubling, tripling, chebyshev[:k], plm:<path>
    #[arg(long)]
    pub map: Option<String>,
    /// Hole spec, e.g. "(1/3,2/3)" or "(0.2,0.3) center=0.25; (0.7,0.8)"; "none" for no hole
    #[arg(long)]
    pub hole: Option<String>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Comma-separated list of t values
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub t_values: Option<Vec<f64>>,
    /// Search range for the dimension root, "lo,hi"
    #[arg(long, value_delimiter = ',')]
    pub t_range: Option<Vec<f64>>,
    /// Uniform cells before anchors are inserted
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo starts, or sample points for the expansion check
    #[arg(long)]
    pub samples: Option<usize>,
    /// Iterates for survivor fits, Monte Carlo and convergence traces
    #[arg(long)]
    pub steps: Option<usize>,
    /// Eigen residual tolerance
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Inducing depth
    #[arg(long)]
    pub depth: Option<usize>,
    /// Inducing piece budget
    #[arg(long)]
    pub budget: Option<usize>,
    /// Inducing base interval, "lo,hi"
    #[arg(long, value_delimiter = ',')]
    pub base: Option<Vec<f64>>,
    /// Survivor refinement depth for box counting
    #[arg(long)]
    pub box_depth: Option<usize>,
    /// Pressure samples on the dimension search range
    #[arg(long)]
    pub curve_samples: Option<usize>,
    #[arg(long)]
    pub bowen_tol: Option<f64>,
    /// Centre of the shrinking holes
    #[arg(long)]
    pub center: Option<f64>,
    /// Radii 2^-k for k in "k_min,k_max"
    #[arg(long, value_delimiter = ',')]
    pub eps_k: Option<Vec<i32>>,
    #[arg(long)]
    pub cells_in_hole: Option<usize>,
    /// Slow-approach exponent
    #[arg(long)]
    pub varsigma: Option<f64>,
    /// Initial density of the convergence trace: one | density
    #[arg(long)]
    pub psi: Option<String>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub big_lambda: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub delta0: Option<f64>,
    /// Also write the operator in coordinate format
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub export_operator: Option<bool>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl ExperimentConfig {
    /// Keys set in `flags` replace those of `self`.
    pub fn overlay(mut self, flags: &ExperimentConfig) -> Self {
        overlay!(
            self, flags, map, hole, t, t_values, t_range, grid, seed, samples, steps, tol, max_iter, depth,
            budget, base, box_depth, curve_samples, bowen_tol, center, eps_k, cells_in_hole, varsigma, psi,
            horizon, gamma, kappa, big_lambda, theta, delta0, export_operator
        );
        self
    }

    /// Reads a TOML config, or the `config` table of a previous run's `manifest.json`.
    /// Returns the config and, for manifests, the recorded subcommand.
    pub fn load(path: &Path) -> Result<(Self, Option<String>), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct Manifest {
                subcommand: String,
                config: ExperimentConfig,
            }
            let m: Manifest = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Ok((m.config, Some(m.subcommand)))
        } else {
            let c = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Ok((c, None))
        }
    }
}

/// Fully materialized experiment parameters, echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub map: String,
    pub hole: String,
    pub t: f64,
    pub t_values: Vec<f64>,
    pub t_range: Vec<f64>,
    pub grid: usize,
    pub seed: u64,
    pub samples: usize,
    pub steps: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub depth: usize,
    pub budget: usize,
    pub base: Vec<f64>,
    pub box_depth: usize,
    pub curve_samples: usize,
    pub bowen_tol: f64,
    pub center: Option<f64>,
    pub eps_k: Vec<i32>,
    pub cells_in_hole: usize,
    pub varsigma: f64,
    pub psi: String,
    pub horizon: usize,
    pub gamma: f64,
    pub kappa: f64,
    pub big_lambda: f64,
    pub theta: Option<f64>,
    pub delta0: f64,
    pub export_operator: bool,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn pair<T: Copy>(v: &Option<Vec<T>>, name: &str, default: [T; 2]) -> Result<Vec<T>, CliError> {
    match v {
        None => Ok(default.to_vec()),
        Some(v) if v.len() == 2 => Ok(v.clone()),
        Some(v) => Err(CliError::Config(format!("{name} needs two values, got {}", v.len()))),
    }
}

impl Settings {
    pub fn resolve(cmd: &str, c: &ExperimentConfig, base_dir: Option<PathBuf>) -> Result<Self, CliError> {
        let map = c
            .map
            .clone()
            .ok_or_else(|| CliError::Config("no map given (--map or `map = ...`)".into()))?;
        let parsed = IntervalMap::parse_spec(&map, base_dir.as_deref()).map_err(|e| CliError::Config(e.to_string()))?;
        let hole = c.hole.clone().unwrap_or_else(|| "none".into());
        Hole::parse(&hole).map_err(|e| CliError::Config(e.to_string()))?;
        let t = c.t.unwrap_or(1.0);
        let t_values = match (&c.t_values, c.t, cmd) {
            (Some(v), ..) if !v.is_empty() => v.clone(),
            (Some(_), ..) => return Err(CliError::Config("t_values is empty".into())),
            (None, None, "variational") => vec![0.7, 0.8, 1.0, 1.2, 1.3],
            _ => vec![t],
        };
        let defaults = ConditionParams::default();
        let (b0, b1) = default_base(&parsed);
        let s = Self {
            t_values,
            t_range: pair(&c.t_range, "t_range", [0.3, 1.2])?,
            grid: c.grid.unwrap_or(1024),
            seed: c.seed.unwrap_or(1),
            samples: c
                .samples
                .unwrap_or(if cmd == "check-conditions" { 1000 } else { 1_000_000 }),
            steps: c.steps.unwrap_or(60),
            tol: c.tol.unwrap_or(1e-12),
            max_iter: c.max_iter.unwrap_or(100_000),
            depth: c.depth.unwrap_or(40),
            budget: c.budget.unwrap_or(1_000_000),
            base: pair(&c.base, "base", [b0, b1])?,
            box_depth: c.box_depth.unwrap_or(12),
            curve_samples: c.curve_samples.unwrap_or(10),
            bowen_tol: c.bowen_tol.unwrap_or(1e-6),
            center: c.center,
            eps_k: pair(&c.eps_k, "eps_k", [6, 12])?,
            cells_in_hole: c.cells_in_hole.unwrap_or(32),
            varsigma: c.varsigma.unwrap_or(0.1),
            psi: c.psi.clone().unwrap_or_else(|| "one".into()),
            horizon: c.horizon.unwrap_or(defaults.horizon),
            gamma: c.gamma.unwrap_or(defaults.gamma),
            kappa: c.kappa.unwrap_or(defaults.kappa),
            big_lambda: c.big_lambda.unwrap_or(defaults.big_lambda),
            theta: c.theta.or(defaults.theta),
            delta0: c.delta0.unwrap_or(defaults.delta0),
            export_operator: c.export_operator.unwrap_or(false),
            map,
            hole,
            t,
            base_dir,
        };
        s.validate(cmd)?;
        Ok(s)
    }

    fn validate(&self, cmd: &str) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.grid == 0 {
            return bad("grid must be positive".into());
        }
        if self.t_values.iter().chain([&self.t]).any(|t| !t.is_finite()) {
            return bad("t must be finite".into());
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return bad("tol and max_iter must be positive".into());
        }
        if !matches!(self.psi.as_str(), "one" | "density") {
            return bad(format!("psi must be `one` or `density`, got `{}`", self.psi));
        }
        if self.eps_k[0] > self.eps_k[1] {
            return bad("eps_k needs k_min <= k_max".into());
        }
        if cmd == "zerohole" && self.center.is_none() {
            return bad("zerohole needs a centre (--center or `center = ...`)".into());
        }
        if cmd == "escape" && self.samples == 0 {
            return bad("samples must be positive".into());
        }
        Ok(())
    }

    pub fn interval_map(&self) -> Result<IntervalMap, CliError> {
        IntervalMap::parse_spec(&self.map, self.base_dir.as_deref()).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn hole(&self) -> Result<Hole, CliError> {
        Hole::parse(&self.hole).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn conditions(&self) -> ConditionParams {
        ConditionParams {
            gamma: self.gamma,
            kappa: self.kappa,
            big_lambda: self.big_lambda,
            theta: self.theta,
            delta0: self.delta0,
            horizon: self.horizon,
        }
    }

    pub fn eigen(&self) -> opendyn::spectral::EigenOptions {
        opendyn::spectral::EigenOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_keys() {
        let file: ExperimentConfig = toml::from_str("map = \"tripling\"\nt = 0.5\ngrid = 81\n").unwrap();
        let flags = ExperimentConfig {
            t: Some(0.9),
            ..Default::default()
        };
        let c = file.overlay(&flags);
        assert_eq!(c.map.as_deref(), Some("tripling"));
        assert_eq!(c.t, Some(0.9));
        assert_eq!(c.grid, Some(81));
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let err = toml::from_str::<ExperimentConfig>("map = \"doubling\"\ngird = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gird") && msg.contains('2'), "{msg}");
    }

    #[test]
    fn defaults_are_materialized() {
        let c = ExperimentConfig {
            map: Some("logistic:4".into()),
            ..Default::default()
        };
        let s = Settings::resolve("variational", &c, None).unwrap();
        assert_eq!(s.t_values, vec![0.7, 0.8, 1.0, 1.2, 1.3]);
        assert_eq!(s.base, vec![0.52, 0.98]);
        assert_eq!(s.hole, "none");
        assert!(matches!(Settings::resolve("zerohole", &c, None), Err(CliError::Config(_))));
        let none = ExperimentConfig::default();
        assert!(matches!(Settings::resolve("pressure", &none, None), Err(CliError::Config(_))));
    }
}
