//! Solver flags, optionally backed by a `key = value` file.

use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use highreg::oracle::Problem;
use highreg::{registry, ArpccConfig, ArpgcConfig};

/// Bad user input; reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    /// Registry problem name (see `list-problems`).
    #[arg(long)]
    pub problem: Option<String>,
    /// Taylor model order: 1, 2 or 3.
    #[arg(long)]
    pub p: Option<usize>,
    /// Criticality tolerance of the bound-constrained solver.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Primal tolerance of the constrained solver.
    #[arg(long)]
    pub eps_p: Option<f64>,
    /// Dual tolerance of the constrained solver.
    #[arg(long)]
    pub eps_d: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    #[arg(long)]
    pub sigma_min: Option<f64>,
    /// Subproblem criticality factor.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma3: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub eta1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub eta2: Option<f64>,
    /// Outer iteration budget of each bound-constrained solve.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Target budget of the constrained solver.
    #[arg(long)]
    pub max_targets: Option<usize>,
    /// Write the JSON Lines trace here.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Perturb the problem's starting point with this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key = value` file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> anyhow::Result<T> {
    value
        .parse()
        .map_err(|_| usage(format!("invalid value {value:?} for {key}")))
}

fn fill<T: FromStr>(slot: &mut Option<T>, key: &str, value: &str) -> anyhow::Result<()> {
    let v = parse(key, value)?;
    if slot.is_none() {
        *slot = Some(v);
    }
    Ok(())
}

impl SolverArgs {
    /// Fills every flag not given on the command line from the config file.
    pub fn resolve(mut self) -> anyhow::Result<Self> {
        if let Some(path) = self.config.clone() {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            self.merge_config(&text)?;
        }
        Ok(self)
    }

    pub fn merge_config(&mut self, text: &str) -> anyhow::Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                usage(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim().replace('_', "-");
            let value = value.trim();
            self.set(&key, value)
                .map_err(|e| usage(format!("config line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        match key {
            "problem" => fill(&mut self.problem, key, value),
            "p" => fill(&mut self.p, key, value),
            "eps" => fill(&mut self.eps, key, value),
            "eps-p" => fill(&mut self.eps_p, key, value),
            "eps-d" => fill(&mut self.eps_d, key, value),
            "delta" => fill(&mut self.delta, key, value),
            "beta" => fill(&mut self.beta, key, value),
            "sigma0" => fill(&mut self.sigma0, key, value),
            "sigma-min" => fill(&mut self.sigma_min, key, value),
            "theta" => fill(&mut self.theta, key, value),
            "gamma1" => fill(&mut self.gamma1, key, value),
            "gamma2" => fill(&mut self.gamma2, key, value),
            "gamma3" => fill(&mut self.gamma3, key, value),
            "eta1" => fill(&mut self.eta1, key, value),
            "eta2" => fill(&mut self.eta2, key, value),
            "max-iters" => fill(&mut self.max_iters, key, value),
            "max-targets" => fill(&mut self.max_targets, key, value),
            "trace-out" => fill(&mut self.trace_out, key, value),
            "seed" => fill(&mut self.seed, key, value),
            _ => Err(usage(format!("unknown key {key:?}"))),
        }
    }

    pub fn problem(&self) -> anyhow::Result<Problem> {
        let name = self
            .problem
            .as_deref()
            .ok_or_else(|| usage("--problem is required"))?;
        registry::by_name(name).ok_or_else(|| {
            usage(format!(
                "unknown problem {name:?}; known problems: {}",
                registry::PROBLEM_NAMES.join(", ")
            ))
        })
    }

    /// Starting point, perturbed when a seed is given.
    pub fn start(&self, problem: &Problem) -> Vec<f64> {
        match self.seed {
            Some(seed) => problem.randomized_start(seed, 0.5),
            None => problem.x_start.clone(),
        }
    }

    pub fn arpcc(&self) -> anyhow::Result<ArpccConfig> {
        let d = ArpccConfig::default();
        let mut cfg = ArpccConfig {
            p: self.p.unwrap_or(d.p),
            sigma0: self.sigma0.unwrap_or(d.sigma0),
            sigma_min: self.sigma_min.unwrap_or(d.sigma_min),
            gamma1: self.gamma1.unwrap_or(d.gamma1),
            gamma2: self.gamma2.unwrap_or(d.gamma2),
            gamma3: self.gamma3.unwrap_or(d.gamma3),
            eta1: self.eta1.unwrap_or(d.eta1),
            eta2: self.eta2.unwrap_or(d.eta2),
            epsilon: self.eps.unwrap_or(d.epsilon),
            max_outer_iters: self.max_iters.unwrap_or(d.max_outer_iters),
            subsolver: d.subsolver,
        };
        if let Some(theta) = self.theta {
            cfg.subsolver.theta = theta;
        }
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn arpgc(&self) -> anyhow::Result<ArpgcConfig> {
        let d = ArpgcConfig::default();
        let inner = self.arpcc()?;
        let cfg = ArpgcConfig {
            eps_p: self.eps_p.unwrap_or(d.eps_p),
            eps_d: self.eps_d.unwrap_or(d.eps_d),
            delta: self.delta.unwrap_or(d.delta),
            beta: self.beta.unwrap_or(d.beta),
            inner,
            max_outer_targets: self.max_targets.or(d.max_outer_targets),
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

/// Parses a comma-separated tolerance list.
pub fn parse_grid(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',').map(|v| parse("--grid", v.trim())).collect()
}
