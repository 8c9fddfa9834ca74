//! Adaptive regularization with `p`-th order models for convex constraints.
//!
//! Each iteration builds the regularized Taylor model at the current
//! iterate, approximately minimizes it over the feasible set, and compares
//! the achieved decrease of the objective with the decrease predicted by the
//! Taylor polynomial. The ratio decides both acceptance and how the
//! regularization weight `sigma` moves:
//!
//! | ratio                 | outcome         | next `sigma`                    |
//! |-----------------------|-----------------|---------------------------------|
//! | `rho > eta2`          | very successful | `max(sigma_min, gamma1 sigma)`  |
//! | `eta1 <= rho <= eta2` | successful      | `sigma`                         |
//! | `rho < eta1`          | unsuccessful    | `gamma2 sigma`                  |
//!
//! After an unsuccessful iteration the derivatives are reused; only the
//! objective value at the new trial point is evaluated.
//!
//! The helpers [`kappa_u`], [`kappa_s`], [`sigma_upper_bound`] and
//! [`successful_iteration_bound`] compute the worst-case constants used by
//! the trace checks in [`crate::replay`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criticality::chi;
use crate::feasible::{FeasibleSet, FeasibleSetError};
use crate::model::{norm2, ModelState};
use crate::oracle::{EvalCounters, Oracle, OracleError};
use crate::subsolver::{solve_subproblem, SubsolverControls, SubsolverError};
use crate::tensor::{TaylorData, TensorError, MAX_ORDER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("p must be 1, 2 or 3 (got {0})")]
    Order(usize),
    #[error("need sigma0 >= sigma_min > 0 (sigma0 = {sigma0}, sigma_min = {sigma_min})")]
    Sigma { sigma0: f64, sigma_min: f64 },
    #[error("need gamma3 >= gamma2 > 1 > gamma1 > 0 (got {gamma1}, {gamma2}, {gamma3})")]
    Gammas {
        gamma1: f64,
        gamma2: f64,
        gamma3: f64,
    },
    #[error("need 1 > eta2 >= eta1 > 0 (got eta1 = {eta1}, eta2 = {eta2})")]
    Etas { eta1: f64, eta2: f64 },
    #[error("epsilon must lie in (0, 1] (got {0})")]
    Epsilon(f64),
    #[error("max_outer_iters must be positive")]
    Budget,
    #[error("invalid subsolver controls: {0}")]
    Subsolver(String),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArpccConfig {
    pub p: usize,
    pub sigma0: f64,
    pub sigma_min: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub epsilon: f64,
    pub max_outer_iters: usize,
    #[serde(skip)]
    pub subsolver: SubsolverControls,
}

impl Default for ArpccConfig {
    fn default() -> Self {
        Self {
            p: 2,
            sigma0: 1.0,
            sigma_min: 1e-8,
            gamma1: 0.5,
            gamma2: 2.0,
            gamma3: 4.0,
            eta1: 0.01,
            eta2: 0.9,
            epsilon: 1e-5,
            max_outer_iters: 1_000_000,
            subsolver: SubsolverControls::default(),
        }
    }
}

impl ArpccConfig {
    pub fn with_order(p: usize) -> Self {
        Self {
            p,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.p == 0 || self.p > MAX_ORDER {
            return Err(ConfigError::Order(self.p));
        }
        if !(self.sigma_min > 0.0 && self.sigma0 >= self.sigma_min && self.sigma0.is_finite()) {
            return Err(ConfigError::Sigma {
                sigma0: self.sigma0,
                sigma_min: self.sigma_min,
            });
        }
        if !(self.gamma1 > 0.0
            && self.gamma1 < 1.0
            && self.gamma2 > 1.0
            && self.gamma3 >= self.gamma2)
        {
            return Err(ConfigError::Gammas {
                gamma1: self.gamma1,
                gamma2: self.gamma2,
                gamma3: self.gamma3,
            });
        }
        if !(self.eta1 > 0.0 && self.eta2 >= self.eta1 && self.eta2 < 1.0) {
            return Err(ConfigError::Etas {
                eta1: self.eta1,
                eta2: self.eta2,
            });
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(ConfigError::Epsilon(self.epsilon));
        }
        if self.max_outer_iters == 0 {
            return Err(ConfigError::Budget);
        }
        self.subsolver
            .validate()
            .map_err(|e| ConfigError::Subsolver(e.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArpccError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("subproblem at iteration {iteration}: {source}")]
    Subsolver {
        iteration: usize,
        source: SubsolverError,
    },
    #[error(transparent)]
    Feasible(#[from] FeasibleSetError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    VerySuccessful,
    Successful,
    Unsuccessful,
}

impl Outcome {
    pub fn classify(rho: f64, eta1: f64, eta2: f64) -> Outcome {
        if rho > eta2 {
            Outcome::VerySuccessful
        } else if rho >= eta1 {
            Outcome::Successful
        } else {
            Outcome::Unsuccessful
        }
    }

    pub fn accepted(self) -> bool {
        !matches!(self, Outcome::Unsuccessful)
    }
}

/// Everything measured during one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub f: f64,
    pub sigma: f64,
    pub chi: f64,
    pub step_norm: f64,
    /// `T_p(x, 0) - T_p(x, s)`.
    pub model_decrease: f64,
    /// `m(s) - m(0)`.
    pub model_change: f64,
    pub chi_model: f64,
    /// `theta ||s||^p`.
    pub chi_model_bound: f64,
    /// Bound violation of `x + s`.
    pub step_violation: f64,
    /// `None` when the predicted decrease was too small to form a ratio.
    pub trial_f: Option<f64>,
    pub rho: Option<f64>,
    pub outcome: Outcome,
    pub sigma_next: f64,
    pub inner_iters: usize,
    pub counters: EvalCounters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArpccStatus {
    CriticalityReached,
    CustomPredicate,
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArpccResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// `chi` at `x`, from the last derivative evaluation.
    pub chi: f64,
    pub status: ArpccStatus,
    pub x0: Vec<f64>,
    pub f0: f64,
    pub trace: Vec<IterationRecord>,
    /// Counters once `f(x0)` and the derivatives at `x0` are known.
    pub start_counters: EvalCounters,
    pub counters: EvalCounters,
    pub successful: usize,
    pub max_sigma: f64,
    pub last_taylor: TaylorData,
}

/// What a custom stopping rule sees at an iterate.
pub struct StopPoint<'a> {
    pub x: &'a [f64],
    pub value: f64,
    pub taylor: &'a TaylorData,
    pub chi: f64,
}

impl StopPoint<'_> {
    pub fn gradient(&self) -> &[f64] {
        self.taylor.gradient()
    }
}

/// Custom stopping rule; it replaces the `chi <= epsilon` test when given.
pub type StopRule<'s, O> = &'s mut dyn FnMut(&O, &StopPoint<'_>) -> bool;

/// Deterministic regularization update.
pub fn sigma_update(sigma: f64, rho: f64, cfg: &ArpccConfig) -> f64 {
    match Outcome::classify(rho, cfg.eta1, cfg.eta2) {
        Outcome::VerySuccessful => (cfg.gamma1 * sigma).max(cfg.sigma_min),
        Outcome::Successful => sigma,
        Outcome::Unsuccessful => cfg.gamma2 * sigma,
    }
}

/// Bound on total over successful iterations while `sigma <= sigma_max`.
pub fn kappa_u(gamma1: f64, gamma2: f64, sigma0: f64, sigma_max: f64) -> f64 {
    let lg2 = gamma2.ln();
    (1.0 + gamma1.ln().abs() / lg2) + (sigma_max / sigma0).ln() / lg2
}

/// Constant in the per-success objective decrease bound
/// `f(x_k) - f(x_{k+1}) >= chi(x_{k+1})^((p+1)/p) / kappa_s`.
pub fn kappa_s(
    p: usize,
    eta1: f64,
    sigma_min: f64,
    kappa_n: f64,
    lipschitz: f64,
    theta: f64,
    sigma_max: f64,
) -> f64 {
    let pf = p as f64;
    (pf + 1.0) / (eta1 * sigma_min)
        * (2.0 * kappa_n * (lipschitz + theta + sigma_max)).powf((pf + 1.0) / pf)
}

/// Largest `sigma` the update can produce when the `p`-th derivative is
/// `lipschitz`-Lipschitz.
pub fn sigma_upper_bound(sigma0: f64, gamma3: f64, lipschitz: f64, p: usize, eta2: f64) -> f64 {
    let pf = p as f64;
    sigma0.max(gamma3 * lipschitz * (pf + 1.0) / (pf * (1.0 - eta2)))
}

/// `floor(kappa_s (f0 - f_low) / epsilon^((p+1)/p))`.
pub fn successful_iteration_bound(
    kappa_s: f64,
    f0: f64,
    f_low: f64,
    epsilon: f64,
    p: usize,
) -> f64 {
    let pf = p as f64;
    (kappa_s * (f0 - f_low) / epsilon.powf((pf + 1.0) / pf)).floor()
}

/// Minimizes the oracle's function over `set` from the projection of
/// `x_start`.
pub fn arpcc_minimize<O: Oracle>(
    oracle: &mut O,
    x_start: &[f64],
    set: &FeasibleSet,
    cfg: &ArpccConfig,
    mut stop: Option<StopRule<'_, O>>,
) -> Result<ArpccResult, ArpccError> {
    cfg.validate()?;
    if x_start.len() != set.dim() || oracle.dim() != set.dim() {
        return Err(FeasibleSetError::DimensionMismatch {
            expected: set.dim(),
            found: x_start.len(),
        }
        .into());
    }
    let p = cfg.p;
    let x0 = set.project(x_start);
    let f0 = oracle.value(&x0)?;
    let mut taylor = oracle.taylor(&x0, p)?;
    let start_counters = oracle.counters();

    let mut x = x0.clone();
    let mut f = f0;
    let mut sigma = cfg.sigma0;
    let mut max_sigma = sigma;
    let mut trace = Vec::new();
    let mut successful = 0;
    let mut k = 0;

    loop {
        let chi_k = chi(taylor.gradient(), &x, set)?;
        let done = match stop.as_mut() {
            Some(rule) => {
                let point = StopPoint {
                    x: &x,
                    value: f,
                    taylor: &taylor,
                    chi: chi_k,
                };
                rule(oracle, &point).then_some(ArpccStatus::CustomPredicate)
            }
            None => (chi_k <= cfg.epsilon).then_some(ArpccStatus::CriticalityReached),
        };
        if let Some(status) = done {
            return Ok(ArpccResult {
                x,
                f,
                chi: chi_k,
                status,
                x0,
                f0,
                trace,
                start_counters,
                counters: oracle.counters(),
                successful,
                max_sigma,
                last_taylor: taylor,
            });
        }

        // Steps 2-4 repeat with the same derivatives until a step is accepted.
        loop {
            if k >= cfg.max_outer_iters {
                return Ok(ArpccResult {
                    x,
                    f,
                    chi: chi_k,
                    status: ArpccStatus::BudgetExceeded,
                    x0,
                    f0,
                    trace,
                    start_counters,
                    counters: oracle.counters(),
                    successful,
                    max_sigma,
                    last_taylor: taylor,
                });
            }
            let model = ModelState::new(x.clone(), taylor.clone(), sigma);
            let step = solve_subproblem(&model, set, &cfg.subsolver).map_err(|source| {
                ArpccError::Subsolver {
                    iteration: k,
                    source,
                }
            })?;
            let s = &step.step;
            let trial: Vec<f64> = x.iter().zip(s).map(|(a, b)| a + b).collect();
            let decrease = model.decrease(s)?;
            let step_norm = norm2(s);

            let (trial_f, rho) = if decrease <= 1e-15 * f.abs().max(1.0) {
                (None, None)
            } else {
                let ft = oracle.value(&trial)?;
                (Some(ft), Some((f - ft) / decrease))
            };
            let outcome = rho
                .map(|r| Outcome::classify(r, cfg.eta1, cfg.eta2))
                .unwrap_or(Outcome::Unsuccessful);
            let sigma_next = match rho {
                Some(r) => sigma_update(sigma, r, cfg),
                None => cfg.gamma2 * sigma,
            };
            max_sigma = max_sigma.max(sigma_next);

            let mut record = IterationRecord {
                k,
                x: x.clone(),
                f,
                sigma,
                chi: chi_k,
                step_norm,
                model_decrease: decrease,
                model_change: step.model_change,
                chi_model: step.chi_model,
                chi_model_bound: cfg.subsolver.theta * step_norm.powi(p as i32),
                step_violation: set.violation(&trial),
                trial_f,
                rho,
                outcome,
                sigma_next,
                inner_iters: step.inner_iters,
                counters: EvalCounters::default(),
            };
            k += 1;
            sigma = sigma_next;

            if outcome.accepted() {
                x = trial;
                f = trial_f.expect("accepted steps have a trial value");
                taylor = oracle.taylor(&x, p)?;
                successful += 1;
                record.counters = oracle.counters();
                trace.push(record);
                break;
            }
            record.counters = oracle.counters();
            trace.push(record);
        }
    }
}
