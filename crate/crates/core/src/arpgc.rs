//! Two-phase solver for `min f(x)` over `x` in `F` subject to `c(x) = 0`.
//!
//! Phase 1 drives `1/2 ||c||^2` down with [`arpcc_minimize`] until the
//! violation is below `omega = eps_p - eps_p^((p+1)/p)` or the point is
//! critical for the violation relative to its size. In the second case the
//! problem looks locally infeasible and the run stops there.
//!
//! Phase 2 tracks a decreasing target `t` for the objective and repeatedly
//! minimizes `mu(x, t) = 1/2 ||(c(x), f(x) - t)||^2` from the last point.
//! After each inner run the target is either reset so that `||r|| = eps_p`
//! again, or reflected across `f` when the objective fell below it. The run
//! ends at a point that is critical for `mu`, and multipliers
//! `y = c / (f - t)` give a scaled KKT certificate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arpcc::{
    arpcc_minimize, ArpccConfig, ArpccError, ArpccResult, ArpccStatus, ConfigError, StopPoint,
};
use crate::criticality::chi;
use crate::oracle::{EvalCounters, Oracle, Problem};
use crate::residual::{norm, CompositeResidual, ResidualData, ResidualError};

/// `|f - t|` below which a final point is treated as infeasible-critical.
pub const TARGET_GAP_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArpgcError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("the problem has no equality constraints")]
    NoConstraints,
    #[error("||c|| = {c_norm} exceeds eps_p = {eps_p}")]
    NotNearlyFeasible { c_norm: f64, eps_p: f64 },
    #[error("multipliers need f > t (f = {f}, t = {t})")]
    DegenerateMultipliers { f: f64, t: f64 },
    #[error("inner solve in phase {phase} (target {target}) ran out of iterations")]
    InnerBudgetExceeded { phase: u8, target: usize },
    #[error("more than {0} targets were needed")]
    TargetBudgetExceeded(usize),
    #[error("phase {phase}: {source}")]
    Inner { phase: u8, source: ArpccError },
    #[error(transparent)]
    Residual(#[from] ResidualError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArpgcConfig {
    pub eps_p: f64,
    pub eps_d: f64,
    pub delta: f64,
    pub beta: f64,
    /// Settings of the inner solves; its `epsilon` is not used.
    pub inner: ArpccConfig,
    /// `None` picks a bound from the problem's objective range.
    pub max_outer_targets: Option<usize>,
}

impl Default for ArpgcConfig {
    fn default() -> Self {
        Self {
            eps_p: 1e-3,
            eps_d: 1e-3,
            delta: 2.0,
            beta: 1.0,
            inner: ArpccConfig::default(),
            max_outer_targets: None,
        }
    }
}

impl ArpgcConfig {
    pub fn p(&self) -> usize {
        self.inner.p
    }

    /// `min[beta, ((delta - 1) / delta)^p, 1]`.
    pub fn eps_p_limit(&self) -> f64 {
        let ratio = ((self.delta - 1.0) / self.delta).powi(self.p() as i32);
        self.beta.min(ratio).min(1.0)
    }

    /// `eps_p - eps_p^((p+1)/p)`.
    pub fn omega(&self) -> f64 {
        let pf = self.p() as f64;
        self.eps_p - self.eps_p.powf((pf + 1.0) / pf)
    }

    /// `eps_p^((p+1)/p)`, the guaranteed target drop of a reset.
    pub fn target_drop(&self) -> f64 {
        let pf = self.p() as f64;
        self.eps_p.powf((pf + 1.0) / pf)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.inner.validate()?;
        if !(self.delta > 1.0) {
            return Err(ConfigError::Other(format!(
                "delta must exceed 1 (got {})",
                self.delta
            )));
        }
        if !(self.beta > 0.0) {
            return Err(ConfigError::Other(format!(
                "beta must be positive (got {})",
                self.beta
            )));
        }
        if !(self.eps_p > 0.0 && self.eps_p <= self.eps_p_limit()) {
            return Err(ConfigError::Other(format!(
                "eps_p must lie in (0, {}] (got {})",
                self.eps_p_limit(),
                self.eps_p
            )));
        }
        if !(self.eps_d > 0.0 && self.eps_d < 1.0) {
            return Err(ConfigError::Other(format!(
                "eps_d must lie in (0, 1) (got {})",
                self.eps_d
            )));
        }
        Ok(())
    }

    /// Target budget for `problem`.
    pub fn target_budget(&self, problem: &Problem) -> usize {
        if let Some(n) = self.max_outer_targets {
            return n;
        }
        match problem.f_up {
            Some(f_up) => {
                let bound = ((f_up - problem.f_low + 1.0) / self.target_drop()).ceil();
                (10.0 * bound).min(1e12) as usize
            }
            None => 1_000_000,
        }
    }
}

/// How a target update was made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Reset to `f - sqrt(eps_p^2 - ||c||^2)` after a small residual.
    KPlus,
    /// Reflection `2 f - t` after the objective fell below the target.
    KMinus,
    /// Neither: the run ends with the current target.
    Final,
}

/// One outer Phase 2 step, from `(x_k, t_k)` to `(x_{k+1}, t_{k+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub k: usize,
    pub t_k: f64,
    /// `None` for [`TargetKind::Final`].
    pub t_next: Option<f64>,
    pub kind: TargetKind,
    pub x_next: Vec<f64>,
    pub f: f64,
    pub c_norm: f64,
    /// `||r(x_{k+1}, t_k)||`.
    pub r_old: f64,
    /// `||r(x_{k+1}, t_{k+1})||`.
    pub r_new: Option<f64>,
    /// `chi_mu(x_{k+1}, t_k)`.
    pub chi_old: f64,
    /// `chi_mu(x_{k+1}, t_{k+1})`.
    pub chi_new: Option<f64>,
    /// Outer iterations of the inner solve.
    pub inner_iters: usize,
    pub terminal: bool,
    pub counters: EvalCounters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateStatus {
    InfeasibleCritical,
    ScaledKKT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    One,
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateMeasures {
    pub c_norm: f64,
    /// `chi` of `1/2 ||c||^2`.
    pub chi_violation: f64,
    /// `chi_mu(x, t)` when a target exists.
    pub chi_mu: Option<f64>,
    pub r_norm: Option<f64>,
    /// `chi` of the Lagrangian `f + y^T c`.
    pub chi_lagrangian: Option<f64>,
    /// `||(y, 1)||`.
    pub y_one_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub status: CertificateStatus,
    pub phase: Phase,
    pub x_eps: Vec<f64>,
    pub f_eps: Option<f64>,
    pub t_eps: Option<f64>,
    pub y_eps: Option<Vec<f64>>,
    pub measures: CertificateMeasures,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOne {
    pub x1: Vec<f64>,
    pub feasible: bool,
    pub c_norm: f64,
    pub chi_violation: f64,
    pub run: ArpccResult,
    pub counters: EvalCounters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTwo {
    pub certificate: Certificate,
    pub targets: Vec<TargetRecord>,
    pub runs: Vec<ArpccResult>,
    pub counters: EvalCounters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArpgcResult {
    pub certificate: Certificate,
    pub phase_one: PhaseOne,
    pub phase_two: Option<PhaseTwo>,
    pub counters: EvalCounters,
}

fn add_counters(a: EvalCounters, b: EvalCounters) -> EvalCounters {
    EvalCounters {
        f_values: a.f_values + b.f_values,
        f_derivative_sets: a.f_derivative_sets + b.f_derivative_sets,
        c_values: a.c_values + b.c_values,
        c_derivative_sets: a.c_derivative_sets + b.c_derivative_sets,
    }
}

fn inner_error(phase: u8) -> impl Fn(ArpccError) -> ArpgcError {
    move |source| ArpgcError::Inner { phase, source }
}

/// Minimizes the constraint violation from the projection of `x_start`.
pub fn phase_one(
    problem: &Problem,
    x_start: &[f64],
    cfg: &ArpgcConfig,
) -> Result<PhaseOne, ArpgcError> {
    cfg.validate()?;
    if problem.num_constraints() == 0 {
        return Err(ArpgcError::NoConstraints);
    }
    let omega = cfg.omega();
    let eps_d = cfg.eps_d;
    let mut oracle = CompositeResidual::feasibility(problem);
    let mut stop = |_: &CompositeResidual<'_>, pt: &StopPoint<'_>| {
        let c = (2.0 * pt.value).sqrt();
        c <= omega || pt.chi <= eps_d * c
    };
    let run = arpcc_minimize(
        &mut oracle,
        x_start,
        &problem.feasible,
        &cfg.inner,
        Some(&mut stop),
    )
    .map_err(inner_error(1))?;
    if run.status == ArpccStatus::BudgetExceeded {
        return Err(ArpgcError::InnerBudgetExceeded {
            phase: 1,
            target: 0,
        });
    }
    let c_norm = (2.0 * run.f).sqrt();
    Ok(PhaseOne {
        x1: run.x.clone(),
        feasible: c_norm <= omega,
        c_norm,
        chi_violation: run.chi,
        counters: oracle.counters(),
        run,
    })
}

/// `f1 - sqrt(eps_p^2 - ||c||^2)`.
pub fn initial_target(f1: f64, c_norm: f64, eps_p: f64) -> Result<f64, ArpgcError> {
    if c_norm > eps_p {
        return Err(ArpgcError::NotNearlyFeasible { c_norm, eps_p });
    }
    Ok(f1 - (eps_p * eps_p - c_norm * c_norm).sqrt())
}

/// `c / (f - t)`.
pub fn recover_multipliers(c: &[f64], f: f64, t: f64) -> Result<Vec<f64>, ArpgcError> {
    if !(f > t) {
        return Err(ArpgcError::DegenerateMultipliers { f, t });
    }
    Ok(c.iter().map(|ci| ci / (f - t)).collect())
}

fn certificate_at(
    problem: &Problem,
    data: &ResidualData,
    t: f64,
    phase: Phase,
) -> Result<Certificate, ArpgcError> {
    let set = &problem.feasible;
    let c = data.c();
    let c_norm = norm(&c);
    let chi_violation = data.chi_half_c_squared(set)?;
    let f = data.f();
    let (chi_mu, r_norm) = match f {
        Some(fv) => {
            let mut r = c.clone();
            r.push(fv - t);
            (
                Some(data.rescore_chi_at_new_target(t, set)?),
                Some(norm(&r)),
            )
        }
        None => (None, None),
    };
    let mut measures = CertificateMeasures {
        c_norm,
        chi_violation,
        chi_mu,
        r_norm,
        chi_lagrangian: None,
        y_one_norm: None,
    };
    let infeasible = |measures| Certificate {
        status: CertificateStatus::InfeasibleCritical,
        phase,
        x_eps: data.x.clone(),
        f_eps: f,
        t_eps: f.map(|_| t),
        y_eps: None,
        measures,
    };
    let Some(fv) = f else {
        return Ok(infeasible(measures));
    };
    if (fv - t).abs() <= TARGET_GAP_TOL {
        return Ok(infeasible(measures));
    }
    let y = recover_multipliers(&c, fv, t)?;
    let g = data.lagrangian_gradient(&y)?;
    measures.chi_lagrangian = Some(chi(&g, &data.x, set).map_err(ResidualError::from)?);
    measures.y_one_norm = Some((1.0 + y.iter().map(|v| v * v).sum::<f64>()).sqrt());
    Ok(Certificate {
        status: CertificateStatus::ScaledKKT,
        phase,
        x_eps: data.x.clone(),
        f_eps: f,
        t_eps: Some(t),
        y_eps: Some(y),
        measures,
    })
}

/// Target tracking from a nearly feasible `x1`.
pub fn phase_two(problem: &Problem, cfg: &ArpgcConfig, x1: &[f64]) -> Result<PhaseTwo, ArpgcError> {
    phase_two_with_offset(problem, cfg, x1, EvalCounters::default())
}

fn phase_two_with_offset(
    problem: &Problem,
    cfg: &ArpgcConfig,
    x1: &[f64],
    offset: EvalCounters,
) -> Result<PhaseTwo, ArpgcError> {
    cfg.validate()?;
    let set = &problem.feasible;
    let omega = cfg.omega();
    let eps_p = cfg.eps_p;
    let chi_tol = cfg.eps_p * cfg.eps_d;
    let budget = cfg.target_budget(problem);

    let mut oracle = CompositeResidual::with_target(problem, 0.0);
    oracle.value(x1).map_err(ResidualError::from)?;
    let (c1, f1) = oracle.cached_values(x1).expect("just evaluated");
    let mut t = initial_target(f1.expect("objective included"), norm(c1), eps_p)?;
    oracle.set_target(t);

    let mut x = x1.to_vec();
    let mut targets = Vec::new();
    let mut runs = Vec::new();
    for k in 1.. {
        if k > budget {
            return Err(ArpgcError::TargetBudgetExceeded(budget));
        }
        let t_k = t;
        let mut stop = |o: &CompositeResidual<'_>, pt: &StopPoint<'_>| {
            let r = (2.0 * pt.value).sqrt();
            let below = o
                .cached_values(pt.x)
                .and_then(|(_, f)| f)
                .is_some_and(|f| f < t_k);
            r <= omega || below || pt.chi <= chi_tol
        };
        let run = arpcc_minimize(&mut oracle, &x, set, &cfg.inner, Some(&mut stop))
            .map_err(inner_error(2))?;
        if run.status == ArpccStatus::BudgetExceeded {
            return Err(ArpgcError::InnerBudgetExceeded {
                phase: 2,
                target: k,
            });
        }
        let data = oracle
            .data()
            .filter(|d| d.x == run.x)
            .ok_or(ResidualError::StaleCache)?
            .clone();
        let f = data.f().expect("objective included");
        let c_norm = norm(&data.c());
        let r_old = (2.0 * run.f).sqrt();

        let (kind, t_next) = if r_old <= omega {
            (TargetKind::KPlus, Some(initial_target(f, c_norm, eps_p)?))
        } else if f < t_k {
            (TargetKind::KMinus, Some(2.0 * f - t_k))
        } else {
            (TargetKind::Final, None)
        };
        let chi_new = match t_next {
            Some(tn) => Some(data.rescore_chi_at_new_target(tn, set)?),
            None => None,
        };
        let r_new = t_next.map(|tn| {
            let mut r = data.c();
            r.push(f - tn);
            norm(&r)
        });
        let terminal = match chi_new {
            Some(chi) => chi <= chi_tol,
            None => true,
        };
        targets.push(TargetRecord {
            k,
            t_k,
            t_next,
            kind,
            x_next: run.x.clone(),
            f,
            c_norm,
            r_old,
            r_new,
            chi_old: run.chi,
            chi_new,
            inner_iters: run.trace.len(),
            terminal,
            counters: add_counters(offset, oracle.counters()),
        });
        x = run.x.clone();
        runs.push(run);
        if terminal {
            let t_eps = t_next.unwrap_or(t_k);
            let certificate = certificate_at(problem, &data, t_eps, Phase::Two)?;
            return Ok(PhaseTwo {
                certificate,
                targets,
                runs,
                counters: oracle.counters(),
            });
        }
        t = t_next.expect("non-terminal steps set a new target");
        oracle.set_target(t);
    }
    unreachable!("the target loop only exits by returning")
}

/// Runs both phases from the projection of `x_start`.
pub fn arpgc_solve(
    problem: &Problem,
    x_start: &[f64],
    cfg: &ArpgcConfig,
) -> Result<ArpgcResult, ArpgcError> {
    let phase_one = phase_one(problem, x_start, cfg)?;
    if !phase_one.feasible {
        let certificate = Certificate {
            status: CertificateStatus::InfeasibleCritical,
            phase: Phase::One,
            x_eps: phase_one.x1.clone(),
            f_eps: None,
            t_eps: None,
            y_eps: None,
            measures: CertificateMeasures {
                c_norm: phase_one.c_norm,
                chi_violation: phase_one.chi_violation,
                chi_mu: None,
                r_norm: None,
                chi_lagrangian: None,
                y_one_norm: None,
            },
        };
        return Ok(ArpgcResult {
            certificate,
            counters: phase_one.counters,
            phase_one,
            phase_two: None,
        });
    }
    let two = phase_two_with_offset(problem, cfg, &phase_one.x1, phase_one.counters)?;
    Ok(ArpgcResult {
        certificate: two.certificate.clone(),
        counters: add_counters(phase_one.counters, two.counters),
        phase_one,
        phase_two: Some(two),
    })
}

/// Outcome of re-checking a certificate from fresh evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub passed: bool,
    pub failures: Vec<String>,
    /// Evaluations spent on the check, kept apart from any run.
    pub shadow_counters: EvalCounters,
}

/// Re-evaluates `c`, `f` and their gradients at `cert.x_eps` and checks the
/// conditions its status claims.
pub fn verify_certificate(
    problem: &Problem,
    cert: &Certificate,
    cfg: &ArpgcConfig,
) -> Result<Verification, ArpgcError> {
    const SLACK: f64 = 1e-12;
    let mut shadow = EvalCounters::default();
    let t = cert.t_eps.unwrap_or(0.0);
    let data = ResidualData::evaluate(problem, true, &cert.x_eps, t, 1, &mut shadow)?;
    let set = &problem.feasible;
    let c = data.c();
    let c_norm = norm(&c);
    let f = data.f().expect("objective included");
    let omega = cfg.omega();
    let mut failures = Vec::new();
    let mut require = |ok: bool, what: String| {
        if !ok {
            failures.push(what);
        }
    };

    match cert.status {
        CertificateStatus::InfeasibleCritical => {
            let chi_c = data.chi_half_c_squared(set)?;
            // A Phase 2 point with f = t only satisfies the looser bound.
            let scale = match cert.phase {
                Phase::One => cfg.eps_d,
                Phase::Two => cfg.delta * cfg.eps_d,
            };
            require(
                c_norm > omega,
                format!("||c|| = {c_norm:e} is not above {omega:e}"),
            );
            require(
                chi_c <= scale * c_norm + SLACK,
                format!(
                    "chi of the violation {chi_c:e} exceeds {:e}",
                    scale * c_norm
                ),
            );
        }
        CertificateStatus::ScaledKKT => {
            let Some(y) = cert.y_eps.as_ref() else {
                return Ok(Verification {
                    passed: false,
                    failures: vec!["scaled KKT certificate without multipliers".into()],
                    shadow_counters: shadow,
                });
            };
            let chi_l = chi(&data.lagrangian_gradient(y)?, &cert.x_eps, set)
                .map_err(ResidualError::from)?;
            let y_one = (1.0 + y.iter().map(|v| v * v).sum::<f64>()).sqrt();
            let bound = cfg.delta * cfg.eps_d * y_one;
            require(
                c_norm <= cfg.eps_p + SLACK,
                format!("||c|| = {c_norm:e} exceeds eps_p = {:e}", cfg.eps_p),
            );
            require(
                chi_l <= bound + SLACK,
                format!("chi of the Lagrangian {chi_l:e} exceeds {bound:e}"),
            );
        }
    }

    if cert.phase == Phase::Two {
        let Some(t) = cert.t_eps else {
            require(false, "phase 2 certificate without a target".into());
            return Ok(Verification {
                passed: false,
                failures,
                shadow_counters: shadow,
            });
        };
        let mut r = c.clone();
        r.push(f - t);
        let r_norm = norm(&r);
        let chi_mu = data.rescore_chi_at_new_target(t, set)?;
        let chi_tol = cfg.eps_p * cfg.eps_d;
        require(
            r_norm >= omega - SLACK,
            format!("||r|| = {r_norm:e} is below {omega:e}"),
        );
        require(
            f >= t - SLACK,
            format!("f = {f:e} is below the target {t:e}"),
        );
        require(
            chi_mu <= chi_tol + SLACK,
            format!("chi_mu = {chi_mu:e} exceeds {chi_tol:e}"),
        );
    }

    Ok(Verification {
        passed: failures.is_empty(),
        failures,
        shadow_counters: shadow,
    })
}
