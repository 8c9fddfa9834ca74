//! Re-checks solver invariants from a trace alone.
//!
//! Every check has a stable name, so a failing trace points at the rule it
//! breaks:
//!
//! | name                   | what it checks                                                      |
//! |------------------------|---------------------------------------------------------------------|
//! | `model-decrease`       | `T(0) - T(s) >= sigma/(p+1) ||s||^(p+1)`                            |
//! | `sigma-update`         | outcome matches `rho`, `sigma` follows the update rule              |
//! | `monotone-objective`   | accepted iterates strictly decrease the objective                   |
//! | `step-feasible`        | `x + s` lies in the feasible set                                    |
//! | `step-decrease`        | `m(s) < m(0)`                                                       |
//! | `step-criticality`     | `chi_m(x + s) <= theta ||s||^p`                                     |
//! | `iteration-accounting` | iterations `<= kappa_u * successes + 1`                             |
//! | `success-decrease`     | per-success decrease `>= chi(x_{k+1})^((p+1)/p) / kappa_s`          |
//! | `success-count-bound`  | successes `<= kappa_s (f0 - f_low) / epsilon^((p+1)/p)`             |
//! | `sigma-bound`          | `sigma <= max[sigma0, gamma3 L (p+1) / (p (1 - eta2))]`             |
//! | `termination-criticality` | `chi <= epsilon` when the run claims it                          |
//! | `counter-replay`       | counters move by exactly the evaluations the iterations imply       |
//! | `target-monotone`      | targets strictly decrease                                           |
//! | `target-drop`          | a reset lowers the target by at least `eps_p^((p+1)/p)`             |
//! | `target-gap`           | `f >= t` at every target                                            |
//! | `residual-reset`       | `||r|| = eps_p` after a reset                                       |
//! | `residual-swap`        | a reflection keeps `||r||` and `||r|| <= eps_p`                     |
//! | `approx-feasible`      | `||c|| <= eps_p` and `f - t <= eps_p`                               |
//! | `target-count-bound`   | resets `<= (f_up - f_low + 1) eps_p^(-(p+1)/p)`                     |
//! | `inner-monotone`       | `||r||` never increases during one inner solve                      |
//! | `certificate`          | the final certificate satisfies the conditions its status claims    |
//!
//! Checks that need problem constants (a Lipschitz constant, `f_up`) are
//! skipped when the header does not provide them.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::arpcc::{
    kappa_s, kappa_u, sigma_update, sigma_upper_bound, ArpccConfig, ArpccStatus, Outcome,
};
use crate::arpgc::{CertificateStatus, Phase, TargetKind, TargetRecord};
use crate::feasible::MEMBERSHIP_TOL;
use crate::oracle::EvalCounters;
use crate::trace::{
    CertificateEntry, IterEntry, RunHeader, Segment, SegmentSummary, Solver, TraceRecord,
};

pub const CHECK_NAMES: &[&str] = &[
    "model-decrease",
    "sigma-update",
    "monotone-objective",
    "step-feasible",
    "step-decrease",
    "step-criticality",
    "iteration-accounting",
    "success-decrease",
    "success-count-bound",
    "sigma-bound",
    "termination-criticality",
    "counter-replay",
    "target-monotone",
    "target-drop",
    "target-gap",
    "residual-reset",
    "residual-swap",
    "approx-feasible",
    "target-count-bound",
    "inner-monotone",
    "certificate",
];

const ABS_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-9;
const MAX_MESSAGES: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("malformed trace: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckResult {
    pub name: &'static str,
    pub checked: usize,
    pub failures: usize,
    /// The first few failure descriptions.
    pub messages: Vec<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayReport {
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| !c.passed())
            .map(|c| c.name)
            .collect()
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One line per check.
    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                let verdict = if c.passed() { "PASS" } else { "FAIL" };
                let mut line = format!("{verdict} {:<24} {} checked", c.name, c.checked);
                if !c.passed() {
                    line.push_str(&format!(
                        ", {} failed: {}",
                        c.failures,
                        c.messages.join("; ")
                    ));
                }
                line
            })
            .collect()
    }
}

struct Checker {
    results: BTreeMap<&'static str, CheckResult>,
}

impl Checker {
    fn new() -> Self {
        let results = CHECK_NAMES
            .iter()
            .map(|&name| {
                (
                    name,
                    CheckResult {
                        name,
                        ..Default::default()
                    },
                )
            })
            .collect();
        Self { results }
    }

    fn check(&mut self, name: &'static str, ok: bool, message: impl FnOnce() -> String) {
        let r = self.results.get_mut(name).expect("known check name");
        r.checked += 1;
        if !ok {
            r.failures += 1;
            if r.messages.len() < MAX_MESSAGES {
                r.messages.push(message());
            }
        }
    }

    fn finish(self) -> Vec<CheckResult> {
        CHECK_NAMES
            .iter()
            .map(|n| self.results[n].clone())
            .collect()
    }
}

fn config_of(h: &RunHeader) -> ArpccConfig {
    ArpccConfig {
        p: h.p,
        sigma0: h.sigma0,
        sigma_min: h.sigma_min,
        gamma1: h.gamma1,
        gamma2: h.gamma2,
        gamma3: h.gamma3,
        eta1: h.eta1,
        eta2: h.eta2,
        epsilon: h.epsilon.unwrap_or(1.0),
        ..ArpccConfig::default()
    }
}

fn counter_delta(a: &EvalCounters, b: &EvalCounters) -> Option<(u64, u64)> {
    if !b.dominates(a) {
        return None;
    }
    Some((
        b.values() - a.values(),
        b.derivative_sets() - a.derivative_sets(),
    ))
}

fn check_segment(ck: &mut Checker, h: &RunHeader, iters: &[&IterEntry], s: &SegmentSummary) {
    let cfg = config_of(h);
    let p = h.p;
    let pf = p as f64;
    let tag = |k: usize| format!("{:?}/{:?} k={k}", s.segment, s.target);

    let mut prev_counters = s.start_counters;
    let mut expected_sigma = h.sigma0;
    let mut expected_x = s.x0.clone();
    let mut expected_f = s.f0;
    let mut max_sigma = h.sigma0;
    let mut successes = 0usize;

    for (j, e) in iters.iter().enumerate() {
        let it = &e.record;
        let k = it.k;
        max_sigma = max_sigma.max(it.sigma);

        let reg = it.sigma / (pf + 1.0) * it.step_norm.powi(p as i32 + 1);
        ck.check("model-decrease", it.model_decrease >= reg - ABS_TOL, || {
            format!("{}: decrease {:e} < {:e}", tag(k), it.model_decrease, reg)
        });

        let outcome_ok = match it.rho {
            Some(rho) => it.outcome == Outcome::classify(rho, h.eta1, h.eta2),
            None => it.outcome == Outcome::Unsuccessful,
        };
        let next = match it.rho {
            Some(rho) => sigma_update(it.sigma, rho, &cfg),
            None => h.gamma2 * it.sigma,
        };
        ck.check(
            "sigma-update",
            outcome_ok && it.sigma == expected_sigma && it.sigma_next == next,
            || {
                format!(
                    "{}: sigma {:e} (expected {:e}) -> {:e} (rule gives {:e}), rho {:?}, outcome {:?}",
                    tag(k),
                    it.sigma,
                    expected_sigma,
                    it.sigma_next,
                    next,
                    it.rho,
                    it.outcome
                )
            },
        );
        expected_sigma = it.sigma_next;

        let consistent = it.x == expected_x && it.f == expected_f;
        let decreasing = !it.outcome.accepted() || it.trial_f.is_some_and(|ft| ft < it.f);
        ck.check("monotone-objective", consistent && decreasing, || {
            format!("{}: f {:e}, trial {:?}", tag(k), it.f, it.trial_f)
        });

        ck.check("step-feasible", it.step_violation <= MEMBERSHIP_TOL, || {
            format!("{}: violation {:e}", tag(k), it.step_violation)
        });
        ck.check("step-decrease", it.model_change < 0.0, || {
            format!("{}: m(s) - m(0) = {:e}", tag(k), it.model_change)
        });
        let bound = h.theta * it.step_norm.powi(p as i32);
        ck.check(
            "step-criticality",
            it.chi_model <= bound + ABS_TOL
                && (it.chi_model_bound - bound).abs() <= ABS_TOL * bound.max(1.0),
            || {
                format!(
                    "{}: chi_m {:e} > theta ||s||^p = {:e}",
                    tag(k),
                    it.chi_model,
                    bound
                )
            },
        );

        let expect_values = if it.trial_f.is_some() {
            s.components
        } else {
            0
        };
        let expect_derivs = if it.outcome.accepted() {
            s.components
        } else {
            0
        };
        let delta = counter_delta(&prev_counters, &it.counters);
        ck.check(
            "counter-replay",
            delta == Some((expect_values, expect_derivs)),
            || {
                format!(
                    "{}: counters moved by {:?}, expected ({expect_values}, {expect_derivs})",
                    tag(k),
                    delta
                )
            },
        );
        prev_counters = it.counters;

        if it.outcome.accepted() {
            successes += 1;
            let f_next = it.trial_f.unwrap_or(f64::NAN);
            let step: Vec<f64> = match iters.get(j + 1) {
                Some(n) => n.record.x.clone(),
                None => s.x.clone(),
            };
            expected_x = step;
            expected_f = f_next;

            if s.segment == Segment::Convex {
                if let Some(l) = h.lipschitz {
                    let chi_next = iters.get(j + 1).map(|n| n.record.chi).unwrap_or(s.chi);
                    let sigma_cap = iters
                        .iter()
                        .map(|e| e.record.sigma)
                        .fold(h.sigma0, f64::max);
                    let ks = kappa_s(p, h.eta1, h.sigma_min, h.kappa_n, l, h.theta, sigma_cap);
                    let need = chi_next.powf((pf + 1.0) / pf) / ks;
                    let got = it.f - f_next;
                    ck.check("success-decrease", got >= need - ABS_TOL, || {
                        format!("{}: decrease {got:e} < {need:e}", tag(k))
                    });
                }
            }
        }
    }

    // Summary consistency.
    ck.check(
        "monotone-objective",
        s.x == expected_x && s.f == expected_f && s.f <= s.f0,
        || {
            format!(
                "{:?}/{:?}: summary point does not match the last accepted iterate",
                s.segment, s.target
            )
        },
    );
    ck.check(
        "counter-replay",
        s.counters == prev_counters && s.successful == successes,
        || {
            format!(
                "{:?}/{:?}: summary counters {:?} vs {:?}",
                s.segment, s.target, s.counters, prev_counters
            )
        },
    );
    if s.segment == Segment::Convex {
        let start = EvalCounters {
            f_values: 1,
            f_derivative_sets: 1,
            ..Default::default()
        };
        ck.check("counter-replay", s.start_counters == start, || {
            format!("convex start counters {:?}", s.start_counters)
        });
    }

    let total = iters.len();
    let sigma_seen = iters
        .iter()
        .map(|e| e.record.sigma)
        .fold(h.sigma0, f64::max);
    let ku = kappa_u(h.gamma1, h.gamma2, h.sigma0, sigma_seen);
    ck.check(
        "iteration-accounting",
        total as f64 <= ku * successes as f64 + 1.0,
        || {
            format!(
                "{:?}/{:?}: {total} iterations > kappa_u {ku:.3} * {successes} + 1",
                s.segment, s.target
            )
        },
    );

    if s.segment == Segment::Convex {
        if let Some(l) = h.lipschitz {
            let cap = sigma_upper_bound(h.sigma0, h.gamma3, l, p, h.eta2);
            let seen = iters
                .iter()
                .map(|e| e.record.sigma.max(e.record.sigma_next))
                .fold(max_sigma, f64::max);
            ck.check("sigma-bound", seen <= cap, || {
                format!("max sigma {seen:e} > {cap:e}")
            });
            if let (Some(eps), Some(f_low), ArpccStatus::CriticalityReached) =
                (h.epsilon, h.f_low, s.status)
            {
                let ks = kappa_s(p, h.eta1, h.sigma_min, h.kappa_n, l, h.theta, cap);
                let bound = crate::arpcc::successful_iteration_bound(ks, s.f0, f_low, eps, p);
                ck.check("success-count-bound", successes as f64 <= bound, || {
                    format!("{successes} successful iterations > {bound:e}")
                });
            }
        }
        if s.status == ArpccStatus::CriticalityReached {
            let eps = h.epsilon.unwrap_or(f64::NAN);
            ck.check("termination-criticality", s.chi <= eps, || {
                format!("final chi {:e} > epsilon {eps:e}", s.chi)
            });
        }
    }

    if s.segment == Segment::Phase2 {
        let mut last = s.f0;
        let mut ok = true;
        for e in iters.iter().filter(|e| e.record.outcome.accepted()) {
            let v = e.record.trial_f.unwrap_or(f64::NAN);
            ok &= v <= last;
            last = v;
        }
        ck.check("inner-monotone", ok && s.f <= s.f0, || {
            format!(
                "target {:?}: ||r|| increased during the inner solve",
                s.target
            )
        });
    }
}

struct PhaseTwoState {
    prev: Option<TargetRecord>,
    resets: usize,
}

fn check_target(
    ck: &mut Checker,
    h: &RunHeader,
    t: &TargetRecord,
    summary: Option<&SegmentSummary>,
    state: &mut PhaseTwoState,
) {
    let eps_p = h.eps_p.unwrap_or(f64::NAN);
    let pf = h.p as f64;
    let drop = eps_p.powf((pf + 1.0) / pf);
    let k = t.k;

    if let Some(prev) = &state.prev {
        ck.check(
            "target-monotone",
            prev.t_next == Some(t.t_k) && !prev.terminal,
            || {
                format!(
                    "target {k}: t_k {:e} does not continue {:?}",
                    t.t_k, prev.t_next
                )
            },
        );
    }
    if let Some(s) = summary {
        let r = (2.0 * s.f).sqrt();
        ck.check("inner-monotone", s.x == t.x_next && r == t.r_old, || {
            format!("target {k}: record disagrees with its inner solve")
        });
    }

    let t_used = t.t_next.unwrap_or(t.t_k);
    match (t.kind, t.t_next) {
        (TargetKind::KPlus, Some(tn)) => {
            state.resets += 1;
            ck.check("target-monotone", tn < t.t_k, || {
                format!("target {k}: {tn:e} >= {:e}", t.t_k)
            });
            ck.check("target-drop", t.t_k - tn >= drop - ABS_TOL, || {
                format!("target {k}: drop {:e} < {drop:e}", t.t_k - tn)
            });
            let r_new = t.r_new.unwrap_or(f64::NAN);
            ck.check(
                "residual-reset",
                (r_new - eps_p).abs() <= RESIDUAL_TOL,
                || format!("target {k}: ||r|| = {r_new:e} after reset"),
            );
        }
        (TargetKind::KMinus, Some(tn)) => {
            ck.check("target-monotone", tn < t.t_k, || {
                format!("target {k}: {tn:e} >= {:e}", t.t_k)
            });
            let r_new = t.r_new.unwrap_or(f64::NAN);
            ck.check(
                "residual-swap",
                (r_new - t.r_old).abs() <= RESIDUAL_TOL && r_new <= eps_p + RESIDUAL_TOL,
                || format!("target {k}: ||r|| {:e} -> {r_new:e}", t.r_old),
            );
        }
        (TargetKind::Final, None) => {
            ck.check("target-monotone", t.terminal, || {
                format!("target {k}: final step not terminal")
            });
        }
        _ => ck.check("target-monotone", false, || {
            format!("target {k}: kind and target disagree")
        }),
    }
    ck.check("target-gap", t.f - t_used >= -ABS_TOL, || {
        format!("target {k}: f {:e} < t {t_used:e}", t.f)
    });
    ck.check(
        "approx-feasible",
        t.c_norm <= eps_p + RESIDUAL_TOL && t.f - t_used <= eps_p + RESIDUAL_TOL,
        || {
            format!(
                "target {k}: ||c|| = {:e}, f - t = {:e}",
                t.c_norm,
                t.f - t_used
            )
        },
    );
    state.prev = Some(t.clone());
}

fn check_certificate(ck: &mut Checker, h: &RunHeader, c: &CertificateEntry, state: &PhaseTwoState) {
    let cert = &c.certificate;
    let m = &cert.measures;
    let (Some(eps_p), Some(eps_d), Some(delta)) = (h.eps_p, h.eps_d, h.delta) else {
        ck.check("certificate", false, || {
            "certificate without tolerances in the header".into()
        });
        return;
    };
    let pf = h.p as f64;
    let omega = eps_p - eps_p.powf((pf + 1.0) / pf);
    match cert.status {
        CertificateStatus::InfeasibleCritical => {
            let scale = if cert.phase == Phase::One {
                eps_d
            } else {
                delta * eps_d
            };
            ck.check(
                "certificate",
                m.c_norm > omega && m.chi_violation <= scale * m.c_norm + ABS_TOL,
                || {
                    format!(
                        "infeasible-critical: ||c|| {:e}, chi {:e}",
                        m.c_norm, m.chi_violation
                    )
                },
            );
        }
        CertificateStatus::ScaledKKT => {
            let ok = match (m.chi_lagrangian, m.y_one_norm) {
                (Some(chi_l), Some(y1)) => {
                    m.c_norm <= eps_p + ABS_TOL && chi_l <= delta * eps_d * y1 + ABS_TOL
                }
                _ => false,
            };
            ck.check("certificate", ok, || {
                format!(
                    "scaled KKT: ||c|| {:e}, chi_L {:?}, ||(y,1)|| {:?}",
                    m.c_norm, m.chi_lagrangian, m.y_one_norm
                )
            });
        }
    }
    if cert.phase == Phase::Two {
        let ok = match (m.r_norm, m.chi_mu, cert.f_eps, cert.t_eps) {
            (Some(r), Some(chi_mu), Some(f), Some(t)) => {
                r >= omega - ABS_TOL && f >= t - ABS_TOL && chi_mu <= eps_p * eps_d + ABS_TOL
            }
            _ => false,
        };
        ck.check("certificate", ok, || {
            "phase 2 exit conditions do not hold".into()
        });
        ck.check(
            "certificate",
            state
                .prev
                .as_ref()
                .is_some_and(|t| t.terminal && t.x_next == cert.x_eps),
            || "certificate point is not the last target point".into(),
        );
    }
    if let (Some(f_up), Some(f_low)) = (h.f_up, h.f_low) {
        let bound = (f_up - f_low + 1.0) * eps_p.powf(-(pf + 1.0) / pf);
        ck.check("target-count-bound", state.resets as f64 <= bound, || {
            format!("{} resets > {bound:e}", state.resets)
        });
    }
}

fn header_of<'a>(
    headers: &BTreeMap<&str, &'a RunHeader>,
    id: &str,
) -> Result<&'a RunHeader, ReplayError> {
    headers
        .get(id)
        .copied()
        .ok_or_else(|| ReplayError::Malformed(format!("record for run {id:?} before its header")))
}

/// Replays every run in `records`.
pub fn replay(records: &[TraceRecord]) -> Result<ReplayReport, ReplayError> {
    let mut ck = Checker::new();
    let mut warnings = Vec::new();
    if records.is_empty() {
        warnings.push("empty trace: nothing to check".to_string());
    }

    let mut headers: BTreeMap<&str, &RunHeader> = BTreeMap::new();
    let mut pending: BTreeMap<&str, Vec<&IterEntry>> = BTreeMap::new();
    let mut last_summary: BTreeMap<&str, &SegmentSummary> = BTreeMap::new();
    let mut phase_two: BTreeMap<&str, PhaseTwoState> = BTreeMap::new();

    for rec in records {
        match rec {
            TraceRecord::Run(h) => {
                if headers.insert(&h.run_id, h).is_some() {
                    return Err(ReplayError::Malformed(format!(
                        "duplicate header for run {:?}",
                        h.run_id
                    )));
                }
            }
            TraceRecord::Iter(e) => {
                header_of(&headers, &e.run_id)?;
                pending.entry(&e.run_id).or_default().push(e);
            }
            TraceRecord::Summary(s) => {
                let h = header_of(&headers, &s.run_id)?;
                let iters = pending.remove(s.run_id.as_str()).unwrap_or_default();
                if iters
                    .iter()
                    .any(|e| e.segment != s.segment || e.target != s.target)
                {
                    return Err(ReplayError::Malformed(format!(
                        "iterations of run {:?} do not match the segment that closes them",
                        s.run_id
                    )));
                }
                check_segment(&mut ck, h, &iters, s);
                last_summary.insert(&s.run_id, s);
            }
            TraceRecord::Target(t) => {
                let h = header_of(&headers, &t.run_id)?;
                let summary = last_summary
                    .get(t.run_id.as_str())
                    .copied()
                    .filter(|s| s.segment == Segment::Phase2 && s.target == Some(t.record.k));
                let state = phase_two.entry(&t.run_id).or_insert(PhaseTwoState {
                    prev: None,
                    resets: 0,
                });
                check_target(&mut ck, h, &t.record, summary, state);
            }
            TraceRecord::Certificate(c) => {
                let h = header_of(&headers, &c.run_id)?;
                if h.solver != Solver::Arpgc {
                    return Err(ReplayError::Malformed("certificate in a convex run".into()));
                }
                let state = phase_two
                    .remove(c.run_id.as_str())
                    .unwrap_or(PhaseTwoState {
                        prev: None,
                        resets: 0,
                    });
                check_certificate(&mut ck, h, c, &state);
            }
        }
    }
    if let Some((id, _)) = pending.iter().find(|(_, v)| !v.is_empty()) {
        return Err(ReplayError::Malformed(format!(
            "run {id:?} ends without a segment summary"
        )));
    }
    Ok(ReplayReport {
        checks: ck.finish(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arpcc::arpcc_minimize;
    use crate::oracle::ObjectiveOracle;
    use crate::registry;
    use crate::trace::convex_trace;

    fn quartic_records() -> Vec<TraceRecord> {
        let problem = registry::quartic_box();
        let cfg = ArpccConfig {
            epsilon: 1e-6,
            ..ArpccConfig::with_order(2)
        };
        let mut oracle = ObjectiveOracle::new(problem.objective.as_ref());
        let r =
            arpcc_minimize(&mut oracle, &problem.x_start, &problem.feasible, &cfg, None).unwrap();
        convex_trace("q", &problem, &cfg, &r)
    }

    #[test]
    fn solver_trace_passes() {
        let report = replay(&quartic_records()).unwrap();
        assert!(report.passed(), "{:#?}", report.lines());
        assert!(report.check("sigma-update").unwrap().checked > 0);
    }

    #[test]
    fn empty_trace_passes_with_warning() {
        let report = replay(&[]).unwrap();
        assert!(report.passed());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn edited_sigma_fails_by_name() {
        let mut records = quartic_records();
        let it = records
            .iter_mut()
            .find_map(|r| match r {
                TraceRecord::Iter(e) if e.record.k == 1 => Some(e),
                _ => None,
            })
            .unwrap();
        it.record.sigma_next *= 10.0;
        let report = replay(&records).unwrap();
        assert_eq!(report.failed(), vec!["sigma-update"]);
    }

    #[test]
    fn missing_header_is_malformed() {
        let records = quartic_records();
        assert!(replay(&records[1..]).is_err());
    }
}
