//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use highreg::arpcc::{
    arpcc_minimize, kappa_s, kappa_u, sigma_upper_bound, successful_iteration_bound, ArpccConfig,
    ArpccResult, ArpccStatus,
};
use highreg::arpgc::{
    arpgc_solve, verify_certificate, ArpgcConfig, ArpgcResult, CertificateStatus, TargetKind,
};
use highreg::criticality::{chi, kappa_n};
use highreg::feasible::FeasibleSet;
use highreg::oracle::{derivative_check, ObjectiveOracle, Oracle, Problem};
use highreg::registry;
use highreg::replay::replay;
use highreg::residual::{norm, CompositeResidual, MeritFunction};
use highreg::sweep::{fit_slope, sweep};
use highreg::trace::{convex_trace, general_trace, TraceRecord};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Outcome {
    failures: Vec<String>,
    elapsed: Duration,
    limit: Option<Duration>,
}

impl Outcome {
    fn passed(&self) -> bool {
        self.failures.is_empty() && self.limit.is_none_or(|l| self.elapsed <= l)
    }
}

fn timed(limit: Option<u64>, body: impl FnOnce(&mut Vec<String>)) -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    body(&mut failures);
    Outcome {
        failures,
        elapsed: start.elapsed(),
        limit: limit.map(Duration::from_secs),
    }
}

fn random_point(rng: &mut StdRng, problem: &Problem) -> Vec<f64> {
    let x: Vec<f64> = problem
        .sample_lower
        .iter()
        .zip(&problem.sample_upper)
        .map(|(&l, &u)| rng.gen_range(l..=u))
        .collect();
    problem.feasible.project(&x)
}

fn derivative_integrity(failures: &mut Vec<String>) {
    let mut rng = StdRng::seed_from_u64(1);
    for problem in registry::all() {
        let functions = std::iter::once(problem.objective.as_ref())
            .chain(problem.constraints.iter().map(|c| c.as_ref()));
        let points: Vec<Vec<f64>> = (0..20).map(|_| random_point(&mut rng, &problem)).collect();
        for (idx, h) in functions.enumerate() {
            for x in &points {
                match derivative_check(h, x, 3) {
                    Ok(rep) if rep.passes(1e-6) => {}
                    Ok(rep) => failures.push(format!(
                        "{} fn {idx} at {x:?}: errors {:?}",
                        problem.name, rep.errors
                    )),
                    Err(e) => failures.push(format!("{} fn {idx}: {e}", problem.name)),
                }
            }
        }
    }
}

/// Smallest `<g, d>` over the vertices of the box `{d : x + d in F, |d|_inf <= 1}`.
fn vertex_min(g: &[f64], x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let lower: Vec<f64> = (0..2).map(|i| (lo[i] - x[i]).max(-1.0)).collect();
    let upper: Vec<f64> = (0..2).map(|i| (hi[i] - x[i]).min(1.0)).collect();
    let mut best = f64::INFINITY;
    for a in [lower[0], upper[0]] {
        for b in [lower[1], upper[1]] {
            best = best.min(g[0] * a + g[1] * b);
        }
    }
    // A coarse interior grid can never beat a vertex.
    for i in 0..=10 {
        for j in 0..=10 {
            let a = lower[0] + (upper[0] - lower[0]) * i as f64 / 10.0;
            let b = lower[1] + (upper[1] - lower[1]) * j as f64 / 10.0;
            best = best.min(g[0] * a + g[1] * b);
        }
    }
    best
}

fn chi_equivalence(failures: &mut Vec<String>) {
    let mut rng = StdRng::seed_from_u64(2);
    for case in 0..500 {
        let lo: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..0.5)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.0..3.0)).collect();
        let set = FeasibleSet::new_box(lo.clone(), hi.clone()).unwrap();
        let mut x: Vec<f64> = (0..2).map(|i| rng.gen_range(lo[i]..=hi[i])).collect();
        // Exercise active bounds too.
        match case % 4 {
            1 => x[0] = lo[0],
            2 => x[1] = hi[1],
            3 => {
                x[0] = hi[0];
                x[1] = lo[1];
            }
            _ => {}
        }
        let g: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let fast = chi(&g, &x, &set).unwrap();
        let brute = vertex_min(&g, &x, &lo, &hi).min(0.0).abs();
        if (fast - brute).abs() > 1e-10 {
            failures.push(format!("case {case}: chi {fast} vs brute force {brute}"));
        }
    }
}

struct ConvexRun {
    label: String,
    records: Vec<TraceRecord>,
    result: ArpccResult,
    cfg: ArpccConfig,
}

fn convex_runs(failures: &mut Vec<String>) -> Vec<ConvexRun> {
    let mut runs = Vec::new();
    for problem in [registry::quartic_box(), registry::rosenbrock_box()] {
        for p in 1..=3 {
            for epsilon in [1e-2, 1e-4, 1e-6] {
                let label = format!("{} p={p} eps={epsilon:e}", problem.name);
                let cfg = ArpccConfig {
                    epsilon,
                    ..ArpccConfig::with_order(p)
                };
                let mut oracle = ObjectiveOracle::new(problem.objective.as_ref());
                let result = match arpcc_minimize(
                    &mut oracle,
                    &problem.x_start,
                    &problem.feasible,
                    &cfg,
                    None,
                ) {
                    Ok(r) => r,
                    Err(e) => {
                        failures.push(format!("{label}: {e}"));
                        continue;
                    }
                };
                if result.status != ArpccStatus::CriticalityReached {
                    failures.push(format!("{label}: status {:?}", result.status));
                }
                let fresh = problem.objective.taylor(&result.x, 1).unwrap();
                let c = chi(fresh.gradient(), &result.x, &problem.feasible).unwrap();
                if c > epsilon + 1e-12 {
                    failures.push(format!("{label}: recomputed chi {c:e}"));
                }
                let records = convex_trace(&label, &problem, &cfg, &result);
                runs.push(ConvexRun {
                    label,
                    records,
                    result,
                    cfg,
                });
            }
        }
    }
    runs
}

struct GeneralRun {
    label: String,
    records: Vec<TraceRecord>,
    result: ArpgcResult,
    cfg: ArpgcConfig,
}

fn solve_general(
    problem: &Problem,
    cfg: &ArpgcConfig,
    x_start: &[f64],
    label: String,
) -> Result<GeneralRun, String> {
    let result = arpgc_solve(problem, x_start, cfg).map_err(|e| format!("{label}: {e}"))?;
    let records = general_trace(&label, problem, cfg, &result);
    Ok(GeneralRun {
        label,
        records,
        result,
        cfg: cfg.clone(),
    })
}

fn end_to_end(failures: &mut Vec<String>, runs: &mut Vec<GeneralRun>) -> (Duration, Duration) {
    let cfg = ArpgcConfig {
        eps_p: 1e-3,
        eps_d: 1e-3,
        delta: 2.0,
        inner: ArpccConfig::with_order(2),
        ..ArpgcConfig::default()
    };

    let start = Instant::now();
    let circle = registry::circle();
    match solve_general(&circle, &cfg, &circle.x_start, "circle".into()) {
        Ok(run) => {
            let cert = &run.result.certificate;
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let dist = norm(&[cert.x_eps[0] + h, cert.x_eps[1] + h]);
            if cert.status != CertificateStatus::ScaledKKT {
                failures.push(format!("circle: status {:?}", cert.status));
            }
            if dist > 1e-2 {
                failures.push(format!(
                    "circle: x_eps {:?} is {dist:e} from the minimizer",
                    cert.x_eps
                ));
            }
            match verify_certificate(&circle, cert, &cfg) {
                Ok(v) if v.passed => {}
                Ok(v) => failures.push(format!("circle: verification failed: {:?}", v.failures)),
                Err(e) => failures.push(format!("circle: {e}")),
            }
            runs.push(run);
        }
        Err(e) => failures.push(e),
    }
    let circle_time = start.elapsed();

    let start = Instant::now();
    let infeasible = registry::infeasible();
    match solve_general(&infeasible, &cfg, &infeasible.x_start, "infeasible".into()) {
        Ok(run) => {
            let cert = &run.result.certificate;
            let c: Vec<f64> = infeasible
                .constraints
                .iter()
                .map(|c| c.value(&cert.x_eps))
                .collect();
            if cert.status != CertificateStatus::InfeasibleCritical {
                failures.push(format!("infeasible: status {:?}", cert.status));
            }
            if norm(&c) < cfg.eps_p / cfg.delta {
                failures.push(format!("infeasible: ||c|| = {:e}", norm(&c)));
            }
            runs.push(run);
        }
        Err(e) => failures.push(e),
    }
    (circle_time, start.elapsed())
}

fn replay_all(failures: &mut Vec<String>, convex: &[ConvexRun], general: &[GeneralRun]) {
    let traces = convex
        .iter()
        .map(|r| (&r.label, &r.records))
        .chain(general.iter().map(|r| (&r.label, &r.records)));
    for (label, records) in traces {
        match replay(records) {
            Ok(rep) if rep.passed() => {}
            Ok(rep) => failures.push(format!("{label}: {:?}", rep.failed())),
            Err(e) => failures.push(format!("{label}: {e}")),
        }
    }
}

fn complexity_bounds(failures: &mut Vec<String>, convex: &[ConvexRun]) {
    let problem = registry::quartic_box();
    for run in convex.iter().filter(|r| r.label.starts_with("quartic-box")) {
        let cfg = &run.cfg;
        let r = &run.result;
        let lip = problem
            .lipschitz(cfg.p)
            .expect("quartic has known constants");
        let sigma_max = sigma_upper_bound(cfg.sigma0, cfg.gamma3, lip, cfg.p, cfg.eta2);
        if r.max_sigma > sigma_max {
            failures.push(format!(
                "{}: sigma {} above bound {sigma_max}",
                run.label, r.max_sigma
            ));
        }
        let ks = kappa_s(
            cfg.p,
            cfg.eta1,
            cfg.sigma_min,
            kappa_n(problem.dim()),
            lip,
            cfg.subsolver.theta,
            sigma_max,
        );
        let bound = successful_iteration_bound(ks, r.f0, problem.f_low, cfg.epsilon, cfg.p);
        if r.successful as f64 > bound {
            failures.push(format!(
                "{}: {} successful > bound {bound}",
                run.label, r.successful
            ));
        }
        let ku = kappa_u(cfg.gamma1, cfg.gamma2, cfg.sigma0, r.max_sigma);
        let total = r.trace.len() as f64;
        if total > ku * r.successful as f64 + 1.0 {
            failures.push(format!(
                "{}: {total} iterations > {ku} * {} + 1",
                run.label, r.successful
            ));
        }
    }
}

fn phase_two_runs(failures: &mut Vec<String>, runs: &mut Vec<GeneralRun>) {
    for problem in [registry::circle(), registry::powell_eq()] {
        for p in 1..=3 {
            // First-order runs on the cubic problem are long; one start suffices.
            let seeds = if p == 1 && problem.num_constraints() > 1 {
                1
            } else {
                3
            };
            for seed in 0..seeds {
                let cfg = ArpgcConfig {
                    inner: ArpccConfig::with_order(p),
                    ..ArpgcConfig::default()
                };
                let x = if seed == 0 {
                    problem.x_start.clone()
                } else {
                    problem.randomized_start(seed, 0.5)
                };
                match solve_general(
                    &problem,
                    &cfg,
                    &x,
                    format!("{} p={p} seed={seed}", problem.name),
                ) {
                    Ok(run) => runs.push(run),
                    Err(e) => failures.push(e),
                }
            }
        }
    }
}

fn target_invariants(failures: &mut Vec<String>, runs: &[GeneralRun]) {
    let mut seen = 0;
    for run in runs {
        let Some(two) = &run.result.phase_two else {
            continue;
        };
        seen += 1;
        let cfg = &run.cfg;
        let eps_p = cfg.eps_p;
        let drop = eps_p.powf((cfg.p() as f64 + 1.0) / cfg.p() as f64);
        let mut last_t = f64::INFINITY;
        for rec in &two.targets {
            let tag = format!("{} target {}", run.label, rec.k);
            if rec.t_k > last_t {
                failures.push(format!("{tag}: t rose from {last_t} to {}", rec.t_k));
            }
            last_t = rec.t_k;
            if rec.c_norm > eps_p + 1e-9 {
                failures.push(format!("{tag}: ||c|| = {:e}", rec.c_norm));
            }
            let Some(t_next) = rec.t_next else { continue };
            if t_next > rec.t_k {
                failures.push(format!("{tag}: t rose to {t_next}"));
            }
            if rec.f < t_next - 1e-12 {
                failures.push(format!("{tag}: f {} below new target {t_next}", rec.f));
            }
            if rec.kind == TargetKind::KPlus {
                if rec.t_k - t_next < drop * (1.0 - 1e-12) {
                    failures.push(format!("{tag}: drop {:e} < {drop:e}", rec.t_k - t_next));
                }
                let r_new = rec.r_new.unwrap_or(f64::NAN);
                if (r_new - eps_p).abs().is_nan() || (r_new - eps_p).abs() > 1e-9 {
                    failures.push(format!("{tag}: ||r|| after reset {r_new:e}"));
                }
            }
        }
        match replay(&run.records) {
            Ok(rep) => {
                for name in [
                    "target-monotone",
                    "target-drop",
                    "target-gap",
                    "residual-reset",
                    "residual-swap",
                    "approx-feasible",
                ] {
                    if let Some(c) = rep.check(name) {
                        if !c.passed() {
                            failures
                                .push(format!("{}: replay {name}: {:?}", run.label, c.messages));
                        }
                    }
                }
            }
            Err(e) => failures.push(format!("{}: {e}", run.label)),
        }
    }
    if seen == 0 {
        failures.push("no run reached the target phase".into());
    }
}

fn empirical_scaling(failures: &mut Vec<String>) {
    let problem = registry::quartic_box();
    let grid = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    for p in 1..=3 {
        match sweep(&problem, &ArpccConfig::with_order(p), &grid) {
            Ok(r) if r.within_bound() => {}
            Ok(r) => failures.push(format!("p={p}: slope {} > {}", r.slope, r.exponent() + 0.1)),
            Err(e) => failures.push(format!("p={p}: {e}")),
        }
    }
    for exponent in [0.5, 1.5, 2.0, 4.0 / 3.0] {
        let counts: Vec<f64> = grid.iter().map(|e: &f64| 7.0 * e.powf(-exponent)).collect();
        let s = fit_slope(&grid, &counts);
        if (s - exponent).abs() > 1e-6 {
            failures.push(format!("synthetic exponent {exponent}: fitted {s}"));
        }
    }
}

fn chain_rule(failures: &mut Vec<String>) {
    let problem = registry::circle();
    let mut rng = StdRng::seed_from_u64(9);
    for _ in 0..50 {
        let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let t = rng.gen_range(-3.0..3.0);
        let merit = MeritFunction {
            problem: &problem,
            include_objective: true,
            target: t,
        };
        for p in 1..=3 {
            match derivative_check(&merit, &x, p) {
                Ok(rep) if rep.passes(1e-6) => {}
                Ok(rep) => failures.push(format!("x={x:?} t={t} p={p}: {:?}", rep.errors)),
                Err(e) => failures.push(format!("x={x:?} t={t} p={p}: {e}")),
            }
        }
        let mut oracle = CompositeResidual::with_target(&problem, t);
        oracle.taylor(&x, 2).unwrap();
        let before = oracle.counters();
        let t_new = t - 0.5;
        let rescored = oracle
            .rescore_chi_at_new_target(&x, t_new, &problem.feasible)
            .unwrap();
        if oracle.counters() != before {
            failures.push("rescore changed the evaluation counters".into());
        }
        let fresh = CompositeResidual::with_target(&problem, t_new);
        let mut fresh = fresh;
        let g = fresh.taylor(&x, 1).unwrap();
        let direct = chi(g.gradient(), &x, &problem.feasible).unwrap();
        if (rescored - direct).abs() > 1e-12 * direct.max(1.0) {
            failures.push(format!("rescored chi {rescored} vs direct {direct}"));
        }
    }
}

fn report(name: &str, outcome: &Outcome) -> bool {
    let ok = outcome.passed();
    let limit = outcome
        .limit
        .map(|l| format!(" (limit {}s)", l.as_secs()))
        .unwrap_or_default();
    println!(
        "{} {name} [{:.4}s{limit}]",
        if ok { "PASS" } else { "FAIL" },
        outcome.elapsed.as_secs_f64()
    );
    for f in outcome.failures.iter().take(10) {
        println!("    {f}");
    }
    if outcome.failures.len() > 10 {
        println!("    ... {} more", outcome.failures.len() - 10);
    }
    ok
}

fn main() -> ExitCode {
    let mut all_ok = true;

    all_ok &= report(
        "1 derivative integrity",
        &timed(Some(5), derivative_integrity),
    );
    all_ok &= report(
        "2 chi oracle equivalence",
        &timed(Some(10), chi_equivalence),
    );

    let mut convex = Vec::new();
    all_ok &= report(
        "3 convex termination certificate",
        &timed(None, |f| convex = convex_runs(f)),
    );

    let mut general = Vec::new();
    let mut times = (Duration::ZERO, Duration::ZERO);
    let mut end = timed(None, |f| times = end_to_end(f, &mut general));
    for (label, t) in [("circle", times.0), ("infeasible", times.1)] {
        if t > Duration::from_secs(10) {
            end.failures
                .push(format!("{label} took {:.2}s", t.as_secs_f64()));
        }
    }

    all_ok &= report(
        "4 per-iteration invariants",
        &timed(None, |f| replay_all(f, &convex, &general)),
    );
    all_ok &= report(
        "5 complexity bounds",
        &timed(None, |f| complexity_bounds(f, &convex)),
    );
    all_ok &= report("6 constrained end-to-end", &end);

    let mut phase_two = Vec::new();
    let seven = timed(None, |f| {
        phase_two_runs(f, &mut phase_two);
        phase_two.append(&mut general);
        target_invariants(f, &phase_two);
    });
    all_ok &= report("7 target invariants", &seven);
    all_ok &= report("8 empirical scaling", &timed(Some(60), empirical_scaling));
    all_ok &= report("9 chain rule", &timed(None, chain_rule));

    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
