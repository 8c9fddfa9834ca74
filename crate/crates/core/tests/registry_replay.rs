use highreg::arpcc::{arpcc_minimize, ArpccConfig, ArpccStatus};
use highreg::arpgc::{arpgc_solve, verify_certificate, ArpgcConfig};
use highreg::oracle::ObjectiveOracle;
use highreg::registry;
use highreg::replay::replay;
use highreg::trace::{convex_trace, general_trace};

#[test]
fn every_registry_problem_replays_clean() {
    for problem in registry::all() {
        for p in 1..=3 {
            let records = if problem.num_constraints() == 0 {
                let cfg = ArpccConfig {
                    epsilon: 1e-6,
                    ..ArpccConfig::with_order(p)
                };
                let mut oracle = ObjectiveOracle::new(problem.objective.as_ref());
                let r =
                    arpcc_minimize(&mut oracle, &problem.x_start, &problem.feasible, &cfg, None)
                        .unwrap_or_else(|e| panic!("{} p={p}: {e}", problem.name));
                assert_eq!(
                    r.status,
                    ArpccStatus::CriticalityReached,
                    "{} p={p}",
                    problem.name
                );
                convex_trace("run", &problem, &cfg, &r)
            } else {
                let cfg = ArpgcConfig {
                    inner: ArpccConfig::with_order(p),
                    ..ArpgcConfig::default()
                };
                let r = arpgc_solve(&problem, &problem.x_start, &cfg)
                    .unwrap_or_else(|e| panic!("{} p={p}: {e}", problem.name));
                let v = verify_certificate(&problem, &r.certificate, &cfg).unwrap();
                assert!(v.passed, "{} p={p}: {:?}", problem.name, v.failures);
                general_trace("run", &problem, &cfg, &r)
            };
            let report = replay(&records).unwrap();
            assert!(
                report.passed(),
                "{} p={p}:\n{}",
                problem.name,
                report.lines().join("\n")
            );
        }
    }
}
