mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use highreg::arpgc::Phase;
use highreg::oracle::ObjectiveOracle;
use highreg::replay::replay;
use highreg::sweep::sweep;
use highreg::trace::{convex_trace, general_trace, read_trace, write_trace, TraceRecord};
use highreg::{arpcc_minimize, arpgc_solve, registry, verify_certificate, ArpccStatus};

use settings::{parse_grid, SolverArgs, UsageError};

#[derive(Parser)]
#[command(
    name = "highreg",
    version,
    about = "Adaptive regularization solvers with high-order models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize a bound-constrained registry problem.
    SolveConvex(SolverArgs),
    /// Solve an equality-constrained registry problem.
    SolveGeneral(SolverArgs),
    /// Replay a trace file and check its invariants.
    CheckTrace { path: PathBuf },
    /// Measure how successful iterations scale with the tolerance.
    Sweep {
        #[command(flatten)]
        solver: SolverArgs,
        /// Comma-separated, strictly decreasing tolerances.
        #[arg(long, default_value = "1e-2,1e-3,1e-4,1e-5,1e-6")]
        grid: String,
    },
    /// List the built-in problems.
    ListProblems,
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.10e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn run_id(args: &SolverArgs, p: usize) -> String {
    let name = args.problem.as_deref().unwrap_or("run");
    match args.seed {
        Some(seed) => format!("{name}-p{p}-seed{seed}"),
        None => format!("{name}-p{p}"),
    }
}

fn save(args: &SolverArgs, records: &[TraceRecord]) -> anyhow::Result<()> {
    if let Some(path) = &args.trace_out {
        write_trace(path, records).with_context(|| format!("writing {}", path.display()))?;
        println!(
            "trace        {} ({} records)",
            path.display(),
            records.len()
        );
    }
    Ok(())
}

fn solve_convex(args: SolverArgs) -> anyhow::Result<ExitCode> {
    let args = args.resolve()?;
    let problem = args.problem()?;
    if problem.num_constraints() > 0 {
        return Err(UsageError(format!(
            "{} has equality constraints; use solve-general",
            problem.name
        ))
        .into());
    }
    let cfg = args.arpcc()?;
    let x_start = args.start(&problem);
    let mut oracle = ObjectiveOracle::new(problem.objective.as_ref());
    let r = arpcc_minimize(&mut oracle, &x_start, &problem.feasible, &cfg, None)?;
    println!(
        "problem      {} (n = {}, p = {})",
        problem.name,
        problem.dim(),
        cfg.p
    );
    println!("status       {:?}", r.status);
    println!(
        "iterations   {} ({} successful)",
        r.trace.len(),
        r.successful
    );
    println!("f            {:.10e}", r.f);
    println!("chi          {:.3e} (eps {:.1e})", r.chi, cfg.epsilon);
    println!("x            {}", fmt_vec(&r.x));
    println!(
        "evaluations  {} values, {} derivative sets",
        r.counters.f_values, r.counters.f_derivative_sets
    );
    save(
        &args,
        &convex_trace(&run_id(&args, cfg.p), &problem, &cfg, &r),
    )?;
    Ok(if r.status == ArpccStatus::CriticalityReached {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn solve_general(args: SolverArgs) -> anyhow::Result<ExitCode> {
    let args = args.resolve()?;
    let problem = args.problem()?;
    if problem.num_constraints() == 0 {
        return Err(UsageError(format!(
            "{} has no equality constraints; use solve-convex",
            problem.name
        ))
        .into());
    }
    let cfg = args.arpgc()?;
    let x_start = args.start(&problem);
    let r = arpgc_solve(&problem, &x_start, &cfg)?;
    let cert = &r.certificate;
    let phase = match cert.phase {
        Phase::One => "feasibility",
        Phase::Two => "target tracking",
    };
    println!(
        "problem      {} (n = {}, m = {}, p = {})",
        problem.name,
        problem.dim(),
        problem.num_constraints(),
        cfg.p()
    );
    println!("certificate  {:?} ({phase} phase)", cert.status);
    println!("x            {}", fmt_vec(&cert.x_eps));
    if let Some(f) = cert.f_eps {
        println!("f            {f:.10e}");
    }
    if let Some(t) = cert.t_eps {
        println!("target       {t:.10e}");
    }
    if let Some(y) = &cert.y_eps {
        println!("multipliers  {}", fmt_vec(y));
    }
    let m = &cert.measures;
    println!("||c||        {:.3e} (eps_p {:.1e})", m.c_norm, cfg.eps_p);
    println!("chi(|c|^2/2) {:.3e}", m.chi_violation);
    if let Some(v) = m.chi_lagrangian {
        println!("chi(L)       {v:.3e}");
    }
    if let Some(two) = &r.phase_two {
        println!("targets      {}", two.targets.len());
    }
    println!(
        "evaluations  f: {} values, {} derivative sets; c: {} values, {} derivative sets",
        r.counters.f_values,
        r.counters.f_derivative_sets,
        r.counters.c_values,
        r.counters.c_derivative_sets
    );
    let v = verify_certificate(&problem, cert, &cfg)?;
    println!("verified     {}", if v.passed { "yes" } else { "no" });
    for f in &v.failures {
        println!("    {f}");
    }
    save(
        &args,
        &general_trace(&run_id(&args, cfg.p()), &problem, &cfg, &r),
    )?;
    Ok(if v.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn check_trace(path: PathBuf) -> anyhow::Result<ExitCode> {
    let records = read_trace(&path).with_context(|| format!("reading {}", path.display()))?;
    let report = replay(&records)?;
    for w in &report.warnings {
        println!("warning: {w}");
    }
    for line in report.lines() {
        println!("{line}");
    }
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run_sweep(args: SolverArgs, grid: &str) -> anyhow::Result<ExitCode> {
    let args = args.resolve()?;
    let problem = args.problem()?;
    if problem.num_constraints() > 0 {
        return Err(UsageError(format!(
            "sweeps need a bound-constrained problem; {} has constraints",
            problem.name
        ))
        .into());
    }
    let cfg = args.arpcc()?;
    let grid = parse_grid(grid)?;
    let r = sweep(&problem, &cfg, &grid).map_err(|e| match e {
        highreg::sweep::SweepError::Solver { .. } | highreg::sweep::SweepError::Budget(_) => {
            anyhow::Error::new(e)
        }
        other => UsageError(other.to_string()).into(),
    })?;
    println!("problem {} p = {}", r.problem, r.p);
    println!(
        "{:>10} {:>10} {:>10} {:>10} {:>12}",
        "eps", "successful", "total", "f values", "derivatives"
    );
    for pt in &r.points {
        println!(
            "{:>10.1e} {:>10} {:>10} {:>10} {:>12}",
            pt.epsilon, pt.successful, pt.total, pt.f_values, pt.derivative_sets
        );
    }
    let verdict = if r.within_bound() { "within" } else { "ABOVE" };
    println!(
        "slope {:.4} ({verdict} bound {:.4})",
        r.slope,
        r.exponent() + highreg::sweep::SLOPE_SLACK
    );
    Ok(if r.within_bound() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn list_problems() -> ExitCode {
    for problem in registry::all() {
        println!(
            "{:<16} n = {}  m = {}  {}",
            problem.name,
            problem.dim(),
            problem.num_constraints(),
            problem.description
        );
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SolveConvex(args) => solve_convex(args),
        Command::SolveGeneral(args) => solve_general(args),
        Command::CheckTrace { path } => check_trace(path),
        Command::Sweep { solver, grid } => run_sweep(solver, &grid),
        Command::ListProblems => Ok(list_problems()),
    };
    match result {
        Ok(code) => code,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
