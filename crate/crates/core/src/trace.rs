//! JSON Lines traces of solver runs.
//!
//! One record per line, tagged by `kind`:
//!
//! - `run`: solver settings and problem constants, once per run;
//! - `arpcc-iter`: one [`IterationRecord`];
//! - `arpcc-summary`: start and end state of one inner solve, after its
//!   iterations;
//! - `arpgc-target`: one [`TargetRecord`];
//! - `certificate`: the final certificate of a two-phase run.
//!
//! Floats are written with 17 significant digits, so reading a trace back
//! gives bit-identical values.

use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arpcc::{ArpccConfig, ArpccResult, ArpccStatus, IterationRecord};
use crate::arpgc::{ArpgcConfig, ArpgcResult, Certificate, TargetRecord};
use crate::criticality::kappa_n;
use crate::oracle::{EvalCounters, Problem};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("serializing trace: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Arpcc,
    Arpgc,
}

/// Which inner solve an iteration belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Convex,
    Phase1,
    Phase2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub run_id: String,
    pub solver: Solver,
    pub problem: String,
    pub n: usize,
    pub p: usize,
    pub sigma0: f64,
    pub sigma_min: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub theta: f64,
    pub kappa_n: f64,
    /// Criticality tolerance of a convex run.
    pub epsilon: Option<f64>,
    pub eps_p: Option<f64>,
    pub eps_d: Option<f64>,
    pub delta: Option<f64>,
    pub f_low: Option<f64>,
    pub f_up: Option<f64>,
    /// Lipschitz constant of the `p`-th derivative of the objective.
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterEntry {
    pub run_id: String,
    pub segment: Segment,
    pub target: Option<usize>,
    #[serde(flatten)]
    pub record: IterationRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub run_id: String,
    pub segment: Segment,
    pub target: Option<usize>,
    /// Counter increments of one value or derivative-set evaluation.
    pub components: u64,
    pub x0: Vec<f64>,
    pub f0: f64,
    pub start_counters: EvalCounters,
    pub status: ArpccStatus,
    pub x: Vec<f64>,
    pub f: f64,
    pub chi: f64,
    pub successful: usize,
    pub max_sigma: f64,
    pub counters: EvalCounters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub run_id: String,
    #[serde(flatten)]
    pub record: TargetRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub run_id: String,
    #[serde(flatten)]
    pub certificate: Certificate,
    pub counters: EvalCounters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TraceRecord {
    #[serde(rename = "run")]
    Run(RunHeader),
    #[serde(rename = "arpcc-iter")]
    Iter(IterEntry),
    #[serde(rename = "arpcc-summary")]
    Summary(SegmentSummary),
    #[serde(rename = "arpgc-target")]
    Target(TargetEntry),
    #[serde(rename = "certificate")]
    Certificate(CertificateEntry),
}

/// Writes every float as `{:.16e}`; non-finite values become `null`.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// One trace record as a single JSON line, without the newline.
pub fn to_line(record: &TraceRecord) -> Result<String, TraceError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    record.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_records<W: Write>(mut w: W, records: &[TraceRecord]) -> Result<(), TraceError> {
    for r in records {
        writeln!(w, "{}", to_line(r)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<(), TraceError> {
    let file = std::fs::File::create(path)?;
    write_records(io::BufWriter::new(file), records)
}

/// Parses JSON Lines, skipping blank lines.
pub fn read_records<R: BufRead>(r: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let file = std::fs::File::open(path)?;
    read_records(io::BufReader::new(file))
}

fn header(run_id: &str, solver: Solver, problem: &Problem, cfg: &ArpccConfig) -> RunHeader {
    RunHeader {
        run_id: run_id.to_string(),
        solver,
        problem: problem.name.clone(),
        n: problem.dim(),
        p: cfg.p,
        sigma0: cfg.sigma0,
        sigma_min: cfg.sigma_min,
        gamma1: cfg.gamma1,
        gamma2: cfg.gamma2,
        gamma3: cfg.gamma3,
        eta1: cfg.eta1,
        eta2: cfg.eta2,
        theta: cfg.subsolver.theta,
        kappa_n: kappa_n(problem.dim()),
        epsilon: None,
        eps_p: None,
        eps_d: None,
        delta: None,
        f_low: Some(problem.f_low),
        f_up: problem.f_up,
        lipschitz: problem.lipschitz(cfg.p),
    }
}

fn push_segment(
    out: &mut Vec<TraceRecord>,
    run_id: &str,
    segment: Segment,
    target: Option<usize>,
    components: u64,
    result: &ArpccResult,
) {
    for it in &result.trace {
        out.push(TraceRecord::Iter(IterEntry {
            run_id: run_id.to_string(),
            segment,
            target,
            record: it.clone(),
        }));
    }
    out.push(TraceRecord::Summary(SegmentSummary {
        run_id: run_id.to_string(),
        segment,
        target,
        components,
        x0: result.x0.clone(),
        f0: result.f0,
        start_counters: result.start_counters,
        status: result.status,
        x: result.x.clone(),
        f: result.f,
        chi: result.chi,
        successful: result.successful,
        max_sigma: result.max_sigma,
        counters: result.counters,
    }));
}

/// Records of a convex run on `problem`'s objective.
pub fn convex_trace(
    run_id: &str,
    problem: &Problem,
    cfg: &ArpccConfig,
    result: &ArpccResult,
) -> Vec<TraceRecord> {
    let mut h = header(run_id, Solver::Arpcc, problem, cfg);
    h.epsilon = Some(cfg.epsilon);
    let mut out = vec![TraceRecord::Run(h)];
    push_segment(&mut out, run_id, Segment::Convex, None, 1, result);
    out
}

/// Records of a two-phase run. Lipschitz data refer to the objective and
/// are left out.
pub fn general_trace(
    run_id: &str,
    problem: &Problem,
    cfg: &ArpgcConfig,
    result: &ArpgcResult,
) -> Vec<TraceRecord> {
    let mut h = header(run_id, Solver::Arpgc, problem, &cfg.inner);
    h.lipschitz = None;
    h.eps_p = Some(cfg.eps_p);
    h.eps_d = Some(cfg.eps_d);
    h.delta = Some(cfg.delta);
    let mut out = vec![TraceRecord::Run(h)];
    push_segment(
        &mut out,
        run_id,
        Segment::Phase1,
        None,
        1,
        &result.phase_one.run,
    );
    if let Some(two) = &result.phase_two {
        for (target, run) in two.targets.iter().zip(&two.runs) {
            push_segment(&mut out, run_id, Segment::Phase2, Some(target.k), 2, run);
            out.push(TraceRecord::Target(TargetEntry {
                run_id: run_id.to_string(),
                record: target.clone(),
            }));
        }
    }
    out.push(TraceRecord::Certificate(CertificateEntry {
        run_id: run_id.to_string(),
        certificate: result.certificate.clone(),
        counters: result.counters,
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arpcc::arpcc_minimize;
    use crate::oracle::ObjectiveOracle;
    use crate::registry;

    #[test]
    fn floats_use_seventeen_digits() {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
        vec![0.1f64, -2.5e-300, f64::NAN]
            .serialize(&mut ser)
            .unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "[1.0000000000000001e-1,-2.5000000000000000e-300,null]");
    }

    #[test]
    fn convex_trace_round_trips() {
        let problem = registry::quartic_box();
        let cfg = ArpccConfig::with_order(2);
        let mut oracle = ObjectiveOracle::new(problem.objective.as_ref());
        let result =
            arpcc_minimize(&mut oracle, &problem.x_start, &problem.feasible, &cfg, None).unwrap();
        let records = convex_trace("t", &problem, &cfg, &result);
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn malformed_line_is_reported() {
        let err = read_records("\n{\"kind\":\"run\"}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 2, .. }));
    }
}
