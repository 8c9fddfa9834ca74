//! Empirical scaling of iteration counts with the tolerance.
//!
//! The convex solver needs at most a constant times
//! `epsilon^(-(p+1)/p)` successful iterations. A sweep runs it over a grid
//! of tolerances and fits the least-squares slope of
//! `log(successful iterations)` against `log(1/epsilon)`; the slope should
//! not exceed `(p+1)/p` by more than [`SLOPE_SLACK`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arpcc::{arpcc_minimize, ArpccConfig, ArpccError, ArpccStatus};
use crate::oracle::{ObjectiveOracle, Problem};

pub const SLOPE_SLACK: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("the tolerance grid needs at least 4 points (got {0})")]
    TooFewPoints(usize),
    #[error("the tolerance grid must decrease strictly")]
    NotDecreasing,
    #[error("the tolerance grid must span at least two decades")]
    TooNarrow,
    #[error("solver failed at epsilon = {epsilon:e}: {source}")]
    Solver { epsilon: f64, source: ArpccError },
    #[error("solver hit its iteration budget at epsilon = {0:e}")]
    Budget(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub successful: usize,
    pub total: usize,
    pub f_values: u64,
    pub derivative_sets: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub problem: String,
    pub p: usize,
    pub points: Vec<SweepPoint>,
    pub slope: f64,
}

impl SweepResult {
    /// `(p+1)/p`.
    pub fn exponent(&self) -> f64 {
        (self.p as f64 + 1.0) / self.p as f64
    }

    pub fn within_bound(&self) -> bool {
        self.slope <= self.exponent() + SLOPE_SLACK
    }
}

/// Least-squares slope of `log(max(N, 1))` against `log(1/epsilon)`.
pub fn fit_slope(eps: &[f64], counts: &[f64]) -> f64 {
    let xs: Vec<f64> = eps.iter().map(|e| -e.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|n| n.max(1.0).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn validate_grid(grid: &[f64]) -> Result<(), SweepError> {
    if grid.len() < 4 {
        return Err(SweepError::TooFewPoints(grid.len()));
    }
    if grid.windows(2).any(|w| !(w[1] < w[0])) || grid.iter().any(|e| !(*e > 0.0)) {
        return Err(SweepError::NotDecreasing);
    }
    if grid[0] / grid[grid.len() - 1] < 100.0 {
        return Err(SweepError::TooNarrow);
    }
    Ok(())
}

/// Runs the convex solver at every tolerance in `grid`, concurrently.
pub fn sweep(
    problem: &Problem,
    base: &ArpccConfig,
    grid: &[f64],
) -> Result<SweepResult, SweepError> {
    validate_grid(grid)?;
    let outcomes: Vec<Result<SweepPoint, SweepError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = grid
            .iter()
            .map(|&epsilon| {
                let cfg = ArpccConfig {
                    epsilon,
                    ..base.clone()
                };
                scope.spawn(move || {
                    let mut oracle = ObjectiveOracle::new(problem.objective.as_ref());
                    let r = arpcc_minimize(
                        &mut oracle,
                        &problem.x_start,
                        &problem.feasible,
                        &cfg,
                        None,
                    )
                    .map_err(|source| SweepError::Solver { epsilon, source })?;
                    if r.status == ArpccStatus::BudgetExceeded {
                        return Err(SweepError::Budget(epsilon));
                    }
                    Ok(SweepPoint {
                        epsilon,
                        successful: r.successful,
                        total: r.trace.len(),
                        f_values: r.counters.f_values,
                        derivative_sets: r.counters.f_derivative_sets,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let points = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    let counts: Vec<f64> = points.iter().map(|pt| pt.successful as f64).collect();
    Ok(SweepResult {
        problem: problem.name.clone(),
        p: base.p,
        slope: fit_slope(grid, &counts),
        points,
    })
}
