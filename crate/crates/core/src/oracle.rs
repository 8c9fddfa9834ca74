//! Problem definitions and counted evaluation.
//!
//! A [`SmoothFunction`] is a pure description of a scalar function with
//! hand-coded derivative tensors. Solvers never call it directly; they go
//! through an [`Oracle`], which owns the evaluation counters. A
//! derivative-set evaluation covers every order `1..=p` at one point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasible::FeasibleSet;
use crate::tensor::{SymTensor, TaylorData, TensorError, MAX_ORDER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("function returned a non-finite value at the requested point")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no constraint with index {0}")]
    NoSuchConstraint(usize),
    #[error("derivative order {0} is not available")]
    UnsupportedOrder(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// A scalar function with exact derivatives up to order 3.
pub trait SmoothFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Value and derivatives of orders `1..=p` at `x`.
    fn taylor(&self, x: &[f64], p: usize) -> Result<TaylorData, TensorError>;
}

/// Monotone evaluation counts for one solver run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounters {
    pub f_values: u64,
    pub f_derivative_sets: u64,
    pub c_values: u64,
    pub c_derivative_sets: u64,
}

impl EvalCounters {
    pub fn values(&self) -> u64 {
        self.f_values + self.c_values
    }

    pub fn derivative_sets(&self) -> u64 {
        self.f_derivative_sets + self.c_derivative_sets
    }

    /// True when no field of `self` is below the corresponding field of `earlier`.
    pub fn dominates(&self, earlier: &EvalCounters) -> bool {
        self.f_values >= earlier.f_values
            && self.f_derivative_sets >= earlier.f_derivative_sets
            && self.c_values >= earlier.c_values
            && self.c_derivative_sets >= earlier.c_derivative_sets
    }
}

/// Counted access to a function, as consumed by the solvers.
pub trait Oracle {
    fn dim(&self) -> usize;
    fn value(&mut self, x: &[f64]) -> Result<f64, OracleError>;
    fn taylor(&mut self, x: &[f64], p: usize) -> Result<TaylorData, OracleError>;
    fn counters(&self) -> EvalCounters;
    /// Number of counter increments one value (or derivative-set)
    /// evaluation produces.
    fn components(&self) -> u64 {
        1
    }
}

fn check_dim(expected: usize, x: &[f64]) -> Result<(), OracleError> {
    if x.len() != expected {
        return Err(OracleError::DimensionMismatch {
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

/// Counts objective evaluations of a [`SmoothFunction`].
pub struct ObjectiveOracle<'a> {
    function: &'a dyn SmoothFunction,
    counters: EvalCounters,
}

impl<'a> ObjectiveOracle<'a> {
    pub fn new(function: &'a dyn SmoothFunction) -> Self {
        Self {
            function,
            counters: EvalCounters::default(),
        }
    }
}

impl Oracle for ObjectiveOracle<'_> {
    fn dim(&self) -> usize {
        self.function.dim()
    }

    fn value(&mut self, x: &[f64]) -> Result<f64, OracleError> {
        check_dim(self.function.dim(), x)?;
        self.counters.f_values += 1;
        let v = self.function.value(x);
        if !v.is_finite() {
            return Err(OracleError::NonFinite);
        }
        Ok(v)
    }

    fn taylor(&mut self, x: &[f64], p: usize) -> Result<TaylorData, OracleError> {
        check_dim(self.function.dim(), x)?;
        if p == 0 || p > MAX_ORDER {
            return Err(OracleError::UnsupportedOrder(p));
        }
        self.counters.f_derivative_sets += 1;
        Ok(self.function.taylor(x, p)?)
    }

    fn counters(&self) -> EvalCounters {
        self.counters
    }
}

/// Which function of a [`Problem`] to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Objective,
    Constraint(usize),
}

/// `min f(x)` over `x` in `feasible`, subject to `c(x) = 0`.
pub struct Problem {
    pub name: String,
    pub description: String,
    pub objective: Box<dyn SmoothFunction>,
    pub constraints: Vec<Box<dyn SmoothFunction>>,
    pub feasible: FeasibleSet,
    /// Lower bound on `f` over the region the solver explores.
    pub f_low: f64,
    pub f_up: Option<f64>,
    /// Lipschitz constants of the `p`-th derivative of `f`, for `p = 1, 2, 3`.
    pub lipschitz: [Option<f64>; 3],
    /// Unprojected starting point.
    pub x_start: Vec<f64>,
    /// Bounded region used to draw random test points for problems posed on
    /// unbounded sets.
    pub sample_lower: Vec<f64>,
    pub sample_upper: Vec<f64>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &self.dim())
            .field("m", &self.num_constraints())
            .finish()
    }
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn lipschitz(&self, p: usize) -> Option<f64> {
        (1..=3)
            .contains(&p)
            .then(|| self.lipschitz[p - 1])
            .flatten()
    }

    pub fn function(&self, which: Component) -> Result<&dyn SmoothFunction, OracleError> {
        match which {
            Component::Objective => Ok(self.objective.as_ref()),
            Component::Constraint(i) => self
                .constraints
                .get(i)
                .map(|c| c.as_ref())
                .ok_or(OracleError::NoSuchConstraint(i)),
        }
    }

    /// Evaluates one function value and charges it to the matching counter.
    pub fn eval_value_counted(
        &self,
        which: Component,
        x: &[f64],
        counters: &mut EvalCounters,
    ) -> Result<f64, OracleError> {
        let h = self.function(which)?;
        check_dim(h.dim(), x)?;
        match which {
            Component::Objective => counters.f_values += 1,
            Component::Constraint(_) => counters.c_values += 1,
        }
        let v = h.value(x);
        if !v.is_finite() {
            return Err(OracleError::NonFinite);
        }
        Ok(v)
    }

    /// All constraint values at `x`, counted as one evaluation of `c`.
    pub fn eval_constraints_counted(
        &self,
        x: &[f64],
        counters: &mut EvalCounters,
    ) -> Result<Vec<f64>, OracleError> {
        check_dim(self.dim(), x)?;
        counters.c_values += 1;
        let c: Vec<f64> = self.constraints.iter().map(|ci| ci.value(x)).collect();
        if c.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite);
        }
        Ok(c)
    }

    /// Starting point shifted by a seeded uniform perturbation of half-width
    /// `radius` in each coordinate.
    pub fn randomized_start(&self, seed: u64, radius: f64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        self.x_start
            .iter()
            .map(|&v| v + rng.gen_range(-radius..=radius))
            .collect()
    }
}

/// Assembles [`TaylorData`] of order `p` from dense derivative callbacks.
/// Only the orders actually requested are evaluated.
pub fn taylor_from_parts(
    p: usize,
    value: f64,
    gradient: Vec<f64>,
    hessian: impl Fn(usize, usize) -> f64,
    third: impl Fn(usize, usize, usize) -> f64,
) -> Result<TaylorData, TensorError> {
    if p == 0 || p > MAX_ORDER {
        return Err(TensorError::UnsupportedOrder(p));
    }
    let n = gradient.len();
    let mut derivs = vec![SymTensor::vector(&gradient)];
    if p >= 2 {
        derivs.push(SymTensor::from_fn(2, n, |i| hessian(i[0], i[1])));
    }
    if p >= 3 {
        derivs.push(SymTensor::from_fn(3, n, |i| third(i[0], i[1], i[2])));
    }
    TaylorData::new(value, derivs)
}

/// Per-order maximum errors of the supplied derivatives against central
/// differences of the next-lower order, scaled by `max(1, max |D^q|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub errors: Vec<f64>,
}

impl DerivativeReport {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().fold(0.0, |m, &e| m.max(e))
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.errors.iter().all(|&e| e <= tol)
    }

    /// Orders (1-based) whose error exceeds `tol`.
    pub fn failing_orders(&self, tol: f64) -> Vec<usize> {
        self.errors
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > tol)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Compares each derivative order of `h` at `x` with central finite
/// differences of the order below it.
pub fn derivative_check(
    h: &dyn SmoothFunction,
    x: &[f64],
    p: usize,
) -> Result<DerivativeReport, OracleError> {
    check_dim(h.dim(), x)?;
    if p == 0 || p > MAX_ORDER {
        return Err(OracleError::UnsupportedOrder(p));
    }
    let n = x.len();
    let base = h.taylor(x, p)?;
    let mut errors = Vec::with_capacity(p);
    for q in 1..=p {
        let exact = base.deriv(q);
        let scale = exact.max_abs().max(1.0);
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let step = 1e-5 * x[j].abs().max(1.0);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += step;
            xm[j] -= step;
            let width = xp[j] - xm[j];
            let mut e_j = vec![0.0; n];
            e_j[j] = 1.0;
            let slice = exact.contract(&e_j, 1)?;
            if q == 1 {
                let fd = (h.value(&xp) - h.value(&xm)) / width;
                let v = slice.as_scalar().unwrap_or(0.0);
                worst = worst.max((fd - v).abs());
            } else {
                let hp = h.taylor(&xp, q - 1)?;
                let hm = h.taylor(&xm, q - 1)?;
                let lower_p = hp.deriv(q - 1).entries();
                let lower_m = hm.deriv(q - 1).entries();
                for ((a, b), v) in lower_p.iter().zip(lower_m).zip(slice.entries()) {
                    let fd = (a - b) / width;
                    worst = worst.max((fd - v).abs());
                }
            }
        }
        errors.push(worst / scale);
    }
    Ok(DerivativeReport { errors })
}
