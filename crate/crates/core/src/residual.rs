//! The merit function `mu(x, t) = 1/2 ||r(x, t)||^2` with
//! `r(x, t) = (c(x), f(x) - t)`.
//!
//! Derivatives of `mu` come from the derivatives of each residual
//! component by the chain rule, so they are exact whenever the components'
//! derivatives are. Without the objective the same machinery gives
//! `1/2 ||c(x)||^2`.
//!
//! [`CompositeResidual`] caches the component values and derivatives at the
//! last point it saw. The target only shifts the last residual component, so
//! changing it never invalidates the cache and re-scoring a point against a
//! new target costs no evaluations.

use thiserror::Error;

use crate::criticality::chi;
use crate::feasible::{FeasibleSet, FeasibleSetError};
use crate::oracle::{EvalCounters, Oracle, OracleError, Problem, SmoothFunction};
use crate::tensor::{SymTensor, TaylorData, TensorError, MAX_ORDER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResidualError {
    #[error("no cached derivatives at the requested point")]
    StaleCache,
    #[error("the residual has no objective component")]
    NoObjective,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Feasible(#[from] FeasibleSetError),
}

/// Component values and derivatives of the residual at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualData {
    pub x: Vec<f64>,
    pub target: f64,
    pub c_taylor: Vec<TaylorData>,
    pub f_taylor: Option<TaylorData>,
}

impl ResidualData {
    pub fn c(&self) -> Vec<f64> {
        self.c_taylor.iter().map(|t| t.value()).collect()
    }

    pub fn f(&self) -> Option<f64> {
        self.f_taylor.as_ref().map(|t| t.value())
    }

    pub fn order(&self) -> usize {
        self.c_taylor
            .iter()
            .chain(self.f_taylor.as_ref())
            .map(|t| t.order())
            .min()
            .unwrap_or(0)
    }

    /// `(c, f - t)`, or just `c` without the objective.
    pub fn r(&self) -> Vec<f64> {
        let mut r = self.c();
        if let Some(f) = self.f() {
            r.push(f - self.target);
        }
        r
    }

    pub fn norm(&self) -> f64 {
        norm(&self.r())
    }

    pub fn mu_value(&self) -> f64 {
        mu_value(&self.r())
    }

    /// Value and derivatives of `mu` up to order `p`.
    pub fn mu_taylor(&self, p: usize) -> Result<TaylorData, ResidualError> {
        if p == 0 || p > MAX_ORDER || p > self.order() {
            return Err(TensorError::UnsupportedOrder(p).into());
        }
        let n = self.x.len();
        let mut derivs: Vec<SymTensor> = (1..=p).map(|q| SymTensor::zeros(q, n)).collect();
        let comps = self
            .c_taylor
            .iter()
            .map(|t| (t, t.value()))
            .chain(self.f_taylor.iter().map(|t| (t, t.value() - self.target)));
        for (t, ri) in comps {
            let a = t.gradient();
            derivs[0].axpy(ri, t.deriv(1))?;
            if p >= 2 {
                let b = t.deriv(2);
                let mut outer = SymTensor::from_fn(2, n, |idx| a[idx[0]] * a[idx[1]]);
                outer.axpy(ri, b)?;
                derivs[1].axpy(1.0, &outer)?;
            }
            if p >= 3 {
                let b = t.deriv(2);
                let mut sym = SymTensor::from_fn(3, n, |idx| {
                    let (i, j, k) = (idx[0], idx[1], idx[2]);
                    a[i] * b.get(&[j, k]) + a[j] * b.get(&[i, k]) + a[k] * b.get(&[i, j])
                });
                sym.axpy(ri, t.deriv(3))?;
                derivs[2].axpy(1.0, &sym)?;
            }
        }
        Ok(TaylorData::new(self.mu_value(), derivs)?)
    }

    /// Gradient of `mu` at the cached point for target `t`.
    pub fn mu_gradient_at_target(&self, t: f64) -> Vec<f64> {
        let n = self.x.len();
        let mut g = vec![0.0; n];
        for ct in &self.c_taylor {
            let ci = ct.value();
            for (gj, aj) in g.iter_mut().zip(ct.gradient()) {
                *gj += ci * aj;
            }
        }
        if let Some(ft) = &self.f_taylor {
            let w = ft.value() - t;
            for (gj, aj) in g.iter_mut().zip(ft.gradient()) {
                *gj += w * aj;
            }
        }
        g
    }

    /// `chi` of `mu(., t_new)` at the cached point, from cached data only.
    pub fn rescore_chi_at_new_target(
        &self,
        t_new: f64,
        set: &FeasibleSet,
    ) -> Result<f64, ResidualError> {
        Ok(chi(&self.mu_gradient_at_target(t_new), &self.x, set)?)
    }

    /// `grad f + sum_i y_i grad c_i`.
    pub fn lagrangian_gradient(&self, y: &[f64]) -> Result<Vec<f64>, ResidualError> {
        let ft = self.f_taylor.as_ref().ok_or(ResidualError::NoObjective)?;
        let mut g = ft.gradient().to_vec();
        for (ct, yi) in self.c_taylor.iter().zip(y) {
            for (gj, aj) in g.iter_mut().zip(ct.gradient()) {
                *gj += yi * aj;
            }
        }
        Ok(g)
    }

    /// `chi` of `1/2 ||c||^2` at the cached point.
    pub fn chi_half_c_squared(&self, set: &FeasibleSet) -> Result<f64, ResidualError> {
        let n = self.x.len();
        let mut g = vec![0.0; n];
        for ct in &self.c_taylor {
            let ci = ct.value();
            for (gj, aj) in g.iter_mut().zip(ct.gradient()) {
                *gj += ci * aj;
            }
        }
        Ok(chi(&g, &self.x, set)?)
    }

    /// Evaluates every component at `x`, charging one derivative-set
    /// evaluation to `c` and, when included, to `f`.
    pub fn evaluate(
        problem: &Problem,
        include_objective: bool,
        x: &[f64],
        target: f64,
        p: usize,
        counters: &mut EvalCounters,
    ) -> Result<ResidualData, ResidualError> {
        if x.len() != problem.dim() {
            return Err(OracleError::DimensionMismatch {
                expected: problem.dim(),
                found: x.len(),
            }
            .into());
        }
        if p == 0 || p > MAX_ORDER {
            return Err(OracleError::UnsupportedOrder(p).into());
        }
        counters.c_derivative_sets += 1;
        let c_taylor = problem
            .constraints
            .iter()
            .map(|c| c.taylor(x, p))
            .collect::<Result<Vec<_>, _>>()?;
        let f_taylor = if include_objective {
            counters.f_derivative_sets += 1;
            Some(problem.objective.taylor(x, p)?)
        } else {
            None
        };
        Ok(ResidualData {
            x: x.to_vec(),
            target,
            c_taylor,
            f_taylor,
        })
    }
}

pub fn norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn mu_value(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Counted oracle for `mu(., t)` over a [`Problem`], caching the last point.
pub struct CompositeResidual<'a> {
    problem: &'a Problem,
    include_objective: bool,
    target: f64,
    values: Option<(Vec<f64>, Vec<f64>, Option<f64>)>,
    data: Option<ResidualData>,
    counters: EvalCounters,
}

impl<'a> CompositeResidual<'a> {
    /// `1/2 ||c(x)||^2`.
    pub fn feasibility(problem: &'a Problem) -> Self {
        Self::build(problem, false, 0.0)
    }

    /// `1/2 ||(c(x), f(x) - target)||^2`.
    pub fn with_target(problem: &'a Problem, target: f64) -> Self {
        Self::build(problem, true, target)
    }

    fn build(problem: &'a Problem, include_objective: bool, target: f64) -> Self {
        Self {
            problem,
            include_objective,
            target,
            values: None,
            data: None,
            counters: EvalCounters::default(),
        }
    }

    pub fn problem(&self) -> &Problem {
        self.problem
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn set_target(&mut self, t: f64) {
        self.target = t;
        if let Some(d) = self.data.as_mut() {
            d.target = t;
        }
    }

    /// Cached derivatives at the last point a derivative set was requested.
    pub fn data(&self) -> Option<&ResidualData> {
        self.data.as_ref()
    }

    /// Cached `(c(x), f(x))` if `x` was the last point evaluated.
    pub fn cached_values(&self, x: &[f64]) -> Option<(&[f64], Option<f64>)> {
        match &self.values {
            Some((vx, c, f)) if vx.as_slice() == x => Some((c.as_slice(), *f)),
            _ => None,
        }
    }

    fn data_at(&self, x: &[f64]) -> Result<&ResidualData, ResidualError> {
        match &self.data {
            Some(d) if d.x.as_slice() == x => Ok(d),
            _ => Err(ResidualError::StaleCache),
        }
    }

    /// `chi` of `mu(., t_new)` at `x` without any evaluation.
    pub fn rescore_chi_at_new_target(
        &self,
        x: &[f64],
        t_new: f64,
        set: &FeasibleSet,
    ) -> Result<f64, ResidualError> {
        self.data_at(x)?.rescore_chi_at_new_target(t_new, set)
    }

    fn r_from(&self, c: &[f64], f: Option<f64>) -> Vec<f64> {
        let mut r = c.to_vec();
        if let Some(f) = f {
            r.push(f - self.target);
        }
        r
    }
}

impl Oracle for CompositeResidual<'_> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn value(&mut self, x: &[f64]) -> Result<f64, OracleError> {
        if let Some((c, f)) = self.cached_values(x) {
            return Ok(mu_value(&self.r_from(c, f)));
        }
        let c = self
            .problem
            .eval_constraints_counted(x, &mut self.counters)?;
        let f = if self.include_objective {
            Some(self.problem.eval_value_counted(
                crate::oracle::Component::Objective,
                x,
                &mut self.counters,
            )?)
        } else {
            None
        };
        let v = mu_value(&self.r_from(&c, f));
        self.values = Some((x.to_vec(), c, f));
        Ok(v)
    }

    fn taylor(&mut self, x: &[f64], p: usize) -> Result<TaylorData, OracleError> {
        let fresh = match &self.data {
            Some(d) => d.x.as_slice() != x || d.order() < p,
            None => true,
        };
        if fresh {
            let d = ResidualData::evaluate(
                self.problem,
                self.include_objective,
                x,
                self.target,
                p,
                &mut self.counters,
            )
            .map_err(|e| match e {
                ResidualError::Oracle(o) => o,
                ResidualError::Tensor(t) => OracleError::Tensor(t),
                _ => OracleError::NonFinite,
            })?;
            if self.cached_values(x).is_none() {
                self.values = Some((x.to_vec(), d.c(), d.f()));
            }
            self.data = Some(d);
        }
        let d = self.data.as_ref().expect("derivatives cached above");
        d.mu_taylor(p).map_err(|e| match e {
            ResidualError::Tensor(t) => OracleError::Tensor(t),
            _ => OracleError::UnsupportedOrder(p),
        })
    }

    fn counters(&self) -> EvalCounters {
        self.counters
    }

    fn components(&self) -> u64 {
        if self.include_objective {
            2
        } else {
            1
        }
    }
}

/// Dense `J^T r` with `J` stacking the component gradients; a cross-check
/// for the order-one derivative of `mu`.
pub fn assembled_gradient(data: &ResidualData) -> Vec<f64> {
    let r = data.r();
    let n = data.x.len();
    let rows: Vec<&[f64]> = data
        .c_taylor
        .iter()
        .chain(data.f_taylor.as_ref())
        .map(|t| t.gradient())
        .collect();
    (0..n)
        .map(|j| rows.iter().zip(&r).map(|(row, ri)| row[j] * ri).sum())
        .collect()
}

/// `mu(., t)` as an uncounted [`SmoothFunction`], for derivative checks.
pub struct MeritFunction<'a> {
    pub problem: &'a Problem,
    pub include_objective: bool,
    pub target: f64,
}

impl SmoothFunction for MeritFunction<'_> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut r: Vec<f64> = self
            .problem
            .constraints
            .iter()
            .map(|c| c.value(x))
            .collect();
        if self.include_objective {
            r.push(self.problem.objective.value(x) - self.target);
        }
        mu_value(&r)
    }

    fn taylor(&self, x: &[f64], p: usize) -> Result<TaylorData, TensorError> {
        let mut scratch = EvalCounters::default();
        let data = ResidualData::evaluate(
            self.problem,
            self.include_objective,
            x,
            self.target,
            p,
            &mut scratch,
        )
        .map_err(|_| TensorError::NonFinite)?;
        data.mu_taylor(p).map_err(|e| match e {
            ResidualError::Tensor(t) => t,
            _ => TensorError::UnsupportedOrder(p),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry;

    #[test]
    fn mu_value_examples() {
        assert_eq!(mu_value(&[0.0, 0.0]), 0.0);
        assert!((mu_value(&[0.06, 0.08]) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn identity_objective_gives_half_square() {
        let problem = registry::infeasible();
        let mut counters = EvalCounters::default();
        // Drop the constraint to look at f(x) = x alone.
        let mut d = ResidualData::evaluate(&problem, true, &[0.7], 0.0, 3, &mut counters).unwrap();
        d.c_taylor.clear();
        let t = d.mu_taylor(3).unwrap();
        assert!((t.value() - 0.245).abs() < 1e-15);
        assert!((t.gradient()[0] - 0.7).abs() < 1e-15);
        assert_eq!(t.deriv(2).entries(), &[1.0]);
        assert_eq!(t.deriv(3).entries(), &[0.0]);
    }

    #[test]
    fn shifted_square_constraint() {
        // c(x) = x^2 - 1 at x = 2: r = 3, mu' = 12, mu'' = 22, mu''' = 3 * 4 * 2 = 24.
        let c = registry::DiagonalQuadratic {
            a: vec![1.0],
            c0: -1.0,
        };
        let data = ResidualData {
            x: vec![2.0],
            target: 0.0,
            c_taylor: vec![crate::oracle::SmoothFunction::taylor(&c, &[2.0], 3).unwrap()],
            f_taylor: None,
        };
        let t = data.mu_taylor(3).unwrap();
        assert_eq!(t.value(), 4.5);
        assert_eq!(t.gradient(), &[12.0]);
        assert_eq!(t.deriv(2).entries(), &[22.0]);
        assert_eq!(t.deriv(3).entries(), &[24.0]);
    }

    #[test]
    fn gradient_matches_assembled_form() {
        let problem = registry::powell_eq();
        let mut counters = EvalCounters::default();
        let x = [-1.7, 1.6, 1.8, -0.7, -0.8];
        let d = ResidualData::evaluate(&problem, true, &x, 0.03, 2, &mut counters).unwrap();
        let g = d.mu_taylor(1).unwrap();
        for (a, b) in g.gradient().iter().zip(assembled_gradient(&d)) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        assert_eq!(counters.c_derivative_sets, 1);
        assert_eq!(counters.f_derivative_sets, 1);
    }

    #[test]
    fn oracle_caches_by_point() {
        let problem = registry::circle();
        let mut oracle = CompositeResidual::with_target(&problem, 0.5);
        let x = [0.3, -0.4];
        oracle.value(&x).unwrap();
        oracle.value(&x).unwrap();
        assert_eq!(oracle.counters().c_values, 1);
        assert_eq!(oracle.counters().f_values, 1);
        oracle.taylor(&x, 2).unwrap();
        oracle.taylor(&x, 2).unwrap();
        assert_eq!(oracle.counters().c_derivative_sets, 1);
        assert_eq!(oracle.counters().f_derivative_sets, 1);
        oracle.set_target(-1.0);
        let v = oracle.value(&x).unwrap();
        // c = -0.75, f - t = -0.1 + 1 = 0.9.
        assert!((v - 0.5 * (0.5625 + 0.81)).abs() < 1e-15);
        assert_eq!(oracle.counters().values(), 2);
        oracle.value(&[0.0, 0.0]).unwrap();
        assert_eq!(oracle.counters().values(), 4);
    }

    #[test]
    fn rescore_needs_no_evaluation() {
        let problem = registry::circle();
        let mut oracle = CompositeResidual::with_target(&problem, 0.0);
        let x = [0.6, 0.8];
        oracle.taylor(&x, 1).unwrap();
        let before = oracle.counters();
        // c(x) = 0 and t = f(x) make the gradient vanish.
        let f = 1.4;
        let chi0 = oracle
            .rescore_chi_at_new_target(&x, f, &problem.feasible)
            .unwrap();
        assert!(chi0 < 1e-14);
        let chi_same = oracle
            .rescore_chi_at_new_target(&x, 0.0, &problem.feasible)
            .unwrap();
        let direct = oracle.taylor(&x, 1).unwrap();
        let expected = chi(direct.gradient(), &x, &problem.feasible).unwrap();
        assert_eq!(chi_same, expected);
        assert_eq!(oracle.counters(), before);
        assert_eq!(
            oracle.rescore_chi_at_new_target(&[0.0, 0.0], 0.0, &problem.feasible),
            Err(ResidualError::StaleCache)
        );
    }
}
