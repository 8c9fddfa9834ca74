//! Approximate minimization of the regularized model over the feasible set.
//!
//! Projected gradient descent on `s -> m(s)` from `s = 0`, with an Armijo
//! backtracking search on the model. Trial step lengths start from the
//! Barzilai-Borwein estimate of the previous iteration; the search itself is
//! monotone. The loop stops once the model has decreased at least once and
//! `chi_m(x + s) <= theta ||s||^p`. Only the model is evaluated here, never
//! the objective.

use thiserror::Error;

use crate::criticality::chi;
use crate::feasible::{FeasibleSet, FeasibleSetError};
use crate::model::{norm2, ModelState};
use crate::tensor::TensorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubsolverError {
    #[error("inner iteration budget of {0} exhausted before the step criticality test held")]
    InnerBudgetExceeded(usize),
    #[error("no feasible step decreases the model")]
    NoDescent,
    #[error("model minimization stalled after {iterations} iterations (chi_m = {chi_model:e}, target {target:e})")]
    Stalled {
        iterations: usize,
        chi_model: f64,
        target: f64,
    },
    #[error("invalid subsolver controls: {0}")]
    InvalidControls(&'static str),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Feasible(#[from] FeasibleSetError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsolverControls {
    pub theta: f64,
    pub max_inner_iters: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    /// First trial step length; `None` means `1 / sigma`.
    pub initial_step: Option<f64>,
}

impl Default for SubsolverControls {
    fn default() -> Self {
        Self {
            theta: 100.0,
            max_inner_iters: 100_000,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            initial_step: None,
        }
    }
}

impl SubsolverControls {
    pub fn validate(&self) -> Result<(), SubsolverError> {
        if !(self.theta > 0.0) {
            return Err(SubsolverError::InvalidControls("theta must be positive"));
        }
        if self.max_inner_iters == 0 {
            return Err(SubsolverError::InvalidControls(
                "max_inner_iters must be positive",
            ));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(SubsolverError::InvalidControls(
                "armijo_c must lie in (0, 1)",
            ));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(SubsolverError::InvalidControls(
                "backtrack_factor must lie in (0, 1)",
            ));
        }
        if let Some(a) = self.initial_step {
            if !(a > 0.0) {
                return Err(SubsolverError::InvalidControls(
                    "initial_step must be positive",
                ));
            }
        }
        Ok(())
    }
}

/// A step accepted by [`solve_subproblem`], with the quantities measured at it.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemStep {
    pub step: Vec<f64>,
    /// `m(s) - m(0)`, negative for every returned step.
    pub model_change: f64,
    /// `chi` of the model gradient at `x + s`.
    pub chi_model: f64,
    pub inner_iters: usize,
}

fn add(x: &[f64], s: &[f64]) -> Vec<f64> {
    x.iter().zip(s).map(|(a, b)| a + b).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn solve_subproblem(
    model: &ModelState,
    set: &FeasibleSet,
    controls: &SubsolverControls,
) -> Result<SubproblemStep, SubsolverError> {
    solve_subproblem_observed(model, set, controls, &mut |_| {})
}

/// Like [`solve_subproblem`], reporting `m(s) - m(0)` at every accepted
/// inner iterate to `observer`, starting with `0` at `s = 0`.
pub fn solve_subproblem_observed(
    model: &ModelState,
    set: &FeasibleSet,
    controls: &SubsolverControls,
    observer: &mut dyn FnMut(f64),
) -> Result<SubproblemStep, SubsolverError> {
    controls.validate()?;
    let x = &model.x;
    let n = x.len();
    let p = model.p() as i32;
    let base_step = controls.initial_step.unwrap_or(1.0 / model.sigma);

    // Model values are tracked relative to m(0).
    observer(0.0);
    let mut s = vec![0.0; n];
    let mut m = 0.0;
    let mut g = model.gradient(&s)?;
    let mut alpha = base_step;
    let mut decreased = false;
    let mut chi_m = f64::INFINITY;
    let mut target = 0.0;

    for iter in 0..controls.max_inner_iters {
        if decreased {
            chi_m = chi(&g, &add(x, &s), set)?;
            target = controls.theta * norm2(&s).powi(p);
            if chi_m <= target {
                return Ok(SubproblemStep {
                    step: s,
                    model_change: m,
                    chi_model: chi_m,
                    inner_iters: iter,
                });
            }
        }

        let mut accepted = None;
        let mut a = alpha;
        loop {
            let moved: Vec<f64> = x
                .iter()
                .zip(&s)
                .zip(&g)
                .map(|((xi, si), gi)| xi + si - a * gi)
                .collect();
            let trial: Vec<f64> = set
                .project(&moved)
                .iter()
                .zip(x)
                .map(|(p, xi)| p - xi)
                .collect();
            let d: Vec<f64> = trial.iter().zip(&s).map(|(t, si)| t - si).collect();
            let slope = dot(&g, &d);
            if d.iter().all(|v| *v == 0.0) || !(slope < 0.0) {
                break;
            }
            let mt = model.change(&trial)?;
            if mt < m && mt <= m + controls.armijo_c * slope {
                accepted = Some((trial, d, mt, a));
                break;
            }
            a *= controls.backtrack_factor;
            if a < base_step * 1e-40 {
                break;
            }
        }

        let Some((trial, d, mt, a)) = accepted else {
            if decreased {
                return Err(SubsolverError::Stalled {
                    iterations: iter,
                    chi_model: chi_m,
                    target,
                });
            }
            return Err(SubsolverError::NoDescent);
        };

        let g_new = model.gradient(&trial)?;
        let dg: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let curvature = dot(&d, &dg);
        alpha = if curvature > 0.0 {
            (dot(&d, &d) / curvature).clamp(base_step * 1e-12, base_step * 1e12)
        } else {
            // Non-positive curvature along the step: keep stepping boldly.
            (2.0 * a).min(base_step * 1e12)
        };
        observer(mt);
        s = trial;
        m = mt;
        g = g_new;
        decreased = true;
    }
    Err(SubsolverError::InnerBudgetExceeded(
        controls.max_inner_iters,
    ))
}
