//! First-order criticality measures over a feasible set.
//!
//! `chi` is the magnitude of the best linearized decrease along feasible
//! directions in the unit infinity-ball; `pi` is the length of the projected
//! gradient step. Both vanish exactly at first-order critical points. The
//! solvers only use `chi`; `pi` is kept as an independent cross-check.

use crate::feasible::{FeasibleSet, FeasibleSetError};

/// `chi_h(x) = |min { <g, d> : x + d in F, ||d||_inf <= 1 }|`.
pub fn chi(g: &[f64], x: &[f64], set: &FeasibleSet) -> Result<f64, FeasibleSetError> {
    let (value, _) = set.chi_linear_min(x, g)?;
    Ok(value.abs())
}

/// `pi_h(x) = ||P_F(x - g) - x||`.
pub fn pi(g: &[f64], x: &[f64], set: &FeasibleSet) -> Result<f64, FeasibleSetError> {
    if g.len() != set.dim() || x.len() != set.dim() {
        return Err(FeasibleSetError::DimensionMismatch {
            expected: set.dim(),
            found: g.len().min(x.len()),
        });
    }
    let violation = set.violation(x);
    if violation > crate::feasible::MEMBERSHIP_TOL {
        return Err(FeasibleSetError::Infeasible { violation });
    }
    let shifted: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
    let p = set.project(&shifted);
    Ok(p.iter()
        .zip(x)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Constant with `||v||_2 <= kappa_n ||v||_inf` in dimension `n`.
pub fn kappa_n(n: usize) -> f64 {
    (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_examples() {
        let r2 = FeasibleSet::whole_space(2);
        assert_eq!(chi(&[0.0, 0.0], &[1.0, 2.0], &r2).unwrap(), 0.0);
        assert_eq!(chi(&[3.0, -4.0], &[0.0, 0.0], &r2).unwrap(), 7.0);
        let b = FeasibleSet::new_box(vec![0.0; 2], vec![2.0; 2]).unwrap();
        assert_eq!(chi(&[-3.0, 2.0], &[0.0, 1.5], &b).unwrap(), 5.0);
    }

    #[test]
    fn pi_examples() {
        let r2 = FeasibleSet::whole_space(2);
        assert!((pi(&[3.0, -4.0], &[1.0, 1.0], &r2).unwrap() - 5.0).abs() < 1e-15);
        let half_line = FeasibleSet::new_box(vec![0.0], vec![f64::INFINITY]).unwrap();
        assert_eq!(pi(&[1.0], &[0.0], &half_line).unwrap(), 0.0);
        let b = FeasibleSet::new_box(vec![0.0], vec![2.0]).unwrap();
        assert!((pi(&[-1.0], &[1.9], &b).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn measures_reject_infeasible_points() {
        let b = FeasibleSet::new_box(vec![0.0], vec![1.0]).unwrap();
        assert!(chi(&[1.0], &[3.0], &b).is_err());
        assert!(pi(&[1.0], &[3.0], &b).is_err());
    }

    #[test]
    fn kappa_n_bounds_norm_ratio() {
        let v = [1.0, -1.0, 1.0, 1.0];
        let l2 = v.iter().map(|a: &f64| a * a).sum::<f64>().sqrt();
        assert!(l2 <= kappa_n(4) * 1.0 + 1e-15);
    }
}
