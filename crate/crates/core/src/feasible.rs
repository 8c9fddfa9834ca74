//! Convex feasible sets: the whole space or a (possibly unbounded) box.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibleSetError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty box: lower[{index}] = {lower} > upper[{index}] = {upper}")]
    EmptyBox {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("bound {index} is NaN")]
    NanBound { index: usize },
    #[error("point is not in the feasible set (violation {violation:e})")]
    Infeasible { violation: f64 },
}

/// Tolerance used when a point is required to lie in the set.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    WholeSpace(usize),
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl FeasibleSet {
    pub fn whole_space(dim: usize) -> Self {
        FeasibleSet::WholeSpace(dim)
    }

    /// A box `lower <= x <= upper`; infinite bounds are allowed.
    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, FeasibleSetError> {
        if lower.len() != upper.len() {
            return Err(FeasibleSetError::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (index, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(FeasibleSetError::NanBound { index });
            }
            if l > u {
                return Err(FeasibleSetError::EmptyBox {
                    index,
                    lower: l,
                    upper: u,
                });
            }
        }
        Ok(FeasibleSet::Box { lower, upper })
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::WholeSpace(n) => *n,
            FeasibleSet::Box { lower, .. } => lower.len(),
        }
    }

    fn bounds(&self, i: usize) -> (f64, f64) {
        match self {
            FeasibleSet::WholeSpace(_) => (f64::NEG_INFINITY, f64::INFINITY),
            FeasibleSet::Box { lower, upper } => (lower[i], upper[i]),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), FeasibleSetError> {
        if x.len() != self.dim() {
            return Err(FeasibleSetError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FeasibleSet::WholeSpace(_) => x.to_vec(),
            FeasibleSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&v, (&l, &u))| v.max(l).min(u))
                .collect(),
        }
    }

    /// Largest componentwise bound violation (0 inside the set).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            FeasibleSet::WholeSpace(_) => 0.0,
            FeasibleSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
                .fold(0.0, f64::max),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && self.violation(x) <= tol
    }

    /// Minimizes `<g, d>` over `x + d` in the set with `||d||_inf <= 1`.
    ///
    /// The problem separates by coordinate: each `d_i` ranges over
    /// `[max(l_i - x_i, -1), min(u_i - x_i, 1)]` and takes the end of that
    /// interval against the sign of `g_i` (0 when `g_i = 0`). Returns the
    /// (non-positive) optimal value and the minimizer.
    pub fn chi_linear_min(
        &self,
        x: &[f64],
        g: &[f64],
    ) -> Result<(f64, Vec<f64>), FeasibleSetError> {
        self.check_dim(x)?;
        self.check_dim(g)?;
        let violation = self.violation(x);
        if violation > MEMBERSHIP_TOL {
            return Err(FeasibleSetError::Infeasible { violation });
        }
        let mut value = 0.0;
        let mut d = vec![0.0; x.len()];
        for i in 0..x.len() {
            let (l, u) = self.bounds(i);
            let lo = (l - x[i]).clamp(-1.0, 0.0);
            let hi = (u - x[i]).clamp(0.0, 1.0);
            let di = if g[i] > 0.0 {
                lo
            } else if g[i] < 0.0 {
                hi
            } else {
                0.0
            };
            d[i] = di;
            value += g[i] * di;
        }
        Ok((value.min(0.0), d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(n: usize) -> FeasibleSet {
        FeasibleSet::new_box(vec![0.0; n], vec![1.0; n]).unwrap()
    }

    #[test]
    fn projection_examples() {
        assert_eq!(unit_box(2).project(&[-1.0, 0.5]), vec![0.0, 0.5]);
        assert_eq!(
            FeasibleSet::whole_space(2).project(&[-7.0, 3.0]),
            vec![-7.0, 3.0]
        );
        assert_eq!(unit_box(2).project(&[0.25, 1.0]), vec![0.25, 1.0]);
    }

    #[test]
    fn membership_examples() {
        let b = unit_box(1);
        assert!(b.contains(&[1.0 + 1e-12], 1e-10));
        assert!(!b.contains(&[1.1], 1e-10));
        assert!(FeasibleSet::whole_space(1).contains(&[1e300], 0.0));
    }

    #[test]
    fn invalid_boxes() {
        assert!(matches!(
            FeasibleSet::new_box(vec![1.0], vec![0.0]),
            Err(FeasibleSetError::EmptyBox { .. })
        ));
        assert!(FeasibleSet::new_box(vec![0.0], vec![0.0, 1.0]).is_err());
        assert!(FeasibleSet::new_box(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn chi_linear_min_examples() {
        let half_line = FeasibleSet::new_box(vec![0.0], vec![f64::INFINITY]).unwrap();
        assert_eq!(
            half_line.chi_linear_min(&[0.0], &[1.0]).unwrap(),
            (0.0, vec![0.0])
        );
        assert_eq!(
            half_line.chi_linear_min(&[0.0], &[-1.0]).unwrap(),
            (-1.0, vec![1.0])
        );

        let b = FeasibleSet::new_box(vec![0.0; 2], vec![2.0; 2]).unwrap();
        let (v, d) = b.chi_linear_min(&[0.0, 1.5], &[-3.0, 2.0]).unwrap();
        assert_eq!(v, -5.0);
        assert_eq!(d, vec![1.0, -1.0]);
    }

    #[test]
    fn chi_linear_min_requires_feasible_point() {
        assert!(matches!(
            unit_box(1).chi_linear_min(&[2.0], &[1.0]),
            Err(FeasibleSetError::Infeasible { .. })
        ));
    }

    #[test]
    fn fixed_variable_has_no_freedom() {
        let b = FeasibleSet::new_box(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(b.chi_linear_min(&[1.0], &[-4.0]).unwrap().0, 0.0);
    }
}
