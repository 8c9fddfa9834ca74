//! The regularized Taylor model `m(s) = T_p(x, s) + sigma/(p+1) ||s||^(p+1)`.

use crate::tensor::{TaylorData, TensorError};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub x: Vec<f64>,
    pub taylor: TaylorData,
    pub sigma: f64,
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

impl ModelState {
    pub fn new(x: Vec<f64>, taylor: TaylorData, sigma: f64) -> Self {
        debug_assert!(sigma > 0.0);
        Self { x, taylor, sigma }
    }

    pub fn p(&self) -> usize {
        self.taylor.order()
    }

    pub fn value(&self, s: &[f64]) -> Result<f64, TensorError> {
        Ok(self.taylor.value() + self.change(s)?)
    }

    /// `m(s) - m(0)`, without rounding against `f(x)`.
    pub fn change(&self, s: &[f64]) -> Result<f64, TensorError> {
        let p = self.p() as i32;
        let t = self.taylor.taylor_increment(s)?;
        Ok(t + self.sigma / (p + 1) as f64 * norm2(s).powi(p + 1))
    }

    pub fn gradient(&self, s: &[f64]) -> Result<Vec<f64>, TensorError> {
        let p = self.p() as i32;
        let mut g = self.taylor.taylor_gradient(s)?;
        let w = self.sigma * norm2(s).powi(p - 1);
        for (gi, si) in g.iter_mut().zip(s) {
            *gi += w * si;
        }
        Ok(g)
    }

    /// `T_p(x, 0) - T_p(x, s)`, the denominator of the acceptance ratio.
    pub fn decrease(&self, s: &[f64]) -> Result<f64, TensorError> {
        Ok(-self.taylor.taylor_increment(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SymTensor;

    fn linear_model() -> ModelState {
        let t = TaylorData::new(0.0, vec![SymTensor::vector(&[2.0])]).unwrap();
        ModelState::new(vec![0.0], t, 4.0)
    }

    #[test]
    fn value_examples() {
        let m = linear_model();
        assert_eq!(m.value(&[0.0]).unwrap(), 0.0);
        assert_eq!(m.value(&[1.0]).unwrap(), 4.0);
    }

    #[test]
    fn gradient_examples() {
        let m = linear_model();
        assert_eq!(m.gradient(&[0.0]).unwrap(), vec![2.0]);
        assert_eq!(m.gradient(&[1.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn change_is_value_difference() {
        let m = linear_model();
        assert_eq!(
            m.change(&[1.0]).unwrap(),
            m.value(&[1.0]).unwrap() - m.value(&[0.0]).unwrap()
        );
    }

    #[test]
    fn decrease_examples() {
        let m = linear_model();
        assert_eq!(m.decrease(&[0.0]).unwrap(), 0.0);
        assert_eq!(m.decrease(&[-0.5]).unwrap(), 1.0);
    }

    #[test]
    fn value_at_zero_is_function_value() {
        let t = TaylorData::new(
            -1.25,
            vec![SymTensor::vector(&[1.0, 2.0]), SymTensor::identity(2)],
        )
        .unwrap();
        let m = ModelState::new(vec![0.0, 0.0], t, 3.0);
        assert_eq!(m.value(&[0.0, 0.0]).unwrap(), -1.25);
    }
}
