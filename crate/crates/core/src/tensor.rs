//! Dense symmetric tensors and Taylor polynomials built from them.
//!
//! A [`SymTensor`] of order `q` over `R^n` stores one coefficient per
//! non-decreasing multi-index `i_1 <= ... <= i_q`, in lexicographic order.
//! Symmetry is therefore a property of the storage, not something that has to
//! be maintained. Contractions re-expand the canonical entries with the
//! multinomial count of each index multiset.

use thiserror::Error;

/// Highest derivative order supported by the models.
pub const MAX_ORDER: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot contract an order-{order} tensor {times} times")]
    InvalidContraction { order: usize, times: usize },
    #[error("unsupported tensor order {0}")]
    UnsupportedOrder(usize),
    #[error("derivative orders must be 1..=p in sequence, order {found} at position {position}")]
    OrderSequence { position: usize, found: usize },
    #[error("non-finite tensor entry")]
    NonFinite,
}

/// Number of multisets of size `k` drawn from `n` symbols.
pub fn multichoose(n: usize, k: usize) -> usize {
    if k == 0 {
        return 1;
    }
    if n == 0 {
        return 0;
    }
    // C(n + k - 1, k), accumulated so every intermediate stays integral.
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n + i) / (i + 1);
    }
    acc
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Number of ordered tuples that sort to the given non-decreasing tuple.
fn permutation_count(sorted: &[usize]) -> f64 {
    let mut count = factorial(sorted.len());
    let mut run = 1;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            count /= factorial(run);
            run = 1;
        }
    }
    if !sorted.is_empty() {
        count /= factorial(run);
    }
    count
}

/// Calls `f` on every non-decreasing multi-index of length `order` over
/// `0..dim`, in the storage order of [`SymTensor`].
pub fn for_each_canonical_index(order: usize, dim: usize, mut f: impl FnMut(&[usize])) {
    if order == 0 {
        f(&[]);
        return;
    }
    if dim == 0 {
        return;
    }
    let mut idx = vec![0usize; order];
    loop {
        f(&idx);
        // Odometer step keeping the tuple non-decreasing.
        let mut pos = order;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            if idx[pos] + 1 < dim {
                let v = idx[pos] + 1;
                for slot in &mut idx[pos..] {
                    *slot = v;
                }
                break;
            }
        }
    }
}

/// A symmetric tensor of order `q` (order 0 is a scalar) over `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor {
    order: usize,
    dim: usize,
    entries: Vec<f64>,
}

impl SymTensor {
    pub fn zeros(order: usize, dim: usize) -> Self {
        Self {
            order,
            dim,
            entries: vec![0.0; multichoose(dim, order)],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            order: 0,
            dim: 0,
            entries: vec![value],
        }
    }

    /// Order-1 tensor holding a vector.
    pub fn vector(v: &[f64]) -> Self {
        Self {
            order: 1,
            dim: v.len(),
            entries: v.to_vec(),
        }
    }

    /// The order-2 identity `delta_ij`.
    pub fn identity(dim: usize) -> Self {
        Self::from_fn(2, dim, |idx| if idx[0] == idx[1] { 1.0 } else { 0.0 })
    }

    /// Builds a tensor by evaluating `f` at each canonical (sorted) index.
    pub fn from_fn(order: usize, dim: usize, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut entries = Vec::with_capacity(multichoose(dim, order));
        for_each_canonical_index(order, dim, |idx| entries.push(f(idx)));
        Self {
            order,
            dim,
            entries,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Canonical coefficients in storage order.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    /// For order 0 returns the scalar value, otherwise `None`.
    pub fn as_scalar(&self) -> Option<f64> {
        (self.order == 0).then(|| self.entries[0])
    }

    /// For order 1 returns the vector, otherwise `None`.
    pub fn as_vector(&self) -> Option<&[f64]> {
        (self.order == 1).then_some(&self.entries[..])
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }

    fn rank_sorted(&self, sorted: &[usize]) -> usize {
        let n = self.dim;
        let q = sorted.len();
        let mut rank = 0;
        let mut prev = 0;
        for (j, &a) in sorted.iter().enumerate() {
            for v in prev..a {
                rank += multichoose(n - v, q - j - 1);
            }
            prev = a;
        }
        rank
    }

    /// Entry at an arbitrary (unsorted) multi-index.
    pub fn get(&self, idx: &[usize]) -> f64 {
        assert_eq!(
            idx.len(),
            self.order,
            "index length must equal tensor order"
        );
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        self.entries[self.rank_sorted(&sorted)]
    }

    /// Sets the entry for the multiset of `idx` (and so every permutation).
    pub fn set(&mut self, idx: &[usize], value: f64) {
        assert_eq!(
            idx.len(),
            self.order,
            "index length must equal tensor order"
        );
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        let r = self.rank_sorted(&sorted);
        self.entries[r] = value;
    }

    /// Applies the tensor `times` times to `s`, giving a tensor of order
    /// `order - times`.
    pub fn contract(&self, s: &[f64], times: usize) -> Result<SymTensor, TensorError> {
        if times > self.order {
            return Err(TensorError::InvalidContraction {
                order: self.order,
                times,
            });
        }
        if self.order > 0 && s.len() != self.dim {
            return Err(TensorError::DimensionMismatch {
                expected: self.dim,
                found: s.len(),
            });
        }
        if times == 0 {
            return Ok(self.clone());
        }
        let kept = self.order - times;
        let mut out = if kept == 0 {
            SymTensor::scalar(0.0)
        } else {
            SymTensor::zeros(kept, self.dim)
        };
        let q = self.order;
        let mut kept_idx = Vec::with_capacity(kept);
        let mut used_idx = Vec::with_capacity(times);
        let mut seen: Vec<Vec<usize>> = Vec::with_capacity(1 << q);
        let mut pos = 0;
        for_each_canonical_index(q, self.dim, |idx| {
            let value = self.entries[pos];
            pos += 1;
            if value == 0.0 {
                return;
            }
            seen.clear();
            // Every distinct split of the multiset into a kept part and a
            // contracted part contributes once, weighted by the number of
            // orderings of the contracted part.
            for mask in 0u32..(1 << q) {
                if mask.count_ones() as usize != times {
                    continue;
                }
                kept_idx.clear();
                used_idx.clear();
                for (b, &i) in idx.iter().enumerate() {
                    if mask & (1 << b) != 0 {
                        used_idx.push(i);
                    } else {
                        kept_idx.push(i);
                    }
                }
                if seen.contains(&kept_idx) {
                    continue;
                }
                seen.push(kept_idx.clone());
                let weight = permutation_count(&used_idx);
                let prod: f64 = used_idx.iter().map(|&i| s[i]).product();
                let slot = if kept == 0 {
                    0
                } else {
                    out.rank_sorted(&kept_idx)
                };
                out.entries[slot] += value * weight * prod;
            }
        });
        Ok(out)
    }

    /// Largest absolute entry, or 0 for an empty tensor.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.entries {
            *v *= alpha;
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &SymTensor) -> Result<(), TensorError> {
        if self.order != other.order || self.entries.len() != other.entries.len() {
            return Err(TensorError::DimensionMismatch {
                expected: self.entries.len(),
                found: other.entries.len(),
            });
        }
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a += alpha * b;
        }
        Ok(())
    }
}

/// Value and derivative tensors of orders `1..=p` of a scalar function at a
/// point: the data of the `p`-th order Taylor polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorData {
    value: f64,
    derivs: Vec<SymTensor>,
}

impl TaylorData {
    pub fn new(value: f64, derivs: Vec<SymTensor>) -> Result<Self, TensorError> {
        if derivs.is_empty() || derivs.len() > MAX_ORDER {
            return Err(TensorError::UnsupportedOrder(derivs.len()));
        }
        let dim = derivs[0].dim();
        for (position, d) in derivs.iter().enumerate() {
            if d.order() != position + 1 {
                return Err(TensorError::OrderSequence {
                    position,
                    found: d.order(),
                });
            }
            if d.dim() != dim {
                return Err(TensorError::DimensionMismatch {
                    expected: dim,
                    found: d.dim(),
                });
            }
        }
        if !value.is_finite() || !derivs.iter().all(SymTensor::is_finite) {
            return Err(TensorError::NonFinite);
        }
        Ok(Self { value, derivs })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn order(&self) -> usize {
        self.derivs.len()
    }

    pub fn dim(&self) -> usize {
        self.derivs[0].dim()
    }

    /// Derivative tensor of order `q` (1-based).
    pub fn deriv(&self, q: usize) -> &SymTensor {
        &self.derivs[q - 1]
    }

    pub fn derivs(&self) -> &[SymTensor] {
        &self.derivs
    }

    pub fn gradient(&self) -> &[f64] {
        self.derivs[0]
            .as_vector()
            .expect("first derivative is a vector")
    }

    /// Keeps only derivative orders `1..=p`.
    pub fn truncated(&self, p: usize) -> TaylorData {
        TaylorData {
            value: self.value,
            derivs: self.derivs[..p.min(self.derivs.len())].to_vec(),
        }
    }

    fn check_dim(&self, s: &[f64]) -> Result<(), TensorError> {
        if s.len() != self.dim() {
            return Err(TensorError::DimensionMismatch {
                expected: self.dim(),
                found: s.len(),
            });
        }
        Ok(())
    }

    /// `T_p(x, s) = f(x) + sum_q D^q f(x)[s]^q / q!`.
    pub fn taylor_value(&self, s: &[f64]) -> Result<f64, TensorError> {
        Ok(self.value + self.taylor_increment(s)?)
    }

    /// `T_p(x, s) - f(x)`, computed without the constant term so that
    /// small changes are not lost to rounding against `f(x)`.
    pub fn taylor_increment(&self, s: &[f64]) -> Result<f64, TensorError> {
        self.check_dim(s)?;
        let mut total = 0.0;
        for (i, d) in self.derivs.iter().enumerate() {
            let q = i + 1;
            let term = d.contract(s, q)?.as_scalar().unwrap_or(0.0);
            total += term / factorial(q);
        }
        Ok(total)
    }

    /// Gradient of `s -> T_p(x, s)`.
    pub fn taylor_gradient(&self, s: &[f64]) -> Result<Vec<f64>, TensorError> {
        self.check_dim(s)?;
        let mut grad = self.gradient().to_vec();
        for (i, d) in self.derivs.iter().enumerate().skip(1) {
            let q = i + 1;
            let v = d.contract(s, q - 1)?;
            let w = 1.0 / factorial(q - 1);
            for (g, c) in grad.iter_mut().zip(v.entries()) {
                *g += w * c;
            }
        }
        Ok(grad)
    }
}
