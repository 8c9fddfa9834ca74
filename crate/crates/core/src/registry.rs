//! Built-in test problems with hand-coded derivatives up to order 3.

use crate::feasible::FeasibleSet;
use crate::oracle::{taylor_from_parts, Problem, SmoothFunction};
use crate::tensor::{TaylorData, TensorError};

/// Names accepted by [`by_name`].
pub const PROBLEM_NAMES: &[&str] = &[
    "quartic-box",
    "rosenbrock-box",
    "linear-box",
    "circle",
    "powell-eq",
    "infeasible",
];

pub fn by_name(name: &str) -> Option<Problem> {
    match name {
        "quartic-box" => Some(quartic_box()),
        "rosenbrock-box" => Some(rosenbrock_box()),
        "linear-box" => Some(linear_box()),
        "circle" => Some(circle()),
        "powell-eq" => Some(powell_eq()),
        "infeasible" => Some(infeasible()),
        _ => None,
    }
}

pub fn all() -> Vec<Problem> {
    PROBLEM_NAMES.iter().filter_map(|n| by_name(n)).collect()
}

/// `sum_i x_i^4 / 4 + x_i^2 / 2 - b_i x_i`.
#[derive(Debug, Clone)]
pub struct SeparableQuartic {
    pub b: Vec<f64>,
}

impl SmoothFunction for SeparableQuartic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.b)
            .map(|(&v, &b)| 0.25 * v.powi(4) + 0.5 * v * v - b * v)
            .sum()
    }

    fn taylor(&self, x: &[f64], p: usize) -> Result<TaylorData, TensorError> {
        let grad = x
            .iter()
            .zip(&self.b)
            .map(|(&v, &b)| v.powi(3) + v - b)
            .collect();
        taylor_from_parts(
            p,
            self.value(x),
            grad,
            |i, j| if i == j { 3.0 * x[i] * x[i] + 1.0 } else { 0.0 },
            |i, j, k| if i == j && j == k { 6.0 * x[i] } else { 0.0 },
        )
    }
}

/// Quartic bowl on `[-1, 1]^3` whose minimizer has the first bound active.
pub fn quartic_box() -> Problem {
    let n = 3;
    Problem {
        name: "quartic-box".into(),
        description: "separable quartic on [-1,1]^3, one active upper bound".into(),
        objective: Box::new(SeparableQuartic {
            b: vec![3.0, -0.5, 1.5],
        }),
        constraints: vec![],
        feasible: FeasibleSet::new_box(vec![-1.0; n], vec![1.0; n]).expect("valid box"),
        // Coordinatewise minima: -2.25, about -0.113 and about -0.784.
        f_low: -3.2,
        f_up: Some(7.25),
        // On the box: max(3x^2 + 1) = 4, max 3|x + y| = 6, and 6.
        lipschitz: [Some(4.0), Some(6.0), Some(6.0)],
        x_start: vec![-3.0, 0.9, -0.2],
        sample_lower: vec![-1.0; n],
        sample_upper: vec![1.0; n],
    }
}

/// `100 (x_2 - x_1^2)^2 + (1 - x_1)^2`.
#[derive(Debug, Clone, Copy)]
pub struct Rosenbrock;

impl SmoothFunction for Rosenbrock {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let a = x[1] - x[0] * x[0];
        100.0 * a * a + (1.0 - x[0]).powi(2)
    }

    fn taylor(&self, x: &[f64], p: usize) -> Result<TaylorData, TensorError> {
        let (x1, x2) = (x[0], x[1]);
        let a = x2 - x1 * x1;
        let grad = vec![-400.0 * x1 * a - 2.0 * (1.0 - x1), 200.0 * a];
        let h11 = 1200.0 * x1 * x1 - 400.0 * x2 + 2.0;
        let h12 = -400.0 * x1;
        taylor_from_parts(
            p,
            self.value(x),
            grad,
            |i, j| match (i, j) {
                (0, 0) => h11,
                (1, 1) => 200.0,
                _ => h12,
            },
            |i, j, k| match i + j + k {
                0 => 2400.0 * x1,
                1 => -400.0,
                _ => 0.0,
            },
        )
    }
}

/// Rosenbrock on `[-2, 0.5] x [-1, 2]`; the solution sits on `x_1 = 0.5`.
pub fn rosenbrock_box() -> Problem {
    Problem {
        name: "rosenbrock-box".into(),
        description: "Rosenbrock with an active upper bound on x1".into(),
        objective: Box::new(Rosenbrock),
        constraints: vec![],
        feasible: FeasibleSet::new_box(vec![-2.0, -1.0], vec![0.5, 2.0]).expect("valid box"),
        f_low: 0.0,
        f_up: None,
        lipschitz: [None, None, None],
        x_start: vec![-1.2, 1.0],
        sample_lower: vec![-2.0, -1.0],
        sample_upper: vec![0.5, 2.0],
    }
}

/// `<g, x> + c0`.
#[derive(Debug, Clone)]
pub struct Affine {
    pub g: Vec<f64>,
    pub c0: f64,
}

impl SmoothFunction for Affine {
    fn dim(&self) -> usize {
        self.g.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.c0 + x.iter().zip(&self.g).map(|(a, b)| a * b).sum::<f64>()
    }

    fn taylor(&self, x: &[f64], p: usize) -> Result<TaylorData, TensorError> {
        taylor_from_parts(p, self.value(x), self.g.clone(), |_, _| 0.0, |_, _, _| 0.0)
    }
}

/// `x_1 - 2 x_2` on the unit square; the minimizer `(0, 1)` is a vertex.
pub fn linear_box() -> Problem {
    Problem {
        name: "linear-box".into(),
        description: "linear objective on [0,1]^2, vertex solution".into(),
        objective: Box::new(Affine {
            g: vec![1.0, -2.0],
            c0: 0.0,
        }),
        constraints: vec![],
        feasible: FeasibleSet::new_box(vec![0.0; 2], vec![1.0; 2]).expect("valid box"),
        f_low: -2.0,
        f_up: Some(1.0),
        lipschitz: [Some(0.0), Some(0.0), Some(0.0)],
        x_start: vec![1.0, 0.0],
        sample_lower: vec![0.0; 2],
        sample_upper: vec![1.0; 2],
    }
}

/// `sum_i a_i x_i^2 + c0`.
#[derive(Debug, Clone)]
pub struct DiagonalQuadratic {
    pub a: Vec<f64>,
    pub c0: f64,
}

impl SmoothFunction for DiagonalQuadratic {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.c0 + x.iter().zip(&self.a).map(|(v, a)| a * v * v).sum::<f64>()
    }

    fn taylor(&self, x: &[f64], p: usize) -> Result<TaylorData, TensorError> {
        let grad = x.iter().zip(&self.a).map(|(v, a)| 2.0 * a * v).collect();
        taylor_from_parts(
            p,
            self.value(x),
            grad,
            |i, j| if i == j { 2.0 * self.a[i] } else { 0.0 },
            |_, _, _| 0.0,
        )
    }
}

/// `min x_1 + x_2` subject to `x_1^2 + x_2^2 = 1`.
pub fn circle() -> Problem {
    Problem {
        name: "circle".into(),
        description: "linear objective on the unit circle".into(),
        objective: Box::new(Affine {
            g: vec![1.0, 1.0],
            c0: 0.0,
        }),
        constraints: vec![Box::new(DiagonalQuadratic {
            a: vec![1.0, 1.0],
            c0: -1.0,
        })],
        feasible: FeasibleSet::whole_space(2),
        // |x_1 + x_2| <= 2 whenever ||x||^2 <= 2.
        f_low: -2.0,
        f_up: Some(2.0),
        lipschitz: [Some(0.0), Some(0.0), Some(0.0)],
        x_start: vec![2.0, 0.0],
        sample_lower: vec![-2.0; 2],
        sample_upper: vec![2.0; 2],
    }
}

/// `exp(x_1 x_2 x_3 x_4 x_5)`.
#[derive(Debug, Clone, Copy)]
pub struct ExpProduct;

fn product_except(x: &[f64], skip: &[usize]) -> f64 {
    x.iter()
        .enumerate()
        .filter(|(i, _)| !skip.contains(i))
        .map(|(_, v)| v)
        .product()
}

impl SmoothFunction for ExpProduct {
    fn dim(&self) -> usize {
        5
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().product::<f64>().exp()
    }

    fn taylor(&self, x: &[f64], p: usize) -> Result<TaylorData, TensorError> {
        let e = self.value(x);
        let dp: Vec<f64> = (0..5).map(|i| product_except(x, &[i])).collect();
        let d2p = |i: usize, j: usize| {
            if i == j {
                0.0
            } else {
                product_except(x, &[i, j])
            }
        };
        let d3p = |i: usize, j: usize, k: usize| {
            if i == j || j == k || i == k {
                0.0
            } else {
                product_except(x, &[i, j, k])
            }
        };
        let grad = dp.iter().map(|v| e * v).collect();
        taylor_from_parts(
            p,
            e,
            grad,
            |i, j| e * (dp[i] * dp[j] + d2p(i, j)),
            |i, j, k| {
                e * (dp[i] * dp[j] * dp[k]
                    + d2p(i, j) * dp[k]
                    + d2p(i, k) * dp[j]
                    + d2p(j, k) * dp[i]
                    + d3p(i, j, k))
            },
        )
    }
}

/// `x_2 x_3 - 5 x_4 x_5`.
#[derive(Debug, Clone, Copy)]
pub struct PowellBilinear;

impl SmoothFunction for PowellBilinear {
    fn dim(&self) -> usize {
        5
    }

    fn value(&self, x: &[f64]) -> f64 {
        x[1] * x[2] - 5.0 * x[3] * x[4]
    }

    fn taylor(&self, x: &[f64], p: usize) -> Result<TaylorData, TensorError> {
        taylor_from_parts(
            p,
            self.value(x),
            vec![0.0, x[2], x[1], -5.0 * x[4], -5.0 * x[3]],
            |i, j| match (i.min(j), i.max(j)) {
                (1, 2) => 1.0,
                (3, 4) => -5.0,
                _ => 0.0,
            },
            |_, _, _| 0.0,
        )
    }
}

/// `x_1^3 + x_2^3 + 1`.
#[derive(Debug, Clone, Copy)]
pub struct PowellCubic;

impl SmoothFunction for PowellCubic {
    fn dim(&self) -> usize {
        5
    }

    fn value(&self, x: &[f64]) -> f64 {
        x[0].powi(3) + x[1].powi(3) + 1.0
    }

    fn taylor(&self, x: &[f64], p: usize) -> Result<TaylorData, TensorError> {
        taylor_from_parts(
            p,
            self.value(x),
            vec![3.0 * x[0] * x[0], 3.0 * x[1] * x[1], 0.0, 0.0, 0.0],
            |i, j| if i == j && i < 2 { 6.0 * x[i] } else { 0.0 },
            |i, j, k| if i == j && j == k && i < 2 { 6.0 } else { 0.0 },
        )
    }
}

/// Powell's exponential problem: `min exp(prod x)` subject to
/// `||x||^2 = 10`, `x_2 x_3 = 5 x_4 x_5` and `x_1^3 + x_2^3 = -1`.
pub fn powell_eq() -> Problem {
    let n = 5;
    Problem {
        name: "powell-eq".into(),
        description: "Powell's exponential problem with three equality constraints".into(),
        objective: Box::new(ExpProduct),
        constraints: vec![
            Box::new(DiagonalQuadratic {
                a: vec![1.0; n],
                c0: -10.0,
            }),
            Box::new(PowellBilinear),
            Box::new(PowellCubic),
        ],
        feasible: FeasibleSet::whole_space(n),
        f_low: 0.0,
        // ||x||^2 <= 11 bounds |prod x| by (11/5)^(5/2) < 7.2.
        f_up: Some(1340.0),
        lipschitz: [None, None, None],
        x_start: vec![-2.0, 2.0, 2.0, -1.0, -1.0],
        sample_lower: vec![-1.5; n],
        sample_upper: vec![1.5; n],
    }
}

/// `min x` subject to `x^2 + 1 = 0`: no feasible point exists, and `x = 0`
/// is the stationary point of the squared violation.
pub fn infeasible() -> Problem {
    Problem {
        name: "infeasible".into(),
        description: "x^2 + 1 = 0 has no real solution".into(),
        objective: Box::new(Affine {
            g: vec![1.0],
            c0: 0.0,
        }),
        constraints: vec![Box::new(DiagonalQuadratic {
            a: vec![1.0],
            c0: 1.0,
        })],
        feasible: FeasibleSet::whole_space(1),
        f_low: -1.0,
        f_up: Some(1.0),
        lipschitz: [Some(0.0), Some(0.0), Some(0.0)],
        x_start: vec![1.5],
        sample_lower: vec![-2.0],
        sample_upper: vec![2.0],
    }
}
