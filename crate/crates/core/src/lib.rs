//! Adaptive regularization solvers with `p`-th order Taylor models.
//!
//! - [`arpcc`] minimizes a smooth function over a box (or all of `R^n`)
//!   with regularized models of order `p = 1, 2, 3`.
//! - [`arpgc`] adds equality constraints `c(x) = 0` through a feasibility
//!   phase and a target-tracking phase built on the same solver.
//! - [`trace`] and [`replay`] write runs as JSON Lines and re-check their
//!   invariants offline; [`sweep`] measures how iteration counts scale with
//!   the tolerance.
//!
//! ```
//! use highreg::{arpcc_minimize, registry, ArpccConfig, ArpccStatus, ObjectiveOracle};
//!
//! let problem = registry::quartic_box();
//! let mut oracle = ObjectiveOracle::new(problem.objective.as_ref());
//! let cfg = ArpccConfig { epsilon: 1e-8, ..ArpccConfig::with_order(2) };
//! let result = arpcc_minimize(&mut oracle, &problem.x_start, &problem.feasible, &cfg, None)?;
//! assert_eq!(result.status, ArpccStatus::CriticalityReached);
//! assert!(result.chi <= 1e-8);
//! # Ok::<(), highreg::ArpccError>(())
//! ```

// `!(a > b)` comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arpcc;
pub mod arpgc;
pub mod criticality;
pub mod feasible;
pub mod model;
pub mod oracle;
pub mod registry;
pub mod replay;
pub mod residual;
pub mod subsolver;
pub mod sweep;
pub mod tensor;
pub mod trace;

pub use arpcc::{arpcc_minimize, ArpccConfig, ArpccError, ArpccResult, ArpccStatus};
pub use arpgc::{
    arpgc_solve, verify_certificate, ArpgcConfig, ArpgcError, ArpgcResult, Certificate,
    CertificateStatus,
};
pub use criticality::{chi, pi};
pub use feasible::FeasibleSet;
pub use oracle::{EvalCounters, ObjectiveOracle, Oracle, Problem, SmoothFunction};
pub use tensor::{SymTensor, TaylorData};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/criticality.md")]
    mod criticality {}
    #[doc = include_str!("../../../book/src/convex.md")]
    mod convex {}
    #[doc = include_str!("../../../book/src/general.md")]
    mod general {}
    #[doc = include_str!("../../../book/src/traces.md")]
    mod traces {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
}
