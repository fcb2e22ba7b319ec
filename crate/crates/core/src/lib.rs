//! Short-recurrence Krylov solvers for partitioned systems
//!
//! ```text
//! [ λI  A ] [x]   [b]
//! [ B  μI ] [y] = [c]
//! ```
//!
//! built on a simultaneous biorthogonal tridiagonal reduction of `A` and `B`:
//!
//! * [`gpbilq`] — minimum-norm (LQ) iterate, with the cheap transfer to the
//!   Galerkin (BiCG-type) iterate and exact residual estimates;
//! * [`gpqmr`] — quasi-minimal-residual iterate via a banded QR;
//! * [`baselines`] — the long-recurrence GPMR method and dense oracles.
//!
//! [`io`] reads Matrix Market files and writes convergence histories, and
//! [`solve`] offers a single entry point over all methods.

pub mod baselines;
pub mod checks;
pub mod error;
pub mod gpbilq;
pub mod gpqmr;
pub mod io;
pub mod linop;
pub mod reduction;
pub mod rotation;
pub mod solve;
pub mod synthetic;
pub mod vecops;

pub use error::{Error, Result};
pub use linop::{DenseMatrix, FnOperator, Operator, PartitionedSystem, Transposed};
pub use reduction::{BreakdownKind, BreakdownReport, ReductionOptions};
pub use solve::{
    solve, Method, ResidualPolicy, SolveOptions, SolveReport, Termination,
};
