//! Reference solvers: the long-recurrence GPMR method and dense oracles.

pub mod gpmr;
pub mod oracle;

pub use gpmr::{gpmr_restarted_solve, gpmr_solve, Gpmr, GpmrStep};
pub use oracle::{
    numerical_rank, oracle_dense_solve, oracle_gmres_residuals, oracle_gpmr, oracle_lsq,
    oracle_minnorm,
};
