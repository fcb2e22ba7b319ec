//! Common driver types and a single entry point over every method.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::baselines::gpmr::{gpmr_restarted_solve, gpmr_solve};
use crate::error::{Error, Result};
use crate::gpbilq::{gpbicg_solve, gpbilq_solve};
use crate::gpqmr::gpqmr_solve;
use crate::io::convergence::{ConvergenceRecord, IterationRow};
use crate::linop::{residual_norm, PartitionedSystem};
use crate::reduction::{BreakdownReport, ReductionOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    GpBiLq,
    GpBiCg,
    GpQmr,
    Gpmr,
    /// GPMR restarted every `SolveOptions::restart` basis steps.
    GpmrRestarted,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::GpBiLq,
        Method::GpBiCg,
        Method::GpQmr,
        Method::Gpmr,
        Method::GpmrRestarted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::GpBiLq => "gpbilq",
            Method::GpBiCg => "gpbicg",
            Method::GpQmr => "gpqmr",
            Method::Gpmr => "gpmr",
            Method::GpmrRestarted => "gpmr_restarted",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ResidualPolicy {
    /// Stop on the recurrence-based estimates (quasi-residual for GPQMR).
    /// Saves one product with each block per iteration.
    Estimate,
    /// Recompute `‖[b;c] − K[x;y]‖` every iteration and stop on it.
    #[default]
    Explicit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Absolute tolerance on the residual norm.
    pub tol: f64,
    pub maxit: usize,
    pub residual: ResidualPolicy,
    /// Cycle length for [`Method::GpmrRestarted`].
    pub restart: usize,
    pub reduction: ReductionOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            maxit: 1000,
            residual: ResidualPolicy::Explicit,
            restart: 9,
            reduction: ReductionOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Termination {
    Converged,
    MaxIterations,
    Breakdown(BreakdownReport),
}

impl Termination {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Termination::Converged => 0,
            Termination::MaxIterations => 2,
            Termination::Breakdown(_) => 3,
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Converged => f.write_str("tolerance reached"),
            Termination::MaxIterations => f.write_str("maximum iterations reached"),
            Termination::Breakdown(r) => write!(f, "{r}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub method: Method,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub record: ConvergenceRecord,
    /// Explicit residual norm of the returned iterate.
    pub residual: f64,
}

pub fn solve(sys: &PartitionedSystem, method: Method, opts: &SolveOptions) -> Result<SolveReport> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    match method {
        Method::GpBiLq => gpbilq_solve(sys, opts),
        Method::GpBiCg => gpbicg_solve(sys, opts),
        Method::GpQmr => gpqmr_solve(sys, opts),
        Method::Gpmr => gpmr_solve(sys, opts),
        Method::GpmrRestarted => {
            if opts.restart == 0 {
                return Err(Error::InvalidArgument("restart must be at least 1".into()));
            }
            gpmr_restarted_solve(sys, opts)
        }
    }
}

/// Convergence bookkeeping shared by the drivers.
pub(crate) struct Recorder {
    start: Instant,
    record: ConvergenceRecord,
}

impl Recorder {
    /// Starts a record with the `k = 0` row for the zero initial guess.
    pub(crate) fn new(method: Method, sys: &PartitionedSystem) -> Self {
        let r0 = sys.rhs_norm();
        let mut record = ConvergenceRecord::new(method.name());
        record.rows.push(IterationRow {
            k: 0,
            est_residual: Some(r0),
            true_residual: Some(r0),
            transfer_defined: false,
            elapsed_s: 0.0,
        });
        Self {
            start: Instant::now(),
            record,
        }
    }

    pub(crate) fn push(
        &mut self,
        k: usize,
        est: Option<f64>,
        true_res: Option<f64>,
        transfer_defined: bool,
    ) {
        self.record.rows.push(IterationRow {
            k,
            est_residual: est,
            true_residual: true_res,
            transfer_defined,
            elapsed_s: self.start.elapsed().as_secs_f64(),
        });
    }

    pub(crate) fn finish(
        mut self,
        method: Method,
        sys: &PartitionedSystem,
        x: Vec<f64>,
        y: Vec<f64>,
        iterations: usize,
        termination: Termination,
    ) -> Result<SolveReport> {
        self.record.terminal = Some(termination.to_string());
        let residual = residual_norm(sys, &x, &y)?;
        Ok(SolveReport {
            method,
            x,
            y,
            iterations,
            termination,
            record: self.record,
            residual,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("cg".parse::<Method>().is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Termination::Converged.exit_code(), 0);
        assert_eq!(Termination::MaxIterations.exit_code(), 2);
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        let sys = crate::synthetic::random_system(3, 3, 1.0, 1.0, 1);
        let opts = SolveOptions {
            tol: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            solve(&sys, Method::GpQmr, &opts),
            Err(Error::InvalidArgument(_))
        ));
    }
}
