//! Benchmark systems built from SuiteSparse matrices.
//!
//! Matrices are not fetched; place `<name>.mtx` files in a directory and
//! pass it to [`build_experiment`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use super::matrix_market::read_matrix_market;
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};
use crate::linop::{Operator, PartitionedSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    /// `A = well1033ᵀ`, `B = illc1033`.
    Well1033,
    /// `A = well1850ᵀ`, `B = illc1850`.
    Well1850,
    /// `A = lp_osa_07`, `B = Aᵀ`.
    LpOsa07,
    /// `A = lpi_klein3`, `B = Aᵀ`.
    LpiKlein3,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [
        Experiment::Well1033,
        Experiment::Well1850,
        Experiment::LpOsa07,
        Experiment::LpiKlein3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Well1033 => "well1033",
            Experiment::Well1850 => "well1850",
            Experiment::LpOsa07 => "lp_osa_07",
            Experiment::LpiKlein3 => "lpi_klein3",
        }
    }

    /// `(λ, μ)`.
    pub fn shifts(self) -> (f64, f64) {
        match self {
            Experiment::Well1033 => (1.0, -0.1),
            Experiment::Well1850 => (1.0, -0.05),
            Experiment::LpOsa07 | Experiment::LpiKlein3 => (1.0, -1.0),
        }
    }

    /// Collection names of the matrices to download.
    pub fn files(self) -> &'static [&'static str] {
        match self {
            Experiment::Well1033 => &["well1033", "illc1033"],
            Experiment::Well1850 => &["well1850", "illc1850"],
            Experiment::LpOsa07 => &["lp_osa_07"],
            Experiment::LpiKlein3 => &["lpi_klein3"],
        }
    }

    /// Whether `B = Aᵀ` (symmetric quasi-definite setting).
    pub fn is_sqd(self) -> bool {
        self.files().len() == 1
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment `{s}`")))
    }
}

/// System with the given blocks whose exact solution is all ones:
/// `b = λ·1 + A·1`, `c = B·1 + μ·1`, and `f = b`, `g = c`.
pub fn build_from_matrices(
    a: Arc<dyn Operator>,
    b: Arc<dyn Operator>,
    lambda: f64,
    mu: f64,
) -> Result<PartitionedSystem> {
    let (m, n) = (a.nrows(), a.ncols());
    if b.nrows() != n || b.ncols() != m {
        return Err(Error::InvalidArgument(format!(
            "A is {m}x{n} but B is {}x{}; expected {n}x{m}",
            b.nrows(),
            b.ncols()
        )));
    }
    let mut rb = vec![lambda; m];
    a.gemv(1.0, &vec![1.0; n], 1.0, &mut rb);
    let mut rc = vec![mu; n];
    b.gemv(1.0, &vec![1.0; m], 1.0, &mut rc);
    PartitionedSystem::new(lambda, mu, a, b, rb, rc)
}

fn load(dir: &Path, name: &str) -> Result<SparseMatrix> {
    let path = dir.join(format!("{name}.mtx"));
    if !path.exists() {
        return Err(Error::InvalidArgument(format!(
            "missing {}; download `{name}` from the SuiteSparse Matrix Collection",
            path.display()
        )));
    }
    read_matrix_market(&path)
}

/// Loads the matrices of `exp` from `dir` and assembles the system.
pub fn build_experiment(exp: Experiment, dir: impl AsRef<Path>) -> Result<PartitionedSystem> {
    let dir = dir.as_ref();
    let (lambda, mu) = exp.shifts();
    let files = exp.files();
    let first = load(dir, files[0])?;
    let (a, b) = if exp.is_sqd() {
        let at = first.transpose();
        (first, at)
    } else {
        (first.transpose(), load(dir, files[1])?)
    };
    build_from_matrices(Arc::new(a), Arc::new(b), lambda, mu)
}

/// Whether every file of `exp` is present in `dir`.
pub fn experiment_available(exp: Experiment, dir: impl AsRef<Path>) -> bool {
    let dir = dir.as_ref();
    exp.files()
        .iter()
        .all(|f| dir.join(format!("{f}.mtx")).exists())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::matrix_market::write_matrix_market;
    use crate::linop::apply_partitioned;

    #[test]
    fn shifts_match_published_setup() {
        assert_eq!(Experiment::Well1033.shifts(), (1.0, -0.1));
        assert_eq!(Experiment::Well1850.shifts(), (1.0, -0.05));
        assert_eq!(Experiment::LpOsa07.shifts(), (1.0, -1.0));
        assert_eq!(Experiment::LpiKlein3.shifts(), (1.0, -1.0));
        assert!(Experiment::LpOsa07.is_sqd() && !Experiment::Well1033.is_sqd());
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
    }

    #[test]
    fn ones_is_the_exact_solution() {
        let dir = tempfile::tempdir().unwrap();
        let well = SparseMatrix::from_triplets(4, 2, &[(0, 0, 1.5), (1, 1, 2.0), (3, 0, -1.0)]).unwrap();
        let illc = SparseMatrix::from_triplets(4, 2, &[(2, 0, 0.5), (1, 1, 1.0), (3, 1, 3.0)]).unwrap();
        write_matrix_market(&well, dir.path().join("well1033.mtx")).unwrap();
        write_matrix_market(&illc, dir.path().join("illc1033.mtx")).unwrap();
        assert!(experiment_available(Experiment::Well1033, dir.path()));
        let sys = build_experiment(Experiment::Well1033, dir.path()).unwrap();
        assert_eq!((sys.m(), sys.n()), (2, 4));
        assert_eq!((sys.lambda(), sys.mu()), (1.0, -0.1));
        let (kx, ky) = apply_partitioned(&sys, &[1.0; 2], &[1.0; 4]).unwrap();
        assert_eq!(kx, sys.rhs_b());
        assert_eq!(ky, sys.rhs_c());
        assert_eq!(sys.shadow_f(), sys.rhs_b());
    }

    #[test]
    fn missing_files_reported() {
        let dir = tempfile::tempdir().unwrap();
        let err = build_experiment(Experiment::LpOsa07, dir.path()).unwrap_err();
        assert!(err.to_string().contains("lp_osa_07"));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Arc::new(SparseMatrix::identity(2));
        let b = Arc::new(SparseMatrix::identity(3));
        assert!(build_from_matrices(a, b, 1.0, 1.0).is_err());
    }
}
