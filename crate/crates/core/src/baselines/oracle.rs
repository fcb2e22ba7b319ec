//! Dense brute-force references for the property tests. Everything here
//! works on explicit matrices and is only meant for small systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linop::{assemble_dense, operator_to_dense, PartitionedSystem};

/// Relative singular-value cutoff used for the rank checks.
pub const RANK_TOL: f64 = 1e-12;

/// Numerical rank of `a` with cutoff `RANK_TOL · σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.singular_values();
    let smax = sv.max();
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

fn check_rows(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<()> {
    if a.nrows() != rhs.len() {
        return Err(Error::DimensionMismatch {
            context: "oracle rhs",
            expected: a.nrows(),
            found: rhs.len(),
        });
    }
    Ok(())
}

/// Minimum-norm solution of the underdetermined `a z = rhs` through the
/// pseudoinverse; refuses row-rank-deficient `a`.
pub fn oracle_minnorm(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    check_rows(a, rhs)?;
    let r = numerical_rank(a);
    if r < a.nrows() {
        return Err(Error::RankDeficient(format!(
            "row rank {r} < {} rows",
            a.nrows()
        )));
    }
    let z = a
        .clone()
        .svd(true, true)
        .solve(rhs, 0.0)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    Ok(z)
}

/// Least-squares solution of the overdetermined `a z ≈ rhs`; refuses
/// column-rank-deficient `a`.
pub fn oracle_lsq(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    check_rows(a, rhs)?;
    let r = numerical_rank(a);
    if r < a.ncols() {
        return Err(Error::RankDeficient(format!(
            "column rank {r} < {} columns",
            a.ncols()
        )));
    }
    a.clone()
        .svd(true, true)
        .solve(rhs, 0.0)
        .map_err(|e| Error::RankDeficient(e.to_string()))
}

/// Direct solve of the assembled system.
pub fn oracle_dense_solve(sys: &PartitionedSystem) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = assemble_dense(sys)?;
    let n = k.nrows();
    if numerical_rank(&k) < n {
        return Err(Error::RankDeficient("assembled matrix is singular".into()));
    }
    let rhs = stacked_rhs(sys);
    let z = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::RankDeficient("LU solve failed".into()))?;
    Ok(split(sys, &z))
}

fn stacked_rhs(sys: &PartitionedSystem) -> DVector<f64> {
    DVector::from_iterator(
        sys.m() + sys.n(),
        sys.rhs_b().iter().chain(sys.rhs_c()).copied(),
    )
}

fn split(sys: &PartitionedSystem, z: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
    let m = sys.m();
    (z.as_slice()[..m].to_vec(), z.as_slice()[m..].to_vec())
}

/// Orthonormal basis of the column span of `a` (thin QR; assumes full rank).
fn orth(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q()
}

/// Minimum-residual iterate over `span{V_k} ⊕ span{U_k}` where the two
/// spaces are built directly from the alternating products
///
/// ```text
/// V_k = span{b, A c, A B b, A B A c, …},  U_k = span{c, B b, B A c, …}
/// ```
///
/// (`k` vectors each). Independent of any recurrence, this is the iterate
/// GPMR must produce at step `k`.
pub fn oracle_gpmr(sys: &PartitionedSystem, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (m, n) = (sys.m(), sys.n());
    let a = operator_to_dense(sys.a())?;
    let b = operator_to_dense(sys.b())?;
    let mut vs = DMatrix::zeros(m, k);
    let mut us = DMatrix::zeros(n, k);
    let mut s = DVector::from_column_slice(sys.rhs_b());
    let mut t = DVector::from_column_slice(sys.rhs_c());
    for j in 0..k {
        // normalize each word to keep the monomial basis representable
        s /= s.norm();
        t /= t.norm();
        vs.set_column(j, &s);
        us.set_column(j, &t);
        let (s2, t2) = (&a * &t, &b * &s);
        s = s2;
        t = t2;
    }
    let (v, u) = (orth(&vs), orth(&us));
    let kd = assemble_dense(sys)?;
    let mut z = DMatrix::zeros(m + n, 2 * k);
    z.view_mut((0, 0), (m, k)).copy_from(&v);
    z.view_mut((m, k), (n, k)).copy_from(&u);
    let w = oracle_lsq(&(&kd * &z), &stacked_rhs(sys))?;
    Ok(split(sys, &(z * w)))
}

/// Residual norms of dense GMRES on the assembled system for steps
/// `1..=k`, computed from an explicit orthonormal Krylov basis.
pub fn oracle_gmres_residuals(sys: &PartitionedSystem, k: usize) -> Result<Vec<f64>> {
    let kd = assemble_dense(sys)?;
    let rhs = stacked_rhs(sys);
    let dim = rhs.len();
    let mut q = DMatrix::<f64>::zeros(dim, 0);
    let mut w = rhs.normalize();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        for _ in 0..2 {
            let c = q.transpose() * &w;
            w -= &q * c;
        }
        let wn = w.norm();
        if wn == 0.0 {
            break;
        }
        let col = w / wn;
        let last = q.ncols();
        q = q.insert_column(last, 0.0);
        q.set_column(last, &col);
        let kq = &kd * &q;
        let y = oracle_lsq(&kq, &rhs)?;
        out.push((&rhs - kq * y).norm());
        w = &kd * col;
    }
    Ok(out)
}
