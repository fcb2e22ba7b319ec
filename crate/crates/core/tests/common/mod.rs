//! Dense references shared by the integration tests. These deliberately
//! avoid the library's own oracle module: projections are formed from the
//! biorthogonal bases directly and solved with nalgebra factorizations.
#![allow(dead_code)]

use gpkrylov::linop::{assemble_dense, operator_to_dense};
use gpkrylov::reduction::ReductionHistory;
use gpkrylov::PartitionedSystem;
use nalgebra::{DMatrix, DVector};

pub fn dense_a(sys: &PartitionedSystem) -> DMatrix<f64> {
    operator_to_dense(sys.a()).unwrap()
}

pub fn dense_b(sys: &PartitionedSystem) -> DMatrix<f64> {
    operator_to_dense(sys.b()).unwrap()
}

pub fn dense_k(sys: &PartitionedSystem) -> DMatrix<f64> {
    assemble_dense(sys).unwrap()
}

pub fn stacked(sys: &PartitionedSystem) -> DVector<f64> {
    DVector::from_iterator(sys.m() + sys.n(), sys.rhs_b().iter().chain(sys.rhs_c()).copied())
}

fn cols(v: &[Vec<f64>], k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(v[0].len(), k, |i, j| v[j][i])
}

/// Interleaved `[(x_1, 0), (0, y_1), (x_2, 0), …]` from two vector lists.
pub fn interleave(xs: &[Vec<f64>], ys: &[Vec<f64>], k: usize) -> DMatrix<f64> {
    let (m, n) = (xs[0].len(), ys[0].len());
    let mut w = DMatrix::zeros(m + n, 2 * k);
    for i in 0..k {
        w.view_mut((0, 2 * i), (m, 1)).copy_from(&DMatrix::from_column_slice(m, 1, &xs[i]));
        w.view_mut((m, 2 * i + 1), (n, 1)).copy_from(&DMatrix::from_column_slice(n, 1, &ys[i]));
    }
    w
}

/// `W_k` from the right vectors `q_i`, `u_i`.
pub fn w_right(h: &ReductionHistory, k: usize) -> DMatrix<f64> {
    interleave(&h.q, &h.u, k)
}

/// Left basis with columns `(p_i, 0)`, `(0, v_i)`: its transpose is a left
/// inverse of `W` by biorthogonality.
pub fn w_left(h: &ReductionHistory, k: usize) -> DMatrix<f64> {
    interleave(&h.p, &h.v, k)
}

/// Projection `Ŵ_{rows}ᵀ K W_{k}` computed from the bases alone, i.e.
/// without the coefficient bookkeeping of the library.
pub fn projected(sys: &PartitionedSystem, h: &ReductionHistory, rows: usize, k: usize) -> DMatrix<f64> {
    let kd = dense_k(sys);
    let full = w_left(h, k + 1).transpose() * kd * w_right(h, k);
    full.rows(0, 2 * rows).into_owned()
}

pub fn p_mat(h: &ReductionHistory, k: usize) -> DMatrix<f64> {
    cols(&h.p, k)
}
pub fn q_mat(h: &ReductionHistory, k: usize) -> DMatrix<f64> {
    cols(&h.q, k)
}
pub fn u_mat(h: &ReductionHistory, k: usize) -> DMatrix<f64> {
    cols(&h.u, k)
}
pub fn v_mat(h: &ReductionHistory, k: usize) -> DMatrix<f64> {
    cols(&h.v, k)
}

pub fn e12(beta1: f64, delta1: f64, len: usize) -> DVector<f64> {
    let mut r = DVector::zeros(len);
    r[0] = beta1;
    r[1] = delta1;
    r
}

/// Minimum-norm solution through the pseudoinverse.
pub fn minnorm(a: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    a.clone().pseudo_inverse(1e-13).unwrap() * rhs
}

/// Least squares through Householder QR.
pub fn lsq(a: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * rhs;
    qr.r().solve_upper_triangular(&qtb).unwrap()
}

pub fn rank(a: &DMatrix<f64>) -> usize {
    let sv = a.singular_values();
    let smax = sv.max();
    sv.iter().filter(|&&s| s > 1e-12 * smax).count()
}

pub fn concat(x: &[f64], y: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len() + y.len(), x.iter().chain(y).copied())
}

pub fn rel_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn explicit_residual(sys: &PartitionedSystem, x: &[f64], y: &[f64]) -> f64 {
    (stacked(sys) - dense_k(sys) * concat(x, y)).norm()
}

/// Orthonormal basis of the span of `s_1 = b, t_1 = c, s_{j+1} = A t_j,
/// t_{j+1} = B s_j` (x and y sides kept separate).
pub fn block_krylov_basis(sys: &PartitionedSystem, k: usize) -> DMatrix<f64> {
    let (a, b) = (dense_a(sys), dense_b(sys));
    let (m, n) = (sys.m(), sys.n());
    let mut s = DVector::from_column_slice(sys.rhs_b());
    let mut t = DVector::from_column_slice(sys.rhs_c());
    let mut xs = DMatrix::zeros(m, k);
    let mut ys = DMatrix::zeros(n, k);
    for j in 0..k {
        s /= s.norm();
        t /= t.norm();
        xs.set_column(j, &s);
        ys.set_column(j, &t);
        let s2 = &a * &t;
        let t2 = &b * &s;
        s = s2;
        t = t2;
    }
    let mut z = DMatrix::zeros(m + n, 2 * k);
    z.view_mut((0, 0), (m, k)).copy_from(&xs.qr().q());
    z.view_mut((m, k), (n, k)).copy_from(&ys.qr().q());
    z
}
