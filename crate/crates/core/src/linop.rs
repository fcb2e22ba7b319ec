//! Operators and the partitioned system
//!
//! The systems solved here have the form
//!
//! ```text
//! [ λI  A ] [x]   [b]
//! [ B  μI ] [y] = [c]
//! ```
//!
//! with `A` of size m×n and `B` of size n×m. The blocks are never formed
//! explicitly by the solvers: every method only needs the four products
//! `A u`, `Aᵀ p`, `B q` and `Bᵀ v`, which is exactly what [`Operator`] exposes.
//! λ and μ may be zero.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::vecops::{dot, norm};

/// Largest `m + n` for which dense assembly is allowed.
pub const DENSE_GUARD: usize = 2000;

/// A linear map `R^ncols -> R^nrows` given only through its action and the
/// action of its transpose.
///
/// Implementations must be re-entrant; the solvers call them from a single
/// thread but systems are shared across threads by `compare`.
pub trait Operator: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    /// `y <- alpha * Op x + beta * y`
    fn gemv(&self, alpha: f64, x: &[f64], beta: f64, y: &mut [f64]);

    /// `y <- alpha * Opᵀ x + beta * y`
    fn gemv_t(&self, alpha: f64, x: &[f64], beta: f64, y: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.gemv(1.0, x, 0.0, &mut y);
        y
    }

    fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols()];
        self.gemv_t(1.0, x, 0.0, &mut y);
        y
    }
}

/// Applies `beta` to `y` the way BLAS does: `beta == 0` overwrites, so stale
/// NaNs in `y` never leak into the result.
#[inline]
pub(crate) fn prescale(beta: f64, y: &mut [f64]) {
    if beta == 0.0 {
        y.iter_mut().for_each(|v| *v = 0.0);
    } else if beta != 1.0 {
        y.iter_mut().for_each(|v| *v *= beta);
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        check_len("DenseMatrix data", nrows * ncols, data.len())?;
        Ok(Self { nrows, ncols, data })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            check_len("DenseMatrix row", ncols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self { nrows, ncols, data })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.nrows, self.ncols, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let mut d = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                d.set(i, j, m[(i, j)]);
            }
        }
        d
    }
}

impl Operator for DenseMatrix {
    fn nrows(&self) -> usize {
        self.nrows
    }

    fn ncols(&self) -> usize {
        self.ncols
    }

    fn gemv(&self, alpha: f64, x: &[f64], beta: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &self.data[i * self.ncols..(i + 1) * self.ncols];
            let acc = dot(row, x);
            *yi = if beta == 0.0 {
                alpha * acc
            } else {
                alpha * acc + beta * *yi
            };
        }
    }

    fn gemv_t(&self, alpha: f64, x: &[f64], beta: f64, y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        prescale(beta, y);
        for (i, &xi) in x.iter().enumerate() {
            let a = alpha * xi;
            if a == 0.0 {
                continue;
            }
            let row = &self.data[i * self.ncols..(i + 1) * self.ncols];
            for (yj, rj) in y.iter_mut().zip(row) {
                *yj += a * rj;
            }
        }
    }
}

/// The transpose of a shared operator, without copying it.
#[derive(Clone)]
pub struct Transposed(pub Arc<dyn Operator>);

impl Operator for Transposed {
    fn nrows(&self) -> usize {
        self.0.ncols()
    }

    fn ncols(&self) -> usize {
        self.0.nrows()
    }

    fn gemv(&self, alpha: f64, x: &[f64], beta: f64, y: &mut [f64]) {
        self.0.gemv_t(alpha, x, beta, y)
    }

    fn gemv_t(&self, alpha: f64, x: &[f64], beta: f64, y: &mut [f64]) {
        self.0.gemv(alpha, x, beta, y)
    }
}

type ApplyFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Operator defined by two callbacks writing `Op x` and `Opᵀ x` into the
/// output slice.
pub struct FnOperator {
    nrows: usize,
    ncols: usize,
    apply: Box<ApplyFn>,
    apply_t: Box<ApplyFn>,
    scratch_len: usize,
}

impl FnOperator {
    pub fn new<F, G>(nrows: usize, ncols: usize, apply: F, apply_transpose: G) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            nrows,
            ncols,
            apply: Box::new(apply),
            apply_t: Box::new(apply_transpose),
            scratch_len: nrows.max(ncols),
        }
    }
}

impl Operator for FnOperator {
    fn nrows(&self) -> usize {
        self.nrows
    }

    fn ncols(&self) -> usize {
        self.ncols
    }

    // Callbacks only produce `Op x`, so the beta-update needs a temporary.
    fn gemv(&self, alpha: f64, x: &[f64], beta: f64, y: &mut [f64]) {
        let mut tmp = vec![0.0; self.scratch_len];
        let tmp = &mut tmp[..self.nrows];
        (self.apply)(x, tmp);
        for (yi, ti) in y.iter_mut().zip(tmp.iter()) {
            *yi = if beta == 0.0 {
                alpha * ti
            } else {
                alpha * ti + beta * *yi
            };
        }
    }

    fn gemv_t(&self, alpha: f64, x: &[f64], beta: f64, y: &mut [f64]) {
        let mut tmp = vec![0.0; self.scratch_len];
        let tmp = &mut tmp[..self.ncols];
        (self.apply_t)(x, tmp);
        for (yi, ti) in y.iter_mut().zip(tmp.iter()) {
            *yi = if beta == 0.0 {
                alpha * ti
            } else {
                alpha * ti + beta * *yi
            };
        }
    }
}

/// Relative adjointness defect `|⟨y, Op x⟩ − ⟨Opᵀ y, x⟩| / (‖y‖‖Op x‖ + ‖Opᵀy‖‖x‖)`.
pub fn adjoint_defect(op: &dyn Operator, x: &[f64], y: &[f64]) -> f64 {
    let ax = op.apply(x);
    let aty = op.apply_transpose(y);
    let lhs = dot(y, &ax);
    let rhs = dot(&aty, x);
    let scale = norm(y) * norm(&ax) + norm(&aty) * norm(x);
    if scale == 0.0 {
        (lhs - rhs).abs()
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// `[λI A; B μI][x; y] = [b; c]` together with the shadow vectors `f`, `g`
/// used to start the biorthogonal reduction.
#[derive(Clone)]
pub struct PartitionedSystem {
    lambda: f64,
    mu: f64,
    a: Arc<dyn Operator>,
    b: Arc<dyn Operator>,
    rhs_b: Vec<f64>,
    rhs_c: Vec<f64>,
    shadow_f: Vec<f64>,
    shadow_g: Vec<f64>,
}

impl fmt::Debug for PartitionedSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartitionedSystem")
            .field("lambda", &self.lambda)
            .field("mu", &self.mu)
            .field("m", &self.m())
            .field("n", &self.n())
            .finish()
    }
}

fn nonzero(name: &'static str, v: &[f64]) -> Result<()> {
    if v.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroVector(name));
    }
    Ok(())
}

impl PartitionedSystem {
    /// Builds the system with the default shadow vectors `f = b`, `g = c`.
    pub fn new(
        lambda: f64,
        mu: f64,
        a: Arc<dyn Operator>,
        b: Arc<dyn Operator>,
        rhs_b: Vec<f64>,
        rhs_c: Vec<f64>,
    ) -> Result<Self> {
        let m = a.nrows();
        let n = a.ncols();
        check_len("B rows", n, b.nrows())?;
        check_len("B cols", m, b.ncols())?;
        check_len("rhs b", m, rhs_b.len())?;
        check_len("rhs c", n, rhs_c.len())?;
        nonzero("b", &rhs_b)?;
        nonzero("c", &rhs_c)?;
        Ok(Self {
            lambda,
            mu,
            a,
            b,
            shadow_f: rhs_b.clone(),
            shadow_g: rhs_c.clone(),
            rhs_b,
            rhs_c,
        })
    }

    pub fn from_dense(
        lambda: f64,
        mu: f64,
        a: DenseMatrix,
        b: DenseMatrix,
        rhs_b: Vec<f64>,
        rhs_c: Vec<f64>,
    ) -> Result<Self> {
        Self::new(lambda, mu, Arc::new(a), Arc::new(b), rhs_b, rhs_c)
    }

    /// Replaces the shadow vectors.
    pub fn with_shadows(mut self, f: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        check_len("shadow f", self.m(), f.len())?;
        check_len("shadow g", self.n(), g.len())?;
        nonzero("f", &f)?;
        nonzero("g", &g)?;
        self.shadow_f = f;
        self.shadow_g = g;
        Ok(self)
    }

    /// Same blocks, new right-hand side (shadows reset to `f = b`, `g = c`).
    pub fn with_rhs(&self, rhs_b: Vec<f64>, rhs_c: Vec<f64>) -> Result<Self> {
        Self::new(
            self.lambda,
            self.mu,
            self.a.clone(),
            self.b.clone(),
            rhs_b,
            rhs_c,
        )
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn a(&self) -> &dyn Operator {
        self.a.as_ref()
    }

    pub fn b(&self) -> &dyn Operator {
        self.b.as_ref()
    }

    pub fn rhs_b(&self) -> &[f64] {
        &self.rhs_b
    }

    pub fn rhs_c(&self) -> &[f64] {
        &self.rhs_c
    }

    pub fn shadow_f(&self) -> &[f64] {
        &self.shadow_f
    }

    pub fn shadow_g(&self) -> &[f64] {
        &self.shadow_g
    }

    /// Length of the `x` block.
    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// Length of the `y` block.
    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// `‖[b; c]‖`
    pub fn rhs_norm(&self) -> f64 {
        (dot(&self.rhs_b, &self.rhs_b) + dot(&self.rhs_c, &self.rhs_c)).sqrt()
    }
}

/// Writes `(λx + Ay, Bx + μy)` into `(out_x, out_y)`.
pub fn apply_partitioned_into(
    sys: &PartitionedSystem,
    x: &[f64],
    y: &[f64],
    out_x: &mut [f64],
    out_y: &mut [f64],
) -> Result<()> {
    check_len("x", sys.m(), x.len())?;
    check_len("y", sys.n(), y.len())?;
    check_len("output x", sys.m(), out_x.len())?;
    check_len("output y", sys.n(), out_y.len())?;
    out_x.copy_from_slice(x);
    sys.a().gemv(1.0, y, sys.lambda(), out_x);
    out_y.copy_from_slice(y);
    sys.b().gemv(1.0, x, sys.mu(), out_y);
    Ok(())
}

/// Returns `(λx + Ay, Bx + μy)`.
pub fn apply_partitioned(
    sys: &PartitionedSystem,
    x: &[f64],
    y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ox = vec![0.0; sys.m()];
    let mut oy = vec![0.0; sys.n()];
    apply_partitioned_into(sys, x, y, &mut ox, &mut oy)?;
    Ok((ox, oy))
}

/// `‖[b; c] − K [x; y]‖`
pub fn residual_norm(sys: &PartitionedSystem, x: &[f64], y: &[f64]) -> Result<f64> {
    let (kx, ky) = apply_partitioned(sys, x, y)?;
    let rx: f64 = sys
        .rhs_b()
        .iter()
        .zip(&kx)
        .map(|(b, v)| (b - v) * (b - v))
        .sum();
    let ry: f64 = sys
        .rhs_c()
        .iter()
        .zip(&ky)
        .map(|(c, v)| (c - v) * (c - v))
        .sum();
    Ok((rx + ry).sqrt())
}

/// Dense copy of an operator, built column by column from unit vectors.
pub fn operator_to_dense(op: &dyn Operator) -> Result<DMatrix<f64>> {
    let (r, c) = (op.nrows(), op.ncols());
    if r + c > 2 * DENSE_GUARD {
        return Err(Error::SizeGuard {
            size: r + c,
            limit: 2 * DENSE_GUARD,
        });
    }
    let mut out = DMatrix::zeros(r, c);
    let mut e = vec![0.0; c];
    let mut col = vec![0.0; r];
    for j in 0..c {
        e[j] = 1.0;
        op.gemv(1.0, &e, 0.0, &mut col);
        for i in 0..r {
            out[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    Ok(out)
}

/// Explicit `[λI A; B μI]`; refuses systems with `m + n > DENSE_GUARD`.
pub fn assemble_dense(sys: &PartitionedSystem) -> Result<DMatrix<f64>> {
    let (m, n) = (sys.m(), sys.n());
    if m + n > DENSE_GUARD {
        return Err(Error::SizeGuard {
            size: m + n,
            limit: DENSE_GUARD,
        });
    }
    let a = operator_to_dense(sys.a())?;
    let b = operator_to_dense(sys.b())?;
    let mut k = DMatrix::zeros(m + n, m + n);
    for i in 0..m {
        k[(i, i)] = sys.lambda();
    }
    for i in 0..n {
        k[(m + i, m + i)] = sys.mu();
    }
    k.view_mut((0, m), (m, n)).copy_from(&a);
    k.view_mut((m, 0), (n, m)).copy_from(&b);
    Ok(k)
}
