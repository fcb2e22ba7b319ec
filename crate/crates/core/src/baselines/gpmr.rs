//! GPMR: minimum residual over the orthogonal Hessenberg bases.
//!
//! Two bases are grown with full Gram–Schmidt (one reorthogonalization pass):
//!
//! ```text
//! A U_k = V_{k+1} H_{k+1,k},   B V_k = U_{k+1} F_{k+1,k},
//! ```
//!
//! starting from `β v₁ = b`, `γ u₁ = c`. With `x = V_k s`, `y = U_k t` the
//! residual is `‖[λI H; F μI][s; t] − [βe₁; γe₁]‖`; rows and columns are
//! interleaved (`v_i, u_i` → rows `2i−1, 2i`) so the projected matrix grows by
//! two columns per step and is factorized by Givens rotations incrementally.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linop::{residual_norm, PartitionedSystem};
use crate::reduction::{BreakdownKind, BreakdownReport};
use crate::rotation::Givens;
use crate::solve::{Method, Recorder, ResidualPolicy, SolveOptions, SolveReport, Termination};
use crate::vecops::{axpy, dot, norm, scale};

/// Relative size below which a new basis vector is treated as zero.
pub const GPMR_BREAKDOWN_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpmrStep {
    pub k: usize,
    /// Projected least-squares residual, equal to the true residual in exact
    /// arithmetic.
    pub residual: f64,
    pub breakdown: Option<BreakdownReport>,
}

/// Orthogonal Hessenberg reduction plus the growing projected least squares.
pub struct Gpmr<'a> {
    sys: &'a PartitionedSystem,
    v: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    /// `h[j]` = column `j` of `H` (length `j + 2`), same for `f`.
    h: Vec<Vec<f64>>,
    f: Vec<Vec<f64>>,
    beta: f64,
    gamma: f64,
    /// Upper-triangular factor, column-wise (column `j` has length `j + 1`).
    r: Vec<Vec<f64>>,
    /// Rotations applied so far, acting on row pairs `(i, l)`.
    rots: Vec<(usize, usize, Givens)>,
    g: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    residual: f64,
    breakdown: Option<BreakdownReport>,
}

/// Orthogonalizes `w` against `basis` twice; returns the accumulated
/// coefficients and the remaining norm.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> (Vec<f64>, f64) {
    let mut coef = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (c, b) in coef.iter_mut().zip(basis) {
            let t = dot(b, w);
            axpy(-t, b, w);
            *c += t;
        }
    }
    (coef, norm(w))
}

impl<'a> Gpmr<'a> {
    /// Starts from `b`, `c` of the system.
    pub fn new(sys: &'a PartitionedSystem) -> Result<Self> {
        Self::with_rhs(sys, sys.rhs_b(), sys.rhs_c())
    }

    /// Starts from an arbitrary right-hand side (used by restarts).
    pub fn with_rhs(sys: &'a PartitionedSystem, b: &[f64], c: &[f64]) -> Result<Self> {
        let (beta, gamma) = (norm(b), norm(c));
        let report = |kind| BreakdownReport {
            kind,
            magnitude: 0.0,
            iteration: 1,
            lucky: false,
        };
        if beta == 0.0 {
            return Err(Error::Breakdown(report(BreakdownKind::PQ)));
        }
        if gamma == 0.0 {
            return Err(Error::Breakdown(report(BreakdownKind::UV)));
        }
        let mut v1 = b.to_vec();
        scale(1.0 / beta, &mut v1);
        let mut u1 = c.to_vec();
        scale(1.0 / gamma, &mut u1);
        Ok(Self {
            sys,
            v: vec![v1],
            u: vec![u1],
            h: Vec::new(),
            f: Vec::new(),
            beta,
            gamma,
            r: Vec::new(),
            rots: Vec::new(),
            g: vec![beta, gamma],
            x: vec![0.0; sys.m()],
            y: vec![0.0; sys.n()],
            residual: beta.hypot(gamma),
            breakdown: None,
        })
    }

    pub fn k(&self) -> usize {
        self.h.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn breakdown(&self) -> Option<&BreakdownReport> {
        self.breakdown.as_ref()
    }

    /// `V_k` (m×k) with `k` = number of stored vectors.
    pub fn v_basis(&self) -> DMatrix<f64> {
        columns(&self.v)
    }

    pub fn u_basis(&self) -> DMatrix<f64> {
        columns(&self.u)
    }

    /// `H_{k+1,k}`.
    pub fn h_mat(&self) -> DMatrix<f64> {
        hessenberg(&self.h)
    }

    /// `F_{k+1,k}`.
    pub fn f_mat(&self) -> DMatrix<f64> {
        hessenberg(&self.f)
    }

    /// Interleaved projected matrix (2k+2)×2k.
    pub fn projected(&self) -> DMatrix<f64> {
        let k = self.k();
        let (lambda, mu) = (self.sys.lambda(), self.sys.mu());
        let mut m = DMatrix::zeros(2 * k + 2, 2 * k);
        for j in 0..k {
            m[(2 * j, 2 * j)] = lambda;
            m[(2 * j + 1, 2 * j + 1)] = mu;
            for (i, &v) in self.h[j].iter().enumerate() {
                m[(2 * i, 2 * j + 1)] = v;
            }
            for (i, &v) in self.f[j].iter().enumerate() {
                m[(2 * i + 1, 2 * j)] = v;
            }
        }
        m
    }

    pub fn step(&mut self) -> Result<GpmrStep> {
        if let Some(r) = self.breakdown {
            return Err(Error::Breakdown(r));
        }
        let sys = self.sys;
        let k = self.k() + 1;
        let (vk, uk) = (&self.v[k - 1], &self.u[k - 1]);

        let mut q = sys.a().apply(uk);
        let qn = norm(&q);
        let (mut hcol, hn) = orthogonalize(&self.v, &mut q);
        let mut p = sys.b().apply(vk);
        let pn = norm(&p);
        let (mut fcol, fnorm) = orthogonalize(&self.u, &mut p);

        let mut breakdown = None;
        if hn <= GPMR_BREAKDOWN_TOL * qn.max(1.0) {
            breakdown = Some(BreakdownReport {
                kind: BreakdownKind::PQ,
                magnitude: hn,
                iteration: k + 1,
                lucky: true,
            });
            hcol.push(0.0);
            q.iter_mut().for_each(|e| *e = 0.0);
        } else {
            hcol.push(hn);
            scale(1.0 / hn, &mut q);
        }
        if fnorm <= GPMR_BREAKDOWN_TOL * pn.max(1.0) {
            breakdown.get_or_insert(BreakdownReport {
                kind: BreakdownKind::UV,
                magnitude: fnorm,
                iteration: k + 1,
                lucky: true,
            });
            fcol.push(0.0);
            p.iter_mut().for_each(|e| *e = 0.0);
        } else {
            fcol.push(fnorm);
            scale(1.0 / fnorm, &mut p);
        }
        self.v.push(q);
        self.u.push(p);
        self.h.push(hcol);
        self.f.push(fcol);

        self.factorize_new_columns(k)?;
        self.update_iterate(k);
        self.breakdown = breakdown;
        Ok(GpmrStep {
            k,
            residual: self.residual,
            breakdown,
        })
    }

    /// Appends columns `2k−1`, `2k` of the projected matrix to the QR factor.
    fn factorize_new_columns(&mut self, k: usize) -> Result<()> {
        let rows = 2 * k + 2;
        let (lambda, mu) = (self.sys.lambda(), self.sys.mu());
        let mut c1 = vec![0.0; rows];
        let mut c2 = vec![0.0; rows];
        c1[2 * k - 2] = lambda;
        c2[2 * k - 1] = mu;
        for (i, &v) in self.f[k - 1].iter().enumerate() {
            c1[2 * i + 1] = v;
        }
        for (i, &v) in self.h[k - 1].iter().enumerate() {
            c2[2 * i] = v;
        }
        for &(i, l, g) in &self.rots {
            for c in [&mut c1, &mut c2] {
                let (a, b) = g.rotate(c[i], c[l]);
                c[i] = a;
                c[l] = b;
            }
        }
        self.g.resize(rows, 0.0);

        for (piv, c) in [(2 * k - 2, 0), (2 * k - 1, 1)] {
            for l in piv + 1..rows {
                let col = if c == 0 { &c1 } else { &c2 };
                if col[l] == 0.0 {
                    continue;
                }
                let (g, _) = Givens::annihilate(col[piv], col[l]);
                for cv in [&mut c1, &mut c2] {
                    let (a, b) = g.rotate(cv[piv], cv[l]);
                    cv[piv] = a;
                    cv[l] = b;
                }
                let (a, b) = g.rotate(self.g[piv], self.g[l]);
                self.g[piv] = a;
                self.g[l] = b;
                self.rots.push((piv, l, g));
            }
            let col = if c == 0 { &c1 } else { &c2 };
            if col[piv] == 0.0 {
                return Err(Error::SingularWindow { row: piv + 1 });
            }
        }
        c1.truncate(2 * k - 1);
        c2.truncate(2 * k);
        self.r.push(c1);
        self.r.push(c2);
        self.residual = norm(&self.g[2 * k..]);
        Ok(())
    }

    fn update_iterate(&mut self, k: usize) {
        let n = 2 * k;
        let mut z = self.g[..n].to_vec();
        for j in (0..n).rev() {
            z[j] /= self.r[j][j];
            let zj = z[j];
            for i in 0..j {
                z[i] -= self.r[j][i] * zj;
            }
        }
        self.x.iter_mut().for_each(|e| *e = 0.0);
        self.y.iter_mut().for_each(|e| *e = 0.0);
        for i in 0..k {
            axpy(z[2 * i], &self.v[i], &mut self.x);
            axpy(z[2 * i + 1], &self.u[i], &mut self.y);
        }
    }

    /// `‖b‖`, `‖c‖` of the starting right-hand side.
    pub fn start_norms(&self) -> (f64, f64) {
        (self.beta, self.gamma)
    }
}

fn columns(vs: &[Vec<f64>]) -> DMatrix<f64> {
    let rows = vs.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, vs.len(), |i, j| vs[j][i])
}

fn hessenberg(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let k = cols.len();
    DMatrix::from_fn(k + 1, k, |i, j| cols[j].get(i).copied().unwrap_or(0.0))
}

fn policy_residual(
    policy: ResidualPolicy,
    sys: &PartitionedSystem,
    est: f64,
    x: &[f64],
    y: &[f64],
) -> Result<(f64, Option<f64>)> {
    match policy {
        ResidualPolicy::Estimate => Ok((est, None)),
        ResidualPolicy::Explicit => {
            let r = residual_norm(sys, x, y)?;
            Ok((r, Some(r)))
        }
    }
}

/// Full (unrestarted) GPMR.
pub fn gpmr_solve(sys: &PartitionedSystem, opts: &SolveOptions) -> Result<SolveReport> {
    run(sys, opts, Method::Gpmr, usize::MAX)
}

/// GPMR(r): the bases are discarded every `opts.restart` steps and the
/// process restarts from the current residual.
pub fn gpmr_restarted_solve(sys: &PartitionedSystem, opts: &SolveOptions) -> Result<SolveReport> {
    if opts.restart == 0 {
        return Err(Error::InvalidArgument("restart must be at least 1".into()));
    }
    run(sys, opts, Method::GpmrRestarted, opts.restart)
}

fn run(sys: &PartitionedSystem, opts: &SolveOptions, method: Method, cycle: usize) -> Result<SolveReport> {
    let (m, n) = (sys.m(), sys.n());
    let mut rec = Recorder::new(method, sys);
    let mut x = vec![0.0; m];
    let mut y = vec![0.0; n];
    if sys.rhs_norm() <= opts.tol {
        return rec.finish(method, sys, x, y, 0, Termination::Converged);
    }
    let mut rb = sys.rhs_b().to_vec();
    let mut rc = sys.rhs_c().to_vec();
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    let mut xt = vec![0.0; m];
    let mut yt = vec![0.0; n];

    'outer: while iterations < opts.maxit {
        let mut s = match Gpmr::with_rhs(sys, &rb, &rc) {
            Ok(s) => s,
            Err(Error::Breakdown(r)) => {
                termination = Termination::Breakdown(r);
                break;
            }
            Err(e) => return Err(e),
        };
        let mut inner = 0;
        loop {
            let info = s.step()?;
            iterations += 1;
            inner += 1;
            xt.copy_from_slice(&x);
            yt.copy_from_slice(&y);
            axpy(1.0, s.x(), &mut xt);
            axpy(1.0, s.y(), &mut yt);
            let (res, true_res) = policy_residual(opts.residual, sys, info.residual, &xt, &yt)?;
            rec.push(iterations, Some(info.residual), true_res, false);
            let done = if res <= opts.tol {
                termination = Termination::Converged;
                true
            } else if let Some(r) = info.breakdown {
                termination = Termination::Breakdown(r);
                true
            } else {
                iterations >= opts.maxit
            };
            if done || inner >= cycle {
                x.copy_from_slice(&xt);
                y.copy_from_slice(&yt);
                if done {
                    break 'outer;
                }
                break;
            }
        }
        // restart from the explicit residual
        let (kx, ky) = crate::linop::apply_partitioned(sys, &x, &y)?;
        for (r, (b, v)) in rb.iter_mut().zip(sys.rhs_b().iter().zip(&kx)) {
            *r = b - v;
        }
        for (r, (c, v)) in rc.iter_mut().zip(sys.rhs_c().iter().zip(&ky)) {
            *r = c - v;
        }
    }
    rec.finish(method, sys, x, y, iterations, termination)
}
