//! Simultaneous biorthogonal tridiagonal reduction.
//!
//! Starting from `p₁ ∝ f`, `q₁ ∝ b`, `u₁ ∝ c`, `v₁ ∝ g`, each step builds the
//! next quadruple with three-term recurrences so that `PᵀQ = UᵀV = I` and
//!
//! ```text
//! A U_k  = Q_{k+1} S_{k+1,k}      Aᵀ P_k = V_{k+1} S_{k,k+1}ᵀ
//! B Q_k  = U_{k+1} T_{k+1,k}      Bᵀ V_k = P_{k+1} T_{k,k+1}ᵀ
//! ```
//!
//! with `S = tridiag(β, α, γ)` and `T = tridiag(δ, θ, η)`. Only a two-term
//! window of vectors is kept; [`ReductionHistory`] can be switched on for
//! dense verification.

use std::fmt;
use std::mem;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linop::PartitionedSystem;
use crate::vecops::{axpy, dot, norm, scale};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReductionOptions {
    /// Relative threshold on `|p̃ᵀq̃|` (and `|ũᵀṽ|`).
    pub breakdown_tol: f64,
    /// Lower bound on the scale `‖p̃‖‖q̃‖` the threshold is taken against.
    pub breakdown_floor: f64,
    /// A broken-down pair counts as lucky when the new right vector is this
    /// small relative to the quantities it was computed from.
    pub lucky_tol: f64,
    /// Keep every basis vector and coefficient (dense checks only).
    pub keep_history: bool,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        Self {
            breakdown_tol: 1e-14,
            breakdown_floor: 1.0,
            lucky_tol: 1e-13,
            keep_history: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BreakdownKind {
    /// `p̃ᵀq̃` vanished (for GPMR: the `A`-side basis could not grow).
    PQ,
    /// `ũᵀṽ` vanished (for GPMR: the `B`-side basis could not grow).
    UV,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BreakdownReport {
    pub kind: BreakdownKind,
    /// The offending inner product (absolute value).
    pub magnitude: f64,
    /// Index of the vectors that could not be normalized.
    pub iteration: usize,
    /// An invariant subspace was reached: the new right vectors `q̃` and
    /// `ũ` are both negligible.
    pub lucky: bool,
}

impl fmt::Display for BreakdownReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            BreakdownKind::PQ => "p/q",
            BreakdownKind::UV => "u/v",
        };
        write!(
            f,
            "{} {} breakdown at iteration {} (|inner product| = {:.3e})",
            if self.lucky { "lucky" } else { "serious" },
            kind,
            self.iteration,
            self.magnitude
        )
    }
}

/// Coefficients produced by step `k`: `α_k`, `θ_k` and the scalings of the
/// `k+1` vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepCoefficients {
    pub k: usize,
    pub alpha: f64,
    pub theta: f64,
    pub beta_next: f64,
    pub gamma_next: f64,
    pub delta_next: f64,
    pub eta_next: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub coeffs: StepCoefficients,
    /// Set when the `k+1` vectors could not be biorthonormalized. The step
    /// is still completed with fallback scalings (`β = ‖q̃‖`, `η = 0`,
    /// `p = 0`, and likewise for `u`, `v`), which keeps the projected
    /// relations valid; no further step is possible.
    pub breakdown: Option<BreakdownReport>,
}

/// Coefficient sequences with 1-based meaning stored 0-based:
/// `alpha[i] = α_{i+1}`, `beta[i] = β_{i+1}` (so `beta[0] = β₁`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Coefficients {
    pub alpha: Vec<f64>,
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    pub eta: Vec<f64>,
}

impl Coefficients {
    /// Number of completed steps.
    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    fn push(&mut self, c: &StepCoefficients) {
        self.alpha.push(c.alpha);
        self.theta.push(c.theta);
        self.beta.push(c.beta_next);
        self.gamma.push(c.gamma_next);
        self.delta.push(c.delta_next);
        self.eta.push(c.eta_next);
    }
}

/// Every basis vector and coefficient generated so far.
#[derive(Clone, Debug, Default)]
pub struct ReductionHistory {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub coeffs: Coefficients,
}

fn columns(cols: &[Vec<f64>], k: usize) -> DMatrix<f64> {
    let rows = cols.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, k, |i, j| cols[j][i])
}

fn tridiag(diag: &[f64], sub: &[f64], sup: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    // sub[i] / sup[i] hold the entries (i+1, i) / (i, i+1), both 0-based
    DMatrix::from_fn(rows, cols, |i, j| {
        if i == j {
            diag[i]
        } else if i == j + 1 {
            sub[j]
        } else if j == i + 1 {
            sup[i]
        } else {
            0.0
        }
    })
}

impl ReductionHistory {
    pub fn p_mat(&self, k: usize) -> DMatrix<f64> {
        columns(&self.p, k)
    }

    pub fn q_mat(&self, k: usize) -> DMatrix<f64> {
        columns(&self.q, k)
    }

    pub fn u_mat(&self, k: usize) -> DMatrix<f64> {
        columns(&self.u, k)
    }

    pub fn v_mat(&self, k: usize) -> DMatrix<f64> {
        columns(&self.v, k)
    }

    /// `S_{rows,cols}` for `rows, cols ∈ {k, k+1}`.
    pub fn s_mat(&self, rows: usize, cols: usize) -> DMatrix<f64> {
        let c = &self.coeffs;
        tridiag(&c.alpha, &c.beta[1..], &c.gamma[1..], rows, cols)
    }

    pub fn t_mat(&self, rows: usize, cols: usize) -> DMatrix<f64> {
        let c = &self.coeffs;
        tridiag(&c.theta, &c.delta[1..], &c.eta[1..], rows, cols)
    }

    /// `W_k`: interleaved columns `(q_i, 0)`, `(0, u_i)`.
    pub fn w_mat(&self, k: usize) -> DMatrix<f64> {
        let m = self.q[0].len();
        let n = self.u[0].len();
        let mut w = DMatrix::zeros(m + n, 2 * k);
        for i in 0..k {
            for r in 0..m {
                w[(r, 2 * i)] = self.q[i][r];
            }
            for r in 0..n {
                w[(m + r, 2 * i + 1)] = self.u[i][r];
            }
        }
        w
    }
}

/// Projected matrix `H_{k+1,k}` ((2k+2)×2k) built from the 2×2 blocks
///
/// ```text
/// E_{i,i-1} = [0 β_i; δ_i 0],  E_ii = [λ α_i; θ_i μ],  E_{i-1,i} = [0 γ_i; η_i 0]
/// ```
///
/// Needs `k` entries of `alpha`/`theta` and `k+1` of the others.
pub fn build_projected_h(c: &Coefficients, lambda: f64, mu: f64, k: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(2 * k + 2, 2 * k);
    for i in 0..k {
        let (r, col) = (2 * i, 2 * i);
        h[(r, col)] = lambda;
        h[(r, col + 1)] = c.alpha[i];
        h[(r + 1, col)] = c.theta[i];
        h[(r + 1, col + 1)] = mu;
        // block row i+1 below: β_{i+2}, δ_{i+2}
        h[(r + 2, col + 1)] = c.beta[i + 1];
        h[(r + 3, col)] = c.delta[i + 1];
        if i + 1 < k {
            // block above the diagonal of column block i+1: γ_{i+2}, η_{i+2}
            h[(r, col + 3)] = c.gamma[i + 1];
            h[(r + 1, col + 2)] = c.eta[i + 1];
        }
    }
    h
}

/// Square `H_k` (leading 2k rows of `H_{k+1,k}`).
pub fn build_h_square(c: &Coefficients, lambda: f64, mu: f64, k: usize) -> DMatrix<f64> {
    build_projected_h(c, lambda, mu, k).rows(0, 2 * k).into_owned()
}

/// `H_{k-1,k}` ((2k−2)×2k): rows of `H_k` above the last block row, plus the
/// block `E_{k-1,k}` that makes it wider than tall.
pub fn build_h_wide(c: &Coefficients, lambda: f64, mu: f64, k: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(2 * k - 2, 2 * k);
    if k >= 2 {
        let hk = build_h_square(c, lambda, mu, k);
        h.copy_from(&hk.rows(0, 2 * k - 2));
    }
    h
}

/// Two-term window of the reduction.
#[derive(Clone, Debug)]
pub struct ReductionState {
    k: usize,
    pub(crate) p_prev: Vec<f64>,
    pub(crate) p_cur: Vec<f64>,
    pub(crate) q_prev: Vec<f64>,
    pub(crate) q_cur: Vec<f64>,
    pub(crate) u_prev: Vec<f64>,
    pub(crate) u_cur: Vec<f64>,
    pub(crate) v_prev: Vec<f64>,
    pub(crate) v_cur: Vec<f64>,
    beta: f64,
    gamma: f64,
    delta: f64,
    eta: f64,
    beta1: f64,
    delta1: f64,
    q_norm: f64,
    u_norm: f64,
    q_norm_prev: f64,
    u_norm_prev: f64,
    opts: ReductionOptions,
    broken: bool,
    history: Option<ReductionHistory>,
}

fn is_breakdown(opts: &ReductionOptions, ip: f64, nl: f64, nr: f64) -> bool {
    ip.abs() < opts.breakdown_tol * opts.breakdown_floor.max(nl * nr)
}

/// `(η, β)` with `η = |s|^{1/2}` and `β = s/η`.
fn split(s: f64) -> (f64, f64) {
    let eta = s.abs().sqrt();
    (eta, s / eta)
}

impl ReductionState {
    /// `η₁ p₁ = f`, `β₁ q₁ = b`, `δ₁ u₁ = c`, `γ₁ v₁ = g`.
    pub fn new(sys: &PartitionedSystem, opts: ReductionOptions) -> Result<Self> {
        let (f, b, c, g) = (sys.shadow_f(), sys.rhs_b(), sys.rhs_c(), sys.shadow_g());
        let fb = dot(f, b);
        if is_breakdown(&opts, fb, norm(f), norm(b)) {
            return Err(Error::Breakdown(BreakdownReport {
                kind: BreakdownKind::PQ,
                magnitude: fb.abs(),
                iteration: 1,
                lucky: false,
            }));
        }
        let cg = dot(c, g);
        if is_breakdown(&opts, cg, norm(c), norm(g)) {
            return Err(Error::Breakdown(BreakdownReport {
                kind: BreakdownKind::UV,
                magnitude: cg.abs(),
                iteration: 1,
                lucky: false,
            }));
        }
        let (eta1, beta1) = split(fb);
        let (delta1, gamma1) = split(cg);
        let p_cur: Vec<f64> = f.iter().map(|x| x / eta1).collect();
        let q_cur: Vec<f64> = b.iter().map(|x| x / beta1).collect();
        let u_cur: Vec<f64> = c.iter().map(|x| x / delta1).collect();
        let v_cur: Vec<f64> = g.iter().map(|x| x / gamma1).collect();
        let (m, n) = (sys.m(), sys.n());
        let history = opts.keep_history.then(|| ReductionHistory {
            p: vec![p_cur.clone()],
            q: vec![q_cur.clone()],
            u: vec![u_cur.clone()],
            v: vec![v_cur.clone()],
            coeffs: Coefficients {
                beta: vec![beta1],
                gamma: vec![gamma1],
                delta: vec![delta1],
                eta: vec![eta1],
                ..Default::default()
            },
        });
        Ok(Self {
            k: 1,
            q_norm: norm(&q_cur),
            u_norm: norm(&u_cur),
            q_norm_prev: 0.0,
            u_norm_prev: 0.0,
            p_prev: vec![0.0; m],
            q_prev: vec![0.0; m],
            u_prev: vec![0.0; n],
            v_prev: vec![0.0; n],
            p_cur,
            q_cur,
            u_cur,
            v_cur,
            beta: beta1,
            gamma: gamma1,
            delta: delta1,
            eta: eta1,
            beta1,
            delta1,
            opts,
            broken: false,
            history,
        })
    }

    /// Index of the current vectors (`p_cur = p_k`).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn delta1(&self) -> f64 {
        self.delta1
    }

    /// `(β_k, γ_k, δ_k, η_k)` of the current vectors.
    pub fn scalings(&self) -> (f64, f64, f64, f64) {
        (self.beta, self.gamma, self.delta, self.eta)
    }

    pub fn p_cur(&self) -> &[f64] {
        &self.p_cur
    }

    pub fn q_cur(&self) -> &[f64] {
        &self.q_cur
    }

    pub fn u_cur(&self) -> &[f64] {
        &self.u_cur
    }

    pub fn v_cur(&self) -> &[f64] {
        &self.v_cur
    }

    pub fn p_prev(&self) -> &[f64] {
        &self.p_prev
    }

    pub fn q_prev(&self) -> &[f64] {
        &self.q_prev
    }

    pub fn u_prev(&self) -> &[f64] {
        &self.u_prev
    }

    pub fn v_prev(&self) -> &[f64] {
        &self.v_prev
    }

    /// `‖q_k‖`, `‖u_k‖` of the current vectors.
    pub fn current_norms(&self) -> (f64, f64) {
        (self.q_norm, self.u_norm)
    }

    pub fn is_broken(&self) -> bool {
        self.broken
    }

    pub fn history(&self) -> Option<&ReductionHistory> {
        self.history.as_ref()
    }

    pub fn options(&self) -> &ReductionOptions {
        &self.opts
    }

    /// One step: computes `α_k`, `θ_k` and the `k+1` vectors, which become
    /// current (the `k` vectors move to the `prev` slots). Exactly four
    /// operator applications, all in place.
    pub fn step(&mut self, sys: &PartitionedSystem) -> Result<StepOutcome> {
        if self.broken {
            return Err(Error::Terminated(self.k));
        }
        let (a, b) = (sys.a(), sys.b());
        let k = self.k;

        // q̃ = A u_k − γ_k q_{k−1} − α_k q_k, with α_k = p_kᵀ A u_k recovered
        // from the in-place product.
        let pq_old = dot(&self.p_cur, &self.q_prev);
        a.gemv(1.0, &self.u_cur, -self.gamma, &mut self.q_prev);
        let alpha = dot(&self.p_cur, &self.q_prev) + self.gamma * pq_old;
        axpy(-alpha, &self.q_cur, &mut self.q_prev);

        // ũ = B q_k − η_k u_{k−1} − θ_k u_k
        let vu_old = dot(&self.v_cur, &self.u_prev);
        b.gemv(1.0, &self.q_cur, -self.eta, &mut self.u_prev);
        let theta = dot(&self.v_cur, &self.u_prev) + self.eta * vu_old;
        axpy(-theta, &self.u_cur, &mut self.u_prev);

        // ṽ = Aᵀ p_k − β_k v_{k−1} − α_k v_k
        a.gemv_t(1.0, &self.p_cur, -self.beta, &mut self.v_prev);
        axpy(-alpha, &self.v_cur, &mut self.v_prev);

        // p̃ = Bᵀ v_k − δ_k p_{k−1} − θ_k p_k
        b.gemv_t(1.0, &self.v_cur, -self.delta, &mut self.p_prev);
        axpy(-theta, &self.p_cur, &mut self.p_prev);

        // the tilde vectors now sit in the prev slots
        mem::swap(&mut self.p_prev, &mut self.p_cur);
        mem::swap(&mut self.q_prev, &mut self.q_cur);
        mem::swap(&mut self.u_prev, &mut self.u_cur);
        mem::swap(&mut self.v_prev, &mut self.v_cur);

        let (np, nq) = (norm(&self.p_cur), norm(&self.q_cur));
        let (nu, nv) = (norm(&self.u_cur), norm(&self.v_cur));
        let pq = dot(&self.p_cur, &self.q_cur);
        let uv = dot(&self.u_cur, &self.v_cur);

        // scale proxy for ‖A u_k‖ (resp. ‖B q_k‖): the terms that cancelled
        let lucky_q = nq
            <= self.opts.lucky_tol
                * (nq + alpha.abs() * self.q_norm + self.gamma.abs() * self.q_norm_prev);
        let lucky_u = nu
            <= self.opts.lucky_tol
                * (nu + theta.abs() * self.u_norm + self.eta.abs() * self.u_norm_prev);

        let mut breakdown = None;
        let pq_broken = is_breakdown(&self.opts, pq, np, nq);
        let uv_broken = is_breakdown(&self.opts, uv, nu, nv);

        let (eta_n, beta_n) = if pq_broken {
            breakdown = Some(BreakdownReport {
                kind: BreakdownKind::PQ,
                magnitude: pq.abs(),
                iteration: k + 1,
                lucky: lucky_q && lucky_u,
            });
            fallback(nq, &mut self.q_cur, &mut self.p_cur)
        } else {
            let (e, b) = split(pq);
            scale(1.0 / e, &mut self.p_cur);
            scale(1.0 / b, &mut self.q_cur);
            (e, b)
        };
        let (delta_n, gamma_n) = if uv_broken {
            if breakdown.is_none() {
                breakdown = Some(BreakdownReport {
                    kind: BreakdownKind::UV,
                    magnitude: uv.abs(),
                    iteration: k + 1,
                    lucky: lucky_q && lucky_u,
                });
            }
            fallback(nu, &mut self.u_cur, &mut self.v_cur)
        } else {
            let (d, g) = split(uv);
            scale(1.0 / d, &mut self.u_cur);
            scale(1.0 / g, &mut self.v_cur);
            (d, g)
        };

        self.beta = beta_n;
        self.gamma = gamma_n;
        self.delta = delta_n;
        self.eta = eta_n;
        self.q_norm_prev = self.q_norm;
        self.u_norm_prev = self.u_norm;
        self.q_norm = norm(&self.q_cur);
        self.u_norm = norm(&self.u_cur);
        self.k = k + 1;
        self.broken = breakdown.is_some();

        let coeffs = StepCoefficients {
            k,
            alpha,
            theta,
            beta_next: beta_n,
            gamma_next: gamma_n,
            delta_next: delta_n,
            eta_next: eta_n,
        };
        if let Some(h) = self.history.as_mut() {
            h.p.push(self.p_cur.clone());
            h.q.push(self.q_cur.clone());
            h.u.push(self.u_cur.clone());
            h.v.push(self.v_cur.clone());
            h.coeffs.push(&coeffs);
        }
        Ok(StepOutcome { coeffs, breakdown })
    }
}

/// Scaling used when a pair cannot be biorthonormalized: the right vector is
/// normalized in the 2-norm (or left at zero), the left vector is dropped.
/// Returns `(left scaling, right scaling)`.
fn fallback(nr: f64, right: &mut [f64], left: &mut [f64]) -> (f64, f64) {
    if nr > 0.0 {
        scale(1.0 / nr, right);
    }
    left.iter_mut().for_each(|x| *x = 0.0);
    (0.0, nr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::DenseMatrix;
    use crate::synthetic::{random_dense, random_system, random_vector};
    use std::sync::Arc;

    fn one_by_one() -> PartitionedSystem {
        PartitionedSystem::from_dense(
            1.0,
            1.0,
            DenseMatrix::new(1, 1, vec![2.0]).unwrap(),
            DenseMatrix::new(1, 1, vec![3.0]).unwrap(),
            vec![1.0],
            vec![1.0],
        )
        .unwrap()
    }

    #[test]
    fn init_unit_start() {
        let st = ReductionState::new(&one_by_one(), Default::default()).unwrap();
        assert_eq!(st.k(), 1);
        assert_eq!((st.beta1(), st.scalings().3), (1.0, 1.0));
        assert_eq!(st.p_cur(), &[1.0]);
        assert_eq!(st.q_cur(), &[1.0]);
    }

    #[test]
    fn init_scaled_start() {
        let sys = PartitionedSystem::from_dense(
            1.0,
            1.0,
            DenseMatrix::new(1, 1, vec![2.0]).unwrap(),
            DenseMatrix::new(1, 1, vec![3.0]).unwrap(),
            vec![2.0],
            vec![1.0],
        )
        .unwrap();
        let st = ReductionState::new(&sys, Default::default()).unwrap();
        let (beta, _, _, eta) = st.scalings();
        assert_eq!((eta, beta), (2.0, 2.0));
        assert_eq!(st.p_cur(), &[1.0]);
        assert_eq!(st.q_cur(), &[1.0]);
    }

    #[test]
    fn init_orthogonal_start_breaks_down() {
        let sys = PartitionedSystem::from_dense(
            1.0,
            1.0,
            random_dense(2, 2, 1),
            random_dense(2, 2, 2),
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        )
        .unwrap()
        .with_shadows(vec![1.0, 0.0], vec![1.0, 1.0])
        .unwrap();
        match ReductionState::new(&sys, Default::default()) {
            Err(Error::Breakdown(r)) => {
                assert_eq!(r.kind, BreakdownKind::PQ);
                assert_eq!(r.iteration, 1);
            }
            other => panic!("expected breakdown, got {other:?}"),
        }
    }

    #[test]
    fn one_by_one_lucky_breakdown() {
        let sys = one_by_one();
        let mut st = ReductionState::new(&sys, Default::default()).unwrap();
        let out = st.step(&sys).unwrap();
        assert_eq!(out.coeffs.alpha, 2.0);
        assert_eq!(out.coeffs.theta, 3.0);
        let r = out.breakdown.expect("breakdown");
        assert!(r.lucky);
        assert_eq!(r.iteration, 2);
        assert_eq!(out.coeffs.beta_next, 0.0);
        assert!(matches!(st.step(&sys), Err(Error::Terminated(2))));
    }

    #[test]
    fn transpose_coupling_keeps_pairs_equal() {
        let a = random_dense(4, 4, 5);
        let at = a.transpose();
        let sys = PartitionedSystem::from_dense(
            1.0,
            -1.0,
            a,
            at,
            random_vector(4, 6),
            random_vector(4, 7),
        )
        .unwrap();
        let mut st = ReductionState::new(&sys, Default::default()).unwrap();
        for _ in 0..3 {
            st.step(&sys).unwrap();
            for (p, q) in st.p_cur().iter().zip(st.q_cur()) {
                assert!((p - q).abs() < 1e-12);
            }
            for (u, v) in st.u_cur().iter().zip(st.v_cur()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relations_hold_with_history() {
        let sys = random_system(5, 5, 1.0, -0.1, 9);
        let opts = ReductionOptions {
            keep_history: true,
            ..Default::default()
        };
        let mut st = ReductionState::new(&sys, opts).unwrap();
        let k = 4;
        for _ in 0..k {
            st.step(&sys).unwrap();
        }
        let h = st.history().unwrap();
        let a = crate::linop::operator_to_dense(sys.a()).unwrap();
        let au = &a * h.u_mat(k);
        let qs = h.q_mat(k + 1) * h.s_mat(k + 1, k);
        assert!((au - qs).norm() <= 1e-10 * a.norm());
        let pq = h.p_mat(k).transpose() * h.q_mat(k);
        assert!((pq - DMatrix::identity(k, k)).amax() < 1e-8);
    }

    #[test]
    fn projected_h_one_step() {
        let c = Coefficients {
            alpha: vec![2.0],
            theta: vec![3.0],
            beta: vec![1.0, 0.0],
            gamma: vec![1.0, 0.0],
            delta: vec![1.0, 0.0],
            eta: vec![1.0, 0.0],
        };
        let h = build_projected_h(&c, 1.0, 1.0, 1);
        let expect =
            DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(h, expect);
    }

    #[test]
    fn projected_identity_holds() {
        let sys = random_system(5, 5, 0.7, 0.3, 21);
        let opts = ReductionOptions {
            keep_history: true,
            ..Default::default()
        };
        let mut st = ReductionState::new(&sys, opts).unwrap();
        let k = 4;
        for _ in 0..k {
            st.step(&sys).unwrap();
        }
        let h = st.history().unwrap();
        let kmat = crate::linop::assemble_dense(&sys).unwrap();
        let lhs = &kmat * h.w_mat(k);
        let rhs = h.w_mat(k + 1) * build_projected_h(&h.coeffs, 0.7, 0.3, k);
        assert!((lhs - rhs).norm() <= 1e-10 * kmat.norm());
    }

    #[test]
    fn shared_operator_is_not_cloned() {
        // the system holds operators behind Arc; stepping must not need ownership
        let a: Arc<dyn crate::linop::Operator> = Arc::new(random_dense(3, 3, 1));
        let sys = PartitionedSystem::new(
            1.0,
            1.0,
            a.clone(),
            a,
            random_vector(3, 2),
            random_vector(3, 3),
        )
        .unwrap();
        let mut st = ReductionState::new(&sys, Default::default()).unwrap();
        st.step(&sys).unwrap();
        assert_eq!(st.k(), 2);
    }
}
