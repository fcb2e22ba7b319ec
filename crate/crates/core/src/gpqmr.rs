//! GPQMR: quasi-minimal residual iterate over the biorthogonal basis.
//!
//! The iterate is `W_k z` with `z = argmin ‖H_{k+1,k} z − (β₁e₁ + δ₁e₂)‖`.
//! `H_{k+1,k}` is reduced by left rotations, four per step acting on rows
//! `2k−1 ..= 2k+2`, to an upper-triangular `R̂` of upper bandwidth 4. Each
//! step's cascade is first applied to the four new columns of the next step
//! (once `α_{k+1}`, `θ_{k+1}`, `γ_{k+2}`, `η_{k+2}` are known), then new
//! rotations are computed to close columns `2k+1`, `2k+2`.
//!
//! Directions solve `F R̂ = W` by back-recurrence over the last four columns,
//! and the quasi-residual `√(ϖ̄²_{2k+1} + ϖ̄²_{2k+2})` bounds the true one up to
//! `‖W_{k+1}‖`.

use std::mem;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linop::{residual_norm, PartitionedSystem};
use crate::reduction::{build_projected_h, BreakdownReport, ReductionOptions, ReductionState};
use crate::rotation::{Cascade, Givens};
use crate::solve::{Method, Recorder, ResidualPolicy, SolveOptions, SolveReport, Termination};
use crate::vecops::axpy;

const RING: usize = 8;

/// Barred entries of the next columns already touched by the last cascade.
/// After step `k`: `ω̄_{2k+1}`, `ν̄_{2k+2}` (column `2k+3`) and `ζ̄_{2k+1}`
/// (column `2k+4`).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QrCarry {
    pub omega: f64,
    pub nu_even: f64,
    pub zeta: f64,
}

/// Banded `R̂` kept column-wise: column `j` stores `R̂[j−d, j]` at `d = 0..=4`,
/// i.e. `[ρ_j, ν_{j−1}, ω_{j−2}, ζ_{j−3}, ξ_{j−4}]`.
#[derive(Clone, Debug)]
pub struct QrWindow {
    cols: [[f64; 5]; RING],
    pub carry: QrCarry,
    /// Cascade of the last completed rotation phase.
    pub cascade: Cascade,
    steps: usize,
}

/// New entries of the projected matrix consumed at iteration `k`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QrInput {
    pub alpha: f64,
    pub theta: f64,
    pub beta_next: f64,
    pub gamma_next: f64,
    pub delta_next: f64,
    pub eta_next: f64,
}

impl QrWindow {
    pub fn new() -> Self {
        Self {
            cols: [[0.0; 5]; RING],
            carry: QrCarry::default(),
            cascade: Cascade::IDENTITY,
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Column `j` (1-based) of `R̂`; only recent columns are retained.
    pub fn col(&self, j: usize) -> [f64; 5] {
        self.cols[j % RING]
    }

    fn col_mut(&mut self, j: usize) -> &mut [f64; 5] {
        &mut self.cols[j % RING]
    }

    /// Iteration `k = steps + 1`: applies the previous cascade to columns
    /// `2k−1 ..= 2k+2`, then computes the four rotations closing columns
    /// `2k−1`, `2k`. At `k = 1` the previous cascade is the identity, which
    /// reproduces the initial carries `ρ̄₁ = λ, θ̄₁ = θ₁, ν̄₁ = α₁, ρ̄₂ = μ,
    /// ω̄₁ = 0, ν̄₂ = η₂, ζ̄₁ = γ₂`.
    pub fn qr_step(&mut self, inp: &QrInput, lambda: f64, mu: f64) -> Result<Cascade> {
        let k = self.steps + 1;
        let c = self.carry;
        let cas = self.cascade;

        let mut c1 = [c.omega, c.nu_even, lambda, inp.theta];
        let mut c2 = [c.zeta, 0.0, inp.alpha, mu];
        let mut c3 = [0.0, 0.0, 0.0, inp.eta_next];
        let mut c4 = [0.0, 0.0, inp.gamma_next, 0.0];
        for v in [&mut c1, &mut c2, &mut c3, &mut c4] {
            cas.forward(v);
        }
        let (j1, j2) = (2 * k - 1, 2 * k);
        *self.col_mut(j2 + 1) = [0.0, 0.0, 0.0, c3[1], c3[0]];
        *self.col_mut(j2 + 2) = [0.0, 0.0, 0.0, 0.0, c4[1]];
        {
            let col = self.col_mut(j1);
            col[2] = c1[0];
            col[1] = c1[1];
        }
        {
            let col = self.col_mut(j2);
            col[3] = c2[0];
            col[2] = c2[1];
        }

        // rotation phase on rows 2k−1 ..= 2k+2
        let mut a = [c1[2], c1[3], 0.0, inp.delta_next];
        let mut b = [c2[2], c2[3], inp.beta_next, 0.0];
        let mut next = Cascade::IDENTITY;
        let plan = [(true, 0, 3), (true, 0, 1), (false, 1, 3), (false, 1, 2)];
        for (r, &(on_a, p, q)) in plan.iter().enumerate() {
            let piv = if on_a { &a } else { &b };
            let (g, _) = Givens::annihilate(piv[p], piv[q]);
            for v in [&mut a, &mut b] {
                let (x, y) = g.rotate(v[p], v[q]);
                v[p] = x;
                v[q] = y;
            }
            next.rot[r] = g;
        }
        if a[0] == 0.0 {
            return Err(Error::SingularWindow { row: j1 });
        }
        if b[1] == 0.0 {
            return Err(Error::SingularWindow { row: j2 });
        }
        self.col_mut(j1)[0] = a[0];
        {
            let col = self.col_mut(j2);
            col[1] = b[0];
            col[0] = b[1];
        }

        self.carry = QrCarry {
            omega: c3[2],
            nu_even: c3[3],
            zeta: c4[2],
        };
        self.cascade = next;
        self.steps = k;
        Ok(next)
    }
}

impl Default for QrWindow {
    fn default() -> Self {
        Self::new()
    }
}

/// `[ϖ_{2k−1}, ϖ_{2k}, ϖ̄_{2k+1}, ϖ̄_{2k+2}]` from `(ϖ̄_{2k−1}, ϖ̄_{2k})`.
pub fn rotate_rhs(cas: &Cascade, bar_odd: f64, bar_even: f64) -> [f64; 4] {
    let mut v = [bar_odd, bar_even, 0.0, 0.0];
    cas.forward(&mut v);
    v
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QmrStep {
    pub k: usize,
    /// `√(ϖ̄²_{2k+1} + ϖ̄²_{2k+2})`
    pub quasi: f64,
    pub breakdown: Option<BreakdownReport>,
}

#[derive(Clone, Debug, Default)]
pub struct QmrTrace {
    pub cascades: Vec<Cascade>,
    /// Columns `1, 2, …` of `R̂` in the window layout.
    pub r_cols: Vec<[f64; 5]>,
    /// `ϖ_1, ϖ_2, …`
    pub t: Vec<f64>,
    pub quasi: Vec<f64>,
    pub directions: Vec<(Vec<f64>, Vec<f64>)>,
}

pub struct GpQmr<'a> {
    sys: &'a PartitionedSystem,
    red: ReductionState,
    k: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    /// `f_j` lives in slot `j mod 4`.
    fx: [Vec<f64>; 4],
    fy: [Vec<f64>; 4],
    qr: QrWindow,
    bar: [f64; 2],
    quasi: f64,
    breakdown: Option<BreakdownReport>,
    trace: Option<QmrTrace>,
}

/// `f_target ← (w − Σ c_d f_{j−d}) / ρ`, in place over the slot of `f_{j−4}`.
fn back_recurrence(f: &mut [Vec<f64>; 4], j: usize, col: &[f64; 5], w: Option<&[f64]>) {
    let slot = |d: usize| (j + 4 - d) % 4;
    let target = slot(0);
    let mut out = mem::take(&mut f[target]);
    let (s1, s2, s3) = (&f[slot(1)], &f[slot(2)], &f[slot(3)]);
    let inv = 1.0 / col[0];
    for e in 0..out.len() {
        let base = w.map_or(0.0, |w| w[e]);
        // out currently holds f_{j−4}
        let acc = col[4] * out[e] + col[3] * s3[e] + col[2] * s2[e] + col[1] * s1[e];
        out[e] = (base - acc) * inv;
    }
    f[target] = out;
}

impl<'a> GpQmr<'a> {
    pub fn new(sys: &'a PartitionedSystem, opts: &ReductionOptions, trace: bool) -> Result<Self> {
        let mut ropts = *opts;
        ropts.keep_history |= trace;
        let red = ReductionState::new(sys, ropts)?;
        let (m, n) = (sys.m(), sys.n());
        let bar = [red.beta1(), red.delta1()];
        Ok(Self {
            sys,
            k: 0,
            x: vec![0.0; m],
            y: vec![0.0; n],
            fx: std::array::from_fn(|_| vec![0.0; m]),
            fy: std::array::from_fn(|_| vec![0.0; n]),
            qr: QrWindow::new(),
            quasi: bar[0].hypot(bar[1]),
            bar,
            red,
            breakdown: None,
            trace: trace.then(QmrTrace::default),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn reduction(&self) -> &ReductionState {
        &self.red
    }

    pub fn window(&self) -> &QrWindow {
        &self.qr
    }

    pub fn trace(&self) -> Option<&QmrTrace> {
        self.trace.as_ref()
    }

    pub fn breakdown(&self) -> Option<&BreakdownReport> {
        self.breakdown.as_ref()
    }

    pub fn storage_vectors(&self) -> (usize, usize) {
        let r = &self.red;
        let m_side = [&self.x, &r.p_prev, &r.p_cur, &r.q_prev, &r.q_cur].len() + self.fx.len();
        let n_side = [&self.y, &r.u_prev, &r.u_cur, &r.v_prev, &r.v_cur].len() + self.fy.len();
        (m_side, n_side)
    }

    /// Quasi-residual and, in trace mode, the bound `‖W_{k+1}‖ · quasi`.
    pub fn quasi_residual(&self) -> (f64, Option<f64>) {
        let bound = self.red.history().map(|h| {
            let w = h.w_mat(self.k + 1);
            let wn = w.singular_values().max();
            wn * self.quasi
        });
        (self.quasi, bound)
    }

    pub fn step(&mut self) -> Result<QmrStep> {
        if let Some(r) = self.breakdown {
            return Err(Error::Breakdown(r));
        }
        let sys = self.sys;
        let out = self.red.step(sys)?;
        let c = out.coeffs;
        let k = self.k + 1;

        let cas = self.qr.qr_step(
            &QrInput {
                alpha: c.alpha,
                theta: c.theta,
                beta_next: c.beta_next,
                gamma_next: c.gamma_next,
                delta_next: c.delta_next,
                eta_next: c.eta_next,
            },
            sys.lambda(),
            sys.mu(),
        )?;
        let [w1, w2, b1, b2] = rotate_rhs(&cas, self.bar[0], self.bar[1]);
        self.bar = [b1, b2];
        self.quasi = b1.hypot(b2);

        let (j1, j2) = (2 * k - 1, 2 * k);
        let (col1, col2) = (self.qr.col(j1), self.qr.col(j2));
        // f_{2k−1} = ((q_k, 0) − …)/ρ_{2k−1},  f_{2k} = ((0, u_k) − …)/ρ_{2k}
        back_recurrence(&mut self.fx, j1, &col1, Some(&self.red.q_prev));
        back_recurrence(&mut self.fy, j1, &col1, None);
        back_recurrence(&mut self.fx, j2, &col2, None);
        back_recurrence(&mut self.fy, j2, &col2, Some(&self.red.u_prev));

        let (s1, s2) = (j1 % 4, j2 % 4);
        axpy(w1, &self.fx[s1], &mut self.x);
        axpy(w2, &self.fx[s2], &mut self.x);
        axpy(w1, &self.fy[s1], &mut self.y);
        axpy(w2, &self.fy[s2], &mut self.y);

        if let Some(t) = self.trace.as_mut() {
            t.cascades.push(cas);
            t.r_cols.push(col1);
            t.r_cols.push(col2);
            t.t.push(w1);
            t.t.push(w2);
            t.quasi.push(self.quasi);
            t.directions.push((self.fx[s1].clone(), self.fy[s1].clone()));
            t.directions.push((self.fx[s2].clone(), self.fy[s2].clone()));
        }

        self.k = k;
        self.breakdown = out.breakdown;
        Ok(QmrStep {
            k,
            quasi: self.quasi,
            breakdown: out.breakdown,
        })
    }

    /// Dense `R̂_k` (2k×2k) in trace mode.
    pub fn r_hat(&self) -> Option<DMatrix<f64>> {
        let t = self.trace.as_ref()?;
        let n = 2 * self.k;
        let mut r = DMatrix::zeros(n, n);
        for (idx, col) in t.r_cols.iter().enumerate() {
            for (d, &v) in col.iter().enumerate() {
                if d <= idx {
                    r[(idx - d, idx)] = v;
                }
            }
        }
        Some(r)
    }

    /// Dense `Q̂_k` ((2k+2)×(2k+2)) in trace mode, with
    /// `H_{k+1,k} = Q̂_k [R̂_k; 0]`.
    pub fn q_hat(&self) -> Option<DMatrix<f64>> {
        let t = self.trace.as_ref()?;
        let n = 2 * self.k + 2;
        let mut qt = DMatrix::<f64>::identity(n, n);
        for (idx, cas) in t.cascades.iter().enumerate() {
            let g = cas.matrix();
            let off = 2 * idx;
            let mut emb = DMatrix::<f64>::identity(n, n);
            for a in 0..4 {
                for b in 0..4 {
                    emb[(off + a, off + b)] = g[a][b];
                }
            }
            qt = emb * qt;
        }
        Some(qt.transpose())
    }

    /// Dense `H_{k+1,k}` from the reduction history (trace mode).
    pub fn h_tall(&self) -> Option<DMatrix<f64>> {
        let h = self.red.history()?;
        Some(build_projected_h(&h.coeffs, self.sys.lambda(), self.sys.mu(), self.k))
    }
}

/// GPQMR driver; stops on the quasi-residual (or the explicit residual).
pub fn gpqmr_solve(sys: &PartitionedSystem, opts: &SolveOptions) -> Result<SolveReport> {
    let method = Method::GpQmr;
    let mut rec = Recorder::new(method, sys);
    let zero = || (vec![0.0; sys.m()], vec![0.0; sys.n()]);
    if sys.rhs_norm() <= opts.tol {
        let (x, y) = zero();
        return rec.finish(method, sys, x, y, 0, Termination::Converged);
    }
    let mut s = match GpQmr::new(sys, &opts.reduction, false) {
        Ok(s) => s,
        Err(Error::Breakdown(r)) => {
            let (x, y) = zero();
            return rec.finish(method, sys, x, y, 0, Termination::Breakdown(r));
        }
        Err(e) => return Err(e),
    };
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    for k in 1..=opts.maxit {
        let info = s.step()?;
        iterations = k;
        let (stop_on, true_res) = match opts.residual {
            ResidualPolicy::Estimate => (info.quasi, None),
            ResidualPolicy::Explicit => {
                let r = residual_norm(sys, s.x(), s.y())?;
                (r, Some(r))
            }
        };
        rec.push(k, Some(info.quasi), true_res, false);
        if stop_on <= opts.tol {
            termination = Termination::Converged;
            break;
        }
        if let Some(r) = info.breakdown {
            termination = Termination::Breakdown(r);
            break;
        }
    }
    let (x, y) = (s.x().to_vec(), s.y().to_vec());
    rec.finish(method, sys, x, y, iterations, termination)
}
