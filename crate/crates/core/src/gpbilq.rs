//! GPBiLQ and the GPBiCG transfer.
//!
//! At iteration `k` the GPBiLQ iterate is `W_k z`, where `z` is the
//! minimum-norm solution of `H_{k−1,k} z = β₁e₁ + δ₁e₂`. The wide matrix is
//! factored as `[L 0] Q` with a sliding LQ factorization: every step applies
//! four column rotations to a 6×4 window, finalizing two rows of the
//! lower-banded (bandwidth 4) factor. Forward substitution then yields two new
//! entries of `t` in `L t = β₁e₁ + δ₁e₂`, and the iterate is updated along two
//! direction vectors that are themselves rotated in place.
//!
//! One extra rotation of the trailing 2×2 block gives the Galerkin iterate
//! `W_k H_k⁻¹(β₁e₁ + δ₁e₂)` whenever that block is nonsingular.
//!
//! Working storage is nine vectors of length `m` (`x`, `p_{k−1}`, `p_k`,
//! `q_{k−1}`, `q_k` and four direction parts) and nine of length `n`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linop::{residual_norm, PartitionedSystem};
use crate::reduction::{build_h_square, BreakdownReport, ReductionOptions, ReductionState};
use crate::rotation::{Cascade, Givens};
use crate::solve::{Method, Recorder, ResidualPolicy, SolveOptions, SolveReport, Termination};
use crate::vecops::{axpy, combo_norm_sq};

/// Relative threshold on the trailing determinant below which the Galerkin
/// iterate is reported as undefined.
pub const TRANSFER_TOL: f64 = 1e-13;

const RING: usize = 8;

/// Barred (not yet final) entries of the trailing rows:
/// `ρ̄_{2k−1}, ᾱ_k, ν̄_{2k}, ρ̄_{2k}, ω̄_{2k+1}, ν̄_{2k+1}, ζ̄_{2k+2}`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LqCarry {
    pub rho_odd: f64,
    pub alpha_bar: f64,
    pub nu_even: f64,
    pub rho_even: f64,
    pub omega_next: f64,
    pub nu_next: f64,
    pub zeta_next: f64,
}

/// New entries of the projected matrix needed by one window update
/// (step `i = k − 1` uses `γ_k, η_k, α_k, θ_k, β_{k+1}, δ_{k+1}`).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LqInput {
    pub gamma: f64,
    pub eta: f64,
    pub alpha: f64,
    pub theta: f64,
    pub beta_next: f64,
    pub delta_next: f64,
}

/// Sliding window of the banded lower-triangular factor.
///
/// Row `j` is stored as `[ξ_j, ζ_j, ω_j, ν_j, ρ_j]`, the entries in columns
/// `j−4 ..= j`.
#[derive(Clone, Debug)]
pub struct LqWindow {
    rows: [[f64; 5]; RING],
    pub carry: LqCarry,
    /// Number of completed window updates (`i`).
    steps: usize,
}

impl LqWindow {
    /// Carries after the first reduction step:
    /// `ρ̄₁ = λ, ᾱ₁ = α₁, ν̄₂ = θ₁, ρ̄₂ = μ, ω̄₃ = 0, ν̄₃ = β₂, ζ̄₄ = δ₂`.
    pub fn new(lambda: f64, mu: f64, alpha1: f64, theta1: f64, beta2: f64, delta2: f64) -> Self {
        Self {
            rows: [[0.0; 5]; RING],
            carry: LqCarry {
                rho_odd: lambda,
                alpha_bar: alpha1,
                nu_even: theta1,
                rho_even: mu,
                omega_next: 0.0,
                nu_next: beta2,
                zeta_next: delta2,
            },
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Row `j` (1-based) of the factor; only the last few are retained.
    pub fn row(&self, j: usize) -> [f64; 5] {
        self.rows[j % RING]
    }

    fn row_mut(&mut self, j: usize) -> &mut [f64; 5] {
        &mut self.rows[j % RING]
    }

    /// One window update; returns the four column rotations.
    pub fn lq_step(&mut self, inp: &LqInput, lambda: f64, mu: f64) -> Result<Cascade> {
        let i = self.steps + 1;
        let c = self.carry;
        let mut w = [
            [c.rho_odd, c.alpha_bar, 0.0, inp.gamma],
            [c.nu_even, c.rho_even, inp.eta, 0.0],
            [c.omega_next, c.nu_next, lambda, inp.alpha],
            [c.zeta_next, 0.0, inp.theta, mu],
            [0.0, 0.0, 0.0, inp.beta_next],
            [0.0, 0.0, inp.delta_next, 0.0],
        ];
        let mut cas = Cascade::IDENTITY;
        // (pivot row, pivot column, column to annihilate)
        let plan = [(0, 0, 3), (0, 0, 1), (1, 1, 3), (1, 1, 2)];
        for (r, &(pr, a, b)) in plan.iter().enumerate() {
            let (g, _) = Givens::annihilate(w[pr][a], w[pr][b]);
            for row in w.iter_mut() {
                let (x, y) = g.rotate(row[a], row[b]);
                row[a] = x;
                row[b] = y;
            }
            cas.rot[r] = g;
        }
        if w[0][0] == 0.0 {
            return Err(Error::SingularWindow { row: 2 * i - 1 });
        }
        if w[1][1] == 0.0 {
            return Err(Error::SingularWindow { row: 2 * i });
        }

        let (j1, j2) = (2 * i - 1, 2 * i);
        self.row_mut(j1)[4] = w[0][0];
        let r = self.row_mut(j2);
        r[3] = w[1][0];
        r[4] = w[1][1];
        let r = self.row_mut(j2 + 1);
        r[2] = w[2][0];
        r[3] = w[2][1];
        let r = self.row_mut(j2 + 2);
        r[1] = w[3][0];
        r[2] = w[3][1];
        // rows 2i+3 and 2i+4 enter the window here
        *self.row_mut(j2 + 3) = [w[4][0], w[4][1], 0.0, 0.0, 0.0];
        *self.row_mut(j2 + 4) = [w[5][1], 0.0, 0.0, 0.0, 0.0];

        self.carry = LqCarry {
            rho_odd: w[2][2],
            alpha_bar: w[2][3],
            nu_even: w[3][2],
            rho_even: w[3][3],
            omega_next: w[4][2],
            nu_next: w[4][3],
            zeta_next: w[5][2],
        };
        self.steps = i;
        Ok(cas)
    }
}

/// Last few entries of `t`; indices below 1 read as zero.
#[derive(Clone, Debug, Default)]
pub struct VarpiWindow {
    vals: [f64; RING],
}

impl VarpiWindow {
    pub fn get(&self, j: isize) -> f64 {
        if j < 1 {
            0.0
        } else {
            self.vals[j as usize % RING]
        }
    }

    fn set(&mut self, j: usize, v: f64) {
        self.vals[j % RING] = v;
    }
}

/// Forward substitution for row `j` of `L t = β₁e₁ + δ₁e₂` given the row
/// `[ξ, ζ, ω, ν, ρ]` and the earlier entries.
pub fn substitute_row(row: &[f64; 5], j: usize, varpi: &VarpiWindow, beta1: f64, delta1: f64) -> f64 {
    let rhs = match j {
        1 => beta1,
        2 => delta1,
        _ => 0.0,
    };
    let j = j as isize;
    let acc = row[0] * varpi.get(j - 4)
        + row[1] * varpi.get(j - 3)
        + row[2] * varpi.get(j - 2)
        + row[3] * varpi.get(j - 1);
    (rhs - acc) / row[4]
}

/// Data of the Galerkin transfer at the current iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Transfer {
    pub rot: Givens,
    pub rho_odd: f64,
    pub nu_even: f64,
    pub rho_even: f64,
    /// `ϖ̃_{2k−1}`, `ϖ̃_{2k}`
    pub w1: f64,
    pub w2: f64,
    /// Determinant test passed.
    pub defined: bool,
}

impl Transfer {
    /// Coefficients of `f̃_{2k−1}`, `f̃_{2k}` in `x_C − x_L`.
    pub fn direction_weights(&self) -> (f64, f64) {
        self.rot.rotate_back(self.w1, self.w2)
    }
}

/// Residual quantities of iteration `k`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BiLqResidualEstimate {
    pub theta: f64,
    pub rho: f64,
    pub chi: f64,
    pub sigma: f64,
    pub chi_tilde: f64,
    pub sigma_tilde: f64,
    pub est_norm_l: f64,
    /// `None` when the Galerkin iterate does not exist.
    pub est_norm_c: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiLqStep {
    pub k: usize,
    pub estimate: BiLqResidualEstimate,
    pub transfer_defined: bool,
    pub breakdown: Option<BreakdownReport>,
}

/// Full record kept in trace mode for dense verification.
#[derive(Clone, Debug, Default)]
pub struct BiLqTrace {
    /// `M_1, M_2, …` column-rotation cascades.
    pub cascades: Vec<Cascade>,
    /// Finalized factor rows `1, 2, …` as `[ξ, ζ, ω, ν, ρ]`.
    pub l_rows: Vec<[f64; 5]>,
    /// `ϖ_1, ϖ_2, …`
    pub varpi: Vec<f64>,
    /// Finalized directions `f_1, f_2, …` as `(x part, y part)`.
    pub directions: Vec<(Vec<f64>, Vec<f64>)>,
}

/// GPBiLQ solver state.
pub struct GpBiLq<'a> {
    sys: &'a PartitionedSystem,
    red: ReductionState,
    k: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    fx: [Vec<f64>; 4],
    fy: [Vec<f64>; 4],
    lq: Option<LqWindow>,
    varpi: VarpiWindow,
    cas_cur: Cascade,
    cas_prev: Cascade,
    transfer: Transfer,
    estimate: BiLqResidualEstimate,
    breakdown: Option<BreakdownReport>,
    trace: Option<BiLqTrace>,
}

impl<'a> GpBiLq<'a> {
    /// Initializes the reduction; no iteration is taken yet. Tracing also
    /// switches on the reduction history.
    pub fn new(sys: &'a PartitionedSystem, opts: &ReductionOptions, trace: bool) -> Result<Self> {
        let mut ropts = *opts;
        ropts.keep_history |= trace;
        let red = ReductionState::new(sys, ropts)?;
        let (m, n) = (sys.m(), sys.n());
        Ok(Self {
            sys,
            red,
            k: 0,
            x: vec![0.0; m],
            y: vec![0.0; n],
            fx: std::array::from_fn(|_| vec![0.0; m]),
            fy: std::array::from_fn(|_| vec![0.0; n]),
            lq: None,
            varpi: VarpiWindow::default(),
            cas_cur: Cascade::IDENTITY,
            cas_prev: Cascade::IDENTITY,
            transfer: Transfer::default(),
            estimate: BiLqResidualEstimate::default(),
            breakdown: None,
            trace: trace.then(BiLqTrace::default),
        })
    }

    /// Iterations completed.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn x_l(&self) -> &[f64] {
        &self.x
    }

    pub fn y_l(&self) -> &[f64] {
        &self.y
    }

    pub fn reduction(&self) -> &ReductionState {
        &self.red
    }

    pub fn window(&self) -> Option<&LqWindow> {
        self.lq.as_ref()
    }

    pub fn transfer(&self) -> &Transfer {
        &self.transfer
    }

    pub fn estimate(&self) -> &BiLqResidualEstimate {
        &self.estimate
    }

    pub fn trace(&self) -> Option<&BiLqTrace> {
        self.trace.as_ref()
    }

    pub fn breakdown(&self) -> Option<&BreakdownReport> {
        self.breakdown.as_ref()
    }

    /// Number of live length-`m` and length-`n` vectors.
    pub fn storage_vectors(&self) -> (usize, usize) {
        let r = &self.red;
        let m_side = [&self.x, &r.p_prev, &r.p_cur, &r.q_prev, &r.q_cur]
            .len()
            + self.fx.len();
        let n_side = [&self.y, &r.u_prev, &r.u_cur, &r.v_prev, &r.v_cur]
            .len()
            + self.fy.len();
        (m_side, n_side)
    }

    /// Galerkin iterate written into `x`, `y`; returns `false` (leaving the
    /// outputs untouched) when it does not exist.
    pub fn bicg_into(&self, x: &mut [f64], y: &mut [f64]) -> bool {
        if self.k == 0 || !self.transfer.defined {
            return false;
        }
        let (a, b) = self.transfer.direction_weights();
        x.copy_from_slice(&self.x);
        y.copy_from_slice(&self.y);
        axpy(a, &self.fx[2], x);
        axpy(b, &self.fx[3], x);
        axpy(a, &self.fy[2], y);
        axpy(b, &self.fy[3], y);
        true
    }

    pub fn bicg_iterate(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut x = vec![0.0; self.x.len()];
        let mut y = vec![0.0; self.y.len()];
        self.bicg_into(&mut x, &mut y).then_some((x, y))
    }

    /// Runs iteration `k + 1`. Allocation-free unless tracing.
    pub fn step(&mut self) -> Result<BiLqStep> {
        if let Some(r) = self.breakdown {
            return Err(Error::Breakdown(r));
        }
        let sys = self.sys;
        let (lambda, mu) = (sys.lambda(), sys.mu());
        let (_, gamma_k, _, eta_k) = self.red.scalings();
        let (beta_k, delta_k) = {
            let (b, _, d, _) = self.red.scalings();
            (b, d)
        };
        let out = self.red.step(sys)?;
        let c = out.coeffs;
        let k = self.k + 1;

        if k == 1 {
            self.lq = Some(LqWindow::new(
                lambda,
                mu,
                c.alpha,
                c.theta,
                c.beta_next,
                c.delta_next,
            ));
            // f̃₁ = (q₁, 0), f̃₂ = (0, u₁); the buffers start zeroed
            self.fx[2].copy_from_slice(&self.red.q_prev);
            self.fy[3].copy_from_slice(&self.red.u_prev);
            self.estimate = BiLqResidualEstimate {
                est_norm_l: sys.rhs_norm(),
                ..Default::default()
            };
        } else {
            let (j1, j2) = (2 * k - 3, 2 * k - 2);
            let (cas, row1, row2) = {
                let lq = self.lq.as_mut().expect("initialized at k = 1");
                let cas = lq.lq_step(
                    &LqInput {
                        gamma: gamma_k,
                        eta: eta_k,
                        alpha: c.alpha,
                        theta: c.theta,
                        beta_next: c.beta_next,
                        delta_next: c.delta_next,
                    },
                    lambda,
                    mu,
                )?;
                (cas, lq.row(j1), lq.row(j2))
            };
            self.cas_prev = self.cas_cur;
            self.cas_cur = cas;

            let (beta1, delta1) = (self.red.beta1(), self.red.delta1());
            let w1 = substitute_row(&row1, j1, &self.varpi, beta1, delta1);
            self.varpi.set(j1, w1);
            let w2 = substitute_row(&row2, j2, &self.varpi, beta1, delta1);
            self.varpi.set(j2, w2);

            self.update_directions();
            axpy(w1, &self.fx[0], &mut self.x);
            axpy(w2, &self.fx[1], &mut self.x);
            axpy(w1, &self.fy[0], &mut self.y);
            axpy(w2, &self.fy[1], &mut self.y);

            self.estimate = self.estimate_l(k, beta_k, delta_k, lambda, mu, &c);

            if let Some(t) = self.trace.as_mut() {
                t.cascades.push(cas);
                t.l_rows.push(row1);
                t.l_rows.push(row2);
                t.varpi.push(w1);
                t.varpi.push(w2);
                t.directions.push((self.fx[0].clone(), self.fy[0].clone()));
                t.directions.push((self.fx[1].clone(), self.fy[1].clone()));
            }
        }

        self.k = k;
        self.transfer = self.compute_transfer(k);
        self.estimate_c(k, &c);
        self.breakdown = out.breakdown;
        Ok(BiLqStep {
            k,
            estimate: self.estimate,
            transfer_defined: self.transfer.defined,
            breakdown: out.breakdown,
        })
    }

    /// `[f_{2k−3} f_{2k−2} f̃_{2k−1} f̃_{2k}] = [f̃_{2k−3} f̃_{2k−2} (q_k,0) (0,u_k)] M_{k−1}`
    fn update_directions(&mut self) {
        for f in [&mut self.fx, &mut self.fy] {
            f.swap(0, 2);
            f.swap(1, 3);
        }
        self.fx[2].copy_from_slice(&self.red.q_prev);
        self.fx[3].iter_mut().for_each(|v| *v = 0.0);
        self.fy[2].iter_mut().for_each(|v| *v = 0.0);
        self.fy[3].copy_from_slice(&self.red.u_prev);
        let [a, b, c, d] = &mut self.fx;
        self.cas_cur.forward_slices([a, b, c, d]);
        let [a, b, c, d] = &mut self.fy;
        self.cas_cur.forward_slices([a, b, c, d]);
    }

    /// Trailing entries `z_{2k−3..2k}` of `z_L`.
    fn z_tail_l(&self, k: usize) -> [f64; 4] {
        let kk = k as isize;
        let mut v = [self.varpi.get(2 * kk - 3), self.varpi.get(2 * kk - 2), 0.0, 0.0];
        self.cas_cur.backward(&mut v);
        let mut w = [self.varpi.get(2 * kk - 5), self.varpi.get(2 * kk - 4), v[0], v[1]];
        if k >= 3 {
            self.cas_prev.backward(&mut w);
        }
        [w[2], w[3], v[2], v[3]]
    }

    fn estimate_l(
        &self,
        k: usize,
        beta_k: f64,
        delta_k: f64,
        lambda: f64,
        mu: f64,
        c: &crate::reduction::StepCoefficients,
    ) -> BiLqResidualEstimate {
        let [z3, z2, z1, z0] = self.z_tail_l(k);
        // rows 2k−1 .. 2k+2 of H_{k+1,k} z_L
        let theta = beta_k * z2 + lambda * z1 + c.alpha * z0;
        let rho = delta_k * z3 + c.theta * z1 + mu * z0;
        let chi = c.beta_next * z0;
        let sigma = c.delta_next * z1;
        let r = &self.red;
        let est = (combo_norm_sq(theta, &r.q_prev, chi, &r.q_cur)
            + combo_norm_sq(rho, &r.u_prev, sigma, &r.u_cur))
        .sqrt();
        BiLqResidualEstimate {
            theta,
            rho,
            chi,
            sigma,
            est_norm_l: est,
            ..Default::default()
        }
    }

    fn compute_transfer(&self, k: usize) -> Transfer {
        let lq = self.lq.as_ref().expect("initialized");
        let c = lq.carry;
        let (g, rho_odd) = Givens::annihilate(c.rho_odd, c.alpha_bar);
        let (nu_even, rho_even) = g.rotate(c.nu_even, c.rho_even);
        let det = c.rho_odd * c.rho_even - c.alpha_bar * c.nu_even;
        let scale = (c.rho_odd * c.rho_even).abs() + (c.alpha_bar * c.nu_even).abs();
        let defined = det.abs() > TRANSFER_TOL * scale && rho_odd != 0.0 && rho_even != 0.0;
        let mut t = Transfer {
            rot: g,
            rho_odd,
            nu_even,
            rho_even,
            defined,
            ..Default::default()
        };
        if defined {
            let (beta1, delta1) = (self.red.beta1(), self.red.delta1());
            let (j1, j2) = (2 * k - 1, 2 * k);
            let mut r1 = lq.row(j1);
            r1[4] = rho_odd;
            let w1 = substitute_row(&r1, j1, &self.varpi, beta1, delta1);
            let mut r2 = lq.row(j2);
            r2[3] = 0.0;
            r2[4] = rho_even;
            // ν̈_{2k} multiplies ϖ̃_{2k−1}, which is not in the window
            let w2 = substitute_row(&r2, j2, &self.varpi, beta1, delta1) - nu_even * w1 / rho_even;
            t.w1 = w1;
            t.w2 = w2;
        }
        t
    }

    fn estimate_c(&mut self, k: usize, c: &crate::reduction::StepCoefficients) {
        if !self.transfer.defined {
            self.estimate.est_norm_c = None;
            return;
        }
        let (g0, g1) = self.transfer.direction_weights();
        let (z1, z0) = if k == 1 {
            (g0, g1)
        } else {
            let kk = k as isize;
            let mut v = [self.varpi.get(2 * kk - 3), self.varpi.get(2 * kk - 2), g0, g1];
            self.cas_cur.backward(&mut v);
            (v[2], v[3])
        };
        let chi_t = c.beta_next * z0;
        let sigma_t = c.delta_next * z1;
        let (nq, nu) = self.red.current_norms();
        self.estimate.chi_tilde = chi_t;
        self.estimate.sigma_tilde = sigma_t;
        self.estimate.est_norm_c = Some(((chi_t * nq).powi(2) + (sigma_t * nu).powi(2)).sqrt());
    }

    /// `L̃_k` (2k×2k) in trace mode: finalized rows plus the two trailing
    /// rows closed by the transfer rotation.
    pub fn l_tilde(&self) -> Option<DMatrix<f64>> {
        let t = self.trace.as_ref()?;
        let lq = self.lq.as_ref()?;
        let k = self.k;
        let n = 2 * k;
        let mut l = DMatrix::zeros(n, n);
        let mut put = |j: usize, row: &[f64; 5]| {
            for (d, &v) in row.iter().enumerate() {
                let col = j as isize - 4 + d as isize;
                if col >= 1 {
                    l[(j - 1, col as usize - 1)] = v;
                }
            }
        };
        for (idx, row) in t.l_rows.iter().enumerate() {
            put(idx + 1, row);
        }
        let mut r1 = lq.row(n - 1);
        r1[4] = self.transfer.rho_odd;
        put(n - 1, &r1);
        let mut r2 = lq.row(n);
        r2[3] = self.transfer.nu_even;
        r2[4] = self.transfer.rho_even;
        put(n, &r2);
        Some(l)
    }

    /// `Q̃_k` (2k×2k) in trace mode, with `H_k = L̃_k Q̃_k`.
    pub fn q_tilde(&self) -> Option<DMatrix<f64>> {
        let t = self.trace.as_ref()?;
        let n = 2 * self.k;
        // accumulate the column operations R = G₁ᵀ G₂ᵀ … G̃ᵀ
        let mut r = DMatrix::<f64>::identity(n, n);
        for (idx, cas) in t.cascades.iter().enumerate() {
            let g = cas.matrix();
            let off = 2 * idx;
            let mut emb = DMatrix::<f64>::identity(n, n);
            for a in 0..4 {
                for b in 0..4 {
                    emb[(off + a, off + b)] = g[b][a];
                }
            }
            r *= emb;
        }
        let g = self.transfer.rot;
        let mut emb = DMatrix::<f64>::identity(n, n);
        emb[(n - 2, n - 2)] = g.c;
        emb[(n - 2, n - 1)] = -g.s;
        emb[(n - 1, n - 2)] = g.s;
        emb[(n - 1, n - 1)] = g.c;
        r *= emb;
        Some(r.transpose())
    }

    /// Dense `H_k` from the reduction history (trace mode).
    pub fn h_square(&self) -> Option<DMatrix<f64>> {
        let h = self.red.history()?;
        Some(build_h_square(&h.coeffs, self.sys.lambda(), self.sys.mu(), self.k))
    }
}

fn estimate_or_explicit(
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

fn run(sys: &PartitionedSystem, opts: &SolveOptions, method: Method) -> Result<SolveReport> {
    let mut rec = Recorder::new(method, sys);
    let zero = || (vec![0.0; sys.m()], vec![0.0; sys.n()]);
    if sys.rhs_norm() <= opts.tol {
        let (x, y) = zero();
        return rec.finish(method, sys, x, y, 0, Termination::Converged);
    }
    let mut s = match GpBiLq::new(sys, &opts.reduction, false) {
        Ok(s) => s,
        Err(Error::Breakdown(r)) => {
            let (x, y) = zero();
            return rec.finish(method, sys, x, y, 0, Termination::Breakdown(r));
        }
        Err(e) => return Err(e),
    };
    let want_l = method == Method::GpBiLq;
    let (mut xc, mut yc) = zero();
    let mut have_c = false;
    let mut termination = Termination::MaxIterations;
    let mut use_c = false;
    let mut iterations = 0;

    for k in 1..=opts.maxit {
        let info = s.step()?;
        iterations = k;
        have_c = s.bicg_into(&mut xc, &mut yc);
        let est_c = if have_c {
            let e = info.estimate.est_norm_c.unwrap_or(f64::INFINITY);
            Some(estimate_or_explicit(opts.residual, sys, e, &xc, &yc)?)
        } else {
            None
        };
        if want_l {
            let (res_l, true_l) =
                estimate_or_explicit(opts.residual, sys, info.estimate.est_norm_l, s.x_l(), s.y_l())?;
            rec.push(k, Some(info.estimate.est_norm_l), true_l, have_c);
            if res_l <= opts.tol {
                termination = Termination::Converged;
                break;
            }
        } else {
            rec.push(
                k,
                info.estimate.est_norm_c,
                est_c.and_then(|(_, t)| t),
                have_c,
            );
        }
        if let Some((res_c, _)) = est_c {
            if res_c <= opts.tol {
                termination = Termination::Converged;
                use_c = true;
                break;
            }
        }
        if let Some(r) = info.breakdown {
            termination = Termination::Breakdown(r);
            break;
        }
    }

    // GPBiCG reports its own iterate when it exists, else the last GPBiLQ one
    let (x, y) = if use_c || (!want_l && have_c) {
        (xc, yc)
    } else {
        (s.x_l().to_vec(), s.y_l().to_vec())
    };
    rec.finish(method, sys, x, y, iterations, termination)
}

/// GPBiLQ driver. Stops when either the GPBiLQ residual or, where it
/// exists, the GPBiCG residual meets `tol`, returning the iterate that did.
pub fn gpbilq_solve(sys: &PartitionedSystem, opts: &SolveOptions) -> Result<SolveReport> {
    run(sys, opts, Method::GpBiLq)
}

/// GPBiCG driver: the Galerkin iterate obtained from the GPBiLQ recurrences.
/// Iterations where it does not exist are recorded without an estimate.
pub fn gpbicg_solve(sys: &PartitionedSystem, opts: &SolveOptions) -> Result<SolveReport> {
    run(sys, opts, Method::GpBiCg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::DenseMatrix;
    use crate::synthetic::random_system;

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
    fn first_rotation_three_four_five() {
        let mut w = LqWindow::new(3.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        let cas = w
            .lq_step(
                &LqInput {
                    gamma: 4.0,
                    eta: 1.0,
                    ..Default::default()
                },
                1.0,
                1.0,
            )
            .unwrap();
        assert!((cas.rot[0].c - 0.6).abs() < 1e-15);
        assert!((cas.rot[0].s - 0.8).abs() < 1e-15);
        assert!((w.row(1)[4] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn zero_gamma_gives_identity_first_rotation() {
        let mut w = LqWindow::new(2.0, 1.0, 0.5, 0.5, 1.0, 1.0);
        let cas = w
            .lq_step(
                &LqInput {
                    gamma: 0.0,
                    eta: 1.0,
                    alpha: 1.0,
                    theta: 1.0,
                    beta_next: 1.0,
                    delta_next: 1.0,
                },
                1.0,
                1.0,
            )
            .unwrap();
        assert_eq!(cas.rot[0], Givens::IDENTITY);
    }

    #[test]
    fn singular_window_detected() {
        let mut w = LqWindow::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let err = w.lq_step(&LqInput::default(), 0.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::SingularWindow { row: 1 }));
    }

    #[test]
    fn substitution_startup() {
        let v = VarpiWindow::default();
        let w1 = substitute_row(&[0.0, 0.0, 0.0, 0.0, 4.0], 1, &v, 2.0, 1.0);
        assert_eq!(w1, 0.5);
        let mut v = VarpiWindow::default();
        v.set(1, w1);
        let w2 = substitute_row(&[0.0, 0.0, 0.0, 0.0, 2.0], 2, &v, 2.0, 1.0);
        assert_eq!(w2, 0.5);
    }

    #[test]
    fn one_by_one_transfer_is_exact() {
        let sys = one_by_one();
        let mut s = GpBiLq::new(&sys, &Default::default(), false).unwrap();
        let info = s.step().unwrap();
        assert_eq!(s.x_l(), &[0.0]);
        assert!((info.estimate.est_norm_l - 2f64.sqrt()).abs() < 1e-15);
        let (x, y) = s.bicg_iterate().unwrap();
        assert!((x[0] - 0.2).abs() < 1e-14 && (y[0] - 0.4).abs() < 1e-14);
        assert_eq!(info.estimate.est_norm_c, Some(0.0));
        assert!(info.breakdown.unwrap().lucky);
    }

    #[test]
    fn storage_is_nine_plus_nine() {
        let sys = random_system(4, 3, 1.0, 0.5, 3);
        let s = GpBiLq::new(&sys, &Default::default(), false).unwrap();
        assert_eq!(s.storage_vectors(), (9, 9));
    }

    #[test]
    fn maxit_zero_returns_zero_iterate() {
        let sys = random_system(4, 3, 1.0, 0.5, 3);
        let opts = SolveOptions {
            maxit: 0,
            ..Default::default()
        };
        let rep = gpbilq_solve(&sys, &opts).unwrap();
        assert_eq!(rep.termination, Termination::MaxIterations);
        assert!(rep.x.iter().chain(&rep.y).all(|&v| v == 0.0));
        assert_eq!(rep.record.rows.len(), 1);
        assert!((rep.record.rows[0].est_residual.unwrap() - sys.rhs_norm()).abs() < 1e-15);
    }

    #[test]
    fn estimate_matches_explicit_residual() {
        let sys = random_system(6, 5, 1.0, -0.3, 17);
        let mut s = GpBiLq::new(&sys, &Default::default(), false).unwrap();
        for _ in 0..5 {
            let info = s.step().unwrap();
            let r = residual_norm(&sys, s.x_l(), s.y_l()).unwrap();
            assert!((info.estimate.est_norm_l - r).abs() <= 1e-9 * r.max(1e-12));
            if let Some((x, y)) = s.bicg_iterate() {
                let rc = residual_norm(&sys, &x, &y).unwrap();
                let ec = info.estimate.est_norm_c.unwrap();
                assert!((ec - rc).abs() <= 1e-9 * rc.max(1e-12), "{ec} vs {rc}");
            }
        }
    }

    #[test]
    fn generic_system_converges_in_full_space() {
        let sys = random_system(5, 5, 1.0, 0.5, 4);
        let opts = SolveOptions {
            tol: 1e-10,
            maxit: 20,
            ..Default::default()
        };
        let rep = gpbilq_solve(&sys, &opts).unwrap();
        assert_eq!(rep.termination, Termination::Converged);
        assert!(rep.residual <= 1e-9);
    }
}
