mod common;

use common::*;
use gpkrylov::baselines::gpmr::{gpmr_restarted_solve, gpmr_solve, Gpmr};
use gpkrylov::gpbilq::GpBiLq;
use gpkrylov::gpqmr::GpQmr;
use gpkrylov::synthetic::{random_sqd_system, random_system};
use gpkrylov::{solve, Method, ResidualPolicy, SolveOptions, Termination};
use nalgebra::{DMatrix, DVector};

fn opts(tol: f64, maxit: usize) -> SolveOptions {
    SolveOptions {
        tol,
        maxit,
        ..Default::default()
    }
}

/// Plain GMRES residuals on the stacked system, from an orthonormal Krylov
/// basis built here.
fn gmres_residuals(kd: &DMatrix<f64>, rhs: &DVector<f64>, kmax: usize) -> Vec<f64> {
    let mut basis = DMatrix::<f64>::zeros(rhs.len(), 0);
    let mut v = rhs / rhs.norm();
    let mut out = Vec::new();
    for k in 1..=kmax {
        basis = basis.insert_column(k - 1, 0.0);
        basis.set_column(k - 1, &v);
        let z = lsq(&(kd * &basis), rhs);
        out.push((rhs - kd * &basis * z).norm());
        let mut w = kd * &v;
        for _ in 0..2 {
            let c = basis.transpose() * &w;
            w -= &basis * c;
        }
        v = &w / w.norm();
    }
    out
}

#[test]
fn gpmr_is_block_krylov_minimum_residual() {
    for seed in 0..4 {
        let sys = random_system(11, 8, 0.9, -0.6, 60 + seed);
        let kd = dense_k(&sys);
        let rhs = stacked(&sys);
        let gm = gmres_residuals(&kd, &rhs, 6);
        let mut g = Gpmr::new(&sys).unwrap();
        for k in 1..=6 {
            g.step().unwrap();
            let z = block_krylov_basis(&sys, k);
            let best = lsq(&(&kd * &z), &rhs);
            let oracle = &z * best;
            assert!(rel_diff(&concat(g.x(), g.y()), &oracle) < 1e-9, "seed {seed} k {k}");
            // the block space contains the plain Krylov space
            let r = explicit_residual(&sys, g.x(), g.y());
            assert!(r <= gm[k - 1] * (1.0 + 1e-10), "k {k}: {r} > {}", gm[k - 1]);
        }
    }
}

#[test]
fn gpqmr_equals_gpmr_for_transpose_coupling() {
    let sys = random_sqd_system(12, 9, 3);
    let mut q = GpQmr::new(&sys, &Default::default(), false).unwrap();
    let mut g = Gpmr::new(&sys).unwrap();
    for k in 1..=8 {
        q.step().unwrap();
        g.step().unwrap();
        let d = rel_diff(&concat(q.x(), q.y()), &concat(g.x(), g.y()));
        assert!(d < 1e-9, "k {k}: {d}");
    }
}

#[test]
fn gpbicg_solves_the_galerkin_system() {
    let sys = random_system(9, 9, 1.2, 0.4, 5);
    let mut s = GpBiLq::new(&sys, &Default::default(), true).unwrap();
    for k in 1..=6 {
        s.step().unwrap();
        let Some((x, y)) = s.bicg_iterate() else {
            continue;
        };
        // residual is orthogonal to the left basis
        let h = s.reduction().history().unwrap();
        let r = stacked(&sys) - dense_k(&sys) * concat(&x, &y);
        let proj = w_left(h, k).transpose() * r;
        assert!(proj.amax() < 1e-9 * stacked(&sys).norm(), "k {k}");
    }
}

#[test]
fn every_method_converges_on_a_well_conditioned_system() {
    let sys = random_system(40, 30, 4.0, 4.0, 1);
    for m in Method::ALL {
        let r = solve(&sys, m, &opts(1e-9, 500)).unwrap();
        assert_eq!(r.termination, Termination::Converged, "{m}");
        assert!(r.residual <= 1e-9, "{m}: {}", r.residual);
        assert!((explicit_residual(&sys, &r.x, &r.y) - r.residual).abs() < 1e-12);
        r.record.validate().unwrap();
        assert_eq!(r.record.rows.len(), r.iterations + 1, "{m}");
    }
}

#[test]
fn estimate_policy_agrees_with_explicit() {
    let sys = random_system(25, 20, 3.0, 3.0, 2);
    let est = SolveOptions {
        residual: ResidualPolicy::Estimate,
        ..opts(1e-8, 200)
    };
    // these estimates equal the residual, so the stopping step can only move
    // by rounding
    for m in [Method::GpBiLq, Method::Gpmr] {
        let e = solve(&sys, m, &est).unwrap();
        let x = solve(&sys, m, &opts(1e-8, 200)).unwrap();
        assert_eq!(e.termination, Termination::Converged, "{m}");
        assert!(e.iterations.abs_diff(x.iterations) <= 1, "{m}: {} vs {}", e.iterations, x.iterations);
    }
    // the quasi-residual only bounds the residual up to the basis norm
    let e = solve(&sys, Method::GpQmr, &est).unwrap();
    assert_eq!(e.termination, Termination::Converged);
    let mut q = GpQmr::new(&sys, &Default::default(), true).unwrap();
    for _ in 0..e.iterations {
        q.step().unwrap();
    }
    let h = q.reduction().history().unwrap();
    let wn = w_right(h, e.iterations + 1).singular_values().max();
    assert!(e.residual <= wn * 1e-8 * (1.0 + 1e-9), "{} > {wn} * tol", e.residual);
}

#[test]
fn maxit_is_reported() {
    let sys = random_system(30, 30, 1.0, -1.0, 4);
    for m in Method::ALL {
        let r = solve(&sys, m, &opts(1e-14, 3)).unwrap();
        assert_eq!(r.termination, Termination::MaxIterations, "{m}");
        assert_eq!(r.termination.exit_code(), 2);
        assert!(r.iterations <= 3);
    }
}

#[test]
fn restarted_gpmr_needs_at_least_as_many_iterations() {
    let sys = random_system(30, 25, 2.0, -1.0, 8);
    let full = gpmr_solve(&sys, &opts(1e-8, 400)).unwrap();
    let restarted = gpmr_restarted_solve(
        &sys,
        &SolveOptions {
            restart: 5,
            ..opts(1e-8, 400)
        },
    )
    .unwrap();
    assert_eq!(full.termination, Termination::Converged);
    assert!(restarted.iterations >= full.iterations);
}

#[test]
fn nonpositive_tolerance_is_rejected() {
    let sys = random_system(3, 3, 1.0, 1.0, 0);
    assert!(solve(&sys, Method::GpQmr, &opts(0.0, 10)).is_err());
    assert!(solve(&sys, Method::GpQmr, &opts(f64::NAN, 10)).is_err());
}
