mod common;

use std::sync::Arc;

use common::*;
use gpkrylov::baselines::gpmr::Gpmr;
use gpkrylov::gpqmr::GpQmr;
use gpkrylov::io::convergence::{ConvergenceRecord, IterationRow};
use gpkrylov::io::experiment::build_from_matrices;
use gpkrylov::io::matrix_market::{format_matrix_market, parse_matrix_market};
use gpkrylov::io::sparse::SparseMatrix;
use gpkrylov::linop::{adjoint_defect, apply_partitioned, residual_norm};
use gpkrylov::reduction::{ReductionOptions, ReductionState};
use gpkrylov::rotation::Givens;
use gpkrylov::synthetic::random_system;
use gpkrylov::{DenseMatrix, Operator, PartitionedSystem, Transposed};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..8, 1usize..8)
}

fn dense(m: usize, n: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-5.0f64..5.0, m * n).prop_map(move |d| DenseMatrix::new(m, n, d).unwrap())
}

fn vecn(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n)
}

fn sparse(m: usize, n: usize) -> impl Strategy<Value = SparseMatrix> {
    prop::collection::vec((0..m, 0..n, -5.0f64..5.0), 0..(m * n + 3))
        .prop_map(move |t| SparseMatrix::from_triplets(m, n, &t).unwrap())
}

fn bound(x: &[f64], y: &[f64]) -> f64 {
    let n = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    1e-12 * (1.0 + n(x) * n(y)) * 25.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dense_operator_is_adjoint((_, a, x, y) in dims().prop_flat_map(|(m, n)| (Just((m, n)), dense(m, n), vecn(n), vecn(m)))) {
        prop_assert!(adjoint_defect(&a, &x, &y) <= bound(&x, &y));
    }

    #[test]
    fn sparse_operator_is_adjoint((_, a, x, y) in dims().prop_flat_map(|(m, n)| (Just((m, n)), sparse(m, n), vecn(n), vecn(m)))) {
        prop_assert!(adjoint_defect(&a, &x, &y) <= bound(&x, &y));
        let at = a.transpose();
        prop_assert_eq!(at.apply(&y), a.apply_transpose(&y));
    }

    #[test]
    fn transposed_wrapper_swaps_roles(((_, n), a, x, y) in dims().prop_flat_map(|(m, n)| (Just((m, n)), dense(m, n), vecn(m), vecn(n)))) {
        let t = Transposed(Arc::new(a.clone()));
        prop_assert_eq!(t.nrows(), n);
        prop_assert_eq!(t.apply(&x), a.apply_transpose(&x));
        prop_assert_eq!(t.apply_transpose(&y), a.apply(&y));
        prop_assert!(adjoint_defect(&t, &x, &y) <= bound(&x, &y));
    }

    #[test]
    fn partitioned_apply_matches_dense_assembly(
        ((m, n), a, b, x, y, lam, mu) in dims().prop_flat_map(|(m, n)| (
            Just((m, n)), dense(m, n), dense(n, m), vecn(m), vecn(n), -3.0f64..3.0, -3.0f64..3.0
        ))
    ) {
        let sys = PartitionedSystem::from_dense(lam, mu, a, b, vec![1.0; m], vec![1.0; n]).unwrap();
        let (ox, oy) = apply_partitioned(&sys, &x, &y).unwrap();
        let want = dense_k(&sys) * concat(&x, &y);
        let got = concat(&ox, &oy);
        prop_assert!((got - &want).norm() <= 1e-12 * (1.0 + want.norm()));
    }

    #[test]
    fn matrix_market_round_trip(((_m, _n), a) in dims().prop_flat_map(|(m, n)| (Just((m, n)), sparse(m, n)))) {
        let text = format_matrix_market(&a);
        let b = parse_matrix_market(&text).unwrap();
        prop_assert_eq!(&a, &b);
    }

    #[test]
    fn convergence_csv_round_trip(
        rows in prop::collection::vec((prop::option::of(1e-300f64..1e300), prop::option::of(0.0f64..1e10), any::<bool>()), 0..20),
        terminal in prop::option::of("[a-z ]{1,12}"),
    ) {
        let mut rec = ConvergenceRecord::new("gpqmr");
        for (k, (e, t, d)) in rows.into_iter().enumerate() {
            rec.rows.push(IterationRow { k, est_residual: e, true_residual: t, transfer_defined: d, elapsed_s: k as f64 * 0.5 });
        }
        rec.terminal = terminal.map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let back = ConvergenceRecord::read_csv(&buf[..], "gpqmr").unwrap();
        prop_assert_eq!(back, rec);
    }

    #[test]
    fn givens_is_orthogonal_and_annihilates(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        let (g, r) = Givens::annihilate(a, b);
        prop_assert!(g.orthogonality_defect() <= 1e-15);
        prop_assert!(r >= 0.0);
        let (x, y) = g.rotate(a, b);
        prop_assert!((x - r).abs() <= 1e-12 * (1.0 + r));
        prop_assert!(y.abs() <= 1e-12 * (1.0 + r));
        let (p, q) = g.rotate_back(x, y);
        prop_assert!((p - a).abs() + (q - b).abs() <= 1e-9 * (1.0 + r));
    }

    #[test]
    fn biorthogonality_holds_for_any_seed(seed in 0u64..10_000, lam in 0.5f64..2.0, mu in -2.0f64..-0.5) {
        let sys = random_system(12, 10, lam, mu, seed);
        let opts = ReductionOptions { keep_history: true, ..Default::default() };
        let mut st = ReductionState::new(&sys, opts).unwrap();
        let k = 6;
        for _ in 0..k {
            st.step(&sys).unwrap();
        }
        let h = st.history().unwrap();
        let eye = DMatrix::<f64>::identity(k, k);
        prop_assert!((p_mat(h, k).transpose() * q_mat(h, k) - &eye).amax() <= 1e-8);
        prop_assert!((u_mat(h, k).transpose() * v_mat(h, k) - &eye).amax() <= 1e-8);
    }

    #[test]
    fn gpqmr_quasi_residual_nonincreasing(seed in 0u64..10_000) {
        let sys = random_system(9, 7, 1.0, -0.3, seed);
        let mut s = GpQmr::new(&sys, &Default::default(), false).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..7 {
            let Ok(info) = s.step() else { break };
            prop_assert!(info.quasi <= last * (1.0 + 1e-12) + 1e-14);
            last = info.quasi;
            if info.breakdown.is_some() {
                break;
            }
        }
    }

    #[test]
    fn gpmr_residual_nonincreasing(seed in 0u64..10_000) {
        let sys = random_system(9, 7, 0.7, 0.2, seed);
        let mut s = Gpmr::new(&sys).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..8 {
            let info = s.step().unwrap();
            let r = explicit_residual(&sys, s.x(), s.y());
            prop_assert!(r <= last * (1.0 + 1e-10) + 1e-12);
            prop_assert!((r - info.residual).abs() <= 1e-8 * (1.0 + r));
            last = r;
            if info.breakdown.is_some() {
                break;
            }
        }
    }

    #[test]
    fn ones_is_the_exact_solution(
        ((m, n), a, b, lam, mu) in dims().prop_flat_map(|(m, n)| (Just((m, n)), sparse(m, n), sparse(n, m), 0.5f64..2.0, -2.0f64..-0.5))
    ) {
        match build_from_matrices(Arc::new(a), Arc::new(b), lam, mu) {
            Ok(sys) => {
                let r = residual_norm(&sys, &vec![1.0; m], &vec![1.0; n]).unwrap();
                prop_assert!(r <= 1e-12 * (1.0 + sys.rhs_norm()));
            }
            // an all-zero right-hand side block is rejected up front
            Err(e) => prop_assert!(e.to_string().contains("zero")),
        }
    }
}
