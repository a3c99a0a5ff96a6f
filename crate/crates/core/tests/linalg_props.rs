mod common;

use common::*;
use gdt_core::graph::{enumerate_connected_graphs, GraphClass};
use gdt_core::linalg::*;
use gdt_core::Graph;
use num_traits::One;
use proptest::prelude::*;

/// `sum_i (1 - lambda_i)^t v_i[u]^2` from the solver's eigenpairs.
fn spectral_diagonal(g: &Graph, t: i32) -> Vec<f64> {
    let eig = symmetric_eig(&normalized_laplacian(g).unwrap(), DEFAULT_EIG_TOL).unwrap();
    (0..g.n())
        .map(|u| {
            eig.eigenvalues
                .iter()
                .enumerate()
                .map(|(i, l)| (1.0 - l).powi(t) * eig.eigenvectors.get(u, i).powi(2))
                .sum()
        })
        .collect()
}

fn max_spectral_gap(g: &Graph, max_t: usize) -> f64 {
    let powers = random_walk_matrix(g).unwrap().powers(max_t + 1).unwrap();
    let mut worst: f64 = 0.0;
    for (t, p) in powers.iter().enumerate() {
        let spectral = spectral_diagonal(g, t as i32);
        for (u, s) in spectral.iter().enumerate() {
            worst = worst.max((rational_to_f64(p.get(u, u)) - s).abs());
        }
    }
    worst
}

#[test]
fn spectral_identity_on_small_connected_graphs() {
    for n in 2..=6 {
        for g in enumerate_connected_graphs(n, GraphClass::Connected).unwrap() {
            assert!(max_spectral_gap(&g, 16) <= 1e-7, "n = {n}");
        }
    }
}

#[test]
fn spectral_identity_on_stitched_corpus() {
    for g in connected_corpus(30, 20, 7) {
        assert!(max_spectral_gap(&g, 16) <= 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn powers_stay_exactly_stochastic(g in arb_graph(1, 10)) {
        let powers = random_walk_matrix(&g).unwrap().powers(33).unwrap();
        for p in &powers {
            prop_assert!(p.is_row_stochastic());
            prop_assert!(p.row_sums().iter().all(|s| s.is_one()));
        }
    }

    #[test]
    fn eig_invariants_hold(g in arb_graph(1, 14)) {
        let l = normalized_laplacian(&g).unwrap();
        let eig = symmetric_eig(&l, DEFAULT_EIG_TOL).unwrap();
        let n = g.n();
        let v = &eig.eigenvectors;
        prop_assert!(eig.reconstruct().max_abs_diff(&l) <= 1e-8);
        prop_assert!(v.transpose().mul(v).unwrap().max_abs_diff(&RealMatrix::identity(n)) <= 1e-8);
        prop_assert!(eig.eigenvalues.iter().all(|&x| (-1e-8..=2.0 + 1e-8).contains(&x)));
        prop_assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let sum: f64 = eig.eigenvalues.iter().sum();
        prop_assert!((l.trace() - sum).abs() <= 1e-8 * n as f64);
    }

    #[test]
    fn eig_of_random_symmetric_matrix(vals in prop::collection::vec(-5.0f64..5.0, 36)) {
        let mut a = RealMatrix::zeros(6, 6);
        for i in 0..6 {
            for j in i..6 {
                a.set(i, j, vals[i * 6 + j]);
                a.set(j, i, vals[i * 6 + j]);
            }
        }
        let eig = symmetric_eig(&a, DEFAULT_EIG_TOL).unwrap();
        prop_assert!(eig.reconstruct().max_abs_diff(&a) <= 1e-8);
        prop_assert!((a.trace() - eig.eigenvalues.iter().sum::<f64>()).abs() <= 6e-8);
    }
}

#[test]
fn eig_is_deterministic() {
    let g = random_graph(12, 0.3, 3);
    let l = normalized_laplacian(&g).unwrap();
    let a = symmetric_eig(&l, DEFAULT_EIG_TOL).unwrap();
    let b = symmetric_eig(&l, DEFAULT_EIG_TOL).unwrap();
    assert_eq!(a.eigenvalues, b.eigenvalues);
    assert_eq!(a.eigenvectors.as_slice(), b.eigenvectors.as_slice());
}
