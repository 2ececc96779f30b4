mod common;

use common::*;
use ndarray::{Array2, Axis};
use rand::Rng;
use sparse_dl::encoders::{classical_feedback_init, fista_lasso, FistaConfig};
use sparse_dl::linalg::{spectral_norm, sym_psd_top_eigenvalue};
use sparse_dl::updates::{update_classifier, update_dictionary_closed, update_lc_matrix};

#[test]
fn lc_and_classifier_match_dense_ridge() {
    let mut r = rng(11);
    for _ in 0..60 {
        let k = r.random_range(2..=40);
        let n = r.random_range(1..=200);
        let c = r.random_range(1..=6);
        let g = gaussian(&mut r, k, n);
        let q = gaussian(&mut r, k, n);
        let h = gaussian(&mut r, c, n);
        let alpha = r.random_range(0.1..5.0);
        let beta = r.random_range(0.1..5.0);
        let mu = r.random_range(1e-3..1.0);
        let a = update_lc_matrix(&g.view(), &q.view(), alpha, mu).unwrap();
        let w = update_classifier(&g.view(), &h.view(), beta, mu).unwrap();
        assert!(rel_err(&a, &ridge_oracle(&g.view(), &q.view(), mu / alpha)) < 1e-8);
        assert!(rel_err(&w, &ridge_oracle(&g.view(), &h.view(), mu / beta)) < 1e-8);
    }
}

#[test]
fn zero_supervision_weight_gives_zero_matrix() {
    let mut r = rng(3);
    let g = gaussian(&mut r, 5, 9);
    let q = gaussian(&mut r, 5, 9);
    let a = update_lc_matrix(&g.view(), &q.view(), 0.0, 0.1).unwrap();
    assert!(a.iter().all(|&v| v == 0.0));
}

#[test]
fn closed_form_dictionary_is_normalized_ridge() {
    let mut r = rng(12);
    for _ in 0..40 {
        let d = r.random_range(2..=20);
        let k = r.random_range(2..=40);
        let n = r.random_range(k..=200);
        let g = gaussian(&mut r, k, n);
        let y = gaussian(&mut r, d, n);
        let eps = r.random_range(1e-4..1e-1);
        let got = update_dictionary_closed(&y.view(), &g.view(), eps, 0).unwrap();
        let mut want = ridge_oracle(&g.view(), &y.view(), eps);
        for mut col in want.axis_iter_mut(Axis(1)) {
            let nrm = col.dot(&col).sqrt();
            col /= nrm;
        }
        assert!(rel_err(got.atoms(), &want) < 1e-8);
    }
}

#[test]
fn power_iteration_matches_svd() {
    let mut r = rng(13);
    for _ in 0..30 {
        let (rows, cols) = (r.random_range(1..=30), r.random_range(1..=30));
        let m = gaussian(&mut r, rows, cols);
        let s = spectral_norm_oracle(&m.view());
        assert!((spectral_norm(&m.view()) - s).abs() <= 1e-8 * s.max(1.0));
        let gram = m.t().dot(&m);
        assert!((sym_psd_top_eigenvalue(&gram.view()) - s * s).abs() <= 1e-8 * (s * s).max(1.0));
    }
}

#[test]
fn classical_feedback_is_scaled_transpose() {
    let mut r = rng(14);
    let d = unit_columns(&mut r, 6, 10);
    let stack = classical_feedback_init(&d.view(), 3);
    assert_eq!(stack.len(), 3);
    let s = spectral_norm_oracle(&d.view());
    let want = d.t().to_owned() / (s * s);
    for b in &stack {
        assert!(rel_err(b, &want) < 1e-9);
    }
}

#[test]
fn fista_matches_coordinate_descent() {
    let mut r = rng(15);
    let cfg = FistaConfig {
        max_iters: 20000,
        rel_tol: 1e-10,
        ..Default::default()
    };
    for _ in 0..25 {
        let dim = r.random_range(2..=16);
        let k = r.random_range(2..=32);
        let n = r.random_range(1..=64);
        let d = unit_columns(&mut r, dim, k);
        let y = gaussian(&mut r, dim, n);
        let lambda = r.random_range(0.01..0.5);
        let mu = r.random_range(0.01..0.5);
        let out = fista_lasso(&y.view(), &d.view(), lambda, mu, &cfg).unwrap();
        let oracle = cd_elastic_net(&y.view(), &d.view(), lambda, mu, 100_000);
        let scale = oracle.mapv(|v| v * v).sum().sqrt();
        let diff = (&out.codes - &oracle).mapv(|v| v * v).sum().sqrt();
        assert!(diff <= 1e-5 * scale.max(1.0), "diff {diff} scale {scale}");
        assert!(out.kkt_residual <= cfg.rel_tol * out.kkt_scale || !out.converged);
        for w in out.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn fista_zero_data_gives_zero_codes() {
    let mut r = rng(16);
    let d = unit_columns(&mut r, 5, 8);
    let y = Array2::<f64>::zeros((5, 4));
    let out = fista_lasso(&y.view(), &d.view(), 0.1, 0.1, &FistaConfig::default()).unwrap();
    assert!(out.codes.iter().all(|&v| v == 0.0));
    assert!(out.converged);
}
