mod common;

use common::*;
use ndarray::Array2;
use rand::Rng;
use sparse_dl::diagnostics::{gradient_audit, AuditBlock};
use sparse_dl::encoders::{classical_feedback_init, lista_backward_with, lista_forward_with};
use sparse_dl::model::{build_targets, smooth_d_gradient, smooth_d_value, smooth_g_gradient, smooth_g_value, Point, Weights};

fn random_weights(r: &mut rand_chacha::ChaCha8Rng) -> Weights {
    Weights {
        alpha: r.random_range(0.0..3.0),
        beta: r.random_range(0.0..3.0),
        mu_a: r.random_range(1e-3..1.0),
        rho_w: r.random_range(1e-3..1.0),
        eps_d: r.random_range(1e-4..1e-1),
        mu_g: r.random_range(1e-3..1.0),
        lambda: 0.1,
    }
}

#[test]
fn code_and_dictionary_gradients_match_finite_differences() {
    let mut r = rng(21);
    for trial in 0..100 {
        let c = r.random_range(1..=4);
        let k = c * r.random_range(1..=5);
        let dim = r.random_range(2..=10);
        let n = r.random_range(1..=20);
        let labels = labels(&mut r, n, c);
        let targets = build_targets(&labels, k, c).unwrap();
        let d = unit_columns(&mut r, dim, k);
        let g = gaussian(&mut r, k, n);
        let a = gaussian(&mut r, k, k);
        let w = gaussian(&mut r, c, k);
        let y = gaussian(&mut r, dim, n);
        let wts = random_weights(&mut r);
        let p = Point { d: d.view(), g: g.view(), a: a.view(), w: w.view() };

        let dir_g = gaussian(&mut r, k, n);
        let fd = central_diff(|x| smooth_g_value(&Point { g: x.view(), ..p }, &y.view(), &targets, &wts), &g, &dir_g, 1e-5);
        let grad = smooth_g_gradient(&p, &y.view(), &targets, &wts);
        let an = (&grad * &dir_g).sum();
        let scale = grad.mapv(|v| v * v).sum().sqrt() * dir_g.mapv(|v| v * v).sum().sqrt();
        assert!((fd - an).abs() <= 1e-5 * scale.max(1.0), "G trial {trial}: fd {fd} analytic {an}");

        let dir_d = gaussian(&mut r, dim, k);
        let fd = central_diff(|x| smooth_d_value(&x.view(), &g.view(), &y.view(), wts.eps_d), &d, &dir_d, 1e-5);
        let grad = smooth_d_gradient(&d.view(), &g.view(), &y.view(), wts.eps_d);
        let an = (&grad * &dir_d).sum();
        let scale = grad.mapv(|v| v * v).sum().sqrt() * dir_d.mapv(|v| v * v).sum().sqrt();
        assert!((fd - an).abs() <= 1e-5 * scale.max(1.0), "D trial {trial}: fd {fd} analytic {an}");

        for block in [AuditBlock::G, AuditBlock::D] {
            let rep = gradient_audit(&p, &y.view(), &targets, &wts, block, 3, 1e-5, trial);
            assert!(rep.pass, "{block:?} audit {}", rep.max_rel_error);
        }
    }
}

fn lista_loss(y: &Array2<f64>, d: &Array2<f64>, stack: &[Array2<f64>], k: usize, target: &Array2<f64>) -> (f64, Vec<Array2<bool>>) {
    let (g, trace) = lista_forward_with(&y.view(), &d.view(), stack, k).unwrap();
    let diff = &g - target;
    (0.5 * diff.mapv(|v| v * v).sum(), trace.masks)
}

#[test]
fn lista_backward_matches_finite_differences_on_stable_supports() {
    let mut r = rng(22);
    let h = 1e-6;
    let mut checked = 0;
    for _ in 0..200 {
        let layers = r.random_range(1..=3);
        let k = r.random_range(2..=8);
        let dim = r.random_range(2..=6);
        let n = r.random_range(1..=5);
        let budget = r.random_range(1..=k);
        let d = unit_columns(&mut r, dim, k);
        let y = gaussian(&mut r, dim, n);
        let target = gaussian(&mut r, k, n);
        let mut stack = classical_feedback_init(&d.view(), layers);
        for b in stack.iter_mut() {
            *b += &(gaussian(&mut r, k, dim) * 0.1);
        }
        let (g, trace) = lista_forward_with(&y.view(), &d.view(), &stack, budget).unwrap();
        let upstream = &g - &target;
        let grads = lista_backward_with(&trace, &d.view(), &stack, &upstream.view()).unwrap();
        let dirs: Vec<Array2<f64>> = (0..layers).map(|_| gaussian(&mut r, k, dim)).collect();
        let shifted = |s: f64| -> Vec<Array2<f64>> { stack.iter().zip(&dirs).map(|(b, u)| b + &(u * s)).collect() };
        let (lp, mp) = lista_loss(&y, &d, &shifted(h), budget, &target);
        let (lm, mm) = lista_loss(&y, &d, &shifted(-h), budget, &target);
        if mp != trace.masks || mm != trace.masks {
            continue;
        }
        let fd = (lp - lm) / (2.0 * h);
        let an: f64 = grads.iter().zip(&dirs).map(|(gr, u)| (gr * u).sum()).sum();
        let scale = grads.iter().map(|g| g.mapv(|v| v * v).sum()).sum::<f64>().sqrt()
            * dirs.iter().map(|u| u.mapv(|v| v * v).sum()).sum::<f64>().sqrt();
        assert!((fd - an).abs() <= 1e-4 * scale.max(1e-8), "fd {fd} analytic {an}");
        checked += 1;
    }
    assert!(checked >= 100, "only {checked} support-stable probes");
}
