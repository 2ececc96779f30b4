use sparse_dl::encoders::lista_forward;
use sparse_dl::io::encode_model;
use ndarray::{Array2, ArrayView2};
use sparse_dl::encoders::{fista_lasso, FistaConfig};
use sparse_dl::model::{build_targets, EncoderKind, HyperParams};
use sparse_dl::synthetic::{generate_synthetic, SyntheticSpec};
use sparse_dl::trainer::{init_state, ramp, train, warmup_phase, Phase, Schedule, TrainOptions};
use sparse_dl::Error;

fn data() -> sparse_dl::synthetic::SyntheticData {
    generate_synthetic(&SyntheticSpec { d: 12, n: 90, k: 12, c: 3, t: 2, ..Default::default() }).unwrap()
}

fn hp() -> HyperParams {
    HyperParams { sparsity: 2, n_layers: 4, max_outer: 6, ..Default::default() }
}

#[test]
fn topk_codes_respect_budget() {
    let s = data();
    let targets = build_targets(&s.labels, 12, 3).unwrap();
    let run = train(&s.y, &targets, &hp(), EncoderKind::TopKLista, &TrainOptions::default()).unwrap();
    for col in run.codes.columns() {
        assert!(col.iter().filter(|&&v| v != 0.0).count() <= 2);
    }
    let (g, _) = lista_forward(&s.y.view(), &run.state).unwrap();
    for col in g.columns() {
        assert!(col.iter().filter(|&&v| v != 0.0).count() <= 2);
    }
    assert_eq!(run.report.records.len(), 6);
}

#[test]
fn training_is_deterministic() {
    let s = data();
    let targets = build_targets(&s.labels, 12, 3).unwrap();
    for kind in [EncoderKind::TopKLista, EncoderKind::FistaLasso] {
        let a = train(&s.y, &targets, &hp(), kind, &TrainOptions::default()).unwrap();
        let b = train(&s.y, &targets, &hp(), kind, &TrainOptions::default()).unwrap();
        assert_eq!(encode_model(&a.state).unwrap(), encode_model(&b.state).unwrap());
        assert_eq!(a.codes, b.codes);
        assert_eq!(bit_trace(&a.report.records), bit_trace(&b.report.records));
    }
}

fn bit_trace(r: &[sparse_dl::trainer::IterationRecord]) -> Vec<(u64, u64)> {
    r.iter().map(|x| (x.objective.to_bits(), x.step_norm.to_bits())).collect()
}

#[test]
fn convex_pipeline_is_monotone_once_weights_are_fixed() {
    let s = data();
    let targets = build_targets(&s.labels, 12, 3).unwrap();
    let hp = HyperParams { max_outer: 10, ..hp() };
    let run = train(&s.y, &targets, &hp, EncoderKind::FistaLasso, &TrainOptions::default()).unwrap();
    let fixed: Vec<_> = run.report.records.iter().filter(|r| r.phase == Phase::Fixed).collect();
    assert!(!fixed.is_empty());
    for r in fixed {
        assert!(r.tracked_after <= r.tracked_before + 1e-10 * r.tracked_before.abs().max(1.0));
        assert_eq!(r.h1_pass, Some(true));
    }
}

#[test]
fn supervised_convex_training_carries_certificate() {
    let s = data();
    let targets = build_targets(&s.labels, 12, 3).unwrap();
    let hp = HyperParams { mu_g: 30.0, mu_a: 100.0, rho_w: 100.0, lambda: 1.0, max_outer: 8, ..hp() };
    let opts = TrainOptions { supervised_codes: true, ..Default::default() };
    let run = train(&s.y, &targets, &hp, EncoderKind::FistaLasso, &opts).unwrap();
    let cert = run.report.certificate.expect("certificate");
    assert!(cert.pass, "{:?}", cert.first_failure());
    assert!(!cert.sweeps.is_empty());
}

#[test]
fn topk_rejects_supervised_code_steps() {
    let s = data();
    let targets = build_targets(&s.labels, 12, 3).unwrap();
    let opts = TrainOptions { supervised_codes: true, ..Default::default() };
    assert!(matches!(
        train(&s.y, &targets, &hp(), EncoderKind::TopKLista, &opts),
        Err(Error::Config(_))
    ));
}

fn residual(d: &ArrayView2<'_, f64>, g: &Array2<f64>, y: &ArrayView2<'_, f64>) -> f64 {
    (y - &d.dot(g)).mapv(|v| v * v).sum()
}

#[test]
fn warmup_reduces_reconstruction_error() {
    let s = data();
    for kind in [EncoderKind::TopKLista, EncoderKind::FistaLasso] {
        let hp = HyperParams { warmup_iters: 8, max_outer: 12, ..hp() };
        let state = init_state(&s.y, 12, 3, &hp, kind).unwrap();
        let (after, g, recs) = warmup_phase(&s.y, &state, &TrainOptions::default()).unwrap();
        assert_eq!(recs.len(), 8);
        assert!(recs.iter().all(|r| r.alpha == 0.0 && r.beta == 0.0));
        let g0 = match kind {
            EncoderKind::TopKLista => lista_forward(&s.y.view(), &state).unwrap().0,
            EncoderKind::FistaLasso => fista_lasso(&s.y.view(), &state.dictionary.view(), hp.lambda, hp.mu_g, &FistaConfig::default()).unwrap().codes,
        };
        let first = residual(&state.dictionary.view(), &g0, &s.y.view());
        let last = residual(&after.dictionary.view(), &g, &s.y.view());
        assert!(last < first, "{kind}: {first} -> {last}");
    }
}

#[test]
fn ramp_schedule() {
    let sched = Schedule::from_hp(&HyperParams { alpha: 2.0, beta: 4.0, warmup_iters: 2, ramp_iters: 4, ..Default::default() });
    assert_eq!(ramp(0, &sched), (0.0, 0.0));
    assert_eq!(ramp(1, &sched), (0.0, 0.0));
    assert_eq!(ramp(2, &sched), (0.5, 1.0));
    assert_eq!(ramp(5, &sched), (2.0, 4.0));
    assert_eq!(ramp(50, &sched), (2.0, 4.0));
}

#[test]
fn mismatched_labels_are_rejected() {
    let s = data();
    let targets = build_targets(&s.labels[..10], 12, 3).unwrap();
    assert!(train(&s.y, &targets, &hp(), EncoderKind::FistaLasso, &TrainOptions::default()).is_err());
}
