//! Two-stage training: an unsupervised warm-up followed by linearly ramped
//! supervision, alternating `G → D → A → W` once per outer iteration.
//!
//! Three code-update regimes are supported:
//! - Top-K LISTA: codes from the unrolled network; after the warm-up its
//!   feedback matrices take backtracked gradient steps on the supervised objective.
//! - FISTA, unsupervised (default for the convex encoder): codes solve the
//!   elastic-net reconstruction problem; `A`/`W` are fitted to them.
//! - FISTA, supervised: one or more proximal-gradient steps on the full convex
//!   objective, with every sweep certified by [`crate::diagnostics`].

use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::diagnostics::{
    check_bounds, check_h1, h2_witness_d, h2_witness_g, h2_witness_ridge, Block, BlockRecord, H1Check,
    PalmCertificate, SweepRecord,
};
use crate::encoders::{
    classical_feedback_init, fista_lasso, fista_lasso_from, lista_backward, lista_forward, prox_grad_step,
    FistaConfig,
};
use crate::error::{Error, Result};
use crate::eval::classify;
use crate::linalg::{frob, frob_sq, spectral_norm_sq};
use crate::model::{
    build_targets, lipschitz_g, objective_convex, objective_reconstruction, objective_topk,
    supervised_code_gradient, Dictionary, EncoderKind, FeatureMatrix, HyperParams, ModelState,
    SupervisionTargets, Weights,
};
use crate::updates::{
    dictionary_pgd_step, ridge_gradient_norm, update_classifier, update_dictionary_closed, update_lc_matrix,
};

/// Relative objective increase tolerated before a convex run is declared divergent.
pub const DIVERGENCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum RampShape {
    #[default]
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    pub warmup_iters: usize,
    pub ramp_iters: usize,
    pub alpha_max: f64,
    pub beta_max: f64,
    pub shape: RampShape,
}

impl Schedule {
    pub fn from_hp(hp: &HyperParams) -> Self {
        Self {
            warmup_iters: hp.warmup_iters,
            ramp_iters: hp.ramp_iters,
            alpha_max: hp.alpha,
            beta_max: hp.beta,
            shape: RampShape::Linear,
        }
    }

    /// `s(t)`: 0 during warm-up, then `(t − warmup + 1)/ramp` clamped to `[0, 1]`.
    pub fn factor(&self, t: usize) -> f64 {
        if t < self.warmup_iters {
            return 0.0;
        }
        match self.shape {
            RampShape::Linear => {
                let ramp = self.ramp_iters.max(1) as f64;
                ((t - self.warmup_iters + 1) as f64 / ramp).clamp(0.0, 1.0)
            }
        }
    }

    /// First outer iteration at which the supervision weights are at their maximum.
    pub fn fixed_from(&self) -> usize {
        self.warmup_iters + self.ramp_iters.max(1) - 1
    }
}

/// Ramped supervision weights `(α_t, β_t)`.
pub fn ramp(t: usize, sched: &Schedule) -> (f64, f64) {
    let s = sched.factor(t);
    (sched.alpha_max * s, sched.beta_max * s)
}

/// Gradient descent on the LISTA feedback matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BTrainConfig {
    pub learning_rate: f64,
    /// Gradient steps per outer iteration.
    pub inner_steps: usize,
    /// Global-norm clip applied to the stacked gradient.
    pub grad_clip: f64,
}

impl Default for BTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            inner_steps: 5,
            grad_clip: 1.0,
        }
    }
}

impl BTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.grad_clip > 0.0) {
            return Err(Error::Config("learning_rate and grad_clip must be positive".into()));
        }
        Ok(())
    }
}

/// Step sizes of a certified sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepOptions {
    /// `c_G / L_G`; must exceed 1 for the decrease guarantee.
    pub g_curvature_factor: f64,
    /// Proximal-gradient steps on the codes per sweep.
    pub g_prox_steps: usize,
    /// `c_D / L_D`.
    pub d_curvature_factor: f64,
    /// Projected-gradient steps on the dictionary per sweep.
    pub d_pgd_steps: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            g_curvature_factor: 1.1,
            g_prox_steps: 1,
            d_curvature_factor: 1.0,
            d_pgd_steps: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub b_train: BTrainConfig,
    pub fista: FistaConfig,
    /// Convex encoder only: update codes by proximal steps on the supervised objective.
    pub supervised_codes: bool,
    pub sweep: SweepOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            b_train: BTrainConfig::default(),
            fista: FistaConfig::default(),
            supervised_codes: false,
            sweep: SweepOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Warmup,
    Ramp,
    Fixed,
}

/// Objective change caused by each block within one outer iteration, measured
/// on the objective the pipeline descends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockDecreases {
    pub g: f64,
    pub d: f64,
    pub a: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BStepReport {
    pub loss_before: f64,
    pub loss_after: f64,
    pub accepted_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub alpha: f64,
    pub beta: f64,
    /// Full objective at `(α_t, β_t)`: the Top-K objective for LISTA, the convex one for FISTA.
    pub objective: f64,
    /// Objective the code update descends, before and after the sweep.
    pub tracked_before: f64,
    pub tracked_after: f64,
    pub decreases: BlockDecreases,
    /// Per-block sufficient decrease (convex pipelines, fixed-weight regime).
    pub h1_pass: Option<bool>,
    /// Per-block relative-error witnesses (supervised convex pipeline).
    pub h2_pass: Option<bool>,
    pub g_norm: f64,
    pub a_norm: f64,
    pub w_norm: f64,
    /// `‖Z^{t+1} − Z^t‖_F` over `(G, D, A, W)`.
    pub step_norm: f64,
    pub train_accuracy: Option<f64>,
    pub b_step: Option<BStepReport>,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub encoder: EncoderKind,
    pub supervised_codes: bool,
    pub records: Vec<IterationRecord>,
    /// Certificate over the fixed-weight sweeps (supervised convex pipeline only).
    pub certificate: Option<PalmCertificate>,
}

/// Result of a training run: final model, final training codes and report.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub state: ModelState,
    pub codes: Array2<f64>,
    pub report: TrainReport,
}

/// Fresh model: dictionary from seeded data columns, zero `A` and `W`, and the
/// classical LISTA initialization when the encoder is Top-K.
pub fn init_state(y: &FeatureMatrix, n_atoms: usize, n_classes: usize, hp: &HyperParams, kind: EncoderKind) -> Result<ModelState> {
    hp.validate(n_atoms)?;
    let dictionary = Dictionary::init_from_data(y, n_atoms, hp.seed)?;
    let b_stack = match kind {
        EncoderKind::TopKLista => Some(classical_feedback_init(&dictionary.view(), hp.n_layers)),
        EncoderKind::FistaLasso => None,
    };
    ModelState::new(
        dictionary,
        Array2::zeros((n_atoms, n_atoms)),
        Array2::zeros((n_classes, n_atoms)),
        b_stack,
        *hp,
        kind,
    )
}

/// Loss minimized by the feedback matrices: the Top-K objective at the network output.
fn b_loss(y: &ArrayView2<'_, f64>, targets: &SupervisionTargets, state: &ModelState, wts: &Weights) -> Result<f64> {
    let (g, _) = lista_forward(y, state)?;
    objective_topk(&state.point(&g), y, targets, wts)
}

/// `inner_steps` gradient steps on the LISTA feedback matrices against the
/// Top-K objective at `(α_t, β_t)`. Each step halves its learning rate (up to
/// 20 times) until the loss does not increase; a step that never succeeds
/// leaves the matrices unchanged.
pub fn b_gradient_step(
    y: &FeatureMatrix,
    targets: &SupervisionTargets,
    state: &ModelState,
    alpha: f64,
    beta: f64,
    cfg: &BTrainConfig,
) -> Result<(ModelState, BStepReport)> {
    cfg.validate()?;
    if state.encoder != EncoderKind::TopKLista {
        return Err(Error::Config("feedback-matrix training needs the Top-K LISTA encoder".into()));
    }
    let yv = y.view();
    let wts = state.hp.weights().with_supervision(alpha, beta);
    let mut current = state.clone();
    let (g0, _) = lista_forward(&yv, &current)?;
    let loss_before = objective_topk(&current.point(&g0), &yv, targets, &wts)?;
    let mut loss = loss_before;
    let mut accepted_steps = 0;

    for _ in 0..cfg.inner_steps {
        let (g, trace) = lista_forward(&yv, &current)?;
        let upstream = supervised_code_gradient(&current.point(&g), &yv, targets, alpha, beta);
        let grads = lista_backward(&trace, &current, &upstream.view())?;
        let norm = grads.iter().map(|m| frob_sq(&m.view())).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("feedback-matrix gradient"));
        }
        if norm == 0.0 {
            break;
        }
        let clip = if norm > cfg.grad_clip { cfg.grad_clip / norm } else { 1.0 };
        let mut lr = cfg.learning_rate;
        let mut accepted = false;
        for _ in 0..=20 {
            let mut trial = current.clone();
            if let Some(stack) = trial.b_stack.as_mut() {
                for (b, gr) in stack.iter_mut().zip(&grads) {
                    b.scaled_add(-lr * clip, gr);
                }
            }
            let l = b_loss(&yv, targets, &trial, &wts)?;
            if l <= loss {
                current = trial;
                loss = l;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if !accepted {
            break;
        }
        accepted_steps += 1;
    }
    Ok((
        current,
        BStepReport {
            loss_before,
            loss_after: loss,
            accepted_steps,
        },
    ))
}

/// `w/2‖XG − T‖² + r/2‖X‖²`.
fn ridge_objective(x: &ArrayView2<'_, f64>, g: &ArrayView2<'_, f64>, target: &ArrayView2<'_, f64>, weight: f64, ridge: f64) -> f64 {
    let mut r = x.dot(g);
    r -= target;
    0.5 * weight * frob_sq(&r.view()) + 0.5 * ridge * frob_sq(x)
}

fn diff_norm(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> f64 {
    let mut d = a.to_owned();
    d -= b;
    frob(&d.view())
}

/// Provable per-column decrease constant of a projected-gradient step onto
/// unit columns: `(c(1 + ‖u_j‖) − L)/2`, where `u_j` is the column before projection.
pub fn dictionary_decrease_constant(lipschitz: f64, curvature: f64, pre_projection_norms: &[f64]) -> f64 {
    pre_projection_norms
        .iter()
        .map(|&u| 0.5 * (curvature * (1.0 + u) - lipschitz))
        .fold(f64::INFINITY, f64::min)
}

fn ridge_block_record(
    block: Block,
    old: &ArrayView2<'_, f64>,
    new: &ArrayView2<'_, f64>,
    g: &ArrayView2<'_, f64>,
    target: &ArrayView2<'_, f64>,
    weight: f64,
    ridge: f64,
    f_before: f64,
    f_after: f64,
) -> BlockRecord {
    let delta_norm = diff_norm(new, old);
    let lipschitz = weight * spectral_norm_sq(g) + ridge;
    let stationarity = ridge_gradient_norm(new, g, target, weight, ridge);
    let scale = weight * frob(&target.dot(&g.t()).view());
    BlockRecord {
        block,
        f_before,
        f_after,
        delta_norm,
        min_a: 0.5 * ridge,
        h1: check_h1(f_before, f_after, delta_norm, 0.5 * ridge),
        h2: h2_witness_ridge(stationarity, scale),
        lipschitz,
        curvature: lipschitz,
    }
}

/// One certified `G → D → A → W` sweep on the convex objective at `wts`.
pub fn certified_sweep(
    state: &mut ModelState,
    g: &mut Array2<f64>,
    y: &FeatureMatrix,
    targets: &SupervisionTargets,
    wts: &Weights,
    opts: &SweepOptions,
    iteration: usize,
    seed: u64,
) -> Result<SweepRecord> {
    let yv = y.view();
    let objective = |s: &ModelState, g: &Array2<f64>| objective_convex(&s.point(g), &yv, targets, wts);
    let f_start = objective(state, g)?;
    let g_start = g.clone();
    let mut blocks = Vec::with_capacity(opts.g_prox_steps + 3);

    let mut f_before = f_start;
    for _ in 0..opts.g_prox_steps.max(1) {
        let p = state.point(g);
        let lipschitz = lipschitz_g(&p.d, &p.a, &p.w, wts)?;
        let curvature = opts.g_curvature_factor * lipschitz;
        let g_next = prox_grad_step(&yv, &p, targets, 1.0 / curvature, wts);
        let h2 = h2_witness_g(&p, &g_next.view(), &yv, targets, wts, lipschitz, curvature);
        let delta_norm = diff_norm(&g_next.view(), &g.view());
        let f_after = objective(state, &g_next)?;
        let min_a = 0.5 * (curvature - lipschitz);
        blocks.push(BlockRecord {
            block: Block::G,
            f_before,
            f_after,
            delta_norm,
            min_a,
            h1: check_h1(f_before, f_after, delta_norm, min_a),
            h2,
            lipschitz,
            curvature,
        });
        *g = g_next;
        f_before = f_after;
    }
    let g_step = diff_norm(&g.view(), &g_start.view());

    let d_start = state.dictionary.clone();
    for _ in 0..opts.d_pgd_steps.max(1) {
        let d_prev = state.dictionary.clone();
        let step = dictionary_pgd_step(&d_prev, &yv, &g.view(), wts.eps_d, opts.d_curvature_factor, seed)?;
        let min_a = dictionary_decrease_constant(step.lipschitz, step.curvature, &step.pre_projection_norms);
        let h2 = h2_witness_d(
            &d_prev.view(),
            &step.dictionary.view(),
            &g.view(),
            &yv,
            wts.eps_d,
            step.lipschitz,
            step.curvature,
        );
        state.dictionary = step.dictionary;
        let delta_norm = diff_norm(&state.dictionary.view(), &d_prev.view());
        let f_after = objective(state, g)?;
        blocks.push(BlockRecord {
            block: Block::D,
            f_before,
            f_after,
            delta_norm,
            min_a,
            h1: check_h1(f_before, f_after, delta_norm, min_a),
            h2,
            lipschitz: step.lipschitz,
            curvature: step.curvature,
        });
        f_before = f_after;
    }
    let d_step = diff_norm(&state.dictionary.view(), &d_start.view());

    let a_new = update_lc_matrix(&g.view(), &targets.q.view(), wts.alpha, wts.mu_a)?;
    let a_old = std::mem::replace(&mut state.lc, a_new);
    let f_after = objective(state, g)?;
    let rec = ridge_block_record(
        Block::A,
        &a_old.view(),
        &state.lc.view(),
        &g.view(),
        &targets.q.view(),
        wts.alpha,
        wts.mu_a,
        f_before,
        f_after,
    );
    let a_step = rec.delta_norm;
    blocks.push(rec);
    f_before = f_after;

    let w_new = update_classifier(&g.view(), &targets.h.view(), wts.beta, wts.rho_w)?;
    let w_old = std::mem::replace(&mut state.classifier, w_new);
    let f_after = objective(state, g)?;
    let rec = ridge_block_record(
        Block::W,
        &w_old.view(),
        &state.classifier.view(),
        &g.view(),
        &targets.h.view(),
        wts.beta,
        wts.rho_w,
        f_before,
        f_after,
    );
    let w_step = rec.delta_norm;
    blocks.push(rec);

    let bounds = check_bounds(&state.point(g), &yv, targets, wts);
    let step_norm = (g_step * g_step + d_step * d_step + a_step * a_step + w_step * w_step).sqrt();
    Ok(SweepRecord::finish(iteration, f_start, f_after, blocks, step_norm, bounds))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertifyOptions {
    pub iterations: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sweep: SweepOptions,
    pub fista: FistaConfig,
    /// Start from [`Dictionary::init_class_blocks`] instead of unlabeled data columns.
    pub class_init: bool,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            iterations: 50,
            alpha: 1.0,
            beta: 1.0,
            sweep: SweepOptions::default(),
            fista: FistaConfig::default(),
            class_init: true,
        }
    }
}

/// Result of a certified run of the supervised convex pipeline.
#[derive(Debug, Clone)]
pub struct CertifiedRun {
    pub state: ModelState,
    pub codes: Array2<f64>,
    pub certificate: PalmCertificate,
}

/// Runs the supervised convex pipeline with fixed `(α, β)` for `opts.iterations`
/// sweeps, certifying every block update.
///
/// Starts from the data-initialized dictionary, elastic-net codes for it and the
/// ridge `A`, `W` for those codes.
pub fn certify(y: &FeatureMatrix, targets: &SupervisionTargets, hp: &HyperParams, opts: &CertifyOptions) -> Result<CertifiedRun> {
    check_targets(y, targets)?;
    let hp = HyperParams {
        alpha: opts.alpha,
        beta: opts.beta,
        ..*hp
    };
    let k = targets.n_atoms();
    let mut state = init_state(y, k, targets.n_classes, &hp, EncoderKind::FistaLasso)?;
    if opts.class_init {
        state.dictionary = Dictionary::init_class_blocks(y, targets, hp.seed)?;
    }
    let wts = hp.weights();
    let mut g = fista_lasso(&y.view(), &state.dictionary.view(), wts.lambda, wts.mu_g, &opts.fista)?.codes;
    state.lc = update_lc_matrix(&g.view(), &targets.q.view(), wts.alpha, wts.mu_a)?;
    state.classifier = update_classifier(&g.view(), &targets.h.view(), wts.beta, wts.rho_w)?;
    let mut sweeps = Vec::with_capacity(opts.iterations);
    for t in 0..opts.iterations {
        let seed = iteration_seed(hp.seed, t);
        sweeps.push(certified_sweep(&mut state, &mut g, y, targets, &wts, &opts.sweep, t, seed)?);
    }
    Ok(CertifiedRun {
        state,
        codes: g,
        certificate: PalmCertificate::new(wts.alpha, wts.beta, sweeps),
    })
}

fn iteration_seed(seed: u64, t: usize) -> u64 {
    seed ^ ((t as u64 + 1).wrapping_mul(0xA24B_AED4_963E_E407))
}

fn check_targets(y: &FeatureMatrix, targets: &SupervisionTargets) -> Result<()> {
    if targets.n_samples() != y.n_samples() {
        return Err(Error::Data(format!(
            "{} labels for {} feature columns",
            targets.n_samples(),
            y.n_samples()
        )));
    }
    Ok(())
}

struct Run<'a> {
    y: &'a FeatureMatrix,
    targets: &'a SupervisionTargets,
    has_labels: bool,
    hp: HyperParams,
    opts: TrainOptions,
    sched: Schedule,
    state: ModelState,
    g: Array2<f64>,
    certified: Vec<SweepRecord>,
}

impl Run<'_> {
    fn supervised_convex(&self) -> bool {
        self.state.encoder == EncoderKind::FistaLasso && self.opts.supervised_codes
    }

    fn tracked(&self, wts: &Weights) -> Result<f64> {
        let yv = self.y.view();
        let p = self.state.point(&self.g);
        match (self.state.encoder, self.opts.supervised_codes) {
            (EncoderKind::TopKLista, _) => objective_topk(&p, &yv, self.targets, wts),
            (EncoderKind::FistaLasso, true) => objective_convex(&p, &yv, self.targets, wts),
            (EncoderKind::FistaLasso, false) => Ok(objective_reconstruction(&p.d, &p.g, &yv, wts)),
        }
    }

    fn full_objective(&self, wts: &Weights) -> Result<f64> {
        let p = self.state.point(&self.g);
        match self.state.encoder {
            EncoderKind::TopKLista => objective_topk(&p, &self.y.view(), self.targets, wts),
            EncoderKind::FistaLasso => objective_convex(&p, &self.y.view(), self.targets, wts),
        }
    }

    fn iterate(&mut self, t: usize) -> Result<IterationRecord> {
        let started = Instant::now();
        let (alpha, beta) = ramp(t, &self.sched);
        let wts = self.hp.weights().with_supervision(alpha, beta);
        let warm = t < self.hp.warmup_iters;
        let fixed = !warm && t >= self.sched.fixed_from();
        let phase = if warm {
            Phase::Warmup
        } else if fixed {
            Phase::Fixed
        } else {
            Phase::Ramp
        };
        let seed = iteration_seed(self.hp.seed, t);
        let yv = self.y.view();

        let mut h1_pass = None;
        let mut h2_pass = None;
        let mut b_step = None;
        let (tracked_before, tracked_after, decreases, step_norm);

        if self.supervised_convex() {
            let sweep = certified_sweep(&mut self.state, &mut self.g, self.y, self.targets, &wts, &self.opts.sweep, t, seed)?;
            let dec = |b: Block| sweep.blocks.iter().filter(|r| r.block == b).map(|r| r.h1.decrease).sum();
            decreases = BlockDecreases {
                g: dec(Block::G),
                d: dec(Block::D),
                a: dec(Block::A),
                w: dec(Block::W),
            };
            tracked_before = sweep.objective_before;
            tracked_after = sweep.objective_after;
            step_norm = sweep.step_norm;
            if fixed {
                h1_pass = Some(sweep.blocks.iter().all(|b| b.h1.pass && b.min_a > 0.0));
                h2_pass = Some(sweep.blocks.iter().all(|b| b.h2.pass));
                self.certified.push(sweep);
            }
        } else {
            let f0 = self.tracked(&wts)?;
            let g_old = self.g.clone();
            match self.state.encoder {
                EncoderKind::TopKLista => {
                    if warm {
                        self.state.b_stack = Some(classical_feedback_init(&self.state.dictionary.view(), self.hp.n_layers));
                    }
                    self.g = lista_forward(&yv, &self.state)?.0;
                }
                EncoderKind::FistaLasso => {
                    let out = fista_lasso_from(&yv, &self.state.dictionary.view(), wts.lambda, wts.mu_g, &self.opts.fista, Some(&self.g))?;
                    self.g = out.codes;
                }
            }
            let f1 = self.tracked(&wts)?;
            let g_delta = diff_norm(&self.g.view(), &g_old.view());

            let d_old = self.state.dictionary.clone();
            let mut d_min_a = None;
            self.state.dictionary = match self.state.encoder {
                EncoderKind::TopKLista => update_dictionary_closed(&yv, &self.g.view(), wts.eps_d, seed)?,
                EncoderKind::FistaLasso => {
                    let step = dictionary_pgd_step(&d_old, &yv, &self.g.view(), wts.eps_d, 1.0, seed)?;
                    d_min_a = Some(dictionary_decrease_constant(step.lipschitz, step.curvature, &step.pre_projection_norms));
                    step.dictionary
                }
            };
            let f2 = self.tracked(&wts)?;
            let d_delta = diff_norm(&self.state.dictionary.view(), &d_old.view());

            let a_new = update_lc_matrix(&self.g.view(), &self.targets.q.view(), alpha, wts.mu_a)?;
            let a_old = std::mem::replace(&mut self.state.lc, a_new);
            let f3 = self.tracked(&wts)?;
            let w_new = update_classifier(&self.g.view(), &self.targets.h.view(), beta, wts.rho_w)?;
            let w_old = std::mem::replace(&mut self.state.classifier, w_new);
            let f4 = self.tracked(&wts)?;
            let a_delta = diff_norm(&self.state.lc.view(), &a_old.view());
            let w_delta = diff_norm(&self.state.classifier.view(), &w_old.view());

            if self.state.encoder == EncoderKind::TopKLista {
                if warm {
                    self.state.b_stack = Some(classical_feedback_init(&self.state.dictionary.view(), self.hp.n_layers));
                } else {
                    let (next, rep) = b_gradient_step(self.y, self.targets, &self.state, alpha, beta, &self.opts.b_train)?;
                    self.state = next;
                    b_step = Some(rep);
                }
            }

            if self.state.encoder == EncoderKind::FistaLasso {
                // the elastic-net objective does not involve A or W; their blocks are
                // certified on their own ridge objectives at the new codes
                if f2 > f0 + DIVERGENCE_TOL * (1.0 + f0.abs()) {
                    return Err(Error::Divergence {
                        iteration: t,
                        before: f0,
                        after: f2,
                    });
                }
                if fixed {
                    let gv = self.g.view();
                    let a_h1 = check_h1(
                        ridge_objective(&a_old.view(), &gv, &self.targets.q.view(), alpha, wts.mu_a),
                        ridge_objective(&self.state.lc.view(), &gv, &self.targets.q.view(), alpha, wts.mu_a),
                        a_delta,
                        0.5 * wts.mu_a,
                    );
                    let w_h1 = check_h1(
                        ridge_objective(&w_old.view(), &gv, &self.targets.h.view(), beta, wts.rho_w),
                        ridge_objective(&self.state.classifier.view(), &gv, &self.targets.h.view(), beta, wts.rho_w),
                        w_delta,
                        0.5 * wts.rho_w,
                    );
                    let g_h1 = check_h1(f0, f1, g_delta, 0.5 * wts.mu_g);
                    let d_a = d_min_a.unwrap_or(0.0);
                    let d_h1: H1Check = check_h1(f1, f2, d_delta, d_a);
                    h1_pass = Some(g_h1.pass && d_h1.pass && d_a > 0.0 && a_h1.pass && w_h1.pass);
                }
            }
            tracked_before = f0;
            tracked_after = f4;
            decreases = BlockDecreases {
                g: f0 - f1,
                d: f1 - f2,
                a: f2 - f3,
                w: f3 - f4,
            };
            step_norm = (g_delta * g_delta + d_delta * d_delta + a_delta * a_delta + w_delta * w_delta).sqrt();
        }

        let objective = self.full_objective(&wts)?;
        let train_accuracy = if self.has_labels {
            let pred = classify(&self.g.view(), &self.state.classifier.view())?;
            let ok = pred.iter().zip(&self.targets.labels).filter(|(p, l)| p == l).count();
            Some(ok as f64 / pred.len() as f64)
        } else {
            None
        };
        Ok(IterationRecord {
            iteration: t,
            phase,
            alpha,
            beta,
            objective,
            tracked_before,
            tracked_after,
            decreases,
            h1_pass,
            h2_pass,
            g_norm: frob(&self.g.view()),
            a_norm: frob(&self.state.lc.view()),
            w_norm: frob(&self.state.classifier.view()),
            step_norm,
            train_accuracy,
            b_step,
            elapsed: started.elapsed(),
        })
    }
}

/// Warm-up: `hp.warmup_iters` reconstruction-only iterations (`α = β = 0`)
/// alternating the encoder and the dictionary update. Returns the updated model,
/// its codes and one record per iteration.
pub fn warmup_phase(y: &FeatureMatrix, state: &ModelState, opts: &TrainOptions) -> Result<(ModelState, Array2<f64>, Vec<IterationRecord>)> {
    if y.dim() != state.dim() {
        return Err(Error::Dimension {
            context: "warm-up features",
            expected: format!("{} rows", state.dim()),
            got: format!("{} rows", y.dim()),
        });
    }
    let k = state.n_atoms();
    let c = state.n_classes();
    // placeholder labels; α = β = 0 keeps them out of every objective
    let targets = build_targets(&vec![0; y.n_samples()], k, c)?;
    let hp = state.hp;
    let mut run = Run {
        y,
        targets: &targets,
        has_labels: false,
        hp,
        opts: *opts,
        sched: Schedule::from_hp(&hp),
        state: state.clone(),
        g: Array2::zeros((k, y.n_samples())),
        certified: Vec::new(),
    };
    let mut records = Vec::with_capacity(hp.warmup_iters);
    for t in 0..hp.warmup_iters {
        records.push(run.iterate(t)?);
    }
    Ok((run.state, run.g, records))
}

/// Full two-stage training.
pub fn train(
    y: &FeatureMatrix,
    targets: &SupervisionTargets,
    hp: &HyperParams,
    kind: EncoderKind,
    opts: &TrainOptions,
) -> Result<TrainRun> {
    train_with_observer(y, targets, hp, kind, opts, |_, _, _| {})
}

/// [`train`], calling `observer` after every outer iteration with the record,
/// the model and the training codes at that point.
pub fn train_with_observer(
    y: &FeatureMatrix,
    targets: &SupervisionTargets,
    hp: &HyperParams,
    kind: EncoderKind,
    opts: &TrainOptions,
    mut observer: impl FnMut(&IterationRecord, &ModelState, &Array2<f64>),
) -> Result<TrainRun> {
    check_targets(y, targets)?;
    opts.fista.validate()?;
    opts.b_train.validate()?;
    if opts.supervised_codes && kind == EncoderKind::TopKLista {
        return Err(Error::Config("supervised proximal code updates need the FISTA encoder".into()));
    }
    let k = targets.n_atoms();
    let state = init_state(y, k, targets.n_classes, hp, kind)?;
    let mut run = Run {
        y,
        targets,
        has_labels: true,
        hp: *hp,
        opts: *opts,
        sched: Schedule::from_hp(hp),
        g: Array2::zeros((k, y.n_samples())),
        state,
        certified: Vec::new(),
    };
    if run.supervised_convex() {
        // proximal steps need a sensible starting point
        run.g = fista_lasso(&y.view(), &run.state.dictionary.view(), hp.lambda, hp.mu_g, &opts.fista)?.codes;
    }
    let mut records = Vec::with_capacity(hp.max_outer);
    for t in 0..hp.max_outer {
        let rec = run.iterate(t)?;
        observer(&rec, &run.state, &run.g);
        records.push(rec);
    }
    let certificate = run
        .supervised_convex()
        .then(|| PalmCertificate::new(hp.alpha, hp.beta, std::mem::take(&mut run.certified)));
    Ok(TrainRun {
        report: TrainReport {
            encoder: kind,
            supervised_codes: opts.supervised_codes,
            records,
            certificate,
        },
        state: run.state,
        codes: run.g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_examples() {
        let s = Schedule {
            warmup_iters: 2,
            ramp_iters: 3,
            alpha_max: 3.0,
            beta_max: 6.0,
            shape: RampShape::Linear,
        };
        assert_eq!(ramp(0, &s), (0.0, 0.0));
        assert_eq!(ramp(1, &s), (0.0, 0.0));
        let (a, b) = ramp(3, &s);
        assert!((a - 2.0).abs() < 1e-15 && (b - 4.0).abs() < 1e-15);
        assert_eq!(ramp(4, &s), (3.0, 6.0));
        assert_eq!(ramp(100, &s), (3.0, 6.0));
        assert_eq!(s.fixed_from(), 4);
    }

    #[test]
    fn decrease_constant_at_unit_norms() {
        // with every pre-projection norm >= 1 and c = L the constant is at least L/2
        assert!((dictionary_decrease_constant(2.0, 2.0, &[1.0, 1.5]) - 1.0).abs() < 1e-15);
        assert!(dictionary_decrease_constant(2.0, 2.0, &[0.5]) > 0.0);
    }
}
