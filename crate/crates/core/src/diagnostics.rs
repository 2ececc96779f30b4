//! Runtime certification of the block-descent conditions of the convex
//! pipeline: sufficient decrease per block (H1), relative-error witnesses per
//! block (H2), boundedness of the iterates, and finite-difference audits of the
//! analytic gradients.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::linalg::{frob, frob_sq, spectral_norm};
use crate::model::{
    smooth_d_gradient, smooth_d_value, smooth_g_gradient, smooth_g_value, Point, SupervisionTargets, Weights,
    UNIT_NORM_TOL,
};

/// Absolute slack granted to every inequality check.
pub const GRACE: f64 = 1e-10;
/// Tolerance of the telescoping identity, relative to `max(1, |F|)`.
pub const TELESCOPE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct H1Check {
    pub pass: bool,
    pub decrease: f64,
    /// `min_a · ‖Δ‖²`.
    pub required: f64,
    /// `decrease / ‖Δ‖²`; `None` when `‖Δ‖²` is too small for the decrease to
    /// be resolved in floating point (see [`resolvable`]).
    pub measured_a: Option<f64>,
}

/// Whether a change of `amount` in an objective of size `f` is above its
/// rounding noise.
pub fn resolvable(amount: f64, f: f64) -> bool {
    amount > 64.0 * f64::EPSILON * f.abs().max(1.0)
}

/// Sufficient decrease: passes iff `f_before − f_after ≥ max(min_a, 0)·‖Δ‖² − GRACE`.
/// A non-positive `min_a` certifies nothing, so the step must at least not increase `f`.
pub fn check_h1(f_before: f64, f_after: f64, delta_norm: f64, min_a: f64) -> H1Check {
    let decrease = f_before - f_after;
    let dsq = delta_norm * delta_norm;
    let required = min_a.max(0.0) * dsq;
    let measurable = delta_norm > 0.0 && resolvable(min_a.abs().max(f64::MIN_POSITIVE) * dsq, f_before);
    H1Check {
        pass: decrease >= required - GRACE,
        decrease,
        required,
        measured_a: measurable.then(|| decrease / dsq),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct H2Check {
    pub witness_norm: f64,
    pub bound: f64,
    /// Largest violation of subdifferential membership of the witness.
    pub membership_residual: f64,
    pub pass: bool,
}

/// Witness `W_G = ∇H_G(G⁺) − ∇H_G(G) − c_G·Δ` for a proximal-gradient step on
/// the codes, checked against `(L_G + c_G)‖Δ‖_F`. `p` carries `D`, `A`, `W` and
/// the previous codes.
///
/// Membership: `W_G − ∇H_G(G⁺)` must be a subgradient of `λ‖·‖₁` at `G⁺`.
pub fn h2_witness_g(
    p_prev: &Point<'_>,
    g_next: &ArrayView2<'_, f64>,
    y: &ArrayView2<'_, f64>,
    targets: &SupervisionTargets,
    wts: &Weights,
    lipschitz: f64,
    c_g: f64,
) -> H2Check {
    let grad_prev = smooth_g_gradient(p_prev, y, targets, wts);
    let p_next = Point { g: *g_next, ..*p_prev };
    let grad_next = smooth_g_gradient(&p_next, y, targets, wts);
    let mut delta = g_next.to_owned();
    delta -= &p_prev.g;

    let mut witness = &grad_next - &grad_prev;
    witness.scaled_add(-c_g, &delta);
    let witness_norm = frob(&witness.view());
    let bound = (lipschitz + c_g) * frob(&delta.view());

    // S = −∇H_G(G) − c_G Δ must lie in λ ∂‖G⁺‖₁
    let mut worst = 0.0f64;
    let mut scale = wts.lambda.max(1.0);
    Zip::from(g_next).and(&grad_prev).and(&delta).for_each(|&gn, &gp, &dl| {
        let s = -gp - c_g * dl;
        scale = scale.max(gp.abs()).max((c_g * dl).abs());
        let v = if gn == 0.0 {
            (s.abs() - wts.lambda).max(0.0)
        } else {
            (s - wts.lambda * gn.signum()).abs()
        };
        worst = worst.max(v);
    });
    H2Check {
        witness_norm,
        bound,
        membership_residual: worst,
        pass: witness_norm <= bound + GRACE && worst <= 1e-9 * scale,
    }
}

/// Witness for a projected-gradient dictionary step:
/// `v_D = −∇H_D(D) − c_D Δ_D` is the normal-cone element, `W_D = v_D + ∇H_D(D⁺)`,
/// checked against `(L_D + c_D)‖Δ_D‖_F`. Membership: each column of `v_D` must be
/// parallel to the new atom.
pub fn h2_witness_d(
    d_prev: &ArrayView2<'_, f64>,
    d_next: &ArrayView2<'_, f64>,
    g: &ArrayView2<'_, f64>,
    y: &ArrayView2<'_, f64>,
    eps_d: f64,
    lipschitz: f64,
    c_d: f64,
) -> H2Check {
    let grad_prev = smooth_d_gradient(d_prev, g, y, eps_d);
    let grad_next = smooth_d_gradient(d_next, g, y, eps_d);
    let mut delta = d_next.to_owned();
    delta -= d_prev;
    let mut normal = -&grad_prev;
    normal.scaled_add(-c_d, &delta);
    let witness = &normal + &grad_next;
    let witness_norm = frob(&witness.view());
    let bound = (lipschitz + c_d) * frob(&delta.view());

    let mut worst = 0.0f64;
    let mut scale = 1.0f64;
    for (v, dn) in normal.axis_iter(Axis(1)).zip(d_next.axis_iter(Axis(1))) {
        let along = v.dot(&dn);
        let perp = &v - &(&dn * along);
        worst = worst.max(perp.dot(&perp).sqrt());
        scale = scale.max(v.dot(&v).sqrt());
    }
    H2Check {
        witness_norm,
        bound,
        membership_residual: worst,
        pass: witness_norm <= bound + GRACE && worst <= 1e-9 * scale,
    }
}

/// Closed-form ridge blocks are exact minimizers, so their witness is `0`; the
/// numerically measured stationarity residual `‖∇f(X⁺)‖_F` is reported as the
/// membership residual and must stay below `1e-8` relative to the gradient scale.
pub fn h2_witness_ridge(stationarity: f64, scale: f64) -> H2Check {
    H2Check {
        witness_norm: 0.0,
        bound: 0.0,
        membership_residual: stationarity,
        pass: stationarity <= 1e-8 * scale.max(1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsReport {
    /// `‖G‖_F²` against `(‖Y‖² + α‖Q‖² + β‖H‖²)/μ_G`.
    pub g_value: f64,
    pub g_bound: f64,
    /// `‖A‖_F` against `(α/μ_A)‖Q‖_F‖G‖₂`.
    pub a_value: f64,
    pub a_bound: f64,
    /// `‖W‖_F` against `(β/ρ_W)‖H‖_F‖G‖₂`.
    pub w_value: f64,
    pub w_bound: f64,
    /// `max_j |‖d_j‖₂ − 1|`.
    pub unit_norm_deviation: f64,
    pub pass: bool,
}

impl BoundsReport {
    pub fn g_margin(&self) -> f64 {
        self.g_bound - self.g_value
    }
    pub fn a_margin(&self) -> f64 {
        self.a_bound - self.a_value
    }
    pub fn w_margin(&self) -> f64 {
        self.w_bound - self.w_value
    }
}

/// Evaluates the boundedness inequalities at `p`. The `A` and `W` bounds use
/// the spectral norm of `p.g`, so `p.g` should be the codes `A` and `W` were fitted to.
pub fn check_bounds(p: &Point<'_>, y: &ArrayView2<'_, f64>, targets: &SupervisionTargets, wts: &Weights) -> BoundsReport {
    let q_norm = frob(&targets.q.view());
    let h_norm = frob(&targets.h.view());
    let g_spec = spectral_norm(&p.g);
    let g_value = frob_sq(&p.g);
    let g_bound = (frob_sq(y) + wts.alpha * q_norm * q_norm + wts.beta * h_norm * h_norm) / wts.mu_g;
    let a_value = frob(&p.a);
    let a_bound = wts.alpha / wts.mu_a * q_norm * g_spec;
    let w_value = frob(&p.w);
    let w_bound = wts.beta / wts.rho_w * h_norm * g_spec;
    let unit_norm_deviation = p
        .d
        .axis_iter(Axis(1))
        .map(|c| (c.dot(&c).sqrt() - 1.0).abs())
        .fold(0.0, f64::max);
    // spectral norms come from power iteration; allow its relative accuracy
    let rel = 1e-9;
    let pass = g_value <= g_bound + GRACE
        && a_value <= a_bound * (1.0 + rel) + GRACE
        && w_value <= w_bound * (1.0 + rel) + GRACE
        && unit_norm_deviation <= UNIT_NORM_TOL;
    BoundsReport {
        g_value,
        g_bound,
        a_value,
        a_bound,
        w_value,
        w_bound,
        unit_norm_deviation,
        pass,
    }
}

/// Block whose smooth-part gradient is audited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AuditBlock {
    G,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditReport {
    pub pass: bool,
    pub probes: usize,
    /// Largest `|fd − analytic| / max(‖∇‖_F, 1e-12)` over the probes.
    pub max_rel_error: f64,
}

/// Compares analytic directional derivatives of `H_G` or `H_D` with central
/// differences along `probes` seeded random unit directions.
pub fn gradient_audit(
    p: &Point<'_>,
    y: &ArrayView2<'_, f64>,
    targets: &SupervisionTargets,
    wts: &Weights,
    block: AuditBlock,
    probes: usize,
    tol: f64,
    seed: u64,
) -> AuditReport {
    let probes = probes.max(1);
    let base = match block {
        AuditBlock::G => p.g.to_owned(),
        AuditBlock::D => p.d.to_owned(),
    };
    let value = |x: &Array2<f64>| match block {
        AuditBlock::G => smooth_g_value(&Point { g: x.view(), ..*p }, y, targets, wts),
        AuditBlock::D => smooth_d_value(&x.view(), &p.g, y, wts.eps_d),
    };
    let grad = match block {
        AuditBlock::G => smooth_g_gradient(p, y, targets, wts),
        AuditBlock::D => smooth_d_gradient(&p.d, &p.g, y, wts.eps_d),
    };
    let gnorm = frob(&grad.view()).max(1e-12);
    let h = 1e-4 * frob(&base.view()).max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let mut dir = Array2::<f64>::zeros(base.raw_dim());
        dir.mapv_inplace(|_| StandardNormal.sample(&mut rng));
        let n = frob(&dir.view());
        dir /= n;
        let mut plus = base.clone();
        plus.scaled_add(h, &dir);
        let mut minus = base.clone();
        minus.scaled_add(-h, &dir);
        let fd = (value(&plus) - value(&minus)) / (2.0 * h);
        let analytic: f64 = (&grad * &dir).sum();
        worst = worst.max((fd - analytic).abs() / gnorm);
    }
    AuditReport {
        pass: worst <= tol,
        probes,
        max_rel_error: worst,
    }
}

/// Block of the alternating scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Block {
    G,
    D,
    A,
    W,
}

impl Block {
    pub fn as_str(self) -> &'static str {
        match self {
            Block::G => "G",
            Block::D => "D",
            Block::A => "A",
            Block::W => "W",
        }
    }
}

/// One block update inside a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRecord {
    pub block: Block,
    pub f_before: f64,
    pub f_after: f64,
    pub delta_norm: f64,
    /// Sufficient-decrease constant the step is certified against; must be positive.
    pub min_a: f64,
    pub h1: H1Check,
    pub h2: H2Check,
    /// Lipschitz constant of the block's smooth part and the curvature `c` used.
    pub lipschitz: f64,
    pub curvature: f64,
}

impl BlockRecord {
    pub fn pass(&self) -> bool {
        self.min_a > 0.0 && self.h1.pass && self.h2.pass
    }
}

/// One full `G → D → A → W` sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub iteration: usize,
    pub objective_before: f64,
    pub objective_after: f64,
    pub blocks: Vec<BlockRecord>,
    /// `|Σ block decreases − (F_before − F_after)|`.
    pub telescoping_error: f64,
    pub telescoping_pass: bool,
    /// `‖Z^{t+1} − Z^t‖_F` over all blocks.
    pub step_norm: f64,
    pub bounds: BoundsReport,
}

impl SweepRecord {
    pub fn pass(&self) -> bool {
        self.blocks.iter().all(BlockRecord::pass) && self.telescoping_pass && self.bounds.pass
    }

    pub(crate) fn finish(
        iteration: usize,
        objective_before: f64,
        objective_after: f64,
        blocks: Vec<BlockRecord>,
        step_norm: f64,
        bounds: BoundsReport,
    ) -> Self {
        let summed: f64 = blocks.iter().map(|b| b.h1.decrease).sum();
        let total = objective_before - objective_after;
        let telescoping_error = (summed - total).abs();
        SweepRecord {
            iteration,
            objective_before,
            objective_after,
            telescoping_pass: telescoping_error <= TELESCOPE_TOL * objective_before.abs().max(1.0),
            telescoping_error,
            blocks,
            step_norm,
            bounds,
        }
    }
}

/// Per-iteration, per-block record of a certified run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PalmCertificate {
    pub alpha: f64,
    pub beta: f64,
    pub sweeps: Vec<SweepRecord>,
    pub pass: bool,
}

impl PalmCertificate {
    pub fn new(alpha: f64, beta: f64, sweeps: Vec<SweepRecord>) -> Self {
        let pass = !sweeps.is_empty() && sweeps.iter().all(SweepRecord::pass);
        Self { alpha, beta, sweeps, pass }
    }

    /// First failing check, as `(iteration, what)`.
    pub fn first_failure(&self) -> Option<(usize, String)> {
        for s in &self.sweeps {
            for b in &s.blocks {
                if b.min_a <= 0.0 {
                    return Some((s.iteration, format!("{}: non-positive decrease constant {:e}", b.block.as_str(), b.min_a)));
                }
                if !b.h1.pass {
                    return Some((s.iteration, format!("{}: H1 sufficient decrease", b.block.as_str())));
                }
                if !b.h2.pass {
                    return Some((s.iteration, format!("{}: H2 relative error", b.block.as_str())));
                }
            }
            if !s.telescoping_pass {
                return Some((s.iteration, "telescoping identity".into()));
            }
            if !s.bounds.pass {
                return Some((s.iteration, "boundedness".into()));
            }
        }
        None
    }

    /// Line-oriented plain-text rendering: one line per block, one summary line
    /// per sweep, and a final verdict line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# palm-certificate alpha={:e} beta={:e} sweeps={}", self.alpha, self.beta, self.sweeps.len());
        for s in &self.sweeps {
            for b in &s.blocks {
                let _ = writeln!(
                    out,
                    "iter={} block={} f_before={:.12e} f_after={:.12e} decrease={:.6e} delta={:.6e} L={:.6e} c={:.6e} min_a={:.6e} a={} h1={} witness={:.6e} bound={:.6e} membership={:.3e} h2={}",
                    s.iteration,
                    b.block.as_str(),
                    b.f_before,
                    b.f_after,
                    b.h1.decrease,
                    b.delta_norm,
                    b.lipschitz,
                    b.curvature,
                    b.min_a,
                    b.h1.measured_a.map_or("-".to_string(), |a| format!("{a:.6e}")),
                    verdict(b.h1.pass && b.min_a > 0.0),
                    b.h2.witness_norm,
                    b.h2.bound,
                    b.h2.membership_residual,
                    verdict(b.h2.pass),
                );
            }
            let _ = writeln!(
                out,
                "iter={} sweep objective={:.12e} step={:.6e} telescoping_err={:.3e} telescoping={} g_margin={:.6e} a_margin={:.6e} w_margin={:.6e} unit_dev={:.3e} bounds={}",
                s.iteration,
                s.objective_after,
                s.step_norm,
                s.telescoping_error,
                verdict(s.telescoping_pass),
                s.bounds.g_margin(),
                s.bounds.a_margin(),
                s.bounds.w_margin(),
                s.bounds.unit_norm_deviation,
                verdict(s.bounds.pass),
            );
        }
        let _ = writeln!(out, "certificate={}", if self.pass { "PASS" } else { "FAIL" });
        out
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_targets;

    #[test]
    fn h1_arithmetic() {
        let c = check_h1(10.0, 9.0, 1.0, 0.5);
        assert!(c.pass);
        assert_eq!(c.measured_a, Some(1.0));
        let fixed = check_h1(3.0, 3.0, 0.0, 0.5);
        assert!(fixed.pass);
        assert_eq!(fixed.measured_a, None);
        assert!(!check_h1(1.0, 2.0, 1.0, 0.1).pass);
    }

    #[test]
    fn zero_model_is_bounded() {
        let t = build_targets(&[0, 1, 1], 4, 2).unwrap();
        let d = Array2::from_shape_fn((3, 4), |(i, j)| if i == j % 3 { 1.0 } else { 0.0 });
        let g = Array2::zeros((4, 3));
        let a = Array2::zeros((4, 4));
        let w = Array2::zeros((2, 4));
        let y = Array2::zeros((3, 3));
        let wts = Weights { alpha: 1.0, beta: 1.0, mu_a: 0.1, rho_w: 0.1, eps_d: 0.1, mu_g: 0.1, lambda: 0.1 };
        let p = Point { d: d.view(), g: g.view(), a: a.view(), w: w.view() };
        assert!(check_bounds(&p, &y.view(), &t, &wts).pass);
    }

    #[test]
    fn ridge_witness_is_zero() {
        let c = h2_witness_ridge(1e-15, 1.0);
        assert_eq!(c.witness_norm, 0.0);
        assert!(c.pass);
        assert!(!h2_witness_ridge(1e-3, 1.0).pass);
    }
}
