//! Sparse encoders: the strict Top-K LISTA network (forward pass, trace and
//! fixed-support backpropagation), the FISTA elastic-net solver, and the
//! single supervised proximal-gradient step on the codes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::Serialize;

use crate::error::{dim_err, shape_str, Error, Result};
use crate::linalg::{all_finite, frob, soft_threshold, sym_psd_top_eigenvalue};
use crate::model::{lipschitz_g, smooth_g_gradient, EncoderKind, ModelState, Point, SupervisionTargets, Weights};

/// Keeps the `t` largest-magnitude entries of `v`, zeroing the rest.
///
/// Ties are broken towards the lower index and exact zeros never use up the budget.
pub fn topk_shrink(v: ArrayView1<'_, f64>, t: usize) -> Result<Array1<f64>> {
    if t == 0 || t > v.len() {
        return Err(Error::Config(format!("Top-K budget {t} outside [1, {}]", v.len())));
    }
    let mut out = Array1::zeros(v.len());
    for i in topk_support(v, t) {
        out[i] = v[i];
    }
    Ok(out)
}

fn topk_support(v: ArrayView1<'_, f64>, t: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).filter(|&i| v[i] != 0.0).collect();
    // stable: equal magnitudes keep ascending index order
    idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));
    idx.truncate(t);
    idx
}

/// Column-wise Top-K. Returns the kept-support mask.
fn topk_columns_inplace(z: &mut Array2<f64>, t: usize) -> Array2<bool> {
    let mut mask = Array2::from_elem(z.raw_dim(), false);
    for (mut col, mut mcol) in z.axis_iter_mut(Axis(1)).zip(mask.axis_iter_mut(Axis(1))) {
        for i in topk_support(col.view(), t) {
            mcol[i] = true;
        }
        Zip::from(&mut col).and(&mcol).for_each(|v, &keep| {
            if !keep {
                *v = 0.0
            }
        });
    }
    mask
}

/// Everything LISTA backpropagation needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ListaTrace {
    pub features: Array2<f64>,
    /// Per layer, `G^(t) + B^(t)(Y − D G^(t))` before shrinkage.
    pub pre_activations: Vec<Array2<f64>>,
    /// Per layer, the entries kept by the Top-K operator.
    pub masks: Vec<Array2<bool>>,
}

impl ListaTrace {
    /// Output of layer `t` rebuilt from the stored pre-activation and mask.
    pub fn layer_output(&self, t: usize) -> Array2<f64> {
        let mut g = self.pre_activations[t].clone();
        Zip::from(&mut g).and(&self.masks[t]).for_each(|v, &keep| {
            if !keep {
                *v = 0.0
            }
        });
        g
    }

    fn layer_input(&self, t: usize) -> Array2<f64> {
        if t == 0 {
            Array2::zeros(self.pre_activations[0].raw_dim())
        } else {
            self.layer_output(t - 1)
        }
    }

    pub fn n_layers(&self) -> usize {
        self.masks.len()
    }
}

/// `B^(t) = Dᵀ / ‖DᵀD‖₂` for every layer.
pub fn classical_feedback_init(d: &ArrayView2<'_, f64>, n_layers: usize) -> Vec<Array2<f64>> {
    let gram = d.t().dot(d);
    let l = sym_psd_top_eigenvalue(&gram.view());
    let b = if l > 0.0 { d.t().to_owned() / l } else { d.t().to_owned() };
    vec![b; n_layers]
}

fn feedback_stack(state: &ModelState) -> Result<&[Array2<f64>]> {
    if state.encoder != EncoderKind::TopKLista {
        return Err(Error::Config("LISTA encoding requested for a FISTA model".into()));
    }
    let stack = state
        .b_stack
        .as_deref()
        .ok_or_else(|| Error::Data("Top-K LISTA model is missing its feedback matrices".into()))?;
    if stack.len() != state.hp.n_layers {
        return Err(dim_err(
            "LISTA feedback stack",
            format!("{} layers", state.hp.n_layers),
            format!("{} layers", stack.len()),
        ));
    }
    Ok(stack)
}

/// Runs the unrolled Top-K LISTA network from `G = 0`:
/// `G ← T_K(G + B^(t)(Y − DG))` for each layer.
pub fn lista_forward(y: &ArrayView2<'_, f64>, state: &ModelState) -> Result<(Array2<f64>, ListaTrace)> {
    let stack = feedback_stack(state)?;
    lista_forward_with(y, &state.dictionary.view(), stack, state.hp.sparsity)
}

/// [`lista_forward`] with explicit dictionary, feedback matrices and budget.
pub fn lista_forward_with(
    y: &ArrayView2<'_, f64>,
    d: &ArrayView2<'_, f64>,
    stack: &[Array2<f64>],
    sparsity: usize,
) -> Result<(Array2<f64>, ListaTrace)> {
    let (dim, k) = d.dim();
    if y.nrows() != dim {
        return Err(dim_err("lista_forward features", format!("{dim} rows"), shape_str(y)));
    }
    if stack.is_empty() {
        return Err(Error::Config("LISTA needs at least one layer".into()));
    }
    if sparsity == 0 || sparsity > k {
        return Err(Error::Config(format!("Top-K budget {sparsity} outside [1, {k}]")));
    }
    let n = y.ncols();
    let mut g = Array2::<f64>::zeros((k, n));
    let mut trace = ListaTrace {
        features: y.to_owned(),
        pre_activations: Vec::with_capacity(stack.len()),
        masks: Vec::with_capacity(stack.len()),
    };
    for b in stack {
        if b.dim() != (k, dim) {
            return Err(dim_err("LISTA feedback matrix", format!("{k}x{dim}"), shape_str(&b.view())));
        }
        let mut r = y.to_owned();
        r -= &d.dot(&g);
        let mut z = g;
        z += &b.dot(&r);
        let pre = z.clone();
        let mask = topk_columns_inplace(&mut z, sparsity);
        trace.pre_activations.push(pre);
        trace.masks.push(mask);
        g = z;
    }
    Ok((g, trace))
}

/// Gradients of a loss with respect to every `B^(t)`, given `∂loss/∂G` at the
/// network output. The Top-K selection is treated as the fixed linear mask
/// recorded in the forward trace.
pub fn lista_backward(trace: &ListaTrace, state: &ModelState, upstream: &ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
    let stack = feedback_stack(state)?;
    lista_backward_with(trace, &state.dictionary.view(), stack, upstream)
}

pub fn lista_backward_with(
    trace: &ListaTrace,
    d: &ArrayView2<'_, f64>,
    stack: &[Array2<f64>],
    upstream: &ArrayView2<'_, f64>,
) -> Result<Vec<Array2<f64>>> {
    let layers = trace.n_layers();
    if layers != stack.len() || trace.pre_activations.len() != layers {
        return Err(dim_err(
            "lista_backward trace",
            format!("{} layers", stack.len()),
            format!("{layers} layers"),
        ));
    }
    let (dim, k) = d.dim();
    let n = trace.features.ncols();
    if trace.features.nrows() != dim || upstream.dim() != (k, n) || trace.masks[0].dim() != (k, n) {
        return Err(dim_err(
            "lista_backward upstream gradient",
            format!("{k}x{n}"),
            shape_str(upstream),
        ));
    }
    let mut grads = vec![Array2::<f64>::zeros((k, dim)); layers];
    let mut dg = upstream.to_owned();
    for t in (0..layers).rev() {
        let mut dz = dg;
        Zip::from(&mut dz).and(&trace.masks[t]).for_each(|v, &keep| {
            if !keep {
                *v = 0.0
            }
        });
        let g_in = trace.layer_input(t);
        let mut r = trace.features.clone();
        r -= &d.dot(&g_in);
        grads[t] = dz.dot(&r.t());
        if t > 0 {
            let back = d.t().dot(&stack[t].t().dot(&dz));
            dz -= &back;
        }
        dg = dz;
    }
    Ok(grads)
}

/// Step-size rule for FISTA; only `1/L` is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum StepRule {
    #[default]
    FixedInvLipschitz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FistaConfig {
    pub max_iters: usize,
    /// Stop once `‖G_{k+1} − G_k‖_F ≤ rel_tol·‖G_{k+1}‖_F` and the KKT residual is below
    /// `rel_tol · scale`.
    pub rel_tol: f64,
    pub step_rule: StepRule,
}

impl Default for FistaConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            rel_tol: 1e-8,
            step_rule: StepRule::FixedInvLipschitz,
        }
    }
}

impl FistaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.rel_tol > 0.0) {
            return Err(Error::Config("FISTA needs max_iters >= 1 and rel_tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FistaOutput {
    pub codes: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest violation of the elastic-net optimality conditions.
    pub kkt_residual: f64,
    /// Scale the KKT residual is compared against (`max(1, max|DᵀY|)`).
    pub kkt_scale: f64,
    /// Objective after every accepted iterate, starting with the initial point.
    pub objective_trace: Vec<f64>,
}

struct ElasticNet {
    gram: Array2<f64>,
    dty: Array2<f64>,
    y_sq: f64,
    lambda: f64,
    mu: f64,
}

impl ElasticNet {
    fn value(&self, g: &Array2<f64>, gram_g: &Array2<f64>) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        let mut sq = 0.0;
        let mut abs = 0.0;
        Zip::from(g).and(gram_g).and(&self.dty).for_each(|&x, &gx, &b| {
            quad += x * gx;
            lin += x * b;
            sq += x * x;
            abs += x.abs();
        });
        (0.5 * self.y_sq - lin + 0.5 * quad).max(0.0) + 0.5 * self.mu * sq + self.lambda * abs
    }

    fn prox_step(&self, g: &Array2<f64>, gram_g: &Array2<f64>, step: f64) -> Array2<f64> {
        let thr = step * self.lambda;
        let mut out = g.clone();
        Zip::from(&mut out).and(gram_g).and(&self.dty).for_each(|x, &gx, &b| {
            let grad = gx - b + self.mu * *x;
            *x = soft_threshold(*x - step * grad, thr);
        });
        out
    }

    fn kkt(&self, g: &Array2<f64>, gram_g: &Array2<f64>) -> f64 {
        let mut worst = 0.0f64;
        Zip::from(g).and(gram_g).and(&self.dty).for_each(|&x, &gx, &b| {
            let grad = gx - b + self.mu * x;
            let v = if x == 0.0 {
                (grad.abs() - self.lambda).max(0.0)
            } else {
                (grad + self.lambda * x.signum()).abs()
            };
            worst = worst.max(v);
        });
        worst
    }
}

/// Solves `min_G ½‖Y − DG‖² + μ_G/2‖G‖² + λ‖G‖₁` by FISTA from `G = 0`.
pub fn fista_lasso(
    y: &ArrayView2<'_, f64>,
    d: &ArrayView2<'_, f64>,
    lambda: f64,
    mu_g: f64,
    cfg: &FistaConfig,
) -> Result<FistaOutput> {
    fista_lasso_from(y, d, lambda, mu_g, cfg, None)
}

/// [`fista_lasso`] warm-started from `init`.
///
/// Momentum follows the `t_{k+1} = (1 + √(1 + 4t_k²))/2` schedule and is reset
/// whenever an accelerated step would raise the objective; the rejected step is
/// replaced by a plain proximal-gradient step from the last iterate, so the
/// accepted objective sequence never increases.
pub fn fista_lasso_from(
    y: &ArrayView2<'_, f64>,
    d: &ArrayView2<'_, f64>,
    lambda: f64,
    mu_g: f64,
    cfg: &FistaConfig,
    init: Option<&Array2<f64>>,
) -> Result<FistaOutput> {
    cfg.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) || !(mu_g > 0.0 && mu_g.is_finite()) {
        return Err(Error::Config(format!(
            "elastic net needs lambda >= 0 and mu_g > 0 (got lambda = {lambda}, mu_g = {mu_g})"
        )));
    }
    let (dim, k) = d.dim();
    if y.nrows() != dim {
        return Err(dim_err("fista_lasso features", format!("{dim} rows"), shape_str(y)));
    }
    if !all_finite(y) || !all_finite(d) {
        return Err(Error::NonFinite("fista_lasso input"));
    }
    let n = y.ncols();
    let problem = ElasticNet {
        gram: d.t().dot(d),
        dty: d.t().dot(y),
        y_sq: y.iter().map(|v| v * v).sum(),
        lambda,
        mu: mu_g,
    };
    let lip = sym_psd_top_eigenvalue(&problem.gram.view()) + mu_g;
    let step = 1.0 / lip;
    let kkt_scale = problem.dty.iter().fold(1.0f64, |m, v| m.max(v.abs()));

    let mut x = match init {
        Some(g0) => {
            if g0.dim() != (k, n) {
                return Err(dim_err("fista_lasso init", format!("{k}x{n}"), shape_str(&g0.view())));
            }
            g0.clone()
        }
        None => Array2::zeros((k, n)),
    };
    let mut gx = problem.gram.dot(&x);
    let mut fx = problem.value(&x, &gx);
    let mut trace = vec![fx];
    let mut ym = x.clone();
    let mut gym = gx.clone();
    let mut t = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    let mut kkt = problem.kkt(&x, &gx);

    for it in 1..=cfg.max_iters {
        iterations = it;
        let mut z = problem.prox_step(&ym, &gym, step);
        let mut gz = problem.gram.dot(&z);
        let mut fz = problem.value(&z, &gz);
        if fz > fx {
            t = 1.0;
            z = problem.prox_step(&x, &gx, step);
            gz = problem.gram.dot(&z);
            fz = problem.value(&z, &gz);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / t_next;

        let mut diff = z.clone();
        diff -= &x;
        let change = frob(&diff.view());
        let znorm = frob(&z.view());

        ym = z.clone();
        ym.scaled_add(mom, &diff);
        gym = gz.clone();
        gym.scaled_add(mom, &(&gz - &gx));

        x = z;
        gx = gz;
        fx = fz;
        t = t_next;
        trace.push(fx);

        kkt = problem.kkt(&x, &gx);
        if change <= cfg.rel_tol * znorm.max(f64::MIN_POSITIVE) && kkt <= cfg.rel_tol * kkt_scale {
            converged = true;
            break;
        }
    }
    Ok(FistaOutput {
        codes: x,
        iterations,
        converged,
        kkt_residual: kkt,
        kkt_scale,
        objective_trace: trace,
    })
}

/// One proximal-gradient step on `f₁(G) = H_G(G) + λ‖G‖₁` from `p.g`, with the
/// step size checked against `1/L_G`.
pub fn prox_grad_g_supervised(
    y: &ArrayView2<'_, f64>,
    p: &Point<'_>,
    targets: &SupervisionTargets,
    step: f64,
    wts: &Weights,
) -> Result<Array2<f64>> {
    let lg = lipschitz_g(&p.d, &p.a, &p.w, wts)?;
    if !(step > 0.0 && step < 1.0 / lg) {
        return Err(Error::Config(format!(
            "step {step} must lie in (0, 1/L_G) = (0, {})",
            1.0 / lg
        )));
    }
    Ok(prox_grad_step(y, p, targets, step, wts))
}

/// The proximal-gradient step itself, without the step-size premise check.
pub fn prox_grad_step(
    y: &ArrayView2<'_, f64>,
    p: &Point<'_>,
    targets: &SupervisionTargets,
    step: f64,
    wts: &Weights,
) -> Array2<f64> {
    let grad = smooth_g_gradient(p, y, targets, wts);
    let thr = step * wts.lambda;
    let mut out = p.g.to_owned();
    Zip::from(&mut out)
        .and(&grad)
        .for_each(|x, &g| *x = soft_threshold(*x - step * g, thr));
    out
}
