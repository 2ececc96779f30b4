//! Block minimizers for the dictionary, the label-consistency transform and
//! the classifier.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{dim_err, shape_str, Error, Result};
use crate::linalg::{all_finite, frob, solve_right_spd};
use crate::model::{lipschitz_d, smooth_d_gradient, Dictionary};

/// Relative residual allowed in the normal equations of a ridge solve.
pub const NORMAL_EQ_TOL: f64 = 1e-8;

/// Solves `X (GGᵀ + ridge·I) = T Gᵀ` for `X`.
fn ridge_solve(g: &ArrayView2<'_, f64>, target: &ArrayView2<'_, f64>, ridge: f64, what: &'static str) -> Result<Array2<f64>> {
    if target.ncols() != g.ncols() {
        return Err(dim_err(what, format!("{} columns", g.ncols()), shape_str(target)));
    }
    if !all_finite(g) || !all_finite(target) {
        return Err(Error::NonFinite(what));
    }
    let k = g.nrows();
    let mut m = g.dot(&g.t());
    for i in 0..k {
        m[[i, i]] += ridge;
    }
    let rhs = target.dot(&g.t());
    let x = solve_right_spd(&rhs.view(), &m.view())?;
    let mut resid = x.dot(&m);
    resid -= &rhs;
    let scale = frob(&rhs.view()).max(frob(&x.view()) * ridge).max(f64::MIN_POSITIVE);
    let rel = frob(&resid.view()) / scale;
    if !(rel <= NORMAL_EQ_TOL) {
        return Err(Error::Singular(format!(
            "{what}: normal-equation residual {rel:e} exceeds {NORMAL_EQ_TOL:e} (ridge {ridge:e})"
        )));
    }
    Ok(x)
}

/// Unnormalized ridge solution `Y Gᵀ (GGᵀ + ε_D I)⁻¹`.
pub fn dictionary_ridge_solution(y: &ArrayView2<'_, f64>, g: &ArrayView2<'_, f64>, eps_d: f64) -> Result<Array2<f64>> {
    if !(eps_d > 0.0) {
        return Err(Error::Config(format!("eps_d = {eps_d} must be positive")));
    }
    ridge_solve(g, y, eps_d, "dictionary update")
}

/// Closed-form ridge dictionary update followed by column normalization.
/// Dead columns are reseeded from `seed`.
pub fn update_dictionary_closed(y: &ArrayView2<'_, f64>, g: &ArrayView2<'_, f64>, eps_d: f64, seed: u64) -> Result<Dictionary> {
    Dictionary::from_unnormalized(dictionary_ridge_solution(y, g, eps_d)?, seed)
}

/// Outcome of one projected-gradient dictionary step.
#[derive(Debug, Clone)]
pub struct DictionaryStep {
    pub dictionary: Dictionary,
    /// `L_D = ‖G‖₂² + ε_D` at the step.
    pub lipschitz: f64,
    /// Inverse step size `c_D`.
    pub curvature: f64,
    /// Norm of each column of `D − ∇H_D(D)/c_D` before projection.
    pub pre_projection_norms: Vec<f64>,
}

/// One projected-gradient step on `H_D = ½‖Y − DG‖² + ε_D/2‖D‖²` with step `1/L_D`,
/// then projection onto unit columns.
pub fn update_dictionary_pgd(
    d: &Dictionary,
    y: &ArrayView2<'_, f64>,
    g: &ArrayView2<'_, f64>,
    eps_d: f64,
    seed: u64,
) -> Result<Dictionary> {
    Ok(dictionary_pgd_step(d, y, g, eps_d, 1.0, seed)?.dictionary)
}

/// Projected-gradient dictionary step with `c_D = factor · L_D`.
pub fn dictionary_pgd_step(
    d: &Dictionary,
    y: &ArrayView2<'_, f64>,
    g: &ArrayView2<'_, f64>,
    eps_d: f64,
    factor: f64,
    seed: u64,
) -> Result<DictionaryStep> {
    let (dim, k) = d.view().dim();
    if y.nrows() != dim || g.nrows() != k || g.ncols() != y.ncols() {
        return Err(dim_err(
            "dictionary PGD",
            format!("Y {dim}xN, G {k}xN"),
            format!("Y {}, G {}", shape_str(y), shape_str(g)),
        ));
    }
    if !(eps_d > 0.0) || !(factor > 0.0) {
        return Err(Error::Config("PGD needs eps_d > 0 and a positive step factor".into()));
    }
    let lipschitz = lipschitz_d(g, eps_d);
    let curvature = factor * lipschitz;
    let grad = smooth_d_gradient(&d.view(), g, y, eps_d);
    let mut u = d.atoms().clone();
    u.scaled_add(-1.0 / curvature, &grad);
    let pre_projection_norms = u.axis_iter(Axis(1)).map(|c| c.dot(&c).sqrt()).collect();
    Ok(DictionaryStep {
        dictionary: Dictionary::from_unnormalized(u, seed)?,
        lipschitz,
        curvature,
        pre_projection_norms,
    })
}

/// `A = Q Gᵀ (GGᵀ + (μ_A/α) I)⁻¹`, the minimizer of `α/2‖AG − Q‖² + μ_A/2‖A‖²`.
/// With `α = 0` the minimizer is `A = 0`.
pub fn update_lc_matrix(g: &ArrayView2<'_, f64>, q: &ArrayView2<'_, f64>, alpha: f64, mu_a: f64) -> Result<Array2<f64>> {
    ridge_block(g, q, alpha, mu_a, "LC matrix update")
}

/// `W = H Gᵀ (GGᵀ + (ρ_W/β) I)⁻¹`, the minimizer of `β/2‖WG − H‖² + ρ_W/2‖W‖²`.
pub fn update_classifier(g: &ArrayView2<'_, f64>, h: &ArrayView2<'_, f64>, beta: f64, rho_w: f64) -> Result<Array2<f64>> {
    ridge_block(g, h, beta, rho_w, "classifier update")
}

fn ridge_block(g: &ArrayView2<'_, f64>, target: &ArrayView2<'_, f64>, weight: f64, ridge: f64, what: &'static str) -> Result<Array2<f64>> {
    if !(weight >= 0.0 && weight.is_finite()) || !(ridge > 0.0 && ridge.is_finite()) {
        return Err(Error::Config(format!(
            "{what}: needs a non-negative fit weight and a positive ridge (got {weight}, {ridge})"
        )));
    }
    if target.ncols() != g.ncols() {
        return Err(dim_err(what, format!("{} columns", g.ncols()), shape_str(target)));
    }
    if weight == 0.0 {
        return Ok(Array2::zeros((target.nrows(), g.nrows())));
    }
    ridge_solve(g, target, ridge / weight, what)
}

/// `‖∇f(X)‖_F` for `f(X) = w/2‖XG − T‖² + r/2‖X‖²`; zero at the ridge minimizer.
pub fn ridge_gradient_norm(x: &ArrayView2<'_, f64>, g: &ArrayView2<'_, f64>, target: &ArrayView2<'_, f64>, weight: f64, ridge: f64) -> f64 {
    let mut r = x.dot(g);
    r -= target;
    let mut grad = r.dot(&g.t()) * weight;
    grad.scaled_add(ridge, x);
    frob(&grad.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn lc_identity_codes() {
        let g = Array2::<f64>::eye(3);
        let q = array![[1.0, 0.0, 2.0], [0.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        let (alpha, mu_a) = (2.0, 0.5);
        let a = update_lc_matrix(&g.view(), &q.view(), alpha, mu_a).unwrap();
        let expect = &q / (1.0 + mu_a / alpha);
        assert!((&a - &expect).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn zero_targets_give_zero_transforms() {
        let g = array![[1.0, 2.0, 0.0], [0.0, 1.0, -1.0]];
        let a = update_lc_matrix(&g.view(), &Array2::zeros((2, 3)).view(), 1.0, 0.1).unwrap();
        assert!(a.iter().all(|&v| v == 0.0));
        let w = update_classifier(&g.view(), &Array2::zeros((3, 3)).view(), 1.0, 0.1).unwrap();
        assert_eq!(w.dim(), (3, 2));
        assert!(w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn classifier_identity_codes() {
        let g = Array2::<f64>::eye(2);
        let h = array![[1.0, 0.0], [0.0, 1.0]];
        let w = update_classifier(&g.view(), &h.view(), 4.0, 1.0).unwrap();
        assert!((&w - &(&h / 1.25)).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn zero_fit_weight_gives_zero_transform() {
        let g = Array2::<f64>::eye(2);
        let a = update_lc_matrix(&g.view(), &g.view(), 0.0, 1.0).unwrap();
        assert!(a.iter().all(|&v| v == 0.0));
        assert!(update_lc_matrix(&g.view(), &g.view(), 1.0, 0.0).is_err());
    }

    #[test]
    fn closed_dictionary_zero_features_reseeds() {
        let g = array![[1.0, 0.5], [0.0, 1.0]];
        let y = Array2::<f64>::zeros((3, 2));
        let pre = dictionary_ridge_solution(&y.view(), &g.view(), 0.1).unwrap();
        assert!(pre.iter().all(|&v| v == 0.0));
        let d = update_dictionary_closed(&y.view(), &g.view(), 0.1, 3).unwrap();
        let again = update_dictionary_closed(&y.view(), &g.view(), 0.1, 3).unwrap();
        assert_eq!(d, again);
        assert!(crate::model::is_feasible_dictionary(&d.view()));
    }

    #[test]
    fn closed_dictionary_identity_codes_small_ridge() {
        let y = array![[3.0, 0.0], [4.0, 2.0]];
        let g = Array2::<f64>::eye(2);
        let d = update_dictionary_closed(&y.view(), &g.view(), 1e-12, 0).unwrap();
        assert!((d.atoms()[[0, 0]] - 0.6).abs() < 1e-10);
        assert!((d.atoms()[[1, 0]] - 0.8).abs() < 1e-10);
        assert!((d.atoms()[[1, 1]] - 1.0).abs() < 1e-10);
    }
}
