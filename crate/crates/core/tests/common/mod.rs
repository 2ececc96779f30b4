//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use pathfinding::prelude::{kuhn_munkres, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut *rng))
}

pub fn unit_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut m = gaussian(rng, rows, cols);
    for mut c in m.axis_iter_mut(Axis(1)) {
        let n = c.dot(&c).sqrt();
        c /= n;
    }
    m
}

pub fn labels(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..c)).collect()
}

pub fn to_na(m: &ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

pub fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    let scale = b.mapv(|v| v * v).sum().sqrt().max(1e-300);
    diff / scale
}

/// `T Gᵀ (GGᵀ + r I)⁻¹` via an LU solve of the transposed normal equations.
pub fn ridge_oracle(g: &ArrayView2<'_, f64>, target: &ArrayView2<'_, f64>, ridge: f64) -> Array2<f64> {
    let gn = to_na(g);
    let tn = to_na(target);
    let k = gn.nrows();
    let m = &gn * gn.transpose() + DMatrix::identity(k, k) * ridge;
    let rhs = (&tn * gn.transpose()).transpose();
    let x = m.lu().solve(&rhs).expect("ridge system is nonsingular");
    from_na(&x.transpose())
}

/// Largest singular value by SVD.
pub fn spectral_norm_oracle(m: &ArrayView2<'_, f64>) -> f64 {
    to_na(m).singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Cyclic coordinate descent on `½‖y − Dg‖² + μ/2‖g‖² + λ‖g‖₁`, column by column.
pub fn cd_elastic_net(y: &ArrayView2<'_, f64>, d: &ArrayView2<'_, f64>, lambda: f64, mu: f64, sweeps: usize) -> Array2<f64> {
    let k = d.ncols();
    let norms: Vec<f64> = d.axis_iter(Axis(1)).map(|c| c.dot(&c)).collect();
    let mut out = Array2::<f64>::zeros((k, y.ncols()));
    for (i, yc) in y.axis_iter(Axis(1)).enumerate() {
        let mut g = Array1::<f64>::zeros(k);
        let mut r = yc.to_owned();
        for _ in 0..sweeps {
            let mut moved = 0.0f64;
            for j in 0..k {
                let dj = d.column(j);
                let rho = dj.dot(&r) + norms[j] * g[j];
                let new = soft(rho, lambda) / (norms[j] + mu);
                let delta = new - g[j];
                if delta != 0.0 {
                    r.scaled_add(-delta, &dj);
                    g[j] = new;
                    moved = moved.max(delta.abs());
                }
            }
            if moved < 1e-15 {
                break;
            }
        }
        out.column_mut(i).assign(&g);
    }
    out
}

pub fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Central difference of `f` at `x` along `dir`.
pub fn central_diff(f: impl Fn(&Array2<f64>) -> f64, x: &Array2<f64>, dir: &Array2<f64>, h: f64) -> f64 {
    let plus = x + &(dir * h);
    let minus = x - &(dir * h);
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Mean `|⟨d_i, t_j⟩|` over a maximum-weight one-to-one matching of atoms.
pub fn matched_mean_abs_inner(learned: &ArrayView2<'_, f64>, truth: &ArrayView2<'_, f64>) -> f64 {
    let k = truth.ncols();
    assert_eq!(learned.ncols(), k);
    let sim = truth.t().dot(learned).mapv(f64::abs);
    let scale = 1e9;
    let weights = Matrix::from_fn(k, k, |(i, j)| (sim[[i, j]] * scale).round() as i64);
    let (_, assign) = kuhn_munkres(&weights);
    assign.iter().enumerate().map(|(i, &j)| sim[[i, j]]).sum::<f64>() / k as f64
}
