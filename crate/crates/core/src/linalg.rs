//! Small dense linear-algebra kernels: SPD solves, spectral norms and the
//! elementwise proximal operators shared by the encoders.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};

/// Upper bound on power-iteration sweeps.
pub const POWER_MAX_ITERS: usize = 2000;
/// Relative change of the Rayleigh quotient at which power iteration stops.
pub const POWER_REL_TOL: f64 = 1e-12;

pub fn frob_sq(m: &ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub fn frob(m: &ArrayView2<'_, f64>) -> f64 {
    frob_sq(m).sqrt()
}

pub fn l1(m: &ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

pub fn all_finite(m: &ArrayView2<'_, f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix.
pub fn sym_psd_top_eigenvalue(m: &ArrayView2<'_, f64>) -> f64 {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    if n == 0 || m.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    // fixed start vector; generic enough to never be orthogonal to the top eigenvector in practice
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
    let mut v: Array1<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let nv = v.dot(&v).sqrt();
    v /= nv;

    let mut lambda = 0.0f64;
    for _ in 0..POWER_MAX_ITERS {
        let mv = m.dot(&v);
        let next = v.dot(&mv);
        let norm = mv.dot(&mv).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = mv / norm;
        let done = (next - lambda).abs() <= POWER_REL_TOL * next.abs().max(f64::MIN_POSITIVE);
        lambda = next;
        if done {
            break;
        }
    }
    lambda.max(0.0)
}

/// `‖M‖₂²`, i.e. the largest eigenvalue of `MᵀM` (or `MMᵀ`, whichever is smaller).
pub fn spectral_norm_sq(m: &ArrayView2<'_, f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = if m.nrows() <= m.ncols() {
        m.dot(&m.t())
    } else {
        m.t().dot(m)
    };
    sym_psd_top_eigenvalue(&gram.view())
}

pub fn spectral_norm(m: &ArrayView2<'_, f64>) -> f64 {
    spectral_norm_sq(m).sqrt()
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(dim_err("cholesky", "square matrix", format!("{}x{}", n, m.ncols())));
    }
    let max_diag = m.diag().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let floor = max_diag * 1e-14;
    let mut l = Array2::<f64>::zeros((n, n));
    let mut min_pivot = f64::INFINITY;
    for j in 0..n {
        let mut diag = m[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        min_pivot = min_pivot.min(diag);
        if !(diag > floor) || !diag.is_finite() {
            return Err(Error::Singular(format!(
                "pivot {j} of {n} is {diag:e} (largest diagonal {max_diag:e}, floor {floor:e})"
            )));
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut s = m[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Ok(l)
}

fn cholesky_solve_vec(l: &Array2<f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.to_owned();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// Solves `X · M = R` for `X`, where `M` is symmetric positive definite.
pub fn solve_right_spd(r: &ArrayView2<'_, f64>, m: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if r.ncols() != m.nrows() {
        return Err(dim_err(
            "solve_right_spd",
            format!("rhs with {} columns", m.nrows()),
            format!("{}x{}", r.nrows(), r.ncols()),
        ));
    }
    let l = cholesky(m)?;
    // M Xᵀ = Rᵀ, one right-hand side per row of R
    let mut x = Array2::<f64>::zeros(r.raw_dim());
    for (i, row) in r.axis_iter(Axis(0)).enumerate() {
        let sol = cholesky_solve_vec(&l, row);
        x.row_mut(i).assign(&sol);
    }
    Ok(x)
}
