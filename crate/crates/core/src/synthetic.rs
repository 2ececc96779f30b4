//! Seeded ground-truth generator with class-structured dictionaries.

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub c: usize,
    /// Nonzeros per true code column.
    pub t: usize,
    pub noise_sigma: f64,
    /// Weight of the shared class direction in every atom of that class.
    pub cluster_separation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            d: 32,
            n: 500,
            k: 30,
            c: 3,
            t: 3,
            noise_sigma: 0.05,
            cluster_separation: 3.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 || self.k == 0 || self.c == 0 || self.t == 0 {
            return Err(Error::Config("d, n, k, c and t must all be positive".into()));
        }
        if self.k % self.c != 0 {
            return Err(Error::Config(format!(
                "K = {} is not divisible by C = {}",
                self.k, self.c
            )));
        }
        if self.t > self.k / self.c {
            return Err(Error::Config(format!(
                "T = {} exceeds the class block size K/C = {}",
                self.t,
                self.k / self.c
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite())
            || !(self.cluster_separation >= 0.0 && self.cluster_separation.is_finite())
        {
            return Err(Error::Config("noise_sigma and cluster_separation must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub y: FeatureMatrix,
    pub labels: Vec<usize>,
    /// `d × K`, unit columns; class `c` owns atoms `c·K/C .. (c+1)·K/C`.
    pub d_true: Array2<f64>,
    /// `K × N`, `T` positive entries per column inside the sample's class block.
    pub g_true: Array2<f64>,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| StandardNormal.sample(&mut *rng))
}

fn normalized(mut v: Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    if n > 0.0 {
        v /= n;
    }
    v
}

/// Sample `i` has label `i mod C`. Atoms are `normalize(sep·center_c + z)` with
/// a random unit `center_c` per class and Gaussian `z`; code entries are drawn
/// from `U[0.5, 1.5]`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let block = spec.k / spec.c;
    let mut d_true = Array2::<f64>::zeros((spec.d, spec.k));
    for c in 0..spec.c {
        let center = normalized(gaussian_vec(&mut rng, spec.d));
        for j in c * block..(c + 1) * block {
            let z = gaussian_vec(&mut rng, spec.d) / (spec.d as f64).sqrt();
            let mut atom = normalized(&center * spec.cluster_separation + z);
            if atom.iter().all(|&v| v == 0.0) {
                atom[j % spec.d] = 1.0;
            }
            d_true.column_mut(j).assign(&atom);
        }
    }
    let labels: Vec<usize> = (0..spec.n).map(|i| i % spec.c).collect();
    let mut g_true = Array2::<f64>::zeros((spec.k, spec.n));
    for (i, &c) in labels.iter().enumerate() {
        for j in sample(&mut rng, block, spec.t) {
            g_true[[c * block + j, i]] = rng.random_range(0.5..1.5);
        }
    }
    let mut y = d_true.dot(&g_true);
    if spec.noise_sigma > 0.0 {
        for v in y.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += spec.noise_sigma * e;
        }
    }
    Ok(SyntheticData {
        y: FeatureMatrix::new(y)?,
        labels,
        d_true,
        g_true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_is_exact_and_supports_in_block() {
        let spec = SyntheticSpec {
            noise_sigma: 0.0,
            n: 40,
            ..Default::default()
        };
        let s = generate_synthetic(&spec).unwrap();
        let r = s.d_true.dot(&s.g_true) - s.y.as_array();
        assert_eq!(r.iter().fold(0.0f64, |m, v| m.max(v.abs())), 0.0);
        let block = spec.k / spec.c;
        for (i, &c) in s.labels.iter().enumerate() {
            let support: Vec<usize> = (0..spec.k).filter(|&j| s.g_true[[j, i]] != 0.0).collect();
            assert_eq!(support.len(), spec.t);
            assert!(support.iter().all(|&j| j / block == c));
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = SyntheticSpec { k: 31, ..Default::default() };
        assert!(matches!(generate_synthetic(&bad), Err(Error::Config(_))));
        let bad = SyntheticSpec { t: 11, ..Default::default() };
        assert!(matches!(generate_synthetic(&bad), Err(Error::Config(_))));
    }
}
