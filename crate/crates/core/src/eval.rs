//! Test-time encoding, classification and metrics.

use ndarray::{Array2, ArrayView2, Axis};
use serde::Serialize;

use crate::encoders::{fista_lasso, lista_forward, FistaConfig};
use crate::error::{dim_err, shape_str, Error, Result};
use crate::model::{EncoderKind, ModelState};

/// Encodes held-out features with the model's own encoder.
pub fn encode_test(y: &ArrayView2<'_, f64>, state: &ModelState, cfg: &FistaConfig) -> Result<Array2<f64>> {
    if y.nrows() != state.dim() {
        return Err(dim_err("test features", format!("{} rows", state.dim()), shape_str(y)));
    }
    match state.encoder {
        EncoderKind::TopKLista => Ok(lista_forward(y, state)?.0),
        EncoderKind::FistaLasso => {
            Ok(fista_lasso(y, &state.dictionary.view(), state.hp.lambda, state.hp.mu_g, cfg)?.codes)
        }
    }
}

/// `argmax_c (W g_i)_c` per column; ties go to the lowest class index.
pub fn classify(g: &ArrayView2<'_, f64>, w: &ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    if w.ncols() != g.nrows() {
        return Err(dim_err("classify", format!("W with {} columns", g.nrows()), shape_str(w)));
    }
    let scores = w.dot(g);
    Ok(scores
        .axis_iter(Axis(1))
        .map(|col| {
            let mut best = 0;
            for (c, &v) in col.iter().enumerate() {
                if v > col[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub correct: usize,
    pub total: usize,
    /// Mean number of nonzeros per code column.
    pub mean_nonzeros: f64,
    /// Per class: (correct, total).
    pub per_class: Vec<(usize, usize)>,
}

impl Metrics {
    pub fn top1(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    /// Accuracy rendered to four decimals.
    pub fn top1_str(&self) -> String {
        format!("{:.4}", self.top1())
    }

    pub fn class_accuracy(&self, c: usize) -> Option<f64> {
        self.per_class
            .get(c)
            .and_then(|&(ok, n)| (n > 0).then(|| ok as f64 / n as f64))
    }

    /// Structured plain-text rendering, `key=value` per line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "top1={}\ncorrect={}\ntotal={}\nmean_nonzeros={:.4}\n",
            self.top1_str(),
            self.correct,
            self.total,
            self.mean_nonzeros
        );
        for (c, &(ok, n)) in self.per_class.iter().enumerate() {
            let acc = if n > 0 { format!("{:.4}", ok as f64 / n as f64) } else { "-".into() };
            out.push_str(&format!("class_{c}={acc} ({ok}/{n})\n"));
        }
        out
    }
}

/// Accuracy and sparsity statistics. `n_classes` sizes the per-class table
/// (at least one more than the largest label seen).
pub fn metrics(pred: &[usize], truth: &[usize], g: &ArrayView2<'_, f64>, n_classes: usize) -> Result<Metrics> {
    if pred.len() != truth.len() {
        return Err(dim_err("metrics", format!("{} predictions", truth.len()), format!("{}", pred.len())));
    }
    if pred.is_empty() {
        return Err(Error::Data("metrics over zero samples".into()));
    }
    if g.ncols() != truth.len() {
        return Err(dim_err("metrics codes", format!("{} columns", truth.len()), shape_str(g)));
    }
    let classes = truth
        .iter()
        .chain(pred)
        .map(|&c| c + 1)
        .max()
        .unwrap_or(0)
        .max(n_classes);
    let mut per_class = vec![(0usize, 0usize); classes];
    let mut correct = 0;
    for (&p, &t) in pred.iter().zip(truth) {
        per_class[t].1 += 1;
        if p == t {
            per_class[t].0 += 1;
            correct += 1;
        }
    }
    let nonzeros = g.iter().filter(|v| **v != 0.0).count();
    Ok(Metrics {
        correct,
        total: truth.len(),
        mean_nonzeros: nonzeros as f64 / g.ncols() as f64,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn classify_one_hot_and_ties() {
        let w = Array2::<f64>::eye(3);
        let g = array![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]];
        assert_eq!(classify(&g.view(), &w.view()).unwrap(), vec![2, 0]);
    }

    #[test]
    fn metrics_extremes() {
        let g = Array2::<f64>::zeros((2, 3));
        let m = metrics(&[0, 1, 2], &[0, 1, 2], &g.view(), 3).unwrap();
        assert_eq!(m.top1(), 1.0);
        assert_eq!(m.top1_str(), "1.0000");
        let m = metrics(&[2, 2, 2], &[0, 1, 1], &g.view(), 3).unwrap();
        assert_eq!(m.top1(), 0.0);
        assert_eq!(m.class_accuracy(2), None);
        assert!(metrics(&[0], &[0, 1], &g.view(), 2).is_err());
    }

    #[test]
    fn sparsity_count() {
        let g = array![[1.0, 0.0], [2.0, 0.0], [0.0, 3.0]];
        let m = metrics(&[0, 0], &[0, 0], &g.view(), 1).unwrap();
        assert_eq!(m.mean_nonzeros, 1.5);
    }
}
