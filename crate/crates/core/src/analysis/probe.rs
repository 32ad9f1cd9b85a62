//! Linear probe: multinomial logistic regression on frozen features.

use serde::{Deserialize, Serialize};

use crate::error::{ClampError, Result};
use crate::linalg::{dot, Matrix};
use crate::nn::lr_schedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    /// L2 penalty on the weights.
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { epochs: 300, lr: 1.0, l2: 0.0 }
    }
}

/// Per-feature standardization fitted on the training features.
struct Standardizer {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &Matrix) -> Self {
        let mean = x.column_mean();
        let mut var = vec![0.0; x.cols()];
        for r in 0..x.rows() {
            for ((v, a), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *v += (a - m) * (a - m);
            }
        }
        let inv_std = var
            .iter()
            .map(|v| {
                let sd = (v / x.rows() as f64).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, inv_std }
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.inv_std) {
                *v = (*v - m) * s;
            }
        }
        out
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// Trains a softmax classifier on `train_x` by full-batch gradient descent
/// with a cosine-decayed step and returns top-1 accuracy on `test_x`.
pub fn linear_probe(
    train_x: &Matrix,
    train_y: &[u16],
    test_x: &Matrix,
    test_y: &[u16],
    cfg: &ProbeConfig,
) -> Result<f64> {
    if train_x.rows() != train_y.len() || test_x.rows() != test_y.len() {
        return Err(ClampError::validation("feature and label counts differ"));
    }
    if train_x.cols() != test_x.cols() {
        return Err(ClampError::validation(format!(
            "train features are {} wide, test features {}",
            train_x.cols(),
            test_x.cols()
        )));
    }
    if test_y.is_empty() {
        return Err(ClampError::validation("empty test set"));
    }
    let mut labels: Vec<u16> = train_y.to_vec();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() < 2 {
        return Err(ClampError::validation("linear probe needs at least two classes"));
    }
    if let Some(bad) = test_y.iter().find(|y| labels.binary_search(y).is_err()) {
        return Err(ClampError::validation(format!("test label {bad} never appears in the training labels")));
    }
    let class_of = |y: u16| labels.binary_search(&y).unwrap();
    let k = labels.len();

    let scaler = Standardizer::fit(train_x);
    let xs = scaler.apply(train_x);
    let xt = scaler.apply(test_x);
    let (n, h) = xs.shape();
    // weights: k × (h + 1), last column is the bias
    let mut w = Matrix::zeros(k, h + 1);
    let mut grad = Matrix::zeros(k, h + 1);
    let mut logits = vec![0.0; k];

    for epoch in 0..cfg.epochs {
        grad.as_mut_slice().iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            let x = xs.row(i);
            for (c, l) in logits.iter_mut().enumerate() {
                *l = dot(&w.row(c)[..h], x) + w[(c, h)];
            }
            softmax_in_place(&mut logits);
            logits[class_of(train_y[i])] -= 1.0;
            for (c, &p) in logits.iter().enumerate() {
                let g = grad.row_mut(c);
                for (gv, xv) in g[..h].iter_mut().zip(x) {
                    *gv += p * xv;
                }
                g[h] += p;
            }
        }
        let lr = lr_schedule(epoch, 0, cfg.epochs, cfg.lr);
        let inv_n = 1.0 / n as f64;
        for c in 0..k {
            for j in 0..=h {
                let decay = if j < h { cfg.l2 * w[(c, j)] } else { 0.0 };
                w[(c, j)] -= lr * (grad[(c, j)] * inv_n + decay);
            }
        }
    }

    let correct = (0..xt.rows())
        .filter(|&i| {
            let x = xt.row(i);
            let best = (0..k)
                .map(|c| dot(&w.row(c)[..h], x) + w[(c, h)])
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(c, _)| c)
                .unwrap();
            labels[best] == test_y[i]
        })
        .count();
    Ok(correct as f64 / xt.rows() as f64)
}
