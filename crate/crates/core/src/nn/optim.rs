//! SGD with momentum, LARS, and the warmup-cosine learning-rate schedule.
//!
//! Biases are never weight-decayed and never trust-ratio scaled.

use serde::{Deserialize, Serialize};

use super::net::{DenseNet, Gradients};
use crate::error::{ClampError, Result};
use crate::linalg::norm;

pub const DEFAULT_TRUST: f64 = 0.001;
const TRUST_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Lars,
}

impl std::str::FromStr for OptimizerKind {
    type Err = ClampError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" | "sgd_momentum" => Ok(Self::SgdMomentum),
            "lars" => Ok(Self::Lars),
            other => Err(ClampError::validation(format!(
                "unknown optimizer {other:?} (expected sgd_momentum or lars)"
            ))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SgdMomentum => "sgd_momentum",
            Self::Lars => "lars",
        })
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub momentum: f64,
    pub weight_decay: f64,
    pub trust_coefficient: f64,
    pub base_lr: f64,
    weight_buffers: Vec<Vec<f64>>,
    bias_buffers: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(
        kind: OptimizerKind,
        net: &DenseNet,
        base_lr: f64,
        momentum: f64,
        weight_decay: f64,
        trust_coefficient: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(ClampError::validation(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        if !(weight_decay >= 0.0) {
            return Err(ClampError::validation(format!(
                "weight decay must be nonnegative, got {weight_decay}"
            )));
        }
        if kind == OptimizerKind::Lars && !(trust_coefficient > 0.0) {
            return Err(ClampError::validation(format!(
                "LARS trust coefficient must be positive, got {trust_coefficient}"
            )));
        }
        Ok(Self {
            kind,
            momentum,
            weight_decay,
            trust_coefficient,
            base_lr,
            weight_buffers: net.layers().iter().map(|l| vec![0.0; l.weights.as_slice().len()]).collect(),
            bias_buffers: net.layers().iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        })
    }

    /// Applies one update with learning rate `lr_t`.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients, lr_t: f64) -> Result<()> {
        if grads.layers.len() != net.layers().len() || self.weight_buffers.len() != net.layers().len() {
            return Err(ClampError::validation("gradient and network layer counts differ"));
        }
        for (k, layer) in net.layers_mut().iter_mut().enumerate() {
            let g = &grads.layers[k];
            match self.kind {
                OptimizerKind::Lars => {
                    lars_update(
                        layer.weights.as_mut_slice(),
                        g.weights.as_slice(),
                        &mut self.weight_buffers[k],
                        lr_t,
                        self.momentum,
                        self.weight_decay,
                        self.trust_coefficient,
                    );
                }
                OptimizerKind::SgdMomentum => {
                    sgd_update(
                        layer.weights.as_mut_slice(),
                        g.weights.as_slice(),
                        &mut self.weight_buffers[k],
                        lr_t,
                        self.momentum,
                        self.weight_decay,
                    );
                }
            }
            sgd_update(&mut layer.bias, &g.bias, &mut self.bias_buffers[k], lr_t, self.momentum, 0.0);
        }
        Ok(())
    }
}

/// `trust · ‖w‖ / (‖g‖ + ε)`.
pub fn lars_local_lr(weights: &[f64], grad: &[f64], trust: f64) -> f64 {
    trust * norm(weights) / (norm(grad) + TRUST_EPS)
}

/// LARS update of one weight tensor in place. Returns the local learning rate.
pub fn lars_update(
    weights: &mut [f64],
    grad: &[f64],
    buffer: &mut [f64],
    lr_t: f64,
    momentum: f64,
    weight_decay: f64,
    trust: f64,
) -> f64 {
    let decayed: Vec<f64> = grad.iter().zip(weights.iter()).map(|(g, w)| g + weight_decay * w).collect();
    let local = lars_local_lr(weights, &decayed, trust);
    for ((w, b), g) in weights.iter_mut().zip(buffer.iter_mut()).zip(&decayed) {
        *b = momentum * *b + local * lr_t * g;
        *w -= *b;
    }
    local
}

/// SGD with momentum and optional weight decay, in place.
pub fn sgd_update(
    params: &mut [f64],
    grad: &[f64],
    buffer: &mut [f64],
    lr_t: f64,
    momentum: f64,
    weight_decay: f64,
) {
    for ((p, b), g) in params.iter_mut().zip(buffer.iter_mut()).zip(grad) {
        *b = momentum * *b + lr_t * (g + weight_decay * *p);
        *p -= *b;
    }
}

/// Linear warmup from 0 to `lr_max`, then cosine decay to 0 at `total`.
pub fn lr_schedule(t: usize, warmup: usize, total: usize, lr_max: f64) -> f64 {
    if t < warmup {
        return lr_max * t as f64 / warmup as f64;
    }
    let span = total.saturating_sub(warmup).max(1) as f64;
    let progress = ((t - warmup) as f64 / span).min(1.0);
    lr_max * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}
