//! The self-supervised training loop.
//!
//! Each step samples `b` images, draws `m` augmented views of each, embeds
//! them, and descends the log packing loss. After every epoch the
//! sub-manifolds of a held-out validation split are measured: mean neighbor
//! count, mean manifold size and mean centroid separation.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::probe::{linear_probe, ProbeConfig};
use crate::dataset::Dataset;
use crate::error::{ClampError, Result};
use crate::geometry::{center_and_normalize, summarize_batch};
use crate::linalg::{distance, Matrix};
use crate::nn::{lr_schedule, DenseNet, OptimizerKind, OptimizerState};
use crate::packing::{batch_loss_gradient, neighbor_counts};
use crate::rng::{rng_for, Rng};

const STREAM_SPLIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_TRAIN_VIEWS: u64 = 3;
const STREAM_VAL_VIEWS: u64 = 4;

/// Vector-data augmentation pipelines.
///
/// The first half of the views gets additive Gaussian noise only; the second
/// half additionally has coordinates zeroed with probability `dropout` and
/// is rescaled by a factor drawn uniformly from `[scale_min, scale_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub noise_sigma: f64,
    pub dropout: f64,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { noise_sigma: 0.05, dropout: 0.02, scale_min: 0.5, scale_max: 1.5 }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        Self { noise_sigma: 0.0, dropout: 0.0, scale_min: 1.0, scale_max: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) {
            return Err(ClampError::validation(format!(
                "train.aug.noise_sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ClampError::validation(format!(
                "train.aug.dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max) {
            return Err(ClampError::validation(format!(
                "train.aug.scale range [{}, {}] is invalid",
                self.scale_min, self.scale_max
            )));
        }
        Ok(())
    }
}

/// Draws `m` views of `sample`: views `0..m/2` from the noise-only pipeline,
/// the rest from the noise + dropout + scaling pipeline.
pub fn augment_views(sample: &[f64], m: usize, cfg: &AugmentConfig, rng: &mut Rng) -> Result<Matrix> {
    if m == 0 || m % 2 != 0 {
        return Err(ClampError::validation(format!("number of views must be even and positive, got {m}")));
    }
    let d = sample.len();
    let mut out = Matrix::zeros(m, d);
    for k in 0..m {
        let row = out.row_mut(k);
        for (o, &x) in row.iter_mut().zip(sample) {
            *o = if cfg.noise_sigma > 0.0 {
                x + cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                x
            };
        }
        if k >= m / 2 {
            if cfg.dropout > 0.0 {
                for o in row.iter_mut() {
                    if rng.random::<f64>() < cfg.dropout {
                        *o = 0.0;
                    }
                }
            }
            let scale = if cfg.scale_max > cfg.scale_min {
                rng.random_range(cfg.scale_min..cfg.scale_max)
            } else {
                cfg.scale_min
            };
            if scale != 1.0 {
                row.iter_mut().for_each(|o| *o *= scale);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Backbone widths after the input layer; the last is the representation width.
    pub backbone: Vec<usize>,
    /// Projection head widths; the last is the embedding width.
    pub head: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { backbone: vec![64, 32], head: vec![32, 16] }
    }
}

impl ModelConfig {
    pub fn build(&self, input_dim: usize, seed: u64) -> Result<DenseNet> {
        if self.backbone.is_empty() || self.head.is_empty() {
            return Err(ClampError::validation("model.backbone and model.head each need at least one width"));
        }
        let widths: Vec<usize> = std::iter::once(input_dim).chain(self.backbone.iter().copied()).collect();
        DenseNet::mlp(&widths, &self.head, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub views: usize,
    pub r_s: f64,
    pub epochs: usize,
    pub warmup_steps: usize,
    /// Scaled by `batch_size / 256` to give the peak learning rate.
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub trust_coefficient: f64,
    pub optimizer: OptimizerKind,
    pub augmentation: AugmentConfig,
    pub model: ModelConfig,
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            views: 4,
            r_s: 3.0,
            epochs: 30,
            warmup_steps: 90,
            base_lr: 0.005,
            momentum: 0.9,
            weight_decay: 1e-6,
            trust_coefficient: crate::nn::optim::DEFAULT_TRUST,
            optimizer: OptimizerKind::Lars,
            augmentation: AugmentConfig::default(),
            model: ModelConfig::default(),
            seed: 0,
            dataset: None,
            val_fraction: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(ClampError::validation(format!(
                "train.b must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.views < 2 || self.views % 2 != 0 {
            return Err(ClampError::validation(format!(
                "train.m must be even and at least 2, got {}",
                self.views
            )));
        }
        if !(self.r_s > 0.0) {
            return Err(ClampError::validation(format!("train.r_s must be positive, got {}", self.r_s)));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(ClampError::validation(format!(
                "train.val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if !(self.base_lr >= 0.0) {
            return Err(ClampError::validation(format!(
                "train.base_lr must be nonnegative, got {}",
                self.base_lr
            )));
        }
        self.augmentation.validate()
    }

    /// Peak learning rate after batch-size scaling.
    pub fn peak_lr(&self) -> f64 {
        self.base_lr * self.batch_size as f64 / 256.0
    }
}

/// Diagnostics recorded at the end of each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub mean_log_loss: f64,
    /// Validation: mean number of overlapping sub-manifolds per sub-manifold.
    pub mean_neighbors: f64,
    /// Validation: mean of `√(Tr Λ_i / m)`.
    pub mean_manifold_size: f64,
    /// Validation: mean pairwise distance between sub-manifold centroids.
    pub mean_centroid_distance: f64,
    pub absorbing_batch_fraction: f64,
    pub wall_seconds: f64,
}

impl MetricsRecord {
    /// Equality on everything except wall-clock time.
    pub fn same_values(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.wall_seconds = other.wall_seconds;
        a == *other
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Backbone and head. Use [`DenseNet::backbone`] for evaluation.
    pub net: DenseNet,
    pub initial_net: DenseNet,
    pub metrics: Vec<MetricsRecord>,
    pub validation_indices: Vec<usize>,
    pub train_indices: Vec<usize>,
}

/// Seeded train/validation split. The validation part holds at least two rows.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, &[STREAM_SPLIT]));
    let n_val = ((n as f64 * val_fraction).ceil() as usize).clamp(2.min(n), n);
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

/// Views of the given samples, stacked image-major into a `(len·m) × d` matrix.
pub fn stack_views(
    dataset: &Dataset,
    indices: &[usize],
    m: usize,
    aug: &AugmentConfig,
    seed: u64,
    stream: &[u64],
) -> Result<Matrix> {
    let d = dataset.dim();
    let mut data = Vec::with_capacity(indices.len() * m * d);
    for &i in indices {
        let counters: Vec<u64> = stream.iter().copied().chain([i as u64]).collect();
        let mut rng = rng_for(seed, &counters);
        let views = augment_views(&dataset.sample(i), m, aug, &mut rng)?;
        data.extend_from_slice(views.as_slice());
    }
    Ok(Matrix::from_vec(indices.len() * m, d, data))
}

/// Validation sub-manifold statistics of `net`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationStats {
    pub mean_neighbors: f64,
    pub mean_manifold_size: f64,
    pub mean_centroid_distance: f64,
}

pub fn validation_stats(
    net: &DenseNet,
    dataset: &Dataset,
    indices: &[usize],
    cfg: &TrainConfig,
) -> Result<ValidationStats> {
    let inputs = stack_views(dataset, indices, cfg.views, &cfg.augmentation, cfg.seed, &[STREAM_VAL_VIEWS])?;
    let emb = net.forward(&inputs)?.embeddings;
    let batch = center_and_normalize(&emb, cfg.views)?;
    let summaries = summarize_batch(&batch, cfg.r_s);
    let counts = neighbor_counts(&summaries);
    let n = summaries.len() as f64;
    let mut dist_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..summaries.len() {
        for j in (i + 1)..summaries.len() {
            dist_sum += distance(&summaries[i].centroid, &summaries[j].centroid);
            pairs += 1;
        }
    }
    Ok(ValidationStats {
        mean_neighbors: counts.iter().sum::<usize>() as f64 / n,
        mean_manifold_size: summaries.iter().map(|s| (s.trace / cfg.views as f64).sqrt()).sum::<f64>() / n,
        mean_centroid_distance: if pairs > 0 { dist_sum / pairs as f64 } else { 0.0 },
    })
}

/// Reads the dataset named in `cfg` and trains on it.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    let path = cfg.dataset.as_ref().ok_or_else(|| ClampError::validation("data.path: no dataset given"))?;
    let dataset = Dataset::read(path)?;
    train_on(cfg, &dataset, |_, _| Ok(()))
}

/// Trains on an in-memory dataset. `on_epoch` sees every metrics record
/// and the network at that point, e.g. to stream metrics or checkpoints.
pub fn train_on<F>(cfg: &TrainConfig, dataset: &Dataset, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(&MetricsRecord, &DenseNet) -> Result<()>,
{
    cfg.validate()?;
    let mut net = cfg.model.build(dataset.dim(), cfg.seed)?;
    let initial_net = net.clone();
    let (train_idx, val_idx) = split_indices(dataset.len(), cfg.val_fraction, cfg.seed);
    let steps_per_epoch = train_idx.len() / cfg.batch_size;
    if cfg.epochs > 0 && steps_per_epoch == 0 {
        return Err(ClampError::validation(format!(
            "train.b = {} exceeds the {} training rows",
            cfg.batch_size,
            train_idx.len()
        )));
    }
    if val_idx.len() < 2 {
        return Err(ClampError::validation("validation split has fewer than 2 rows"));
    }
    let mut opt = OptimizerState::new(
        cfg.optimizer,
        &net,
        cfg.base_lr,
        cfg.momentum,
        cfg.weight_decay,
        cfg.trust_coefficient,
    )?;
    let total_steps = cfg.epochs * steps_per_epoch;
    let peak = cfg.peak_lr();
    let mut step = 0usize;
    let mut metrics = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut order = train_idx.clone();
        order.shuffle(&mut rng_for(cfg.seed, &[STREAM_SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut absorbing = 0usize;
        for (batch_no, chunk) in order.chunks_exact(cfg.batch_size).enumerate() {
            let inputs = stack_views(
                dataset,
                chunk,
                cfg.views,
                &cfg.augmentation,
                cfg.seed,
                &[STREAM_TRAIN_VIEWS, epoch as u64],
            )?;
            let fwd = net.forward(&inputs)?;
            let batch = center_and_normalize(&fwd.embeddings, cfg.views)
                .map_err(|e| ClampError::NonFinite { epoch, batch: batch_no, detail: e.to_string() })?;
            let report = batch_loss_gradient(&batch, cfg.r_s)?;
            if !report.log_loss.is_finite() {
                return Err(ClampError::NonFinite {
                    epoch,
                    batch: batch_no,
                    detail: format!("overlap energy {} over samples {:?}", report.overlap_energy, chunk),
                });
            }
            loss_sum += report.log_loss;
            if report.absorbing {
                absorbing += 1;
            } else {
                let grad = report.grad_raw.expect("gradient requested");
                let grads = net.backward(&fwd.tape, &grad)?;
                opt.step(&mut net, &grads, lr_schedule(step, cfg.warmup_steps, total_steps, peak))?;
            }
            step += 1;
        }
        let val = validation_stats(&net, dataset, &val_idx, cfg)?;
        let record = MetricsRecord {
            epoch: epoch + 1,
            mean_log_loss: loss_sum / steps_per_epoch as f64,
            mean_neighbors: val.mean_neighbors,
            mean_manifold_size: val.mean_manifold_size,
            mean_centroid_distance: val.mean_centroid_distance,
            absorbing_batch_fraction: absorbing as f64 / steps_per_epoch as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record, &net)?;
        metrics.push(record);
    }

    Ok(TrainOutcome { net, initial_net, metrics, validation_indices: val_idx, train_indices: train_idx })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    RS,
    M,
    Lr,
}

impl std::str::FromStr for SweepAxis {
    type Err = ClampError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r_s" => Ok(Self::RS),
            "m" => Ok(Self::M),
            "lr" => Ok(Self::Lr),
            other => Err(ClampError::validation(format!("sweep.axis must be r_s, m or lr, got {other:?}"))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::RS => "r_s",
            Self::M => "m",
            Self::Lr => "lr",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub value: f64,
    pub final_metrics: Option<MetricsRecord>,
    pub probe_accuracy: f64,
}

/// Applies one sweep value to a copy of `template`.
pub fn with_axis_value(template: &TrainConfig, axis: SweepAxis, value: f64) -> Result<TrainConfig> {
    let mut cfg = template.clone();
    match axis {
        SweepAxis::RS => cfg.r_s = value,
        SweepAxis::Lr => cfg.base_lr = value,
        SweepAxis::M => {
            if value.fract() != 0.0 || value < 2.0 {
                return Err(ClampError::validation(format!("sweep value {value} is not a valid view count")));
            }
            cfg.views = value as usize;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Trains once per value and scores each backbone with a linear probe on
/// the test set. Runs are independent and execute in parallel.
pub fn sweep(
    template: &TrainConfig,
    axis: SweepAxis,
    values: &[f64],
    train_set: &Dataset,
    test_set: &Dataset,
    probe: &ProbeConfig,
) -> Result<Vec<SweepResult>> {
    if values.is_empty() {
        return Err(ClampError::validation("sweep.values is empty"));
    }
    let configs = values.iter().map(|&v| with_axis_value(template, axis, v)).collect::<Result<Vec<_>>>()?;
    configs
        .par_iter()
        .zip(values.par_iter())
        .map(|(cfg, &value)| {
            let out = train_on(cfg, train_set, |_, _| Ok(()))?;
            let backbone = out.net.backbone();
            let train_x = backbone.represent(&train_set.features())?;
            let test_x = backbone.represent(&test_set.features())?;
            let accuracy = linear_probe(&train_x, train_set.labels(), &test_x, test_set.labels(), probe)?;
            Ok(SweepResult {
                axis,
                value,
                final_metrics: out.metrics.last().cloned(),
                probe_accuracy: accuracy,
            })
        })
        .collect()
}
