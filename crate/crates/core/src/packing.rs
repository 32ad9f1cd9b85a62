//! Pairwise short-range repulsion between sub-manifolds.
//!
//! Each image's views form a sub-manifold summarized by its centroid `q_i`
//! and radius `r_i`. Two sub-manifolds interact only when their centroids
//! are closer than `r_i + r_j`, with energy `(1 − d/(r_i + r_j))²`. The
//! overlap energy sums this over ordered pairs `i ≠ j` and the training
//! objective is its logarithm.
//!
//! The gradient is propagated analytically back to the raw embeddings,
//! through the radii as well as the centroids, the unit-norm projection and
//! the batch-mean centering.

use serde::Serialize;

use crate::error::{ClampError, Result};
use crate::geometry::{summarize_batch, EmbeddingBatch, SubManifoldSummary};
use crate::linalg::{axpy, distance, dot, Matrix};

/// Added to the overlap energy before taking the logarithm.
pub const LOG_EPS: f64 = 1e-12;

/// One ordered pair of overlapping sub-manifolds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapPair {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct PackingLossReport {
    pub overlap_energy: f64,
    pub log_loss: f64,
    /// `∂ log_loss / ∂ raw`, same layout as the batch's raw rows. Only set
    /// by [`batch_loss_gradient`].
    pub grad_raw: Option<Matrix>,
    pub pairs: Vec<OverlapPair>,
    pub absorbing: bool,
    pub per_manifold_neighbors: Vec<usize>,
    pub summaries: Vec<SubManifoldSummary>,
}

impl PackingLossReport {
    pub fn mean_neighbors(&self) -> f64 {
        let n = self.per_manifold_neighbors.len().max(1);
        self.per_manifold_neighbors.iter().sum::<usize>() as f64 / n as f64
    }
}

/// Repulsive energy between two spheres of radii `r_i`, `r_j` at distance `dist`.
#[inline]
pub fn pair_energy(dist: f64, r_i: f64, r_j: f64) -> f64 {
    pair_energy_parts(dist, r_i + r_j).0
}

/// Energy and its partial derivatives with respect to the distance and the
/// radius sum: `(E, ∂E/∂d, ∂E/∂s)`.
#[inline]
pub fn pair_energy_parts(dist: f64, radius_sum: f64) -> (f64, f64, f64) {
    if radius_sum > 0.0 && dist < radius_sum {
        let t = 1.0 - dist / radius_sum;
        (t * t, -2.0 * t / radius_sum, 2.0 * t * dist / (radius_sum * radius_sum))
    } else {
        (0.0, 0.0, 0.0)
    }
}

fn check_batch(batch: &EmbeddingBatch, r_s: f64) -> Result<()> {
    if batch.images() < 2 {
        return Err(ClampError::validation(format!(
            "packing loss needs at least 2 images, got {}",
            batch.images()
        )));
    }
    if !(r_s > 0.0) || !r_s.is_finite() {
        return Err(ClampError::validation(format!("r_s must be positive, got {r_s}")));
    }
    Ok(())
}

/// Overlap energy, log loss, overlapping pairs and neighbor counts.
pub fn batch_loss(batch: &EmbeddingBatch, r_s: f64) -> Result<PackingLossReport> {
    check_batch(batch, r_s)?;
    Ok(evaluate(batch, r_s, false))
}

/// [`batch_loss`] plus the exact gradient with respect to the raw embeddings.
pub fn batch_loss_gradient(batch: &EmbeddingBatch, r_s: f64) -> Result<PackingLossReport> {
    check_batch(batch, r_s)?;
    Ok(evaluate(batch, r_s, true))
}

/// Number of other sub-manifolds each one overlaps.
pub fn neighbor_count(batch: &EmbeddingBatch, r_s: f64) -> Result<Vec<usize>> {
    check_batch(batch, r_s)?;
    Ok(neighbor_counts(&summarize_batch(batch, r_s)))
}

/// Neighbor counts from precomputed summaries.
pub fn neighbor_counts(summaries: &[SubManifoldSummary]) -> Vec<usize> {
    let b = summaries.len();
    let mut counts = vec![0; b];
    for i in 0..b {
        for j in (i + 1)..b {
            let d = distance(&summaries[i].centroid, &summaries[j].centroid);
            if d < summaries[i].radius + summaries[j].radius {
                counts[i] += 1;
                counts[j] += 1;
            }
        }
    }
    counts
}

/// Loss report computed directly from sub-manifold summaries, without a
/// gradient. [`batch_loss`] is this applied to the summaries of a batch.
pub fn summary_loss(summaries: Vec<SubManifoldSummary>) -> PackingLossReport {
    let pass = pair_pass(&summaries, false);
    pass.into_report(summaries, None)
}

struct PairPass {
    overlap: f64,
    pairs: Vec<OverlapPair>,
    neighbors: Vec<usize>,
    /// Gradients of the overlap energy w.r.t. centroids and radii.
    g_centroid: Vec<f64>,
    g_radius: Vec<f64>,
}

impl PairPass {
    fn into_report(self, summaries: Vec<SubManifoldSummary>, grad_raw: Option<Matrix>) -> PackingLossReport {
        PackingLossReport {
            overlap_energy: self.overlap,
            log_loss: (self.overlap + LOG_EPS).ln(),
            grad_raw,
            pairs: self.pairs,
            absorbing: self.overlap == 0.0,
            per_manifold_neighbors: self.neighbors,
            summaries,
        }
    }
}

fn pair_pass(summaries: &[SubManifoldSummary], with_grad: bool) -> PairPass {
    let b = summaries.len();
    let dim = summaries.first().map_or(0, |s| s.centroid.len());
    let mut overlap = 0.0;
    let mut pairs = Vec::new();
    let mut neighbors = vec![0usize; b];
    let mut g_centroid = if with_grad { vec![0.0; b * dim] } else { Vec::new() };
    let mut g_radius = vec![0.0; if with_grad { b } else { 0 }];
    let mut diff = vec![0.0; dim];

    for i in 0..b {
        let qi = &summaries[i].centroid;
        for j in (i + 1)..b {
            let qj = &summaries[j].centroid;
            let s = summaries[i].radius + summaries[j].radius;
            let mut sq = 0.0;
            for ((dv, a), c) in diff.iter_mut().zip(qi).zip(qj) {
                *dv = a - c;
                sq += *dv * *dv;
            }
            let d = sq.sqrt();
            if !(s > 0.0 && d < s) {
                continue;
            }
            let (e, de_dd, de_ds) = pair_energy_parts(d, s);
            // (i, j) and (j, i) both appear in the ordered sum.
            overlap += 2.0 * e;
            neighbors[i] += 1;
            neighbors[j] += 1;
            pairs.push(OverlapPair { i, j, distance: d, energy: e });
            pairs.push(OverlapPair { i: j, j: i, distance: d, energy: e });
            if with_grad {
                if d > 0.0 {
                    let coef = 2.0 * de_dd / d;
                    axpy(coef, &diff, &mut g_centroid[i * dim..(i + 1) * dim]);
                    axpy(-coef, &diff, &mut g_centroid[j * dim..(j + 1) * dim]);
                }
                g_radius[i] += 2.0 * de_ds;
                g_radius[j] += 2.0 * de_ds;
            }
        }
    }
    PairPass { overlap, pairs, neighbors, g_centroid, g_radius }
}

fn evaluate(batch: &EmbeddingBatch, r_s: f64, with_grad: bool) -> PackingLossReport {
    let summaries = summarize_batch(batch, r_s);
    let pass = pair_pass(&summaries, with_grad);
    let grad_raw = with_grad.then(|| {
        if pass.overlap == 0.0 {
            Matrix::zeros(batch.images() * batch.views(), batch.dim())
        } else {
            backprop_to_raw(
                batch,
                &summaries,
                &pass.g_centroid,
                &pass.g_radius,
                r_s,
                1.0 / (pass.overlap + LOG_EPS),
            )
        }
    });
    pass.into_report(summaries, grad_raw)
}

fn backprop_to_raw(
    batch: &EmbeddingBatch,
    summaries: &[SubManifoldSummary],
    g_centroid: &[f64],
    g_radius: &[f64],
    r_s: f64,
    dlog: f64,
) -> Matrix {
    let b = batch.images();
    let m = batch.views();
    let dim = batch.dim();
    let inv_m = 1.0 / m as f64;
    let mut grad = Matrix::zeros(b * m, dim);
    let mut g_unit = vec![0.0; dim];

    for i in 0..b {
        let s = &summaries[i];
        // r = r_s·√(T/m)  ⇒  dr/dT = r_s / (2√(mT)); undefined at T = 0.
        let g_trace =
            if s.trace > 0.0 { dlog * g_radius[i] * r_s / (2.0 * (m as f64 * s.trace).sqrt()) } else { 0.0 };
        let gq = &g_centroid[i * dim..(i + 1) * dim];
        for k in 0..m {
            let row = i * m + k;
            if batch.degenerate()[row] {
                continue;
            }
            let unit = batch.view(i, k);
            // ∂q/∂z̃ = I/m,  ∂T/∂z̃ = 2(z̃ − q)/m
            for d in 0..dim {
                g_unit[d] = inv_m * (dlog * gq[d] + 2.0 * g_trace * (unit[d] - s.centroid[d]));
            }
            // z̃ = u/(‖u‖ + ε)
            let len = batch.deviation_norms()[row];
            let denom = len + crate::geometry::NORM_EPS;
            let radial = dot(unit, &g_unit) * denom / len;
            let out = grad.row_mut(row);
            for d in 0..dim {
                out[d] = (g_unit[d] - unit[d] * radial) / denom;
            }
        }
    }

    // u = z − mean(z): subtract the column mean of the gradient.
    let mean = grad.column_mean();
    for r in 0..grad.rows() {
        axpy(-1.0, &mean, grad.row_mut(r));
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::center_and_normalize;

    #[test]
    fn pair_energy_examples() {
        assert_eq!(pair_energy(0.0, 0.5, 0.5), 1.0);
        assert_eq!(pair_energy(0.5, 0.5, 0.5), 0.25);
        assert_eq!(pair_energy(1.2, 0.5, 0.5), 0.0);
        assert_eq!(pair_energy(0.0, 0.0, 0.0), 0.0);
        assert_eq!(pair_energy(1.0, 0.5, 0.5), 0.0);
    }

    #[test]
    fn energy_vanishes_smoothly_at_contact() {
        let (ri, rj) = (0.3, 0.45);
        let s = ri + rj;
        let d = s * (1.0 - 1e-5);
        let (e, de_dd, _) = pair_energy_parts(d, s);
        assert!(e.abs() <= 1e-8);
        assert!(de_dd.abs() <= 1e-4);
    }

    #[test]
    fn single_image_batch_rejected() {
        let raw = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let batch = center_and_normalize(&raw, 2).unwrap();
        assert!(batch_loss(&batch, 1.0).is_err());
        let raw = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.0]]);
        let batch = center_and_normalize(&raw, 2).unwrap();
        assert!(batch_loss(&batch, 0.0).is_err());
    }
}
