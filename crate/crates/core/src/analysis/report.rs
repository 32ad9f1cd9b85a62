//! Intra- versus inter-class geometry of augmentation sub-manifolds.
//!
//! For every sampled image, its augmentations are pushed through the
//! encoder and summarized by a centroid and a principal axis. Each pair of
//! images then contributes its centroid distance, the cosine between the
//! (globally centered) centroids, and the squared cosine between principal
//! axes, to either the same-class or the different-class population.

use log::warn;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{ClampError, Result};
use crate::geometry::{principal_axis, POWER_MAX_ITER, POWER_TOL};
use crate::linalg::{distance, dot, norm, Matrix};
use crate::rng::rng_for;
use crate::trainer::{augment_views, AugmentConfig};

pub const HIST_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    /// Sums to 1 (or is all zero for an empty population).
    pub mass: Vec<f64>,
    pub count: usize,
    pub mean: f64,
}

impl Histogram {
    /// Histogram of `values` over the fixed range `[lo, hi]`.
    pub fn build(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let hi = if hi > lo { hi } else { lo + 1.0 };
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|k| lo + width * k as f64).collect();
        let mut mass = vec![0.0; bins];
        for &v in values {
            let k = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            mass[k] += 1.0;
        }
        let count = values.len();
        if count > 0 {
            mass.iter_mut().for_each(|m| *m /= count as f64);
        }
        Self {
            edges,
            mass,
            count,
            mean: if count > 0 { values.iter().sum::<f64>() / count as f64 } else { 0.0 },
        }
    }

    /// Fraction of the mass in bins lying entirely below `x`.
    pub fn mass_below(&self, x: f64) -> f64 {
        self.mass.iter().zip(self.edges.windows(2)).filter(|(_, e)| e[1] <= x).map(|(m, _)| m).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitHistogram {
    pub intra: Histogram,
    pub inter: Histogram,
}

impl SplitHistogram {
    fn build(intra: &[f64], inter: &[f64]) -> Self {
        let (lo, hi) = intra
            .iter()
            .chain(inter)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
        Self {
            intra: Histogram::build(intra, lo, hi, HIST_BINS),
            inter: Histogram::build(inter, lo, hi, HIST_BINS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryReport {
    pub centroid_distance_hist: SplitHistogram,
    pub centroid_cosine_hist: SplitHistogram,
    pub alignment_sq_cosine_hist: SplitHistogram,
    pub samples_used: usize,
    pub augmentations_per_sample: usize,
}

/// The representations of one image's augmentations, with its class.
#[derive(Debug, Clone)]
pub struct LabeledManifold {
    pub label: u16,
    /// `m_a × h`
    pub points: Matrix,
}

/// Raw per-pair observables split by class relation.
#[derive(Debug, Clone, Default)]
pub struct PairStatistics {
    pub intra_distance: Vec<f64>,
    pub inter_distance: Vec<f64>,
    pub intra_cosine: Vec<f64>,
    pub inter_cosine: Vec<f64>,
    pub intra_alignment: Vec<f64>,
    pub inter_alignment: Vec<f64>,
}

impl PairStatistics {
    fn extend(&mut self, other: PairStatistics) {
        self.intra_distance.extend(other.intra_distance);
        self.inter_distance.extend(other.inter_distance);
        self.intra_cosine.extend(other.intra_cosine);
        self.inter_cosine.extend(other.inter_cosine);
        self.intra_alignment.extend(other.intra_alignment);
        self.inter_alignment.extend(other.inter_alignment);
    }

    pub fn report(&self, samples_used: usize, augmentations: usize) -> GeometryReport {
        GeometryReport {
            centroid_distance_hist: SplitHistogram::build(&self.intra_distance, &self.inter_distance),
            centroid_cosine_hist: SplitHistogram::build(&self.intra_cosine, &self.inter_cosine),
            alignment_sq_cosine_hist: SplitHistogram::build(&self.intra_alignment, &self.inter_alignment),
            samples_used,
            augmentations_per_sample: augmentations,
        }
    }
}

/// Pairwise observables over a set of labelled sub-manifolds.
///
/// Manifolds whose covariance vanishes have no principal axis and are left
/// out of the alignment populations only.
pub fn pair_statistics(manifolds: &[LabeledManifold]) -> Result<PairStatistics> {
    if manifolds.iter().any(|m| m.points.rows() < 2) {
        return Err(ClampError::validation("each sub-manifold needs at least 2 points"));
    }
    let centroids: Vec<Vec<f64>> = manifolds.iter().map(|m| m.points.column_mean()).collect();
    let axes: Vec<Option<Vec<f64>>> = manifolds
        .iter()
        .map(|m| principal_axis(&m.points.covariance(), POWER_TOL, POWER_MAX_ITER).ok())
        .collect();
    let h = centroids.first().map_or(0, Vec::len);
    let mut grand = vec![0.0; h];
    for c in &centroids {
        crate::linalg::axpy(1.0 / centroids.len() as f64, c, &mut grand);
    }
    let centered: Vec<Vec<f64>> =
        centroids.iter().map(|c| c.iter().zip(&grand).map(|(a, g)| a - g).collect()).collect();

    let mut s = PairStatistics::default();
    for i in 0..manifolds.len() {
        for j in (i + 1)..manifolds.len() {
            let same = manifolds[i].label == manifolds[j].label;
            let d = distance(&centroids[i], &centroids[j]);
            let denom = norm(&centered[i]) * norm(&centered[j]);
            let cos =
                if denom > 0.0 { (dot(&centered[i], &centered[j]) / denom).clamp(-1.0, 1.0) } else { 0.0 };
            let align = match (&axes[i], &axes[j]) {
                (Some(a), Some(b)) => Some(dot(a, b).powi(2).min(1.0)),
                _ => None,
            };
            if same {
                s.intra_distance.push(d);
                s.intra_cosine.push(cos);
                s.intra_alignment.extend(align);
            } else {
                s.inter_distance.push(d);
                s.inter_cosine.push(cos);
                s.inter_alignment.extend(align);
            }
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryOptions {
    /// Augmentations per sampled image (even, ≥ 2).
    pub augmentations: usize,
    pub samples_per_repeat: usize,
    pub repeats: usize,
    pub augmentation: AugmentConfig,
    pub seed: u64,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self {
            augmentations: 32,
            samples_per_repeat: 200,
            repeats: 3,
            augmentation: AugmentConfig::default(),
            seed: 0,
        }
    }
}

/// Samples images, augments and encodes them, and histograms the pairwise
/// observables pooled over all repeats.
pub fn geometry_report<E>(dataset: &Dataset, encode: E, opts: &GeometryOptions) -> Result<GeometryReport>
where
    E: Fn(&Matrix) -> Result<Matrix> + Sync,
{
    if opts.augmentations < 2 {
        return Err(ClampError::validation("analyze.augmentations must be at least 2"));
    }
    let mut eligible = Vec::new();
    let mut classes = 0;
    for (label, idx) in dataset.indices_by_class().into_iter().enumerate() {
        match idx.len() {
            0 => {}
            1 => warn!("class {label} has a single sample; excluded from geometry report"),
            _ => {
                classes += 1;
                eligible.extend(idx);
            }
        }
    }
    if classes < 2 {
        return Err(ClampError::validation("geometry report needs at least 2 classes with 2+ samples"));
    }
    let per_repeat = opts.samples_per_repeat.min(eligible.len());

    let stats = (0..opts.repeats)
        .into_par_iter()
        .map(|rep| {
            let mut pool = eligible.clone();
            pool.shuffle(&mut rng_for(opts.seed, &[0x6e0, rep as u64]));
            let manifolds = pool[..per_repeat]
                .iter()
                .map(|&i| {
                    let mut rng = rng_for(opts.seed, &[0x6e1, rep as u64, i as u64]);
                    let views =
                        augment_views(&dataset.sample(i), opts.augmentations, &opts.augmentation, &mut rng)?;
                    Ok(LabeledManifold { label: dataset.labels()[i], points: encode(&views)? })
                })
                .collect::<Result<Vec<_>>>()?;
            pair_statistics(&manifolds)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pooled = PairStatistics::default();
    for s in stats {
        pooled.extend(s);
    }
    Ok(pooled.report(per_repeat * opts.repeats, opts.augmentations))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifold(label: u16, center: &[f64], axis: &[f64], spread: &[f64]) -> LabeledManifold {
        let rows: Vec<Vec<f64>> =
            spread.iter().map(|&t| center.iter().zip(axis).map(|(c, a)| c + t * a).collect()).collect();
        LabeledManifold { label, points: Matrix::from_rows(&rows) }
    }

    #[test]
    fn shared_axis_aligns_perfectly() {
        let axis = [0.6, 0.8, 0.0];
        let spread = [-1.0, -0.3, 0.4, 0.9];
        let ms = vec![
            manifold(0, &[0.0, 0.0, 0.0], &axis, &spread),
            manifold(0, &[1.0, 0.0, 0.0], &axis, &spread),
            manifold(1, &[0.0, 5.0, 0.0], &axis, &spread),
            manifold(1, &[0.0, 5.0, 1.0], &axis, &spread),
        ];
        let s = pair_statistics(&ms).unwrap();
        for a in s.intra_alignment.iter().chain(&s.inter_alignment) {
            assert!((a - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_class_axes_do_not_align() {
        let spread = [-1.0, -0.2, 0.5, 1.1];
        let ms = vec![
            manifold(0, &[0.0, 0.0], &[1.0, 0.0], &spread),
            manifold(0, &[0.5, 0.0], &[1.0, 0.0], &spread),
            manifold(1, &[0.0, 4.0], &[0.0, 1.0], &spread),
            manifold(1, &[0.0, 4.5], &[0.0, 1.0], &spread),
        ];
        let s = pair_statistics(&ms).unwrap();
        assert_eq!(s.inter_alignment.len(), 4);
        for a in &s.inter_alignment {
            assert!(a.abs() < 1e-12);
        }
        for a in &s.intra_alignment {
            assert!((a - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_mass_is_normalized() {
        let h = Histogram::build(&[0.0, 0.1, 0.5, 1.0, 1.0], 0.0, 1.0, 10);
        assert!((h.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(h.mass[9], 0.4);
        assert_eq!(h.edges.len(), 11);
        assert!((h.mass_below(0.2) - 0.4).abs() < 1e-12);
    }
}
