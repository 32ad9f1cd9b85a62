//! Embedding normalization and ellipsoidal sub-manifold summaries.
//!
//! A batch holds `b` images with `m` augmented views each, every view
//! projected to a `D`-dimensional embedding. Rows are stored image-major:
//! row `i * m + k` is view `k` of image `i`.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{ClampError, Result};
use crate::linalg::{axpy, dot, norm, Matrix};
use crate::rng::rng_for;

/// Guard added to row norms before dividing.
pub const NORM_EPS: f64 = 1e-12;

/// Rows whose deviation from the global center is at most this are degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITER: usize = 1000;
const POWER_SEED: u64 = 0x5eed_a215;

/// Projected embeddings of one batch, before and after normalization.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    raw: Matrix,
    normalized: Matrix,
    global_center: Vec<f64>,
    /// `‖z − c‖` per row, kept for the backward pass.
    deviation_norms: Vec<f64>,
    degenerate: Vec<bool>,
    images: usize,
    views: usize,
}

impl EmbeddingBatch {
    pub fn images(&self) -> usize {
        self.images
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn dim(&self) -> usize {
        self.raw.cols()
    }

    pub fn raw(&self) -> &Matrix {
        &self.raw
    }

    pub fn normalized(&self) -> &Matrix {
        &self.normalized
    }

    pub fn global_center(&self) -> &[f64] {
        &self.global_center
    }

    pub fn deviation_norms(&self) -> &[f64] {
        &self.deviation_norms
    }

    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    pub fn any_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }

    /// Normalized view `k` of image `i`.
    pub fn view(&self, i: usize, k: usize) -> &[f64] {
        self.normalized.row(i * self.views + k)
    }

    /// The `m × D` block of normalized views for image `i`.
    pub fn image_views(&self, i: usize) -> Matrix {
        let start = i * self.views * self.dim();
        let end = start + self.views * self.dim();
        Matrix::from_vec(self.views, self.dim(), self.normalized.as_slice()[start..end].to_vec())
    }
}

/// Subtracts the mean of all rows and projects every row onto the unit sphere.
///
/// `raw` has `b·m` rows ordered image-major. Rows that coincide with the
/// global center come out as (near-)zero vectors and are flagged degenerate.
pub fn center_and_normalize(raw: &Matrix, views: usize) -> Result<EmbeddingBatch> {
    let (n, dim) = raw.shape();
    if views == 0 || n % views != 0 {
        return Err(ClampError::validation(format!("{n} rows cannot be split into groups of {views} views")));
    }
    if n < 2 {
        return Err(ClampError::validation(format!("need at least 2 embeddings, got {n}")));
    }
    if dim == 0 {
        return Err(ClampError::validation("embedding dimension is zero"));
    }
    if let Some(pos) = raw.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(ClampError::validation(format!(
            "non-finite embedding at image {}, view {}, coordinate {}",
            pos / dim / views,
            (pos / dim) % views,
            pos % dim
        )));
    }

    // Fixed row order keeps the reduction deterministic.
    let global_center = raw.column_mean();
    let mut normalized = raw.clone();
    let mut deviation_norms = Vec::with_capacity(n);
    let mut degenerate = Vec::with_capacity(n);
    for r in 0..n {
        let row = normalized.row_mut(r);
        axpy(-1.0, &global_center, row);
        let len = norm(row);
        let scale = 1.0 / (len + NORM_EPS);
        row.iter_mut().for_each(|v| *v *= scale);
        deviation_norms.push(len);
        degenerate.push(len <= DEGENERATE_NORM);
    }

    Ok(EmbeddingBatch {
        raw: raw.clone(),
        normalized,
        global_center,
        deviation_norms,
        degenerate,
        images: n / views,
        views,
    })
}

/// Centroid, covariance diagonal and effective radius of one sub-manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct SubManifoldSummary {
    pub centroid: Vec<f64>,
    pub cov_diag: Vec<f64>,
    pub trace: f64,
    pub radius: f64,
    pub cov_full: Option<Matrix>,
    pub principal_axis: Option<Vec<f64>>,
}

/// Radius of an ellipsoid with covariance trace `trace` spanned by `views` points.
///
/// The rank of the covariance is estimated by the number of views.
#[inline]
pub fn radius_from_trace(trace: f64, views: usize, r_s: f64) -> f64 {
    r_s * (trace / views as f64).sqrt()
}

/// Summarizes the `m × D` block of views of one image.
///
/// The covariance uses the biased 1/m estimator. Only its diagonal is
/// computed unless `with_full_cov` is set, in which case the full matrix and
/// its principal axis are filled in as well.
pub fn summarize_sub_manifold(views: &Matrix, r_s: f64, with_full_cov: bool) -> Result<SubManifoldSummary> {
    let m = views.rows();
    if m < 2 {
        return Err(ClampError::validation(format!("sub-manifold needs at least 2 views, got {m}")));
    }
    if !(r_s > 0.0) {
        return Err(ClampError::validation(format!("r_s must be positive, got {r_s}")));
    }
    let mut s = summarize_rows(views.as_slice(), m, views.cols(), r_s);
    if with_full_cov {
        let cov = views.covariance();
        s.principal_axis = principal_axis(&cov, POWER_TOL, POWER_MAX_ITER).ok();
        s.cov_full = Some(cov);
    }
    Ok(s)
}

/// Diagonal-only summary over a contiguous `m × dim` row-major block.
pub(crate) fn summarize_rows(block: &[f64], m: usize, dim: usize, r_s: f64) -> SubManifoldSummary {
    // Accumulate offsets from the first view so identical views give an
    // exact centroid and exactly zero spread.
    let first = &block[..dim];
    let mut offset = vec![0.0; dim];
    for row in block.chunks_exact(dim).skip(1) {
        for ((o, x), f) in offset.iter_mut().zip(row).zip(first) {
            *o += x - f;
        }
    }
    let inv_m = 1.0 / m as f64;
    let centroid: Vec<f64> = first.iter().zip(&offset).map(|(f, o)| f + o * inv_m).collect();

    let mut cov_diag = vec![0.0; dim];
    for row in block.chunks_exact(dim) {
        for ((c, x), q) in cov_diag.iter_mut().zip(row).zip(&centroid) {
            let d = x - q;
            *c += d * d;
        }
    }
    cov_diag.iter_mut().for_each(|v| *v *= inv_m);
    let trace: f64 = cov_diag.iter().sum();
    SubManifoldSummary {
        radius: radius_from_trace(trace, m, r_s),
        centroid,
        cov_diag,
        trace,
        cov_full: None,
        principal_axis: None,
    }
}

/// Summaries of every image in a normalized batch.
pub fn summarize_batch(batch: &EmbeddingBatch, r_s: f64) -> Vec<SubManifoldSummary> {
    let (m, dim) = (batch.views(), batch.dim());
    batch
        .normalized()
        .as_slice()
        .chunks_exact(m * dim)
        .map(|block| summarize_rows(block, m, dim, r_s))
        .collect()
}

/// Top eigenvector of a symmetric PSD matrix by power iteration.
///
/// Starts from a fixed pseudo-random vector and stops once successive
/// iterates are within `tol` radians or after `max_iter` products. The sign
/// is chosen so the largest-magnitude component is nonnegative.
pub fn principal_axis(cov: &Matrix, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = cov.rows();
    if n == 0 || cov.cols() != n {
        return Err(ClampError::validation("principal axis needs a square matrix"));
    }
    if !(tol > 0.0) {
        return Err(ClampError::validation("tolerance must be positive"));
    }
    if cov.frobenius_norm() == 0.0 {
        return Err(ClampError::NoPrincipalAxis);
    }

    let mut rng = rng_for(POWER_SEED, &[n as u64]);
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let len = norm(&v);
    v.iter_mut().for_each(|x| *x /= len);

    for _ in 0..max_iter {
        let mut next = cov.mat_vec(&v);
        let len = norm(&next);
        if len == 0.0 {
            // start landed in the null space; restart from the dominant diagonal direction
            let j = (0..n).max_by(|&a, &b| cov[(a, a)].total_cmp(&cov[(b, b)])).unwrap_or(0);
            v = vec![0.0; n];
            v[j] = 1.0;
            continue;
        }
        next.iter_mut().for_each(|x| *x /= len);
        let step: f64 = next.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        v = next;
        if step < tol {
            break;
        }
    }

    let lead = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(v)
}

/// Rayleigh quotient `vᵀ A v` for unit `v`.
pub fn rayleigh(cov: &Matrix, v: &[f64]) -> f64 {
    dot(v, &cov.mat_vec(v))
}

/// `Γ(k/2 + 1)` for a nonnegative integer `k`.
fn gamma_half_plus_one(k: usize) -> f64 {
    // Γ(1) = 1, Γ(3/2) = √π/2, then Γ(x + 1) = x Γ(x).
    let mut x = if k % 2 == 0 { 1.0 } else { 1.5 };
    let mut g = if k % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() / 2.0 };
    while x < k as f64 / 2.0 + 1.0 - 1e-9 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Volume of the `K`-dimensional ellipsoid with semi-axes `r_s·√λ_j` and
/// the upper bound `V_K · r^K` with `r = r_s·√(Σλ/K)`.
pub fn volume_and_bound(eigenvalues: &[f64], r_s: f64) -> Result<(f64, f64)> {
    let k = eigenvalues.len();
    if k == 0 {
        return Err(ClampError::validation("need at least one eigenvalue"));
    }
    if let Some(bad) = eigenvalues.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
        return Err(ClampError::validation(format!("eigenvalues must be positive, got {bad}")));
    }
    if !(r_s > 0.0) {
        return Err(ClampError::validation(format!("r_s must be positive, got {r_s}")));
    }
    let unit_ball = std::f64::consts::PI.powf(k as f64 / 2.0) / gamma_half_plus_one(k);
    let volume = unit_ball * eigenvalues.iter().map(|l| r_s * l.sqrt()).product::<f64>();
    let mean = eigenvalues.iter().sum::<f64>() / k as f64;
    let bound = unit_ball * (r_s * mean.sqrt()).powi(k as i32);
    Ok((volume, bound))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn centered_unit_rows_pass_through() {
        let raw = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let batch = center_and_normalize(&raw, 2).unwrap();
        assert_eq!(batch.global_center(), &[0.0, 0.0]);
        assert!(close(batch.view(0, 0)[0], 1.0, 1e-9));
        assert!(close(batch.view(0, 1)[0], -1.0, 1e-9));
    }

    #[test]
    fn offset_rows_are_centered() {
        let raw = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]);
        let batch = center_and_normalize(&raw, 2).unwrap();
        assert_eq!(batch.global_center(), &[1.0, 1.0]);
        let h = 1.0 / 2f64.sqrt();
        let v0 = batch.view(0, 0);
        let v1 = batch.view(0, 1);
        assert!(close(v0[0], h, 1e-12) && close(v0[1], -h, 1e-12));
        assert!(close(v1[0], -h, 1e-12) && close(v1[1], h, 1e-12));
    }

    #[test]
    fn coincident_rows_are_degenerate() {
        let raw = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let batch = center_and_normalize(&raw, 2).unwrap();
        assert_eq!(batch.degenerate(), &[true, true]);
        assert!(batch.normalized().as_slice().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn non_finite_input_names_its_position() {
        let raw = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, f64::NAN]]);
        let err = center_and_normalize(&raw, 2).unwrap_err().to_string();
        assert!(err.contains("view 1"), "{err}");
        assert!(err.contains("coordinate 1"), "{err}");
    }

    #[test]
    fn two_view_summary() {
        let views = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let s = summarize_sub_manifold(&views, 3.0, true).unwrap();
        assert_eq!(s.centroid, vec![0.5, 0.5]);
        assert_eq!(s.cov_full.as_ref().unwrap().as_slice(), &[0.25, -0.25, -0.25, 0.25]);
        assert!(close(s.trace, 0.5, 1e-15));
        assert!(close(s.radius, 1.5, 1e-15));
    }

    #[test]
    fn identical_views_have_zero_radius() {
        let views = Matrix::from_rows(&[vec![0.3, 0.4], vec![0.3, 0.4], vec![0.3, 0.4]]);
        let s = summarize_sub_manifold(&views, 3.0, false).unwrap();
        assert_eq!(s.trace, 0.0);
        assert_eq!(s.radius, 0.0);
    }

    #[test]
    fn symmetric_cross_summary() {
        let views = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]);
        let s = summarize_sub_manifold(&views, 7.0, false).unwrap();
        assert_eq!(s.centroid, vec![0.0, 0.0]);
        assert!(close(s.trace, 1.0, 1e-15));
        assert!(close(s.radius, 3.5, 1e-15));
    }

    #[test]
    fn single_view_is_rejected() {
        let views = Matrix::from_rows(&[vec![1.0, 0.0]]);
        assert!(matches!(summarize_sub_manifold(&views, 1.0, false), Err(ClampError::Validation(_))));
    }

    #[test]
    fn diagonal_principal_axis() {
        let v = principal_axis(&Matrix::from_diag(&[4.0, 1.0]), POWER_TOL, POWER_MAX_ITER).unwrap();
        assert!(close(v[0], 1.0, 1e-9) && close(v[1], 0.0, 1e-8));
    }

    #[test]
    fn isotropic_principal_axis_is_an_eigenvector() {
        let cov = Matrix::identity(2);
        let v = principal_axis(&cov, POWER_TOL, POWER_MAX_ITER).unwrap();
        assert!(close(norm(&v), 1.0, 1e-12));
        let lambda = rayleigh(&cov, &v);
        let av = cov.mat_vec(&v);
        let res: f64 = av.iter().zip(&v).map(|(a, x)| (a - lambda * x).powi(2)).sum::<f64>().sqrt();
        assert!(res <= POWER_TOL);
    }

    #[test]
    fn zero_matrix_has_no_axis() {
        assert!(matches!(
            principal_axis(&Matrix::zeros(3, 3), POWER_TOL, 10),
            Err(ClampError::NoPrincipalAxis)
        ));
    }

    #[test]
    fn sign_convention_makes_largest_component_nonnegative() {
        let cov = Matrix::from_rows(&[vec![1.0, -0.9], vec![-0.9, 1.0]]);
        let v = principal_axis(&cov, POWER_TOL, POWER_MAX_ITER).unwrap();
        let lead = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
        assert!(lead >= 0.0);
    }

    #[test]
    fn gamma_values() {
        assert!(close(gamma_half_plus_one(0), 1.0, 1e-15));
        assert!(close(gamma_half_plus_one(1), std::f64::consts::PI.sqrt() / 2.0, 1e-15));
        assert!(close(gamma_half_plus_one(2), 1.0, 1e-15));
        assert!(close(gamma_half_plus_one(4), 2.0, 1e-15));
        assert!(close(gamma_half_plus_one(3), 0.75 * std::f64::consts::PI.sqrt(), 1e-14));
    }

    #[test]
    fn one_dimensional_volume_meets_bound() {
        let (v, b) = volume_and_bound(&[0.25], 2.0).unwrap();
        assert!(close(v, 2.0, 1e-15));
        assert!(close(b, 2.0, 1e-15));
    }

    #[test]
    fn nonpositive_eigenvalue_rejected() {
        assert!(volume_and_bound(&[1.0, 0.0], 1.0).is_err());
        assert!(volume_and_bound(&[], 1.0).is_err());
    }
}
