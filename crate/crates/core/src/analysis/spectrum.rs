//! Covariance eigenspectra and power-law fits `λ_n ∝ n^(−α)`.

use serde::Serialize;

use super::eigen::{jacobi_eigen, JACOBI_TOL};
use crate::error::{ClampError, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumFit {
    pub eigenvalues: Vec<f64>,
    /// 1-based inclusive ranks.
    pub fit_range: (usize, usize),
    pub exponent: f64,
    /// RMS of the log-log fit residuals.
    pub fit_residual: f64,
}

/// Descending eigenvalues of the `h × h` covariance (1/n) of the rows.
pub fn eigenspectrum(representations: &Matrix) -> Result<Vec<f64>> {
    if representations.rows() < 2 {
        return Err(ClampError::validation("eigenspectrum needs at least 2 rows"));
    }
    if !representations.is_finite() {
        return Err(ClampError::validation("representations contain non-finite values"));
    }
    let cov = representations.covariance();
    Ok(jacobi_eigen(&cov, JACOBI_TOL)?.values.into_iter().map(|v| v.max(0.0)).collect())
}

/// Default fit window `[max(5, h/20), min(0.7·h, #positive)]`, shrunk to
/// fit short spectra.
pub fn default_fit_window(eigenvalues: &[f64]) -> (usize, usize) {
    let h = eigenvalues.len();
    let positive = eigenvalues.iter().take_while(|&&v| v > 0.0).count();
    let hi = ((0.7 * h as f64).floor() as usize).min(positive);
    let lo = (h / 20).max(5);
    if lo < hi {
        (lo, hi)
    } else {
        (1, hi.max(2).min(h))
    }
}

/// Least-squares line through `(ln n, ln λ_n)` for `n` in `[rank_min, rank_max]`.
pub fn power_law_fit(eigenvalues: &[f64], rank_min: usize, rank_max: usize) -> Result<SpectrumFit> {
    if rank_min < 1 || rank_max <= rank_min {
        return Err(ClampError::validation(format!(
            "fit window [{rank_min}, {rank_max}] needs 1 ≤ min < max"
        )));
    }
    if rank_max > eigenvalues.len() {
        return Err(ClampError::validation(format!(
            "fit window ends at rank {rank_max} but only {} eigenvalues",
            eigenvalues.len()
        )));
    }
    let mut xs = Vec::with_capacity(rank_max - rank_min + 1);
    let mut ys = Vec::with_capacity(xs.capacity());
    for n in rank_min..=rank_max {
        let lam = eigenvalues[n - 1];
        if !(lam > 0.0) {
            return Err(ClampError::validation(format!("eigenvalue at rank {n} is {lam}; log undefined")));
        }
        xs.push((n as f64).ln());
        ys.push(lam.ln());
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / k).sqrt();
    Ok(SpectrumFit {
        eigenvalues: eigenvalues.to_vec(),
        fit_range: (rank_min, rank_max),
        exponent: -slope,
        fit_residual: rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_spectrum_has_unit_exponent() {
        let lam: Vec<f64> = (1..=100).map(|n| 1.0 / n as f64).collect();
        let fit = power_law_fit(&lam, 1, 100).unwrap();
        assert!((fit.exponent - 1.0).abs() < 1e-9);
        assert!(fit.fit_residual < 1e-9);
    }

    #[test]
    fn flat_spectrum_has_zero_exponent() {
        let fit = power_law_fit(&[2.5; 40], 3, 30).unwrap();
        assert!(fit.exponent.abs() < 1e-9);
    }

    #[test]
    fn nonpositive_eigenvalue_in_window_rejected() {
        let lam = [3.0, 2.0, 1.0, 0.0];
        assert!(power_law_fit(&lam, 1, 4).is_err());
        assert!(power_law_fit(&lam, 1, 3).is_ok());
        assert!(power_law_fit(&lam, 2, 2).is_err());
    }

    #[test]
    fn rank_one_data_has_one_positive_eigenvalue() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64 - 7.3;
                vec![t, 2.0 * t, -t, 0.5 * t]
            })
            .collect();
        let ev = eigenspectrum(&Matrix::from_rows(&rows)).unwrap();
        assert_eq!(ev.iter().filter(|&&v| v > 1e-10).count(), 1);
    }

    #[test]
    fn window_defaults() {
        let lam: Vec<f64> = (1..=200).map(|n| 1.0 / n as f64).collect();
        assert_eq!(default_fit_window(&lam), (10, 140));
        let short: Vec<f64> = (1..=8).map(|n| 1.0 / n as f64).collect();
        assert_eq!(default_fit_window(&short), (1, 5));
    }
}
