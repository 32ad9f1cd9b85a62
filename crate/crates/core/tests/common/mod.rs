//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use clamp::geometry::center_and_normalize;
use clamp::linalg::Matrix;
use clamp::packing::{batch_loss, batch_loss_gradient};
use clamp::rng::rng_for;
use rand::Rng as _;
use rand_distr::StandardNormal;

/// A random raw embedding batch with `b ≤ 8`, `m ≤ 4`, `D ≤ 10` and an
/// `r_s` large enough that some sub-manifolds overlap.
pub struct Instance {
    pub raw: Matrix,
    pub views: usize,
    pub r_s: f64,
}

pub fn random_instance(seed: u64, k: u64) -> Instance {
    let mut rng = rng_for(seed, &[k]);
    let b = rng.random_range(2..=8);
    let m = rng.random_range(2..=4);
    let d = rng.random_range(2..=10);
    let r_s = rng.random_range(1.5..4.0);
    let spread = rng.random_range(0.3..1.5);
    let mut data = Vec::with_capacity(b * m * d);
    for _ in 0..b {
        let center: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..m {
            for c in &center {
                let z: f64 = rng.sample(StandardNormal);
                data.push(c + spread * z);
            }
        }
    }
    Instance { raw: Matrix::from_vec(b * m, d, data), views: m, r_s }
}

pub fn is_absorbing(inst: &Instance) -> bool {
    batch_loss(&center_and_normalize(&inst.raw, inst.views).unwrap(), inst.r_s).unwrap().absorbing
}

pub fn log_loss(raw: &Matrix, views: usize, r_s: f64) -> f64 {
    batch_loss(&center_and_normalize(raw, views).unwrap(), r_s).unwrap().log_loss
}

/// Central finite-difference gradient of the log loss.
pub fn fd_gradient(raw: &Matrix, views: usize, r_s: f64, h: f64) -> Matrix {
    let mut g = Matrix::zeros(raw.rows(), raw.cols());
    let mut x = raw.clone();
    for k in 0..raw.as_slice().len() {
        let orig = x.as_slice()[k];
        x.as_mut_slice()[k] = orig + h;
        let up = log_loss(&x, views, r_s);
        x.as_mut_slice()[k] = orig - h;
        let down = log_loss(&x, views, r_s);
        x.as_mut_slice()[k] = orig;
        g.as_mut_slice()[k] = (up - down) / (2.0 * h);
    }
    g
}

pub fn analytic_gradient(raw: &Matrix, views: usize, r_s: f64) -> Matrix {
    batch_loss_gradient(&center_and_normalize(raw, views).unwrap(), r_s).unwrap().grad_raw.unwrap()
}

/// `‖a − f‖∞ / ‖f‖∞`, or the absolute error when `f` vanishes.
pub fn relative_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    let diff =
        analytic.as_slice().iter().zip(numeric.as_slice()).map(|(a, f)| (a - f).abs()).fold(0.0, f64::max);
    let scale = numeric.as_slice().iter().map(|f| f.abs()).fold(0.0, f64::max);
    if scale > 1e-8 {
        diff / scale
    } else {
        diff
    }
}
