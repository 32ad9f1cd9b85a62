//! Gradient descent on free embeddings: ten noisy sub-manifolds in 3-D are
//! pushed apart by the packing loss until none overlap.
//!
//! cargo run --release --example direct_descent -- [step_size] [noise] [seed]

use clamp::geometry::center_and_normalize;
use clamp::linalg::{distance, Matrix};
use clamp::packing::batch_loss_gradient;
use clamp::rng::rng_for;
use rand::Rng as _;
use rand_distr::StandardNormal;

const IMAGES: usize = 10;
const VIEWS: usize = 60;
const DIM: usize = 3;
const R_S: f64 = 3.0;
const MAX_STEPS: usize = 20_000;

fn main() -> clamp::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let step: f64 = args.first().map_or(0.05, |s| s.parse().expect("step size"));
    let noise: f64 = args.get(1).map_or(1.0, |s| s.parse().expect("noise"));
    let seed: u64 = args.get(2).map_or(0, |s| s.parse().expect("seed"));

    let mut rng = rng_for(seed, &[]);
    let mut data = Vec::with_capacity(IMAGES * VIEWS * DIM);
    for _ in 0..IMAGES {
        let center: Vec<f64> = (0..DIM).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..VIEWS {
            for c in &center {
                data.push(c + noise * rng.sample::<f64, _>(StandardNormal));
            }
        }
    }
    let mut raw = Matrix::from_vec(IMAGES * VIEWS, DIM, data);

    for t in 0..=MAX_STEPS {
        let batch = center_and_normalize(&raw, VIEWS)?;
        let report = batch_loss_gradient(&batch, R_S)?;
        if t % 100 == 0 || report.absorbing {
            println!(
                "step {t:5}  overlap {:.3e}  overlapping pairs {}",
                report.overlap_energy,
                report.pairs.len() / 2
            );
        }
        if report.absorbing {
            let s = &report.summaries;
            let min_gap = (0..IMAGES)
                .flat_map(|i| ((i + 1)..IMAGES).map(move |j| (i, j)))
                .map(|(i, j)| distance(&s[i].centroid, &s[j].centroid) - s[i].radius - s[j].radius)
                .fold(f64::INFINITY, f64::min);
            println!("absorbed after {t} steps; smallest gap between spheres {min_gap:.4}");
            return Ok(());
        }
        let g = report.grad_raw.expect("gradient");
        for (x, gx) in raw.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *x -= step * gx;
        }
    }
    println!("still overlapping after {MAX_STEPS} steps");
    Ok(())
}
