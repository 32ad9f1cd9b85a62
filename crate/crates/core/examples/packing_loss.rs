//! The packing loss on small hand-built configurations, its gradient, and
//! how the cost of one evaluation grows with batch size and width.
//!
//! cargo run --release --example packing_loss

use std::time::Instant;

use clamp::geometry::{center_and_normalize, SubManifoldSummary};
use clamp::linalg::Matrix;
use clamp::packing::{batch_loss, batch_loss_gradient, summary_loss};
use clamp::rng::rng_for;
use rand::Rng as _;
use rand_distr::StandardNormal;

fn sphere(centroid: Vec<f64>, radius: f64) -> SubManifoldSummary {
    let dim = centroid.len();
    SubManifoldSummary {
        centroid,
        cov_diag: vec![0.0; dim],
        trace: 0.0,
        radius,
        cov_full: None,
        principal_axis: None,
    }
}

fn random_batch(b: usize, m: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = rng_for(seed, &[]);
    let data = (0..b * m * d).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(b * m, d, data)
}

fn median_seconds(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut t: Vec<f64> = (0..reps)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[reps / 2]
}

fn main() -> clamp::Result<()> {
    // Two images whose views are ±e1: both centroids sit at the origin.
    let raw = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0]]);
    let r = batch_loss(&center_and_normalize(&raw, 2)?, 1.0)?;
    println!("coincident centroids:  overlap {}  log loss {:.4}", r.overlap_energy, r.log_loss);

    let line = summary_loss(vec![sphere(vec![0.0], 0.5), sphere(vec![0.5], 0.5), sphere(vec![1.0], 0.5)]);
    println!(
        "collinear at 0, .5, 1: overlap {}  neighbors {:?}",
        line.overlap_energy, line.per_manifold_neighbors
    );

    // Tight clusters around +e1 and −e1.
    let raw = Matrix::from_rows(&[vec![1.0, 0.01], vec![1.0, -0.01], vec![-1.0, 0.01], vec![-1.0, -0.01]]);
    let r = batch_loss(&center_and_normalize(&raw, 2)?, 1.0)?;
    println!(
        "well separated:        overlap {}  absorbing {}  log loss {:.3}",
        r.overlap_energy, r.absorbing, r.log_loss
    );

    let batch = center_and_normalize(&random_batch(8, 4, 5, 1), 4)?;
    let r = batch_loss_gradient(&batch, 3.0)?;
    let g = r.grad_raw.expect("gradient");
    println!(
        "\nrandom 8×4 batch in 5-D: log loss {:.4}, {} overlapping ordered pairs, |grad|_F {:.4}",
        r.log_loss,
        r.pairs.len(),
        g.frobenius_norm()
    );

    println!("\n   b     D   loss only (ms)   with gradient (ms)");
    for (b, d) in [(256, 64), (512, 64), (1024, 64), (512, 128)] {
        let batch = center_and_normalize(&random_batch(b, 2, d, 7), 2)?;
        let plain = median_seconds(10, || {
            batch_loss(&batch, 3.0).unwrap();
        });
        let full = median_seconds(10, || {
            batch_loss_gradient(&batch, 3.0).unwrap();
        });
        println!("{b:5} {d:5} {:16.2} {:20.2}", plain * 1e3, full * 1e3);
    }
    Ok(())
}
