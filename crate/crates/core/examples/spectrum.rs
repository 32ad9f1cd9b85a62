//! Covariance eigenspectrum of encoder representations and its power-law
//! exponent, before and after packing-loss pretraining.
//!
//! cargo run --release --example spectrum -- [key=value ...]

use clamp::analysis::{default_fit_window, eigenspectrum, power_law_fit};
use clamp::dataset::gen_blobs;
use clamp::trainer::train_on;
use clamp::Config;

fn main() -> clamp::Result<()> {
    // A spectrum built to decay as n^-1.013 is recovered exactly.
    let synthetic: Vec<f64> = (1..=100).map(|n| 3.7 * (n as f64).powf(-1.013)).collect();
    let fit = power_law_fit(&synthetic, 1, 100)?;
    println!("synthetic spectrum: exponent {:.6}, residual {:.1e}\n", fit.exponent, fit.fit_residual);

    let mut cfg = Config::default();
    for arg in std::env::args().skip(1) {
        cfg.apply_override(&arg)?;
    }
    let (train_spec, test_spec) = cfg.blob_specs()?;
    let train_set = gen_blobs(&train_spec, 0)?;
    let test_set = gen_blobs(&test_spec, 1)?;
    let outcome = train_on(&cfg.train_config()?, &train_set, |_, _| Ok(()))?;

    for (name, net) in [("untrained", &outcome.initial_net), ("trained", &outcome.net)] {
        let reps = net.backbone().represent(&test_set.features())?;
        let eigs = eigenspectrum(&reps)?;
        let (lo, hi) = default_fit_window(&eigs);
        let fit = power_law_fit(&eigs, lo, hi)?;
        println!("{name} encoder: exponent {:.3} over ranks {lo}..={hi}", fit.exponent);
        let shown: Vec<String> = eigs.iter().take(12).map(|v| format!("{v:.3e}")).collect();
        println!("  leading eigenvalues {}", shown.join(" "));
    }
    Ok(())
}
