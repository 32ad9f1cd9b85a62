//! Probe accuracy and final neighbor count as one hyperparameter varies.
//!
//! cargo run --release --example sweep -- [r_s|m|lr] [values...]
//!
//! Defaults to `r_s` over 1, 3 and 7.

use clamp::dataset::gen_blobs;
use clamp::trainer::{sweep, SweepAxis};
use clamp::Config;

fn main() -> clamp::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let axis: SweepAxis = args.first().map_or("r_s", String::as_str).parse()?;
    let values: Vec<f64> = if args.len() > 1 {
        args[1..].iter().map(|s| s.parse().expect("numeric sweep value")).collect()
    } else {
        vec![1.0, 3.0, 7.0]
    };

    let cfg = Config::default();
    let (train_spec, test_spec) = cfg.blob_specs()?;
    let train_set = gen_blobs(&train_spec, 0)?;
    let test_set = gen_blobs(&test_spec, 1)?;
    let results = sweep(&cfg.train_config()?, axis, &values, &train_set, &test_set, &cfg.probe_config()?)?;

    println!("value   probe   neighbors   size");
    for r in results {
        let m = r.final_metrics.expect("at least one epoch");
        println!(
            "{:5}  {:.4}  {:9.3}  {:.4}",
            r.value, r.probe_accuracy, m.mean_neighbors, m.mean_manifold_size
        );
    }
    Ok(())
}
