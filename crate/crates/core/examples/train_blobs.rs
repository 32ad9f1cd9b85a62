//! Pretrain an MLP encoder with the packing loss on synthetic Gaussian
//! blobs, then compare linear-probe accuracy against the untrained encoder.
//!
//! cargo run --release --example train_blobs -- [key=value ...]
//!
//! Any config key can be overridden, e.g. `train.epochs=10 train.r_s=2.0`.

use clamp::analysis::{linear_probe, ProbeConfig};
use clamp::dataset::gen_blobs;
use clamp::trainer::train_on;
use clamp::Config;

fn main() -> clamp::Result<()> {
    let mut cfg = Config::default();
    for arg in std::env::args().skip(1) {
        cfg.apply_override(&arg)?;
    }
    let (train_spec, test_spec) = cfg.blob_specs()?;
    let train_set = gen_blobs(&train_spec, 0)?;
    let test_set = gen_blobs(&test_spec, 1)?;
    let train_cfg = cfg.train_config()?;

    println!("epoch  log-loss  neighbors  size    centroid-dist  absorbing  seconds");
    let outcome = train_on(&train_cfg, &train_set, |r, _| {
        println!(
            "{:5}  {:8.3}  {:9.3}  {:6.4}  {:13.4}  {:9.2}  {:7.2}",
            r.epoch,
            r.mean_log_loss,
            r.mean_neighbors,
            r.mean_manifold_size,
            r.mean_centroid_distance,
            r.absorbing_batch_fraction,
            r.wall_seconds
        );
        Ok(())
    })?;

    let probe = ProbeConfig::default();
    for (name, net) in [("untrained", &outcome.initial_net), ("trained", &outcome.net)] {
        let backbone = net.backbone();
        let acc = linear_probe(
            &backbone.represent(&train_set.features())?,
            train_set.labels(),
            &backbone.represent(&test_set.features())?,
            test_set.labels(),
            &probe,
        )?;
        println!("{name:>9} encoder probe accuracy {acc:.4}");
    }
    Ok(())
}
