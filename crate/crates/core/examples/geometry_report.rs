//! Sub-manifold geometry of a trained encoder: centroid distances and
//! principal-axis alignment, split into same-class and different-class
//! pairs.
//!
//! cargo run --release --example geometry_report

use clamp::analysis::{geometry_report, GeometryOptions, Histogram};
use clamp::dataset::gen_blobs;
use clamp::trainer::train_on;
use clamp::Config;

fn describe(name: &str, h: &Histogram) {
    println!("  {name:<6} n={:<6} mean={:.4}", h.count, h.mean);
}

fn main() -> clamp::Result<()> {
    let cfg = Config::default();
    let (train_spec, test_spec) = cfg.blob_specs()?;
    let train_set = gen_blobs(&train_spec, 0)?;
    let test_set = gen_blobs(&test_spec, 1)?;
    let outcome = train_on(&cfg.train_config()?, &train_set, |_, _| Ok(()))?;
    let backbone = outcome.net.backbone();

    let opts =
        GeometryOptions { augmentation: cfg.train_config()?.augmentation, ..GeometryOptions::default() };
    let report = geometry_report(&test_set, |v| backbone.represent(v), &opts)?;

    println!("centroid distance");
    describe("intra", &report.centroid_distance_hist.intra);
    describe("inter", &report.centroid_distance_hist.inter);
    println!("centroid cosine");
    describe("intra", &report.centroid_cosine_hist.intra);
    describe("inter", &report.centroid_cosine_hist.inter);
    println!("principal-axis alignment (squared cosine)");
    let a = &report.alignment_sq_cosine_hist;
    describe("intra", &a.intra);
    describe("inter", &a.inter);
    println!("  inter-class mass below the intra-class mean: {:.3}", a.inter.mass_below(a.intra.mean));
    Ok(())
}
