//! Random organization on the sphere: overlapping particles receive random
//! kicks until no overlaps remain. Small radii absorb quickly; dense
//! packings stay active.
//!
//! cargo run --release --example random_organization -- [kick] [reciprocal]

use clamp::randorg::{run_density_sweep, RandOrgConfig};

fn main() -> clamp::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kick: f64 = args.first().map_or(0.05, |s| s.parse().expect("kick amplitude"));
    let reciprocal = args.get(1).is_some_and(|s| s == "reciprocal");

    let template = RandOrgConfig {
        particles: 64,
        dim: 3,
        kick_amplitude: kick,
        reciprocal,
        max_steps: 50_000,
        ..RandOrgConfig::default()
    };
    let radii = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4];
    let seeds: Vec<u64> = (0..20).collect();
    let sweep = run_density_sweep(&template, &radii, &seeds)?;

    println!("radius  φ≈Nρ²/4  absorbed  mean steps  final active");
    for s in sweep.by_radius() {
        println!(
            "{:6.3}  {:8.3}  {:8.2}  {:10.1}  {:12.3}",
            s.radius,
            64.0 * s.radius * s.radius / 4.0,
            s.absorbed_fraction,
            s.mean_steps,
            s.mean_final_active_fraction
        );
    }
    Ok(())
}
