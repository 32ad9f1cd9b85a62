//! Random organization of equal repulsive particles on the unit sphere.
//!
//! Particles of common radius `ρ` overlap when their chordal distance is
//! below `2ρ`. Each step, overlapping particles are kicked at random while
//! isolated ones stay put; a configuration without overlaps is absorbing.
//! The same short-range energy as the packing loss also drives a plain
//! gradient-descent variant.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ClampError, Result};
use crate::linalg::{axpy, norm};
use crate::packing::pair_energy_parts;
use crate::rng::{rng_for, Rng};

/// Length of the random perturbation added to the separation axis of a
/// reciprocal kick, relative to the unit axis.
const AXIS_JITTER: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandOrgConfig {
    pub particles: usize,
    pub dim: usize,
    pub radius: f64,
    pub kick_amplitude: f64,
    pub reciprocal: bool,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for RandOrgConfig {
    fn default() -> Self {
        Self {
            particles: 64,
            dim: 3,
            radius: 0.1,
            kick_amplitude: 0.05,
            reciprocal: false,
            max_steps: 50_000,
            seed: 0,
        }
    }
}

impl RandOrgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(ClampError::validation(format!(
                "randorg.particles must be at least 2, got {}",
                self.particles
            )));
        }
        if self.dim < 2 {
            return Err(ClampError::validation(format!("randorg.dim must be at least 2, got {}", self.dim)));
        }
        if !(self.kick_amplitude > 0.0) {
            return Err(ClampError::validation(format!(
                "randorg.kick_amplitude must be positive, got {}",
                self.kick_amplitude
            )));
        }
        if !(self.radius >= 0.0) {
            return Err(ClampError::validation(format!(
                "randorg.radius must be nonnegative, got {}",
                self.radius
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ParticleState {
    positions: Vec<f64>,
    dim: usize,
    radius: f64,
    step_index: usize,
    active_mask: Vec<bool>,
    rng: Rng,
}

impl ParticleState {
    /// Uniform random positions on the sphere, seeded from `cfg.seed`.
    pub fn random(cfg: &RandOrgConfig) -> Self {
        Self::random_with_stream(cfg, 0)
    }

    /// Like [`ParticleState::random`] but on an independent stream, so sweep
    /// cells sharing a seed do not share positions.
    pub fn random_with_stream(cfg: &RandOrgConfig, stream: u64) -> Self {
        let mut rng = rng_for(cfg.seed, &[stream]);
        let mut positions = Vec::with_capacity(cfg.particles * cfg.dim);
        for _ in 0..cfg.particles {
            positions.extend(random_unit(&mut rng, cfg.dim));
        }
        Self::from_positions(positions, cfg.dim, cfg.radius, rng)
    }

    /// Builds a state from explicit positions, projecting each to unit norm.
    pub fn from_positions(mut positions: Vec<f64>, dim: usize, radius: f64, rng: Rng) -> Self {
        assert!(dim > 0 && positions.len() % dim == 0);
        for p in positions.chunks_exact_mut(dim) {
            normalize(p);
        }
        let mut state = Self {
            active_mask: vec![false; positions.len() / dim],
            positions,
            dim,
            radius,
            step_index: 0,
            rng,
        };
        state.refresh_active();
        state
    }

    pub fn len(&self) -> usize {
        self.active_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active_mask.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active_mask
    }

    pub fn active_fraction(&self) -> f64 {
        self.active_mask.iter().filter(|&&a| a).count() as f64 / self.len() as f64
    }

    pub fn is_absorbing(&self) -> bool {
        !self.active_mask.iter().any(|&a| a)
    }

    /// Unordered overlapping pairs `(i, j)` with `i < j`, in index order.
    pub fn overlapping_pairs(&self) -> Vec<(usize, usize)> {
        let cutoff = 2.0 * self.radius;
        let mut out = Vec::new();
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                if chord(self.position(i), self.position(j)) < cutoff {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Σ over ordered pairs of the repulsive pair energy at radius `ρ`.
    pub fn energy(&self) -> f64 {
        let s = 2.0 * self.radius;
        self.overlapping_pairs()
            .iter()
            .map(|&(i, j)| 2.0 * pair_energy_parts(chord(self.position(i), self.position(j)), s).0)
            .sum()
    }

    fn refresh_active(&mut self) {
        self.active_mask.iter_mut().for_each(|a| *a = false);
        for (i, j) in self.overlapping_pairs() {
            self.active_mask[i] = true;
            self.active_mask[j] = true;
        }
    }
}

#[inline]
fn chord(a: &[f64], b: &[f64]) -> f64 {
    crate::linalg::distance(a, b)
}

fn normalize(v: &mut [f64]) {
    let len = norm(v);
    if len > 0.0 {
        v.iter_mut().for_each(|x| *x /= len);
    }
}

fn random_unit(rng: &mut Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if norm(&v) > 1e-12 {
            normalize(&mut v);
            return v;
        }
    }
}

/// Kick magnitude uniform in `(0, amplitude]`.
fn kick_magnitude(rng: &mut Rng, amplitude: f64) -> f64 {
    amplitude * (1.0 - rng.random::<f64>())
}

/// Displacements applied in one step, before reprojection to the sphere.
#[derive(Debug, Clone)]
pub struct StepKicks {
    /// `N × D` row-major; zero rows for isolated particles.
    pub displacements: Vec<f64>,
    pub overlapping_pairs: usize,
}

/// One random-organization step. Isolated particles are left bit-identical.
pub fn randorg_step(state: &mut ParticleState, cfg: &RandOrgConfig) -> StepKicks {
    let dim = state.dim;
    let pairs = state.overlapping_pairs();
    let mut disp = vec![0.0; state.positions.len()];
    state.step_index += 1;
    if pairs.is_empty() {
        state.active_mask.iter_mut().for_each(|a| *a = false);
        return StepKicks { displacements: disp, overlapping_pairs: 0 };
    }

    let mut moved = vec![false; state.len()];
    if cfg.reciprocal {
        for &(i, j) in &pairs {
            let mut axis: Vec<f64> =
                state.position(i).iter().zip(state.position(j)).map(|(a, b)| a - b).collect();
            normalize(&mut axis);
            let jitter = random_unit(&mut state.rng, dim);
            axpy(AXIS_JITTER, &jitter, &mut axis);
            normalize(&mut axis);
            let mag = kick_magnitude(&mut state.rng, cfg.kick_amplitude);
            axpy(mag, &axis, &mut disp[i * dim..(i + 1) * dim]);
            axpy(-mag, &axis, &mut disp[j * dim..(j + 1) * dim]);
            moved[i] = true;
            moved[j] = true;
        }
    } else {
        for &(i, j) in &pairs {
            moved[i] = true;
            moved[j] = true;
        }
        for i in 0..state.len() {
            if moved[i] {
                let dir = random_unit(&mut state.rng, dim);
                let mag = kick_magnitude(&mut state.rng, cfg.kick_amplitude);
                axpy(mag, &dir, &mut disp[i * dim..(i + 1) * dim]);
            }
        }
    }

    for i in 0..state.len() {
        if moved[i] {
            let p = &mut state.positions[i * dim..(i + 1) * dim];
            axpy(1.0, &disp[i * dim..(i + 1) * dim], p);
            normalize(p);
        }
    }
    state.refresh_active();
    StepKicks { displacements: disp, overlapping_pairs: pairs.len() }
}

/// Moves every particle along the negative gradient of the ordered-pair
/// repulsive energy, then reprojects the ones that moved.
pub fn gradient_step(state: &mut ParticleState, step_size: f64) {
    let dim = state.dim;
    let s = 2.0 * state.radius;
    let mut grad = vec![0.0; state.positions.len()];
    let mut any = false;
    for (i, j) in state.overlapping_pairs() {
        let diff: Vec<f64> = state.position(i).iter().zip(state.position(j)).map(|(a, b)| a - b).collect();
        let d = norm(&diff);
        if d == 0.0 {
            continue;
        }
        let (_, de_dd, _) = pair_energy_parts(d, s);
        // both (i, j) and (j, i) terms
        let coef = 2.0 * de_dd / d;
        axpy(coef, &diff, &mut grad[i * dim..(i + 1) * dim]);
        axpy(-coef, &diff, &mut grad[j * dim..(j + 1) * dim]);
        any = true;
    }
    state.step_index += 1;
    if any {
        for (p, g) in state.positions.chunks_exact_mut(dim).zip(grad.chunks_exact(dim)) {
            if g.iter().any(|&v| v != 0.0) {
                axpy(-step_size, g, p);
                normalize(p);
            }
        }
    }
    state.refresh_active();
}

/// Outcome of one `(radius, seed)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub radius: f64,
    pub seed: u64,
    /// Steps until the first absorbing configuration; `None` if censored.
    pub steps_to_absorb: Option<usize>,
    pub final_active_fraction: f64,
    pub steps_run: usize,
}

/// Per-radius aggregate over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusSummary {
    pub radius: f64,
    pub seeds: usize,
    pub absorbed_fraction: f64,
    /// Mean steps to absorption, counting censored runs as `max_steps`.
    pub mean_steps: f64,
    pub mean_final_active_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct DensitySweep {
    pub rows: Vec<SweepRow>,
    pub max_steps: usize,
}

impl DensitySweep {
    pub fn by_radius(&self) -> Vec<RadiusSummary> {
        let mut radii: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !radii.contains(&r.radius) {
                radii.push(r.radius);
            }
        }
        radii
            .into_iter()
            .map(|radius| {
                let rows: Vec<&SweepRow> = self.rows.iter().filter(|r| r.radius == radius).collect();
                let n = rows.len() as f64;
                RadiusSummary {
                    radius,
                    seeds: rows.len(),
                    absorbed_fraction: rows.iter().filter(|r| r.steps_to_absorb.is_some()).count() as f64 / n,
                    mean_steps: rows
                        .iter()
                        .map(|r| r.steps_to_absorb.unwrap_or(self.max_steps) as f64)
                        .sum::<f64>()
                        / n,
                    mean_final_active_fraction: rows.iter().map(|r| r.final_active_fraction).sum::<f64>() / n,
                }
            })
            .collect()
    }
}

/// Runs one simulation until it absorbs or exhausts `cfg.max_steps`.
pub fn run_until_absorbed(state: &mut ParticleState, cfg: &RandOrgConfig) -> Option<usize> {
    while state.step_index < cfg.max_steps {
        if state.is_absorbing() {
            return Some(state.step_index);
        }
        randorg_step(state, cfg);
    }
    state.is_absorbing().then_some(state.step_index)
}

/// Runs every `(radius, seed)` cell. Cells run in parallel; each draws from
/// a stream keyed by its seed and radius index so results are independent
/// of scheduling.
pub fn run_density_sweep(template: &RandOrgConfig, radii: &[f64], seeds: &[u64]) -> Result<DensitySweep> {
    if radii.is_empty() {
        return Err(ClampError::validation("sweep radius list is empty"));
    }
    if seeds.is_empty() {
        return Err(ClampError::validation("sweep seed list is empty"));
    }
    template.validate()?;
    let cells: Vec<(usize, f64, u64)> =
        radii.iter().enumerate().flat_map(|(ri, &r)| seeds.iter().map(move |&s| (ri, r, s))).collect();
    let rows = cells
        .par_iter()
        .map(|&(ri, radius, seed)| {
            let cfg = RandOrgConfig { radius, seed, ..template.clone() };
            let mut state = ParticleState::random_with_stream(&cfg, ri as u64);
            let steps_to_absorb = run_until_absorbed(&mut state, &cfg);
            SweepRow {
                radius,
                seed,
                steps_to_absorb,
                final_active_fraction: state.active_fraction(),
                steps_run: state.step_index(),
            }
        })
        .collect();
    Ok(DensitySweep { rows, max_steps: template.max_steps })
}
