mod common;

use clamp::dataset::Dataset;
use clamp::geometry::{center_and_normalize, summarize_sub_manifold, volume_and_bound};
use clamp::linalg::{dot, norm, Matrix};
use clamp::nn::{lars_local_lr, lr_schedule};
use clamp::packing::{batch_loss, batch_loss_gradient, neighbor_count};
use clamp::randorg::{randorg_step, ParticleState, RandOrgConfig};
use clamp::rng::rng_for;
use common::{analytic_gradient, log_loss, random_instance};
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::StandardNormal;

fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Random orthogonal matrix from Gram–Schmidt on Gaussian columns.
fn random_rotation(d: usize, seed: u64) -> Matrix {
    let mut rng = rng_for(seed, &[0x707]);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = norm(&v);
        if n > 1e-6 {
            basis.push(v.iter().map(|x| x / n).collect());
        }
    }
    Matrix::from_rows(&basis)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translation_leaves_loss_and_gradient_unchanged(k in 0u64..10_000, shift in prop::collection::vec(-5.0f64..5.0, 10)) {
        let inst = random_instance(11, k);
        let mut moved = inst.raw.clone();
        let d = moved.cols();
        for r in 0..moved.rows() {
            moved.row_mut(r).iter_mut().zip(&shift[..d]).for_each(|(x, s)| *x += s);
        }
        let a = log_loss(&inst.raw, inst.views, inst.r_s);
        let b = log_loss(&moved, inst.views, inst.r_s);
        prop_assert!(close_rel(a, b, 1e-10), "{a} vs {b}");
        let ga = analytic_gradient(&inst.raw, inst.views, inst.r_s);
        let gb = analytic_gradient(&moved, inst.views, inst.r_s);
        for (x, y) in ga.as_slice().iter().zip(gb.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-10 * ga.frobenius_norm().max(1.0));
        }
    }

    #[test]
    fn positive_scaling_leaves_loss_unchanged(k in 0u64..10_000, scale in 0.01f64..100.0) {
        let inst = random_instance(12, k);
        let mut scaled = inst.raw.clone();
        scaled.as_mut_slice().iter_mut().for_each(|x| *x *= scale);
        let a = log_loss(&inst.raw, inst.views, inst.r_s);
        let b = log_loss(&scaled, inst.views, inst.r_s);
        prop_assert!(close_rel(a, b, 1e-10), "{a} vs {b}");
    }

    #[test]
    fn rotation_is_equivariant(k in 0u64..10_000) {
        let inst = random_instance(13, k);
        let q = random_rotation(inst.raw.cols(), k);
        // rows are row vectors, so rotate by right-multiplying with Qᵀ
        let rotated = inst.raw.matmul_t(&q);
        let a = log_loss(&inst.raw, inst.views, inst.r_s);
        let b = log_loss(&rotated, inst.views, inst.r_s);
        prop_assert!(close_rel(a, b, 1e-9), "{a} vs {b}");
        let ga = analytic_gradient(&inst.raw, inst.views, inst.r_s).matmul_t(&q);
        let gb = analytic_gradient(&rotated, inst.views, inst.r_s);
        let scale = ga.frobenius_norm().max(1e-12);
        for (x, y) in ga.as_slice().iter().zip(gb.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-8 * scale.max(1.0));
        }
    }

    #[test]
    fn pair_list_is_symmetric_and_consistent(k in 0u64..10_000) {
        let inst = random_instance(14, k);
        let batch = center_and_normalize(&inst.raw, inst.views).unwrap();
        let r = batch_loss(&batch, inst.r_s).unwrap();
        let mut unordered = 0.0;
        for p in &r.pairs {
            prop_assert!(p.energy > 0.0 && p.energy <= 1.0);
            let (si, sj) = (&r.summaries[p.i], &r.summaries[p.j]);
            prop_assert!(p.distance < si.radius + sj.radius);
            prop_assert!(r.pairs.iter().any(|q| q.i == p.j && q.j == p.i && q.energy == p.energy));
            if p.i < p.j {
                unordered += p.energy;
            }
        }
        prop_assert!(close_rel(r.overlap_energy, 2.0 * unordered, 1e-12));
        prop_assert_eq!(r.absorbing, r.overlap_energy == 0.0);
        prop_assert_eq!(&neighbor_count(&batch, inst.r_s).unwrap(), &r.per_manifold_neighbors);
        let total: usize = r.per_manifold_neighbors.iter().sum();
        prop_assert_eq!(total, r.pairs.len());
    }

    #[test]
    fn image_order_does_not_matter(k in 0u64..10_000, shift in 1usize..8) {
        let inst = random_instance(15, k);
        let m = inst.views;
        let b = inst.raw.rows() / m;
        let order: Vec<usize> = (0..b).map(|i| (i + shift) % b).collect();
        let rows: Vec<usize> = order.iter().flat_map(|&i| (i * m)..((i + 1) * m)).collect();
        let permuted = inst.raw.select_rows(&rows);
        let a = batch_loss(&center_and_normalize(&inst.raw, m).unwrap(), inst.r_s).unwrap();
        let p = batch_loss(&center_and_normalize(&permuted, m).unwrap(), inst.r_s).unwrap();
        prop_assert!(close_rel(a.overlap_energy, p.overlap_energy, 1e-10));
        for (new, &old) in order.iter().enumerate() {
            prop_assert_eq!(p.per_manifold_neighbors[new], a.per_manifold_neighbors[old]);
        }
    }

    #[test]
    fn summaries_satisfy_their_invariants(
        m in 2usize..6,
        d in 1usize..6,
        r_s in 0.1f64..5.0,
        seed in any::<u64>(),
    ) {
        let mut rng = rng_for(seed, &[]);
        let data = (0..m * d).map(|_| rng.sample(StandardNormal)).collect();
        let views = Matrix::from_vec(m, d, data);
        let s = summarize_sub_manifold(&views, r_s, true).unwrap();
        prop_assert!(close_rel(s.trace, s.cov_diag.iter().sum(), 1e-12));
        prop_assert!((s.radius - r_s * (s.trace / m as f64).sqrt()).abs() <= 1e-12 * s.radius.max(1.0));
        let cov = s.cov_full.as_ref().unwrap();
        for i in 0..d {
            prop_assert!((cov[(i, i)] - s.cov_diag[i]).abs() <= 1e-12);
            for j in 0..d {
                prop_assert_eq!(cov[(i, j)], cov[(j, i)]);
            }
        }
        if let Some(axis) = &s.principal_axis {
            prop_assert!((norm(axis) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn volume_never_exceeds_bound(eig in prop::collection::vec(1e-3f64..10.0, 1..16), r_s in 0.1f64..5.0) {
        let (v, b) = volume_and_bound(&eig, r_s).unwrap();
        prop_assert!(v <= b * (1.0 + 1e-12), "{v} > {b}");
    }

    #[test]
    fn lars_ratio_is_scale_invariant(
        w in prop::collection::vec(-2.0f64..2.0, 1..20),
        g_seed in any::<u64>(),
        c in 1e-3f64..1e3,
    ) {
        let mut rng = rng_for(g_seed, &[]);
        let g: Vec<f64> = w.iter().map(|_| rng.sample(StandardNormal)).collect();
        let ws: Vec<f64> = w.iter().map(|x| x * c).collect();
        let gs: Vec<f64> = g.iter().map(|x| x * c).collect();
        let a = lars_local_lr(&w, &g, 0.001);
        let b = lars_local_lr(&ws, &gs, 0.001);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300).max(1.0), "{a} vs {b}");
    }

    #[test]
    fn schedule_stays_in_range(warmup in 0usize..50, extra in 1usize..500, lr in 1e-4f64..10.0) {
        let total = warmup + extra;
        for t in 0..=total {
            let v = lr_schedule(t, warmup, total, lr);
            prop_assert!((0.0..=lr * (1.0 + 1e-12)).contains(&v));
        }
    }

    #[test]
    fn particles_stay_on_the_sphere(seed in any::<u64>(), radius in 0.05f64..0.4, reciprocal in any::<bool>()) {
        let cfg = RandOrgConfig { particles: 24, dim: 3, radius, reciprocal, seed, ..RandOrgConfig::default() };
        let mut s = ParticleState::random(&cfg);
        for step in 1..=20 {
            randorg_step(&mut s, &cfg);
            prop_assert_eq!(s.step_index(), step);
            for i in 0..s.len() {
                prop_assert!((norm(s.position(i)) - 1.0).abs() <= 1e-9);
            }
            for i in 0..s.len() {
                let overlaps = (0..s.len()).any(|j| {
                    j != i && clamp::linalg::distance(s.position(i), s.position(j)) < 2.0 * radius
                });
                prop_assert_eq!(s.active_mask()[i], overlaps);
            }
        }
    }

    #[test]
    fn dataset_round_trips_bit_exactly(
        n in 1usize..20,
        d in 1usize..8,
        classes in 1usize..5,
        seed in any::<u64>(),
    ) {
        let mut rng = rng_for(seed, &[]);
        let data: Vec<f32> = (0..n * d).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        let labels: Vec<u16> = (0..n).map(|_| rng.random_range(0..classes as u16)).collect();
        let ds = Dataset::new(d, classes, data, labels).unwrap();
        let bytes = ds.encode();
        prop_assert_eq!(bytes.len(), 24 + 4 * n * d + 2 * n);
        let back = Dataset::decode(&bytes).unwrap();
        prop_assert_eq!(back.raw().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                        ds.raw().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back.labels(), ds.labels());
        prop_assert_eq!(back.num_classes(), classes);
    }
}

/// A small explicit step along the negative gradient lowers the loss.
#[test]
fn gradient_step_descends() {
    let mut checked = 0;
    for k in 0.. {
        if checked == 100 {
            break;
        }
        let inst = random_instance(16, k);
        let batch = center_and_normalize(&inst.raw, inst.views).unwrap();
        let r = batch_loss_gradient(&batch, inst.r_s).unwrap();
        if r.absorbing {
            continue;
        }
        let g = r.grad_raw.unwrap();
        let mut stepped = inst.raw.clone();
        for (x, gx) in stepped.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *x -= 1e-4 * gx;
        }
        let after = log_loss(&stepped, inst.views, inst.r_s);
        assert!(after <= r.log_loss, "instance {k}: {} -> {after}", r.log_loss);
        checked += 1;
    }
}
