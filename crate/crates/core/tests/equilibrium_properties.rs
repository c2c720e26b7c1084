#![allow(clippy::needless_range_loop)]

use nalgebra::DMatrix;
use proptest::prelude::*;
use seaflow_core::equilibrium::{
    build_omega, existence_check, fixed_point, optimal_control, representative_solve, ExistenceConfig,
    FixedPointConfig, Verdict,
};
use seaflow_core::synthetic::{generate_instance, SyntheticInstance, SyntheticSpec};
use seaflow_core::{
    compute_weights, realized_flow, CostParameters, GoodValues, Kernel, MeanField, PortNetwork,
};

fn instance(seed: u64, ports: usize, goods: usize) -> SyntheticInstance {
    generate_instance(&SyntheticSpec {
        seed,
        ports,
        goods,
        ..Default::default()
    })
    .unwrap()
}

/// A positive field with the right per-good mass, tilted by `tilt`.
fn tilted_field(inst: &SyntheticInstance, tilt: f64) -> MeanField {
    let k = inst.network.size();
    let n = inst.params.goods();
    let occ = DMatrix::from_fn(n, k, |g, i| 1.0 + tilt * ((i * 7 + g * 3) % 5) as f64);
    let occ = DMatrix::from_fn(n, k, |g, i| {
        occ[(g, i)] * inst.params.capacities()[g] / occ.row(g).sum()
    });
    MeanField::new(occ, &inst.params).unwrap()
}

fn ulps(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / (f64::EPSILON * scale.max(f64::MIN_POSITIVE))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn normalized_weight_rows_sum_to_one(seed in 0u64..10_000, k in 1usize..=6, n in 1usize..=3) {
        let inst = instance(seed, k, n);
        for g in 0..n {
            let w = compute_weights(&inst.params, &inst.network, g).unwrap();
            for i in 0..k {
                prop_assert!((w.normalized.row(i).sum() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn cost_scaling_rescales_raw_weights_only(seed in 0u64..10_000, k in 2usize..=6, lambda in 0.01f64..100.0) {
        let inst = instance(seed, k, 1);
        let scaled = inst.params.scaled_costs(lambda).unwrap();
        let w = compute_weights(&inst.params, &inst.network, 0).unwrap();
        let ws = compute_weights(&scaled, &inst.network, 0).unwrap();
        for i in 0..k {
            for j in 0..k {
                let expected = w.raw[(i, j)] / lambda;
                prop_assert!(ulps(ws.raw[(i, j)], expected, expected) <= 4.0);
                prop_assert!(ulps(ws.normalized[(i, j)], w.normalized[(i, j)], w.normalized[(i, j)]) <= 4.0);
            }
        }
    }

    #[test]
    fn realized_flow_conserves_occupancy(seed in 0u64..10_000, k in 1usize..=6, n in 1usize..=3, tilt in 0.0f64..2.0) {
        let inst = instance(seed, k, n);
        let field = tilted_field(&inst, tilt);
        let policy = optimal_control(&field, &inst.params, &inst.network, &inst.values).unwrap();
        let flows = realized_flow(&field, &policy);
        for g in 0..n {
            for i in 0..k {
                let phi = field.occupancy()[(g, i)];
                prop_assert!((flows[g].row(i).sum() - phi).abs() <= 1e-12 * phi);
            }
        }
    }

    /// Dyadic values shifted by an integer are represented exactly, so every
    /// margin and therefore the whole control is bit-identical.
    #[test]
    fn integer_value_shift_is_bit_exact(seed in 0u64..10_000, k in 2usize..=6, kappa in -1000i32..1000) {
        let inst = instance(seed, k, 2);
        let dyadic = inst.values.values().map(|v| (v * 1048576.0).round() / 1048576.0);
        let values = GoodValues::new(dyadic).unwrap();
        let shifted = values.shifted(kappa as f64);
        for g in 0..2 {
            for i in 0..k {
                for j in 0..k {
                    prop_assert_eq!(values.margin(g, i, j).to_bits(), shifted.margin(g, i, j).to_bits());
                }
            }
        }
        let field = tilted_field(&inst, 0.5);
        let q = optimal_control(&field, &inst.params, &inst.network, &values).unwrap();
        let qs = optimal_control(&field, &inst.params, &inst.network, &shifted).unwrap();
        prop_assert_eq!(q, qs);
    }

    #[test]
    fn real_value_shift_moves_control_by_at_most_four_ulps(seed in 0u64..10_000, k in 2usize..=6, kappa in -1.0f64..1.0) {
        let inst = instance(seed, k, 1);
        let field = tilted_field(&inst, 0.3);
        let q = optimal_control(&field, &inst.params, &inst.network, &inst.values).unwrap();
        let qs = optimal_control(&field, &inst.params, &inst.network, &inst.values.shifted(kappa)).unwrap();
        let (a, b) = (q.good(0), qs.good(0));
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!(ulps(*x, *y, scale) <= 4.0, "{x} vs {y}");
        }
    }

    #[test]
    fn relabeling_ports_permutes_the_control(seed in 0u64..10_000, k in 2usize..=6, n in 1usize..=3, rot in 1usize..6) {
        let inst = instance(seed, k, n);
        let perm: Vec<usize> = (0..k).map(|p| (p + rot) % k).rev().collect();
        let field = tilted_field(&inst, 0.7);
        let q = optimal_control(&field, &inst.params, &inst.network, &inst.values).unwrap();
        let qp = optimal_control(
            &field.permuted(&perm).unwrap(),
            &inst.params.permuted(&perm).unwrap(),
            &inst.network.permuted(&perm).unwrap(),
            &inst.values.permuted(&perm).unwrap(),
        )
        .unwrap();
        for g in 0..n {
            let (a, b) = (q.good(g), qp.good(g));
            for i in 0..k {
                for j in 0..k {
                    prop_assert_eq!(b[(i, j)].to_bits(), a[(perm[i], perm[j])].to_bits());
                }
            }
        }
    }
}

#[test]
fn relabeling_ports_permutes_the_equilibrium() {
    for seed in 0..10 {
        let inst = instance(seed, 4, 2);
        let perm = [2, 0, 3, 1];
        let base = fixed_point(&inst.params, &inst.network, &inst.values, None, &FixedPointConfig::default()).unwrap();
        let moved = fixed_point(
            &inst.params.permuted(&perm).unwrap(),
            &inst.network.permuted(&perm).unwrap(),
            &inst.values.permuted(&perm).unwrap(),
            None,
            &FixedPointConfig::default(),
        )
        .unwrap();
        if !(base.converged && moved.converged) {
            continue;
        }
        for g in 0..2 {
            for i in 0..4 {
                let a = base.field.occupancy()[(g, perm[i])];
                let b = moved.field.occupancy()[(g, i)];
                assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "seed {seed}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn representative_solve_matches_fixed_point_for_one_good() {
    let mut compared = 0;
    for seed in 0..40 {
        let inst = instance(seed, 2 + (seed as usize % 5), 1);
        let eq = fixed_point(&inst.params, &inst.network, &inst.values, None, &FixedPointConfig::default()).unwrap();
        let system = build_omega(&inst.params, &inst.network, &inst.values, 0).unwrap();
        if !eq.converged || existence_check(&system, &ExistenceConfig::default()).verdict != Verdict::Unique {
            continue;
        }
        let rep = representative_solve(&system, inst.params.capacities()[0], &ExistenceConfig::default()).unwrap();
        for i in 0..inst.network.size() {
            let (a, b) = (eq.field.occupancy()[(0, i)], rep.occupancy[i]);
            assert!((a - b).abs() <= 1e-6 * a.abs(), "seed {seed} port {i}: {a} vs {b}");
        }
        compared += 1;
    }
    assert!(compared >= 35, "only {compared} instances compared");
}

#[test]
fn uniform_congestion_without_transport_cost_has_vanishing_determinant() {
    for k in 2..=6 {
        let labels = (0..k).map(|i| format!("P{i}")).collect();
        let travel = DMatrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { 1.0 + (i + j) as f64 });
        let network = PortNetwork::new(labels, travel, Kernel::Linear).unwrap();
        let params = CostParameters::new(vec![0.7; k], vec![0.0], vec![50.0]).unwrap();
        let values = GoodValues::new(DMatrix::from_fn(1, k, |_, i| (i as f64 * 0.37).sin())).unwrap();
        let system = build_omega(&params, &network, &values, 0).unwrap();
        let scale = system.omega.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0).powi(k as i32);
        assert!(system.determinant.abs() <= 1e-10 * scale, "K={k}: det {}", system.determinant);
    }
}
