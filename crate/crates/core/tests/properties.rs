use mimo_superres::grid::{wrap_dist, GridIndex, GridSpec};
use mimo_superres::harness::{add_noise, match_targets, resolution_error};
use mimo_superres::iaa::{iaa_recover, IaaOptions};
use mimo_superres::linalg::{inner, norm};
use mimo_superres::radar::{frac_time_shift, simulate_measurement, MimoOperator};
use mimo_superres::{ArraySpec, Complex64, Location, MeasurementVector, ProbingSignalSet, Target, TargetScene};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn random_scene(rng: &mut ChaCha8Rng, count: usize) -> TargetScene {
    TargetScene::new(
        (0..count)
            .map(|_| {
                Target::new(
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    Location::new(rng.random(), rng.random(), rng.random()),
                )
            })
            .collect(),
    )
}

fn spec_strategy() -> impl Strategy<Value = ArraySpec> {
    (1usize..4, 1usize..4, 1usize..6).prop_map(|(t, r, h)| ArraySpec::new(t, r, 2 * h + 1).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adjoint_identity_holds(spec in spec_strategy(), seed in any::<u64>()) {
        let op = MimoOperator::new(&ProbingSignalSet::generate(spec, seed));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let z = random_vec(&mut rng, op.cols());
        let y = MeasurementVector::new(spec, random_vec(&mut rng, op.rows())).unwrap();
        let lhs = inner(op.apply(&z).unwrap().data(), y.data());
        let rhs = inner(&z, &op.adjoint(&y).unwrap());
        prop_assert!((lhs - rhs).norm() <= 1e-11 * norm(&z) * y.norm());
    }

    #[test]
    fn simulation_is_linear_in_the_scene(spec in spec_strategy(), seed in any::<u64>(), k in 1usize..4) {
        let signals = ProbingSignalSet::generate(spec, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let a = random_scene(&mut rng, k);
        let b = random_scene(&mut rng, k);
        let both = TargetScene::new(a.targets.iter().chain(&b.targets).copied().collect());
        let ya = simulate_measurement(&a, &signals);
        let yb = simulate_measurement(&b, &signals);
        let yab = simulate_measurement(&both, &signals);
        for ((x, y), z) in ya.data().iter().zip(yb.data()).zip(yab.data()) {
            prop_assert!((x + y - z).norm() <= 1e-12 * (1.0 + z.norm()));
        }
        // and agrees with the operator applied to the atoms
        let op = MimoOperator::new(&signals);
        let mut acc = vec![Complex64::new(0.0, 0.0); op.rows()];
        for t in &both.targets {
            for (o, v) in acc.iter_mut().zip(op.apply_atom(t.loc)) {
                *o += t.gain * v;
            }
        }
        for (x, y) in acc.iter().zip(yab.data()) {
            prop_assert!((x - y).norm() <= 1e-10 * (1.0 + y.norm()));
        }
    }

    #[test]
    fn time_shifts_compose(half in 1usize..10, seed in any::<u64>(), a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vec(&mut rng, 2 * half + 1);
        let two = frac_time_shift(&frac_time_shift(&x, a).unwrap(), b).unwrap();
        let one = frac_time_shift(&x, a + b).unwrap();
        for (p, q) in two.iter().zip(&one) {
            prop_assert!((p - q).norm() <= 1e-12 * (1.0 + norm(&x)));
        }
    }

    #[test]
    fn noise_has_exact_snr_and_is_repeatable(seed in any::<u64>(), snr in -10.0f64..40.0) {
        let spec = ArraySpec::new(2, 2, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = MeasurementVector::new(spec, random_vec(&mut rng, spec.measurement_len())).unwrap();
        let (noisy, n) = add_noise(&y, snr, seed).unwrap();
        let measured = 10.0 * (y.norm().powi(2) / norm(&n).powi(2)).log10();
        prop_assert!((measured - snr).abs() <= 1e-9);
        let (again, _) = add_noise(&y, snr, seed).unwrap();
        prop_assert_eq!(noisy, again);
    }

    #[test]
    fn metric_ignores_order_and_is_nonnegative(seed in any::<u64>(), count in 1usize..8) {
        let spec = ArraySpec::new(3, 3, 41).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_scene(&mut rng, count);
        let mut est = truth.targets.clone();
        est.reverse();
        prop_assert!(resolution_error(&est, &truth, spec) <= 1e-12);
        let other = random_scene(&mut rng, count);
        let report = match_targets(&other.targets, &truth, spec);
        prop_assert!(report.mean >= 0.0);
        prop_assert!(report.per_target.iter().all(|&e| e >= 0.0));
    }

    #[test]
    fn wrap_distance_is_symmetric_and_periodic(a in -3.0f64..3.0, b in -3.0f64..3.0, k in -3i32..3) {
        let d = wrap_dist(a, b);
        prop_assert!((0.0..=0.5).contains(&d));
        prop_assert!((d - wrap_dist(b, a)).abs() <= 1e-12);
        prop_assert!((d - wrap_dist(a + k as f64, b)).abs() <= 1e-12);
    }

    #[test]
    fn grid_flattening_round_trips(k1 in 1usize..7, k2 in 3usize..9, k3 in 3usize..9, flat in any::<usize>()) {
        let spec = ArraySpec::new(1, 1, 3).unwrap();
        let grid = GridSpec::new(spec, k1, k2, k3).unwrap();
        let i = flat % grid.len();
        let idx = grid.unflat(i);
        prop_assert!(grid.contains(idx));
        prop_assert_eq!(grid.flat(idx), i);
        prop_assert_eq!(grid.flat(GridIndex::new(idx.n1, idx.n2, idx.n3)), i);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn iaa_powers_are_nonnegative(seed in any::<u64>()) {
        let spec = ArraySpec::new(1, 2, 5).unwrap();
        let signals = ProbingSignalSet::generate(spec, seed);
        let grid = GridSpec::from_srf(spec, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = MeasurementVector::new(spec, random_vec(&mut rng, spec.measurement_len())).unwrap();
        let out = iaa_recover(&signals, &grid, &y, &IaaOptions { iterations: 4, ..IaaOptions::default() }).unwrap();
        prop_assert!(out.powers.iter().all(|&p| p >= 0.0 && p.is_finite()));
    }
}
