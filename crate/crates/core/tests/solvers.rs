use mimo_superres::grid::{grid_point, random_grid_scene, GridDictionary, GridIndex, GridSpec, SceneBox};
use mimo_superres::harness::{add_noise, resolution_error};
use mimo_superres::radar::simulate_measurement;
use mimo_superres::solvers::{
    extract_targets, oracle_delta, solve_l1_eq, solve_l1_eq_with, solve_l1_err, solve_l1_err_with, SolverOptions,
    Strategy,
};
use mimo_superres::{ArraySpec, Complex64, MeasurementVector, ProbingSignalSet, Target, TargetScene};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn strategy(s: Strategy) -> SolverOptions {
    SolverOptions {
        strategy: s,
        ..SolverOptions::default()
    }
}

#[test]
fn zero_measurement_gives_zero_solution() {
    let spec = ArraySpec::new(2, 2, 9).unwrap();
    let signals = ProbingSignalSet::generate(spec, 1);
    let grid = GridSpec::from_srf(spec, 2).unwrap();
    let y = MeasurementVector::zeros(spec);
    let r = solve_l1_eq(&signals, &grid, &y, &SolverOptions::default()).unwrap();
    assert!(r.solution.is_empty());
    assert!(r.converged);
    let r = solve_l1_err(&signals, &grid, &y, 0.5, &SolverOptions::default()).unwrap();
    assert!(r.solution.is_empty());
}

#[test]
fn ball_containing_origin_gives_zero_solution() {
    let spec = ArraySpec::new(2, 2, 9).unwrap();
    let signals = ProbingSignalSet::generate(spec, 2);
    let grid = GridSpec::from_srf(spec, 1).unwrap();
    let loc = grid_point(&grid, GridIndex::new(1, 4, 7)).unwrap();
    let y = simulate_measurement(&TargetScene::new(vec![Target::new(c(0.3, 0.4), loc)]), &signals);
    let delta = y.norm().powi(2);
    let r = solve_l1_err(&signals, &grid, &y, delta * 1.0001, &SolverOptions::default()).unwrap();
    assert!(r.solution.is_empty());
    assert_eq!(r.objective, 0.0);
}

#[test]
fn single_on_grid_target_is_recovered_exactly() {
    let spec = ArraySpec::new(3, 3, 41).unwrap();
    let signals = ProbingSignalSet::generate(spec, 7);
    let grid = GridSpec::from_srf(spec, 1).unwrap();
    let idx = GridIndex::new(4, 11, 30);
    let gain = c(-0.6, 0.5);
    let y = simulate_measurement(&TargetScene::new(vec![Target::new(gain, grid_point(&grid, idx).unwrap())]), &signals);
    let r = solve_l1_eq(&signals, &grid, &y, &SolverOptions::default()).unwrap();
    assert!(r.converged);
    assert_eq!(r.solution.support(1e-3 * gain.norm()), vec![idx]);
    assert!((r.solution.get(idx) - gain).norm() <= 1e-6 * gain.norm());
}

#[test]
fn three_on_grid_targets_are_recovered() {
    let spec = ArraySpec::new(3, 3, 41).unwrap();
    let grid = GridSpec::from_srf(spec, 1).unwrap();
    for seed in 0..3 {
        let signals = ProbingSignalSet::generate(spec, 100 + seed);
        let scene = random_grid_scene(spec, &grid, 3, &SceneBox::unit(), seed, 10_000, true).unwrap();
        let y = simulate_measurement(&scene, &signals);
        let r = solve_l1_eq(&signals, &grid, &y, &SolverOptions::default()).unwrap();
        let mut support = r.solution.support(1e-3);
        support.sort();
        let mut truth: Vec<GridIndex> = scene.targets.iter().map(|t| grid.nearest(t.loc)).collect();
        truth.sort();
        assert_eq!(support, truth, "seed {seed}");
        for t in &scene.targets {
            let err = (r.solution.get(grid.nearest(t.loc)) - t.gain).norm() / t.gain.norm();
            assert!(err <= 1e-3, "seed {seed}: {err}");
        }
    }
}

#[test]
fn zero_radius_matches_equality_problem() {
    let spec = ArraySpec::new(2, 2, 9).unwrap();
    let signals = ProbingSignalSet::generate(spec, 4);
    let grid = GridSpec::from_srf(spec, 2).unwrap();
    let scene = TargetScene::new(vec![
        Target::new(c(1.0, 0.2), grid_point(&grid, GridIndex::new(1, 3, 5)).unwrap()),
        Target::new(c(-0.4, 0.7), grid_point(&grid, GridIndex::new(6, 12, 2)).unwrap()),
    ]);
    let y = simulate_measurement(&scene, &signals);
    let dict = GridDictionary::new(&signals, grid).unwrap();
    let eq = solve_l1_eq_with(&dict, &y, &SolverOptions::default()).unwrap();
    let err = solve_l1_err_with(&dict, &y, 0.0, &SolverOptions::default()).unwrap();
    assert!((eq.objective - err.objective).abs() <= 1e-6 * eq.objective);
    let diff: f64 = eq
        .solution
        .to_dense()
        .iter()
        .zip(err.solution.to_dense())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(diff <= 1e-6, "{diff}");
}

/// Two independent algorithms (ADMM on the full grid, working set with the
/// interior-point solver) must reach the same optimal value.
#[test]
fn strategies_agree_on_small_oracle_problem() {
    let spec = ArraySpec::new(1, 1, 5).unwrap();
    let grid = GridSpec::new(spec, 1, 10, 10).unwrap();
    for seed in 0..4u64 {
        let signals = ProbingSignalSet::generate(spec, seed);
        // off-grid scene: the optimum is not the generating vector
        let scene = TargetScene::new(vec![
            Target::new(c(0.9, 0.1), mimo_superres::Location::new(0.0, 0.13 + 0.1 * seed as f64, 0.71)),
            Target::new(c(-0.2, 0.5), mimo_superres::Location::new(0.0, 0.62, 0.27)),
        ]);
        let y = simulate_measurement(&scene, &signals);
        let dict = GridDictionary::new(&signals, grid).unwrap();
        let opts = |s| SolverOptions {
            tol_abs: 1e-9,
            tol_rel: 1e-9,
            gap_tol: 1e-7,
            max_iter: 200_000,
            ..strategy(s)
        };
        let full = solve_l1_eq_with(&dict, &y, &opts(Strategy::FullGrid)).unwrap();
        let ws = solve_l1_eq_with(&dict, &y, &opts(Strategy::WorkingSet)).unwrap();
        for r in [&full, &ws] {
            assert!(r.converged, "seed {seed}: gap {:.2e} it {} outer {}", r.relative_gap(), r.iterations, r.outer_iterations);
        }
        let rel = (full.objective - ws.objective).abs() / full.objective;
        assert!(rel <= 1e-5, "seed {seed}: {} vs {}", full.objective, ws.objective);
        for r in [&full, &ws] {
            // weak duality, up to the equality residual
            assert!(r.dual_objective <= r.objective * (1.0 + 1e-6));
            assert!(r.constraint_residual <= 1e-6 * y.norm());
        }
    }
}

#[test]
fn moderate_noise_stays_within_one_cell() {
    let spec = ArraySpec::new(3, 3, 41).unwrap();
    let grid = GridSpec::from_srf(spec, 2).unwrap();
    let signals = ProbingSignalSet::generate(spec, 21);
    let loc = grid_point(&grid, GridIndex::new(5, 31, 60)).unwrap();
    let scene = TargetScene::new(vec![Target::new(c(0.8, -0.1), loc)]);
    let clean = simulate_measurement(&scene, &signals);
    let (y, noise) = add_noise(&clean, 20.0, 5).unwrap();
    let r = solve_l1_err(&signals, &grid, &y, oracle_delta(&noise), &SolverOptions::default()).unwrap();
    let est = extract_targets(&r.solution, 0.1, 1).unwrap();
    let err = resolution_error(&est, &scene, spec);
    assert!(err < 1.0, "{err}");
}
