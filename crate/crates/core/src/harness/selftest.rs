use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certificate::{build_certificate, fejer_coeffs, CertificateMode};
use crate::error::Result;
use crate::grid::{grid_point, wrap_dist, GridIndex, GridSpec};
use crate::iaa::{iaa_recover, IaaOptions};
use crate::linalg::{inner, norm};
use crate::physics::{from_normalized, to_normalized, PhysicalTarget, RadarConfig};
use crate::radar::{
    frac_time_shift, simulate_measurement, ArraySpec, Location, MeasurementVector, MimoOperator,
    ProbingSignalSet, Target, TargetScene,
};
use crate::solvers::{solve_l1_eq, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub checks: Vec<SelftestCheck>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect()
}

fn check(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> SelftestCheck {
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    SelftestCheck {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Small-scale oracle and equivalence checks; a few seconds in release.
pub fn run_selftest(seed: u64) -> SelftestReport {
    let mut checks = Vec::new();

    checks.push(check("operator_matches_dense", || {
        let spec = ArraySpec::new(2, 2, 5)?;
        let op = MimoOperator::new(&ProbingSignalSet::generate(spec, seed));
        let dense = op.dense()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random_vec(&mut rng, op.cols());
        let fast = op.apply(&z)?;
        let slow = &dense * nalgebra::DVector::from_column_slice(&z);
        let err = fast.data().iter().zip(slow.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let rel = err / slow.norm();
        Ok((rel <= 1e-10, format!("max relative error {rel:.2e}")))
    }));

    checks.push(check("adjoint_identity", || {
        let spec = ArraySpec::new(2, 3, 7)?;
        let op = MimoOperator::new(&ProbingSignalSet::generate(spec, seed));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let z = random_vec(&mut rng, op.cols());
            let y = MeasurementVector::new(spec, random_vec(&mut rng, op.rows()))?;
            let lhs = inner(op.apply(&z)?.data(), y.data());
            let rhs = inner(&z, &op.adjoint(&y)?);
            worst = worst.max((lhs - rhs).norm() / (norm(&z) * y.norm()));
        }
        Ok((worst <= 1e-10, format!("worst normalized mismatch {worst:.2e}")))
    }));

    checks.push(check("integer_time_shift_is_cyclic", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let x = random_vec(&mut rng, 9);
        let shifted = frac_time_shift(&x, 2.0 / 9.0)?;
        let err = (0..9).map(|p| (shifted[p] - x[(p + 7) % 9]).norm()).fold(0.0, f64::max);
        Ok((err <= 1e-12, format!("max error {err:.2e}")))
    }));

    checks.push(check("wrap_distance_examples", || {
        let a = wrap_dist(0.75, 0.5);
        let b = wrap_dist(5.0 / 6.0, 1.0 / 6.0);
        Ok((a == 0.25 && b == 1.0 / 3.0, format!("{a} and {b}")))
    }));

    checks.push(check("physics_round_trip", || {
        let config = RadarConfig::new(10e9, 41e6, 1e-6)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let loc = Location::new(
                rng.random_range(-0.499..0.499),
                rng.random_range(0.0..0.5),
                rng.random_range(-0.5..0.5),
            );
            let (angle_rad, range_m, velocity_mps) = from_normalized(loc, &config)?;
            let t = PhysicalTarget {
                angle_rad,
                range_m,
                velocity_mps,
                gain: Complex64::new(1.0, 0.0),
            };
            let back = to_normalized(&t, &config)?.loc;
            for (a, b) in back.coords().iter().zip(loc.coords()) {
                worst = worst.max(wrap_dist(*a, b));
            }
        }
        Ok((worst <= 1e-12, format!("worst coordinate error {worst:.2e}")))
    }));

    checks.push(check("l1_exact_recovery", || {
        let spec = ArraySpec::new(2, 2, 9)?;
        let signals = ProbingSignalSet::generate(spec, seed);
        let grid = GridSpec::from_srf(spec, 1)?;
        let idx = GridIndex::new(1, 3, 6);
        let gain = Complex64::new(0.6, -0.3);
        let y = simulate_measurement(&TargetScene::new(vec![Target::new(gain, grid_point(&grid, idx)?)]), &signals);
        let r = solve_l1_eq(&signals, &grid, &y, &SolverOptions::default())?;
        let err = (r.solution.get(idx) - gain).norm() / gain.norm();
        let support = r.solution.support(1e-3 * gain.norm()).len();
        Ok((support == 1 && err <= 1e-3, format!("support {support}, gain error {err:.2e}")))
    }));

    checks.push(check("iaa_single_target", || {
        let spec = ArraySpec::new(2, 2, 7)?;
        let signals = ProbingSignalSet::generate(spec, seed);
        let grid = GridSpec::from_srf(spec, 2)?;
        let idx = GridIndex::new(5, 2, 9);
        let loc = grid_point(&grid, idx)?;
        let y = simulate_measurement(&TargetScene::new(vec![Target::new(Complex64::new(1.0, 0.0), loc)]), &signals);
        let out = iaa_recover(&signals, &grid, &y, &IaaOptions::default())?;
        let found = out.targets.first().map(|t| grid.nearest(t.loc));
        Ok((found == Some(idx), format!("strongest peak {found:?}")))
    }));

    checks.push(check("deterministic_certificate", || {
        let spec = ArraySpec::new(3, 3, 9)?;
        let kernel = fejer_coeffs(spec.half_len())?;
        let loc = Location::new(0.3, 0.6, 0.1);
        let cert = build_certificate(
            CertificateMode::Deterministic,
            spec,
            &kernel,
            None,
            &[loc],
            &[Complex64::new(0.0, 1.0)],
        )?;
        let report = cert.verify([36, 36, 36], None)?;
        Ok((
            report.passed,
            format!("interp {:.1e}, offgrid max {:.4}", report.interp_residual, report.offgrid_max),
        ))
    }));

    SelftestReport { checks }
}
