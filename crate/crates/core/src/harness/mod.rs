//! Experiment harness: noise injection, the resolution-error metric, seeded
//! trials, SRF sweeps, the IAA comparison and CSV output.

mod config;
mod experiment;
mod selftest;

use num_complex::Complex64;
use pathfinding::kuhn_munkres::kuhn_munkres_min;
use pathfinding::matrix::Matrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::wrap_dist;
use crate::radar::{ArraySpec, Location, MeasurementVector, Target, TargetScene};

pub use config::{load_config, parse_config, DeltaMode, ExperimentConfig, ExtractOptions, SceneSource, SCHEMA_VERSION};
pub use experiment::{
    build_scene, comparison_summary, run_iaa_comparison, run_srf_sweep, sweep_summary, thread_pool,
    write_comparison_csv, write_sweep_csv, ComparisonRow, Diagnostics, ExperimentOutput, Method, SweepRow,
    TrialRecord,
};
pub use selftest::{run_selftest, SelftestCheck, SelftestReport};

/// Error charged to a true target without a matched estimate: half an
/// SRF-1 cell on every axis, `sqrt(3 * (1/2)^2)`.
pub const UNMATCHED_PENALTY: f64 = 0.866_025_403_784_438_6;

/// Above this many targets the assignment falls back to greedy matching.
pub const HUNGARIAN_LIMIT: usize = 64;

/// Adds circular Gaussian noise scaled so that `||y||^2 / ||n||^2` equals
/// `snr_db` exactly for this realization. `snr_db = inf` gives `n = 0`.
pub fn add_noise(y: &MeasurementVector, snr_db: f64, seed: u64) -> Result<(MeasurementVector, Vec<Complex64>)> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidOption(format!("snr_db must be a number, got {snr_db}")));
    }
    let ynorm = y.norm();
    if ynorm == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut noise: Vec<Complex64> = (0..y.data().len())
        .map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect();
    let nnorm = crate::linalg::norm(&noise);
    let scale = ynorm / (nnorm * 10f64.powf(snr_db / 20.0));
    noise.iter_mut().for_each(|n| *n *= scale);
    let mut noisy = y.clone();
    noisy.data_mut().iter_mut().zip(&noise).for_each(|(a, n)| *a += n);
    Ok((noisy, noise))
}

/// Independent seeds for the pieces of one trial, drawn from stream `trial`
/// of a ChaCha8 generator keyed by `base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub signals: u64,
    pub scene: u64,
    pub noise: u64,
}

pub fn trial_seeds(base: u64, trial: u64) -> TrialSeeds {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(trial);
    TrialSeeds {
        signals: rng.next_u64(),
        scene: rng.next_u64(),
        noise: rng.next_u64(),
    }
}

/// `sqrt((N_T N_R dbeta)^2 + (L dtau)^2 + (L dnu)^2)` with wrap-around
/// distances.
pub fn pair_error(spec: ArraySpec, a: Location, b: Location) -> f64 {
    let vt = spec.virtual_len() as f64;
    let l = spec.signal_len() as f64;
    let db = vt * wrap_dist(a.beta(), b.beta());
    let dt = l * wrap_dist(a.tau(), b.tau());
    let dn = l * wrap_dist(a.nu(), b.nu());
    (db * db + dt * dt + dn * dn).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// Error per true target, [`UNMATCHED_PENALTY`] when unmatched.
    pub per_target: Vec<f64>,
    /// Index into the (strength-sorted, truncated) estimates per true target.
    pub assignment: Vec<Option<usize>>,
    pub mean: f64,
}

/// Matches estimates to the truth. Only the `S` strongest estimates take
/// part, so spurious weak peaks cannot displace real ones.
pub fn match_targets(est: &[Target], truth: &TargetScene, spec: ArraySpec) -> MatchReport {
    let s = truth.len();
    if s == 0 {
        return MatchReport {
            per_target: Vec::new(),
            assignment: Vec::new(),
            mean: 0.0,
        };
    }
    let mut order: Vec<usize> = (0..est.len()).collect();
    order.sort_by(|&a, &b| est[b].gain.norm().total_cmp(&est[a].gain.norm()));
    order.truncate(s);
    let kept: Vec<Location> = order.iter().map(|&i| est[i].loc).collect();
    let cost = |e: usize, t: usize| pair_error(spec, kept[e], truth.targets[t].loc);

    let mut assignment = vec![None; s];
    if !kept.is_empty() {
        if s <= HUNGARIAN_LIMIT {
            // rows are estimates (never more than targets)
            let weights = Matrix::from_fn(kept.len(), s, |(e, t)| (cost(e, t) * 1e9).round() as i64);
            let (_, cols) = kuhn_munkres_min(&weights);
            for (e, t) in cols.into_iter().enumerate() {
                assignment[t] = Some(e);
            }
        } else {
            let mut pairs: Vec<(f64, usize, usize)> = (0..kept.len())
                .flat_map(|e| (0..s).map(move |t| (e, t)))
                .map(|(e, t)| (cost(e, t), e, t))
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut used = vec![false; kept.len()];
            for (_, e, t) in pairs {
                if !used[e] && assignment[t].is_none() {
                    used[e] = true;
                    assignment[t] = Some(e);
                }
            }
        }
    }
    let per_target: Vec<f64> = assignment
        .iter()
        .enumerate()
        .map(|(t, a)| a.map_or(UNMATCHED_PENALTY, |e| cost(e, t)))
        .collect();
    let mean = per_target.iter().sum::<f64>() / s as f64;
    MatchReport {
        per_target,
        assignment,
        mean,
    }
}

/// Average matched error over the true targets.
pub fn resolution_error(est: &[Target], truth: &TargetScene, spec: ArraySpec) -> f64 {
    match_targets(est, truth, spec).mean
}
