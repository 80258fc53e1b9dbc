use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{add_noise, match_targets, trial_seeds, DeltaMode, ExperimentConfig, SceneSource, TrialSeeds};
use crate::error::{Error, Result};
use crate::grid::{
    equispaced_scene, random_grid_scene, random_separated_scene, GridDictionary, GridSpec, SceneBox,
};
use crate::iaa::iaa_recover_with;
use crate::radar::{simulate_measurement, MeasurementVector, ProbingSignalSet, Target, TargetScene};
use crate::solvers::{expected_delta, extract_targets, oracle_delta, solve_l1_err_with};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    L1Err,
    Iaa,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::L1Err => "l1_err",
            Method::Iaa => "iaa",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Diagnostics {
    L1Err {
        iterations: usize,
        outer_iterations: usize,
        converged: bool,
        relative_gap: f64,
        constraint_residual: f64,
        nnz: usize,
    },
    Iaa {
        iterations: usize,
        loading: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seeds: TrialSeeds,
    pub srf: usize,
    pub snr_db: Option<f64>,
    pub method: Method,
    /// Absent when the trial failed.
    pub resolution_error: Option<f64>,
    pub matched_errors: Vec<f64>,
    pub estimated_targets: usize,
    pub diagnostics: Option<Diagnostics>,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub srf: usize,
    pub snr_db: Option<f64>,
    pub mean_err: f64,
    pub stderr: f64,
    /// Successful trials entering the mean.
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub snr_db: Option<f64>,
    pub method: Method,
    pub mean_err: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput<R> {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<R>,
}

/// Worker pool capped by `SUPERRES_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SUPERRES_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::config("SUPERRES_THREADS", format!("expected a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Unsupported(format!("thread pool: {e}")))
}

/// Scene of one trial.
pub fn build_scene(cfg: &ExperimentConfig, seed: u64) -> Result<TargetScene> {
    let spec = cfg.spec;
    let count = cfg.target_count();
    match &cfg.scene {
        SceneSource::Explicit { scene } => Ok(scene.clone()),
        SceneSource::Equispaced => Ok(equispaced_scene(spec, count, seed)),
        SceneSource::RandomBox {
            bounds,
            enforce_separation,
            on_grid,
            max_tries,
        } => {
            let bounds = bounds.unwrap_or_else(|| SceneBox::delay_doppler_limited(spec));
            if *on_grid {
                let coarse = GridSpec::from_srf(spec, 1)?;
                random_grid_scene(spec, &coarse, count, &bounds, seed, *max_tries, *enforce_separation)
            } else {
                random_separated_scene(spec, count, &bounds, seed, *max_tries, *enforce_separation)
            }
        }
    }
}

struct Trial {
    index: usize,
    seeds: TrialSeeds,
    signals: ProbingSignalSet,
    scene: TargetScene,
    clean: MeasurementVector,
}

fn prepare_trial(cfg: &ExperimentConfig, index: usize) -> Result<Trial> {
    let seeds = trial_seeds(cfg.seed, index as u64);
    let signals = ProbingSignalSet::generate(cfg.spec, seeds.signals);
    let scene = build_scene(cfg, seeds.scene)?;
    let clean = simulate_measurement(&scene, &signals);
    Ok(Trial {
        index,
        seeds,
        signals,
        scene,
        clean,
    })
}

/// Measurement and `delta` at one SNR; the noise direction is shared by all
/// SNRs and SRFs of a trial.
fn noisy(cfg: &ExperimentConfig, trial: &Trial, snr_db: Option<f64>) -> Result<(MeasurementVector, f64)> {
    match snr_db {
        None => Ok((trial.clean.clone(), 0.0)),
        Some(snr) => {
            let (y, n) = add_noise(&trial.clean, snr, trial.seeds.noise)?;
            let delta = match cfg.delta {
                DeltaMode::Oracle => oracle_delta(&n),
                DeltaMode::Expected => expected_delta(trial.clean.norm().powi(2), snr),
            };
            Ok((y, delta))
        }
    }
}

fn record(
    cfg: &ExperimentConfig,
    trial: &Trial,
    srf: usize,
    snr_db: Option<f64>,
    method: Method,
    started: Instant,
    outcome: Result<(Vec<Target>, Diagnostics)>,
) -> TrialRecord {
    let base = TrialRecord {
        trial: trial.index,
        seeds: trial.seeds,
        srf,
        snr_db,
        method,
        resolution_error: None,
        matched_errors: Vec::new(),
        estimated_targets: 0,
        diagnostics: None,
        error: None,
        wall_time_s: 0.0,
    };
    let mut rec = match outcome {
        Ok((targets, diag)) => {
            let m = match_targets(&targets, &trial.scene, cfg.spec);
            TrialRecord {
                resolution_error: Some(m.mean),
                matched_errors: m.per_target,
                estimated_targets: targets.len(),
                diagnostics: Some(diag),
                ..base
            }
        }
        Err(e) => TrialRecord {
            error: Some(e.to_string()),
            ..base
        },
    };
    rec.wall_time_s = started.elapsed().as_secs_f64();
    rec
}

fn run_l1(cfg: &ExperimentConfig, dict: &GridDictionary, y: &MeasurementVector, delta: f64) -> Result<(Vec<Target>, Diagnostics)> {
    let r = solve_l1_err_with(dict, y, delta, &cfg.solver)?;
    let targets = extract_targets(&r.solution, cfg.extract.threshold_frac, cfg.extract.cluster_radius)?;
    let diag = Diagnostics::L1Err {
        iterations: r.iterations,
        outer_iterations: r.outer_iterations,
        converged: r.converged,
        relative_gap: r.relative_gap(),
        constraint_residual: r.constraint_residual,
        nnz: r.solution.nnz(),
    };
    Ok((targets, diag))
}

fn run_iaa(cfg: &ExperimentConfig, dict: &GridDictionary, y: &MeasurementVector) -> Result<(Vec<Target>, Diagnostics)> {
    let r = iaa_recover_with(dict, y, &cfg.iaa)?;
    let diag = Diagnostics::Iaa {
        iterations: r.iterations,
        loading: r.loading,
    };
    Ok((r.targets, diag))
}

/// Setup failures (scene drawing, dictionary) mark every record of the job.
fn failed_job(
    cfg: &ExperimentConfig,
    index: usize,
    srf: usize,
    methods: &[Method],
    e: &Error,
) -> Vec<TrialRecord> {
    let seeds = trial_seeds(cfg.seed, index as u64);
    cfg.snr_db
        .iter()
        .flat_map(|&snr| {
            methods.iter().map(move |&method| TrialRecord {
                trial: index,
                seeds,
                srf,
                snr_db: snr,
                method,
                resolution_error: None,
                matched_errors: Vec::new(),
                estimated_targets: 0,
                diagnostics: None,
                error: Some(e.to_string()),
                wall_time_s: 0.0,
            })
        })
        .collect()
}

fn sweep_job(cfg: &ExperimentConfig, srf: usize, index: usize) -> Vec<TrialRecord> {
    let setup = || -> Result<(Trial, GridDictionary)> {
        let trial = prepare_trial(cfg, index)?;
        let dict = GridDictionary::new(&trial.signals, GridSpec::from_srf(cfg.spec, srf)?)?;
        Ok((trial, dict))
    };
    let (trial, dict) = match setup() {
        Ok(v) => v,
        Err(e) => return failed_job(cfg, index, srf, &[Method::L1Err], &e),
    };
    cfg.snr_db
        .iter()
        .map(|&snr| {
            let started = Instant::now();
            let outcome = noisy(cfg, &trial, snr).and_then(|(y, delta)| run_l1(cfg, &dict, &y, delta));
            record(cfg, &trial, srf, snr, Method::L1Err, started, outcome)
        })
        .collect()
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn successful<'a>(records: &'a [TrialRecord], keep: impl Fn(&TrialRecord) -> bool + 'a) -> Vec<f64> {
    let mut v: Vec<(usize, f64)> = records
        .iter()
        .filter(|r| keep(r))
        .filter_map(|r| r.resolution_error.map(|e| (r.trial, e)))
        .collect();
    // trial order keeps the summation order independent of scheduling
    v.sort_by_key(|&(t, _)| t);
    v.into_iter().map(|(_, e)| e).collect()
}

/// One row per `(srf, snr)` in config order.
pub fn sweep_summary(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &srf in &cfg.srf {
        for &snr in &cfg.snr_db {
            let errs = successful(records, |r| r.srf == srf && r.snr_db == snr && r.method == Method::L1Err);
            let (mean_err, stderr) = mean_stderr(&errs);
            rows.push(SweepRow {
                srf,
                snr_db: snr,
                mean_err,
                stderr,
                trials: errs.len(),
            });
        }
    }
    rows
}

/// One row per `(snr, method)` in config order.
pub fn comparison_summary(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    for &snr in &cfg.snr_db {
        for method in [Method::L1Err, Method::Iaa] {
            let errs = successful(records, |r| r.snr_db == snr && r.method == method);
            let (mean_err, stderr) = mean_stderr(&errs);
            rows.push(ComparisonRow {
                snr_db: snr,
                method,
                mean_err,
                stderr,
                trials: errs.len(),
            });
        }
    }
    rows
}

/// L1-ERR over every SRF, SNR and trial. Trial `t` uses the same signals,
/// scene and noise direction for every SRF and SNR.
pub fn run_srf_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutput<SweepRow>> {
    let cfg = cfg.clone().validated()?;
    let jobs: Vec<(usize, usize)> = cfg
        .srf
        .iter()
        .flat_map(|&srf| (0..cfg.trials).map(move |t| (srf, t)))
        .collect();
    let records: Vec<TrialRecord> = thread_pool()?.install(|| {
        jobs.par_iter()
            .map(|&(srf, t)| sweep_job(&cfg, srf, t))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    let summary = sweep_summary(&cfg, &records);
    Ok(ExperimentOutput { records, summary })
}

/// Paired L1-ERR and IAA runs on identical measurements at the single SRF of
/// the config.
pub fn run_iaa_comparison(cfg: &ExperimentConfig) -> Result<ExperimentOutput<ComparisonRow>> {
    let cfg = cfg.clone().validated()?;
    if cfg.srf.len() != 1 {
        return Err(Error::config("srf", "the IAA comparison takes exactly one SRF"));
    }
    let srf = cfg.srf[0];
    let job = |index: usize| -> Vec<TrialRecord> {
        let setup = || -> Result<(Trial, GridDictionary)> {
            let trial = prepare_trial(&cfg, index)?;
            let dict = GridDictionary::new(&trial.signals, GridSpec::from_srf(cfg.spec, srf)?)?;
            Ok((trial, dict))
        };
        let (trial, dict) = match setup() {
            Ok(v) => v,
            Err(e) => return failed_job(&cfg, index, srf, &[Method::L1Err, Method::Iaa], &e),
        };
        let mut out = Vec::new();
        for &snr in &cfg.snr_db {
            let measured = noisy(&cfg, &trial, snr);
            let started = Instant::now();
            let l1 = match &measured {
                Ok((y, delta)) => run_l1(&cfg, &dict, y, *delta),
                Err(e) => Err(Error::Unsupported(e.to_string())),
            };
            out.push(record(&cfg, &trial, srf, snr, Method::L1Err, started, l1));
            let started = Instant::now();
            let iaa = match &measured {
                Ok((y, _)) => run_iaa(&cfg, &dict, y),
                Err(e) => Err(Error::Unsupported(e.to_string())),
            };
            out.push(record(&cfg, &trial, srf, snr, Method::Iaa, started, iaa));
        }
        out
    };
    let records: Vec<TrialRecord> = thread_pool()?.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(job)
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    let summary = comparison_summary(&cfg, &records);
    Ok(ExperimentOutput { records, summary })
}

fn snr_field(snr: Option<f64>) -> String {
    snr.map_or_else(|| "inf".to_string(), |v| v.to_string())
}

/// CSV `srf,snr_db,mean_err,stderr,trials`; noiseless rows carry `inf`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["srf", "snr_db", "mean_err", "stderr", "trials"])
        .map_err(crate::solvers::csv_err)?;
    for r in rows {
        w.write_record([
            r.srf.to_string(),
            snr_field(r.snr_db),
            r.mean_err.to_string(),
            r.stderr.to_string(),
            r.trials.to_string(),
        ])
        .map_err(crate::solvers::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV `snr_db,method,mean_err,stderr`.
pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["snr_db", "method", "mean_err", "stderr"])
        .map_err(crate::solvers::csv_err)?;
    for r in rows {
        w.write_record([
            snr_field(r.snr_db),
            r.method.name().to_string(),
            r.mean_err.to_string(),
            r.stderr.to_string(),
        ])
        .map_err(crate::solvers::csv_err)?;
    }
    w.flush()?;
    Ok(())
}
