//! `superres`: simulation, recovery, certificates and experiments from the
//! command line.

mod files;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mimo_superres::certificate::{build_certificate, fejer_coeffs, CertificateMode};
use mimo_superres::grid::{min_sep_check, GridSpec};
use mimo_superres::harness::{
    add_noise, load_config, run_iaa_comparison, run_selftest, run_srf_sweep, write_comparison_csv, write_sweep_csv,
    ExperimentConfig,
};
use mimo_superres::iaa::{iaa_recover, IaaOptions};
use mimo_superres::radar::simulate_measurement;
use mimo_superres::solvers::{extract_targets, solve_l1_eq, solve_l1_err};
use mimo_superres::{Complex64, Error, ProbingSignalSet};

use files::{
    check_version, read_json, write_json, CertifyConfig, CertifyOutput, MeasurementFile, RecoverConfig, RecoverMethod,
    RecoverOutput, SimulateConfig, FILE_VERSION,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{file}: invalid value at `{path}`: {message}")]
    Field { file: String, path: String, message: String },
    #[error("{0} selftest checks failed")]
    Selftest(usize),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Field { .. } => 1,
            CliError::Selftest(_) => 2,
            CliError::Core(e) => match e {
                Error::RankDeficient(_)
                | Error::IllConditioned(_)
                | Error::CovarianceSolve(_)
                | Error::MaxTriesExhausted(_)
                | Error::SizeGuard { .. } => 2,
                _ => 1,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "superres", version, about = "Super-resolution MIMO radar toolkit")]
struct Cli {
    /// Progress and diagnostics on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scene and probing signals to a measurement file.
    Simulate(Common),
    /// Measurement file to grid solution and extracted targets.
    Recover {
        /// Measurement file written by `simulate`.
        input: PathBuf,
        /// Overrides the configured SRF.
        #[arg(long)]
        srf: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Builds and verifies a dual certificate for a scene.
    Certify(Common),
    /// Runs a configured experiment and writes its summary CSV.
    Experiment {
        #[command(subcommand)]
        kind: ExperimentKind,
    },
    /// Runs the built-in oracle and equivalence checks.
    Selftest(Common),
}

#[derive(Debug, Subcommand)]
enum ExperimentKind {
    /// Resolution error over SRFs and SNRs with L1-ERR.
    SrfSweep(Common),
    /// Paired L1-ERR and IAA comparison over SNRs.
    IaaCompare(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Simulate(c) => simulate(&c, verbose),
        Command::Recover { input, srf, common } => recover(&input, srf, &common, verbose),
        Command::Certify(c) => certify(&c, verbose),
        Command::Experiment { kind } => match kind {
            ExperimentKind::SrfSweep(c) => experiment(&c, false, verbose),
            ExperimentKind::IaaCompare(c) => experiment(&c, true, verbose),
        },
        Command::Selftest(c) => selftest(&c, verbose),
    }
}

fn required_config(c: &Common) -> Result<&Path, CliError> {
    c.config.as_deref().ok_or_else(|| CliError::Usage("--config <path> is required".into()))
}

fn simulate(c: &Common, verbose: bool) -> Result<(), CliError> {
    let path = required_config(c)?;
    let cfg: SimulateConfig = read_json(path)?;
    check_version(path, cfg.schema_version)?;
    let spec = cfg.spec;
    let seed = c.seed.unwrap_or(0);
    let signals = ProbingSignalSet::generate(spec, seed);
    let clean = simulate_measurement(&cfg.scene, &signals);
    let (measurement, noise_energy) = match cfg.snr_db {
        Some(snr) => {
            let (noisy, n) = add_noise(&clean, snr, seed)?;
            (noisy, n.iter().map(|v| v.norm_sqr()).sum())
        }
        None => (clean, 0.0),
    };
    if verbose {
        eprintln!(
            "simulated {} targets, {} samples, ||y|| = {:.4e}",
            cfg.scene.len(),
            measurement.data().len(),
            measurement.norm()
        );
    }
    let file = MeasurementFile {
        schema_version: FILE_VERSION,
        seed,
        snr_db: cfg.snr_db,
        noise_energy,
        measurement,
        truth: Some(cfg.scene),
    };
    write_json(&file, c.out.as_deref())
}

fn recover(input: &Path, srf: Option<usize>, c: &Common, verbose: bool) -> Result<(), CliError> {
    let file: MeasurementFile = read_json(input)?;
    check_version(input, file.schema_version)?;
    let y = file.measurement.validated()?;
    let mut cfg = match &c.config {
        Some(p) => {
            let cfg: RecoverConfig = read_json(p)?;
            check_version(p, cfg.schema_version)?;
            cfg
        }
        None => RecoverConfig::default(),
    };
    if let Some(s) = srf {
        cfg.srf = s;
    }
    let spec = y.spec();
    let grid = GridSpec::from_srf(spec, cfg.srf)?;
    // the probing signals are regenerated from the recorded seed
    let signals = ProbingSignalSet::generate(spec, c.seed.unwrap_or(file.seed));
    let method = cfg.method.unwrap_or(if file.noise_energy > 0.0 {
        RecoverMethod::L1Err
    } else {
        RecoverMethod::L1
    });
    let start = Instant::now();
    let out = match method {
        RecoverMethod::L1 | RecoverMethod::L1Err => {
            let solver = cfg.solver.validated()?;
            let result = if method == RecoverMethod::L1 {
                solve_l1_eq(&signals, &grid, &y, &solver)?
            } else {
                solve_l1_err(&signals, &grid, &y, cfg.delta.unwrap_or(file.noise_energy), &solver)?
            };
            let targets = extract_targets(&result.solution, cfg.extract.threshold_frac, cfg.extract.cluster_radius)?;
            if verbose {
                eprintln!(
                    "converged {}, {} iterations, gap {:.2e}, {} nonzeros",
                    result.converged,
                    result.iterations,
                    result.relative_gap(),
                    result.solution.nnz()
                );
            }
            RecoverOutput {
                schema_version: FILE_VERSION,
                method,
                srf: cfg.srf,
                targets,
                result: Some(result),
            }
        }
        RecoverMethod::Iaa => {
            let opts = IaaOptions {
                threshold_frac: cfg.extract.threshold_frac,
                cluster_radius: cfg.extract.cluster_radius,
                ..cfg.iaa
            };
            let result = iaa_recover(&signals, &grid, &y, &opts)?;
            RecoverOutput {
                schema_version: FILE_VERSION,
                method,
                srf: cfg.srf,
                targets: result.targets,
                result: None,
            }
        }
    };
    if verbose {
        eprintln!("{} targets in {:.2?}", out.targets.len(), start.elapsed());
    }
    write_json(&out, c.out.as_deref())
}

fn certify(c: &Common, verbose: bool) -> Result<(), CliError> {
    let path = required_config(c)?;
    let cfg: CertifyConfig = read_json(path)?;
    check_version(path, cfg.schema_version)?;
    let spec = cfg.spec;
    let locs = cfg.scene.locations();
    let separation = min_sep_check(spec, &locs);
    let signs: Vec<Complex64> = cfg
        .scene
        .gains()
        .iter()
        .map(|g| if g.norm() > 0.0 { g / g.norm() } else { Complex64::new(1.0, 0.0) })
        .collect();
    let kernel = fejer_coeffs(spec.half_len())?;
    let signals = ProbingSignalSet::generate(spec, c.seed.unwrap_or(0));
    let density = cfg.density.unwrap_or([4 * spec.signal_len(); 3]);
    let signals_arg = (cfg.mode == CertificateMode::Random).then_some(&signals);
    let built = build_certificate(cfg.mode, spec, &kernel, signals_arg, &locs, &signs);
    let (report, build_error) = match built {
        Ok(cert) => (Some(cert.verify(density, cfg.exclusion_radius)?), None),
        // a scene without a certificate is a result, not a failure
        Err(e @ (Error::IllConditioned(_) | Error::RankDeficient(_))) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let passed = report.as_ref().is_some_and(|r| r.passed);
    if verbose {
        eprintln!("separation ok: {}, certificate passed: {passed}", separation.ok);
    }
    let out = CertifyOutput {
        schema_version: FILE_VERSION,
        mode: cfg.mode,
        separation,
        build_error,
        report,
        passed,
    };
    write_json(&out, c.out.as_deref())
}

fn experiment(c: &Common, compare: bool, verbose: bool) -> Result<(), CliError> {
    let path = required_config(c)?;
    let mut cfg: ExperimentConfig = load_config(path)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.output = Some(out.clone());
    }
    let start = Instant::now();
    let output = cfg.output.clone();
    let writer: Box<dyn Write> = match &output {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(Error::from)?)),
        None => Box::new(io::stdout().lock()),
    };
    let (records, failed) = if compare {
        let out = run_iaa_comparison(&cfg)?;
        write_comparison_csv(&out.summary, writer)?;
        let failed = out.records.iter().filter(|r| r.error.is_some()).count();
        (out.records, failed)
    } else {
        let out = run_srf_sweep(&cfg)?;
        write_sweep_csv(&out.summary, writer)?;
        let failed = out.records.iter().filter(|r| r.error.is_some()).count();
        (out.records, failed)
    };
    if let Some(p) = &cfg.records {
        write_json(&records, Some(p))?;
    }
    if verbose {
        eprintln!(
            "{} trial records ({failed} failed) in {:.1?}",
            records.len(),
            start.elapsed()
        );
    }
    Ok(())
}

fn selftest(c: &Common, verbose: bool) -> Result<(), CliError> {
    let report = run_selftest(c.seed.unwrap_or(0));
    for check in &report.checks {
        let status = if check.passed { "PASS" } else { "FAIL" };
        if verbose || !check.passed || c.out.is_none() {
            eprintln!("{status} {}: {}", check.name, check.detail);
        }
    }
    if let Some(p) = &c.out {
        write_json(&report, Some(p))?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Selftest(report.checks.iter().filter(|c| !c.passed).count()))
    }
}
