//! JSON input and output documents of the `superres` binary.

use std::path::Path;

use mimo_superres::certificate::{CertificateMode, CertificateReport};
use mimo_superres::grid::SeparationReport;
use mimo_superres::harness::ExtractOptions;
use mimo_superres::iaa::IaaOptions;
use mimo_superres::solvers::{RecoveryResult, SolverOptions};
use mimo_superres::{ArraySpec, MeasurementVector, Target, TargetScene};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const FILE_VERSION: u32 = 1;

/// Input of `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub schema_version: u32,
    pub spec: ArraySpec,
    pub scene: TargetScene,
    /// Absent for a noiseless measurement.
    #[serde(default)]
    pub snr_db: Option<f64>,
}

/// Output of `simulate`, input of `recover`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementFile {
    pub schema_version: u32,
    /// Seed of the probing signals (and of the noise).
    pub seed: u64,
    pub snr_db: Option<f64>,
    /// `||n||^2` of the added noise.
    pub noise_energy: f64,
    pub measurement: MeasurementVector,
    #[serde(default)]
    pub truth: Option<TargetScene>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoverMethod {
    L1,
    L1Err,
    Iaa,
}

/// Optional input of `recover`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoverConfig {
    pub schema_version: u32,
    pub srf: usize,
    /// Defaults to `l1` for noiseless files and `l1_err` otherwise.
    pub method: Option<RecoverMethod>,
    /// Noise-ball size; defaults to the file's `noise_energy`.
    pub delta: Option<f64>,
    pub solver: SolverOptions,
    pub iaa: IaaOptions,
    pub extract: ExtractOptions,
}

impl Default for RecoverConfig {
    fn default() -> Self {
        Self {
            schema_version: FILE_VERSION,
            srf: 1,
            method: None,
            delta: None,
            solver: SolverOptions::default(),
            iaa: IaaOptions::default(),
            extract: ExtractOptions::default(),
        }
    }
}

/// Output of `recover`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoverOutput {
    pub schema_version: u32,
    pub method: RecoverMethod,
    pub srf: usize,
    pub targets: Vec<Target>,
    /// Solver result including the grid solution; absent for IAA.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<RecoveryResult>,
}

/// Input of `certify`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    pub schema_version: u32,
    pub spec: ArraySpec,
    /// Locations and gains; the gain phases are the interpolated signs.
    pub scene: TargetScene,
    #[serde(default = "default_mode")]
    pub mode: CertificateMode,
    /// Verification density per axis, default `4L`.
    #[serde(default)]
    pub density: Option<[usize; 3]>,
    #[serde(default)]
    pub exclusion_radius: Option<[f64; 3]>,
}

fn default_mode() -> CertificateMode {
    CertificateMode::Deterministic
}

/// Output of `certify`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifyOutput {
    pub schema_version: u32,
    pub mode: CertificateMode,
    pub separation: SeparationReport,
    /// Why no certificate could be built, if so.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub build_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<CertificateReport>,
    pub passed: bool,
}

/// Reads JSON, reporting the failing field path.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Field {
        file: path.display().to_string(),
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

pub fn check_version(file: &Path, version: u32) -> Result<(), CliError> {
    if version != FILE_VERSION {
        return Err(CliError::Field {
            file: file.display().to_string(),
            path: "schema_version".into(),
            message: format!("unsupported version {version}, expected {FILE_VERSION}"),
        });
    }
    Ok(())
}

/// Writes pretty JSON to `out`, or to stdout.
pub fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Core(e.into()))?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| CliError::Core(e.into())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
