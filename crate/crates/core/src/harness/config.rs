use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SceneBox;
use crate::iaa::IaaOptions;
use crate::physics::RadarConfig;
use crate::radar::{ArraySpec, TargetScene};
use crate::solvers::{SolverOptions, DEFAULT_CLUSTER_RADIUS, DEFAULT_THRESHOLD_FRAC};

pub const SCHEMA_VERSION: u32 = 1;

/// Where the targets of each trial come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSource {
    /// Uniform draws from `bounds` (default `[0,1) x [0, 2/sqrt(L))^2`).
    RandomBox {
        #[serde(default)]
        bounds: Option<SceneBox>,
        #[serde(default)]
        enforce_separation: bool,
        /// Snap draws to the SRF-1 grid, which lies on every finer grid.
        #[serde(default)]
        on_grid: bool,
        #[serde(default = "default_max_tries")]
        max_tries: usize,
    },
    /// The same scene in every trial.
    Explicit { scene: TargetScene },
    /// `(k/(N_T N_R), k/L, k/L)` with seeded unit-disc gains.
    Equispaced,
}

fn default_max_tries() -> usize {
    10_000
}

/// Noise-ball size `delta` handed to L1-ERR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    /// `||n||^2` of the realized noise.
    #[default]
    Oracle,
    /// `||y_clean||^2 / SNR`.
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractOptions {
    pub threshold_frac: f64,
    pub cluster_radius: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            threshold_frac: DEFAULT_THRESHOLD_FRAC,
            cluster_radius: DEFAULT_CLUSTER_RADIUS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub spec: ArraySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radar: Option<RadarConfig>,
    #[serde(default = "default_srf")]
    pub srf: Vec<usize>,
    pub scene: SceneSource,
    /// Target count `S`; taken from the scene for explicit scenes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<usize>,
    /// `null` entries are noiseless runs.
    #[serde(default = "default_snr")]
    pub snr_db: Vec<Option<f64>>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub delta: DeltaMode,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub iaa: IaaOptions,
    #[serde(default)]
    pub extract: ExtractOptions,
    /// Summary CSV path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Optional JSON file with every trial record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<PathBuf>,
}

fn default_srf() -> Vec<usize> {
    vec![1]
}

fn default_snr() -> Vec<Option<f64>> {
    vec![None]
}

fn default_trials() -> usize {
    20
}

impl ExperimentConfig {
    /// Target count per trial.
    pub fn target_count(&self) -> usize {
        match &self.scene {
            SceneSource::Explicit { scene } => scene.len(),
            _ => self.targets.unwrap_or(0),
        }
    }

    pub fn validated(self) -> Result<Self> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if let Some(radar) = &self.radar {
            radar.validated().map_err(|e| nest("radar", e))?;
            radar.check_compatible(self.spec)?;
        }
        if self.srf.is_empty() {
            return Err(Error::config("srf", "at least one SRF is required"));
        }
        if let Some(i) = self.srf.iter().position(|&s| s == 0) {
            return Err(Error::config(format!("srf[{i}]"), "SRF must be >= 1"));
        }
        if self.snr_db.is_empty() {
            return Err(Error::config("snr_db", "at least one entry is required (null = noiseless)"));
        }
        for (i, s) in self.snr_db.iter().enumerate() {
            if let Some(v) = s {
                if !v.is_finite() {
                    return Err(Error::config(format!("snr_db[{i}]"), "must be finite; use null for noiseless"));
                }
            }
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be >= 1"));
        }
        match &self.scene {
            SceneSource::Explicit { scene } => {
                if scene.is_empty() {
                    return Err(Error::config("scene.scene.targets", "explicit scene has no targets"));
                }
                if let Some(s) = self.targets {
                    if s != scene.len() {
                        return Err(Error::config(
                            "targets",
                            format!("{s} does not match the {} explicit targets", scene.len()),
                        ));
                    }
                }
            }
            SceneSource::RandomBox { bounds, max_tries, .. } => {
                if *max_tries == 0 {
                    return Err(Error::config("scene.max_tries", "must be >= 1"));
                }
                if let Some(b) = bounds {
                    for (name, (lo, hi)) in [("beta", b.beta), ("tau", b.tau), ("nu", b.nu)] {
                        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                            return Err(Error::config(format!("scene.bounds.{name}"), "need finite lo < hi"));
                        }
                    }
                }
            }
            SceneSource::Equispaced => {}
        }
        if !matches!(self.scene, SceneSource::Explicit { .. }) && self.targets.unwrap_or(0) == 0 {
            return Err(Error::config("targets", "must be >= 1"));
        }
        self.solver.validated().map_err(|e| nest("solver", e))?;
        self.iaa.validated().map_err(|e| nest("iaa", e))?;
        let ex = self.extract;
        if !(ex.threshold_frac > 0.0 && ex.threshold_frac < 1.0) {
            return Err(Error::config("extract.threshold_frac", "must lie in (0, 1)"));
        }
        Ok(self)
    }
}

fn nest(prefix: &str, e: Error) -> Error {
    match e {
        Error::Config { path, message } => Error::config(format!("{prefix}.{path}"), message),
        Error::InvalidOption(message) => Error::config(prefix, message),
        other => other,
    }
}

/// Parses and validates a JSON config; errors carry the offending field path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })?;
    cfg.validated()
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "spec": {"n_tx": 3, "n_rx": 3, "signal_len": 41},
        "scene": {"kind": "random_box"},
        "targets": 5
    }"#;

    #[test]
    fn defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.trials, 20);
        assert_eq!(c.srf, vec![1]);
        assert_eq!(c.snr_db, vec![None]);
        assert_eq!(c.solver, SolverOptions::default());
        assert_eq!(c.target_count(), 5);
    }

    #[test]
    fn errors_carry_field_paths() {
        let bad = MINIMAL.replace("\"signal_len\": 41", "\"signal_len\": 40");
        match parse_config(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "spec"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("\"targets\": 5", "\"targets\": 5, \"solver\": {\"max_itr\": 3}");
        match parse_config(&bad) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "solver.max_itr");
                assert!(message.contains("unknown field"));
            }
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("\"targets\": 5", "\"targets\": 5, \"snr_db\": [10, \"x\"]");
        match parse_config(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "snr_db[1]"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(parse_config(&bad), Err(Error::Config { path, .. }) if path == "schema_version"));
        let bad = MINIMAL.replace("\"targets\": 5", "\"targets\": 5, \"trials\": 0");
        assert!(matches!(parse_config(&bad), Err(Error::Config { path, .. }) if path == "trials"));
        let bad = MINIMAL.replace("\"targets\": 5", "\"targets\": 5, \"solver\": {\"tol_abs\": -1}");
        assert!(matches!(parse_config(&bad), Err(Error::Config { path, .. }) if path == "solver"));
    }

    #[test]
    fn round_trip() {
        let c = parse_config(MINIMAL).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(parse_config(&text).unwrap(), c);
    }
}
