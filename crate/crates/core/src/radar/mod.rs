//! Sampled MIMO radar signal model.
//!
//! A scene of `S` point targets with gains `b_k` and normalized locations
//! `r_k = (beta, tau, nu)` produces, at receive antenna `r` and sample
//! `p = -N..N`,
//!
//! ```text
//! y_r[p] = sum_k b_k e^{i2pi r N_T beta_k} sum_j e^{i2pi j beta_k} [F_{nu_k} T_{tau_k} x_j]_p
//! ```
//!
//! which is also `y = A z` with `z = sum_k b_k f(r_k)`.
//!
//! # Index flattening
//!
//! Every vector indexed by `(v, k, p)` (atoms, inputs of `A`, certificate
//! coefficient vectors) is stored with `v` slowest and `p` fastest:
//! `index = v * L^2 + (k + N) * L + (p + N)`, see [`ArraySpec::flat_index`].
//! Length-`L` sample vectors store entry `p` at offset `p + N`.

mod operator;
mod shift;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use operator::{atom, simulate_measurement, MimoOperator};
pub use shift::{frac_freq_shift, frac_time_shift};

/// Dimensions of the radar: `N_T` transmitters, `N_R` receivers and an odd
/// number `L = 2N + 1` of samples per receive antenna.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawArraySpec", into = "RawArraySpec")]
pub struct ArraySpec {
    n_tx: usize,
    n_rx: usize,
    signal_len: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArraySpec {
    n_tx: usize,
    n_rx: usize,
    signal_len: usize,
}

impl TryFrom<RawArraySpec> for ArraySpec {
    type Error = Error;
    fn try_from(raw: RawArraySpec) -> Result<Self> {
        ArraySpec::new(raw.n_tx, raw.n_rx, raw.signal_len)
    }
}

impl From<ArraySpec> for RawArraySpec {
    fn from(s: ArraySpec) -> Self {
        RawArraySpec {
            n_tx: s.n_tx,
            n_rx: s.n_rx,
            signal_len: s.signal_len,
        }
    }
}

impl ArraySpec {
    pub fn new(n_tx: usize, n_rx: usize, signal_len: usize) -> Result<Self> {
        if n_tx == 0 || n_rx == 0 {
            return Err(Error::InvalidSpec(format!(
                "antenna counts must be positive (n_tx={n_tx}, n_rx={n_rx})"
            )));
        }
        if signal_len < 3 || signal_len % 2 == 0 {
            return Err(Error::InvalidSpec(format!(
                "signal_len must be odd and >= 3, got {signal_len}"
            )));
        }
        Ok(Self {
            n_tx,
            n_rx,
            signal_len,
        })
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    /// `L`
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    /// `N = (L - 1) / 2`
    pub fn half_len(&self) -> usize {
        (self.signal_len - 1) / 2
    }

    /// Number of virtual antennas `N_T * N_R`.
    pub fn virtual_len(&self) -> usize {
        self.n_tx * self.n_rx
    }

    /// Length of an atom `f(r)`: `N_T N_R L^2`.
    pub fn atom_len(&self) -> usize {
        self.virtual_len() * self.signal_len * self.signal_len
    }

    /// Length of a measurement `y`: `N_R L`.
    pub fn measurement_len(&self) -> usize {
        self.n_rx * self.signal_len
    }

    /// Flat position of `(v, k, p)` with `v in 0..N_T N_R` and `k, p in -N..=N`.
    #[inline]
    pub fn flat_index(&self, v: usize, k: i64, p: i64) -> usize {
        let n = self.half_len() as i64;
        let l = self.signal_len;
        v * l * l + (k + n) as usize * l + (p + n) as usize
    }

    /// Sample indices `-N..=N` in storage order.
    pub fn sample_indices(&self) -> impl Iterator<Item = i64> + Clone {
        let n = self.half_len() as i64;
        -n..=n
    }
}

/// Reduce to `[0, 1)`; the result never equals `1.0`.
pub(crate) fn unit_mod(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Normalized target location `(beta, tau, nu)` on the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawLocation")]
pub struct Location {
    beta: f64,
    tau: f64,
    nu: f64,
}

#[derive(Deserialize)]
struct RawLocation {
    beta: f64,
    tau: f64,
    nu: f64,
}

impl From<RawLocation> for Location {
    fn from(r: RawLocation) -> Self {
        Location::new(r.beta, r.tau, r.nu)
    }
}

impl Location {
    /// Each coordinate is reduced modulo 1.
    pub fn new(beta: f64, tau: f64, nu: f64) -> Self {
        Self {
            beta: unit_mod(beta),
            tau: unit_mod(tau),
            nu: unit_mod(nu),
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn coords(&self) -> [f64; 3] {
        [self.beta, self.tau, self.nu]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub gain: Complex64,
    pub loc: Location,
}

impl Target {
    pub fn new(gain: Complex64, loc: Location) -> Self {
        Self { gain, loc }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetScene {
    pub targets: Vec<Target>,
}

impl TargetScene {
    pub fn new(targets: Vec<Target>) -> Self {
        Self { targets }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn locations(&self) -> Vec<Location> {
        self.targets.iter().map(|t| t.loc).collect()
    }

    pub fn gains(&self) -> Vec<Complex64> {
        self.targets.iter().map(|t| t.gain).collect()
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            targets: self
                .targets
                .iter()
                .map(|t| Target::new(t.gain * factor, t.loc))
                .collect(),
        }
    }
}

/// The `N_T` probing sequences `x_j`, each of length `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbingSignalSet {
    spec: ArraySpec,
    seed: u64,
    signals: Vec<Vec<Complex64>>,
}

impl ProbingSignalSet {
    /// I.i.d. circular complex Gaussian entries with variance `1/(N_T L)`.
    pub fn generate(spec: ArraySpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let var = 1.0 / (spec.n_tx() * spec.signal_len()) as f64;
        let normal = Normal::new(0.0, (var / 2.0).sqrt()).expect("finite variance");
        let signals = (0..spec.n_tx())
            .map(|_| {
                (0..spec.signal_len())
                    .map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
                    .collect()
            })
            .collect();
        Self {
            spec,
            seed,
            signals,
        }
    }

    /// Wraps explicit signals; `seed` is kept as provenance only.
    pub fn from_signals(spec: ArraySpec, signals: Vec<Vec<Complex64>>, seed: u64) -> Result<Self> {
        if signals.len() != spec.n_tx() {
            return Err(Error::DimensionMismatch {
                what: "number of probing signals",
                expected: spec.n_tx(),
                got: signals.len(),
            });
        }
        if let Some(bad) = signals.iter().find(|s| s.len() != spec.signal_len()) {
            return Err(Error::DimensionMismatch {
                what: "probing signal length",
                expected: spec.signal_len(),
                got: bad.len(),
            });
        }
        Ok(Self {
            spec,
            seed,
            signals,
        })
    }

    /// Validates a deserialized set (the serde derive does not).
    pub fn validated(self) -> Result<Self> {
        Self::from_signals(self.spec, self.signals, self.seed)
    }

    pub fn spec(&self) -> ArraySpec {
        self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn signals(&self) -> &[Vec<Complex64>] {
        &self.signals
    }

    pub fn signal(&self, j: usize) -> &[Complex64] {
        &self.signals[j]
    }

    /// `a_{p,k,j} = (1/L) sum_l [x_j]_l e^{i 2 pi (l - p) k / L}`, by direct summation.
    pub fn sample_coefficient(&self, p: i64, k: i64, j: usize) -> Result<Complex64> {
        let n = self.spec.half_len() as i64;
        check_range("p", p, -n, n)?;
        check_range("k", k, -n, n)?;
        check_range("j", j as i64, 0, self.spec.n_tx() as i64 - 1)?;
        let l = self.spec.signal_len() as f64;
        let x = &self.signals[j];
        let sum: Complex64 = self
            .spec
            .sample_indices()
            .zip(x)
            .map(|(ell, &xl)| xl * Complex64::cis(2.0 * std::f64::consts::PI * ((ell - p) * k) as f64 / l))
            .sum();
        Ok(sum / l)
    }
}

fn check_range(name: &'static str, value: i64, lo: i64, hi: i64) -> Result<()> {
    if value < lo || value > hi {
        Err(Error::IndexOutOfRange {
            name,
            value,
            lo,
            hi,
        })
    } else {
        Ok(())
    }
}

/// Stacked receive blocks `y = [y_0; ...; y_{N_R - 1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    spec: ArraySpec,
    data: Vec<Complex64>,
}

impl MeasurementVector {
    pub fn new(spec: ArraySpec, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != spec.measurement_len() {
            return Err(Error::DimensionMismatch {
                what: "measurement length",
                expected: spec.measurement_len(),
                got: data.len(),
            });
        }
        Ok(Self { spec, data })
    }

    pub fn zeros(spec: ArraySpec) -> Self {
        Self {
            spec,
            data: vec![Complex64::new(0.0, 0.0); spec.measurement_len()],
        }
    }

    pub fn validated(self) -> Result<Self> {
        Self::new(self.spec, self.data)
    }

    pub fn spec(&self) -> ArraySpec {
        self.spec
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    /// Block received by antenna `r`.
    pub fn block(&self, r: usize) -> &[Complex64] {
        let l = self.spec.signal_len();
        &self.data[r * l..(r + 1) * l]
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.data)
    }
}
