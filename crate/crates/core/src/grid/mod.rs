//! Fine-grid discretization of the location torus, the grid dictionary
//! `R`, wrap-around distances and the minimum-separation check.

mod dictionary;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radar::{ArraySpec, Location, Target, TargetScene};

pub use dictionary::{GridDictionary, DEFAULT_DENSE_CAP};

/// Grid with spacing `(1/K1, 1/K2, 1/K3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub srf: Option<usize>,
}

impl GridSpec {
    pub fn new(spec: ArraySpec, k1: usize, k2: usize, k3: usize) -> Result<Self> {
        let grid = Self { k1, k2, k3, srf: None };
        grid.check(spec)?;
        Ok(grid)
    }

    /// `K1 = SRF N_T N_R`, `K2 = K3 = SRF L`.
    pub fn from_srf(spec: ArraySpec, srf: usize) -> Result<Self> {
        if srf == 0 {
            return Err(Error::InvalidGrid("srf must be positive".into()));
        }
        Ok(Self {
            k1: srf * spec.virtual_len(),
            k2: srf * spec.signal_len(),
            k3: srf * spec.signal_len(),
            srf: Some(srf),
        })
    }

    pub fn check(&self, spec: ArraySpec) -> Result<()> {
        if self.k1 < spec.virtual_len() || self.k2 < spec.signal_len() || self.k3 < spec.signal_len() {
            return Err(Error::InvalidGrid(format!(
                "need K1 >= {}, K2, K3 >= {}; got ({}, {}, {})",
                spec.virtual_len(),
                spec.signal_len(),
                self.k1,
                self.k2,
                self.k3
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.k1, self.k2, self.k3]
    }

    pub fn len(&self) -> usize {
        self.k1 * self.k2 * self.k3
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self, idx: GridIndex) -> usize {
        (idx.n1 * self.k2 + idx.n2) * self.k3 + idx.n3
    }

    pub fn unflat(&self, flat: usize) -> GridIndex {
        GridIndex {
            n1: flat / (self.k2 * self.k3),
            n2: (flat / self.k3) % self.k2,
            n3: flat % self.k3,
        }
    }

    pub fn contains(&self, idx: GridIndex) -> bool {
        idx.n1 < self.k1 && idx.n2 < self.k2 && idx.n3 < self.k3
    }

    /// Nearest grid index to `loc` (wrap-around).
    pub fn nearest(&self, loc: Location) -> GridIndex {
        let snap = |x: f64, k: usize| ((x * k as f64).round() as usize) % k;
        GridIndex {
            n1: snap(loc.beta(), self.k1),
            n2: snap(loc.tau(), self.k2),
            n3: snap(loc.nu(), self.k3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridIndex {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
}

impl GridIndex {
    pub fn new(n1: usize, n2: usize, n3: usize) -> Self {
        Self { n1, n2, n3 }
    }
}

/// `r_n = (n1/K1, n2/K2, n3/K3)`.
pub fn grid_point(grid: &GridSpec, idx: GridIndex) -> Result<Location> {
    if !grid.contains(idx) {
        return Err(Error::IndexOutOfRange {
            name: "grid index",
            value: grid.flat(idx) as i64,
            lo: 0,
            hi: grid.len() as i64 - 1,
        });
    }
    Ok(Location::new(
        idx.n1 as f64 / grid.k1 as f64,
        idx.n2 as f64 / grid.k2 as f64,
        idx.n3 as f64 / grid.k3 as f64,
    ))
}

/// Sparse coefficient vector on a grid; only nonzero entries are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolution {
    grid: GridSpec,
    entries: BTreeMap<GridIndex, Complex64>,
}

#[derive(Serialize, Deserialize)]
struct SolutionEntry {
    n1: usize,
    n2: usize,
    n3: usize,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSolution {
    grid: GridSpec,
    entries: Vec<SolutionEntry>,
}

impl Serialize for SparseSolution {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        RawSolution {
            grid: self.grid,
            entries: self
                .entries
                .iter()
                .map(|(i, v)| SolutionEntry {
                    n1: i.n1,
                    n2: i.n2,
                    n3: i.n3,
                    re: v.re,
                    im: v.im,
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SparseSolution {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSolution::deserialize(deserializer)?;
        let mut sol = SparseSolution::new(raw.grid);
        for e in raw.entries {
            let idx = GridIndex::new(e.n1, e.n2, e.n3);
            if !raw.grid.contains(idx) {
                return Err(serde::de::Error::custom(format!("entry {idx:?} outside grid")));
            }
            sol.insert(idx, Complex64::new(e.re, e.im));
        }
        Ok(sol)
    }
}

impl SparseSolution {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            grid,
            entries: BTreeMap::new(),
        }
    }

    /// Keeps the nonzero entries of a dense grid vector.
    pub fn from_dense(grid: GridSpec, values: &[Complex64]) -> Self {
        let mut sol = Self::new(grid);
        for (i, &v) in values.iter().enumerate() {
            sol.insert(grid.unflat(i), v);
        }
        sol
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Zero values remove the entry.
    pub fn insert(&mut self, idx: GridIndex, value: Complex64) {
        if value.re == 0.0 && value.im == 0.0 {
            self.entries.remove(&idx);
        } else {
            self.entries.insert(idx, value);
        }
    }

    pub fn get(&self, idx: GridIndex) -> Complex64 {
        self.entries.get(&idx).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (GridIndex, Complex64)> + '_ {
        self.entries.iter().map(|(&i, &v)| (i, v))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm_l1(&self) -> f64 {
        self.entries.values().map(|v| v.norm()).sum()
    }

    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        for (&i, &v) in &self.entries {
            out[self.grid.flat(i)] = v;
        }
        out
    }

    /// Entries with modulus at least `threshold`.
    pub fn support(&self, threshold: f64) -> Vec<GridIndex> {
        self.entries
            .iter()
            .filter(|(_, v)| v.norm() >= threshold)
            .map(|(&i, _)| i)
            .collect()
    }
}

/// Error-free `a + b = s + e`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Wrap-around distance on the unit circle, in `[0, 1/2]`.
///
/// The distance between the two floating-point inputs is computed without
/// intermediate rounding and rounded once, ties away from zero, so for
/// example `wrap_dist(5/6, 1/6)` is exactly `1/3`.
pub fn wrap_dist(a: f64, b: f64) -> f64 {
    let (hi, lo) = two_sum(a, -b);
    let k = (hi + lo).round();
    // |hi - k| <= 1/2 with k the nearest integer: exact by Sterbenz
    let (s, e) = two_sum(hi - k, lo);
    let mag = s.abs();
    if e != 0.0 && e.signum() == s.signum() && 2.0 * e.abs() == mag.next_up() - mag {
        mag.next_up()
    } else {
        mag
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub ok: bool,
    pub violations: Vec<(usize, usize)>,
}

/// Separation thresholds `(10/(N_T N_R - 1), 5/N, 5/N)`; a pair is separated
/// when at least one coordinate meets its threshold.
pub fn separation_thresholds(spec: ArraySpec) -> [f64; 3] {
    let vt = spec.virtual_len();
    let beta = if vt > 1 { 10.0 / (vt - 1) as f64 } else { f64::INFINITY };
    let n = spec.half_len() as f64;
    [beta, 5.0 / n, 5.0 / n]
}

fn pair_separated(th: &[f64; 3], a: &Location, b: &Location) -> bool {
    // tiny slack so that separations built from exact fractions pass the >= test
    let eps = 1e-12;
    a.coords()
        .iter()
        .zip(b.coords())
        .zip(th)
        .any(|((x, y), t)| wrap_dist(*x, y) >= t - eps)
}

pub fn min_sep_check(spec: ArraySpec, locs: &[Location]) -> SeparationReport {
    let th = separation_thresholds(spec);
    let mut violations = Vec::new();
    for i in 0..locs.len() {
        for j in i + 1..locs.len() {
            if !pair_separated(&th, &locs[i], &locs[j]) {
                violations.push((i, j));
            }
        }
    }
    SeparationReport {
        ok: violations.is_empty(),
        violations,
    }
}

/// Axis-aligned sampling box for random scenes, each range `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBox {
    pub beta: (f64, f64),
    pub tau: (f64, f64),
    pub nu: (f64, f64),
}

impl SceneBox {
    pub fn unit() -> Self {
        Self {
            beta: (0.0, 1.0),
            tau: (0.0, 1.0),
            nu: (0.0, 1.0),
        }
    }

    /// `[0, 1) x [0, 2/sqrt(L))^2`
    pub fn delay_doppler_limited(spec: ArraySpec) -> Self {
        let w = 2.0 / (spec.signal_len() as f64).sqrt();
        Self {
            beta: (0.0, 1.0),
            tau: (0.0, w),
            nu: (0.0, w),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Location {
        let mut draw = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
        Location::new(draw(self.beta), draw(self.tau), draw(self.nu))
    }
}

/// Uniform draw from the complex unit disc.
pub fn unit_disc_gain<R: Rng>(rng: &mut R) -> Complex64 {
    let radius: f64 = rng.random::<f64>().sqrt();
    let angle: f64 = rng.random::<f64>();
    Complex64::from_polar(radius, 2.0 * PI * angle)
}

fn draw_scene<R: Rng>(
    spec: ArraySpec,
    count: usize,
    enforce_separation: bool,
    max_tries: usize,
    rng: &mut R,
    mut draw_loc: impl FnMut(&mut R) -> Location,
) -> Result<TargetScene> {
    for _ in 0..max_tries.max(1) {
        let locs: Vec<Location> = (0..count).map(|_| draw_loc(rng)).collect();
        let distinct = locs
            .iter()
            .enumerate()
            .all(|(i, a)| locs[i + 1..].iter().all(|b| a != b));
        if !distinct || (enforce_separation && !min_sep_check(spec, &locs).ok) {
            continue;
        }
        let targets = locs.into_iter().map(|loc| Target::new(unit_disc_gain(rng), loc)).collect();
        return Ok(TargetScene::new(targets));
    }
    Err(Error::MaxTriesExhausted(max_tries))
}

/// Uniform locations in `bounds` with unit-disc gains, redrawn until the
/// separation condition holds (when `enforce_separation`).
pub fn random_separated_scene(
    spec: ArraySpec,
    count: usize,
    bounds: &SceneBox,
    seed: u64,
    max_tries: usize,
    enforce_separation: bool,
) -> Result<TargetScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_scene(spec, count, enforce_separation, max_tries, &mut rng, |r| bounds.sample(r))
}

/// Like [`random_separated_scene`] with locations drawn uniformly from the
/// grid points inside `bounds`.
pub fn random_grid_scene(
    spec: ArraySpec,
    grid: &GridSpec,
    count: usize,
    bounds: &SceneBox,
    seed: u64,
    max_tries: usize,
    enforce_separation: bool,
) -> Result<TargetScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = |(lo, hi): (f64, f64), k: usize| {
        let a = (lo * k as f64).ceil() as usize;
        let b = ((hi * k as f64).ceil() as usize).clamp(a + 1, k.max(a + 1));
        (a, b)
    };
    let (r1, r2, r3) = (range(bounds.beta, grid.k1), range(bounds.tau, grid.k2), range(bounds.nu, grid.k3));
    let g = *grid;
    draw_scene(spec, count, enforce_separation, max_tries, &mut rng, |r| {
        let idx = GridIndex::new(
            r.random_range(r1.0..r1.1) % g.k1,
            r.random_range(r2.0..r2.1) % g.k2,
            r.random_range(r3.0..r3.1) % g.k3,
        );
        grid_point(&g, idx).expect("index in range")
    })
}

/// Targets at `(k/(N_T N_R), k/L, k/L)`, `k = 0..count`, with unit-disc gains.
pub fn equispaced_scene(spec: ArraySpec, count: usize, seed: u64) -> TargetScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vt = spec.virtual_len() as f64;
    let l = spec.signal_len() as f64;
    TargetScene::new(
        (0..count)
            .map(|k| {
                let k = k as f64;
                Target::new(unit_disc_gain(&mut rng), Location::new(k / vt, k / l, k / l))
            })
            .collect(),
    )
}
