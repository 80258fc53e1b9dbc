//! Iterative adaptive approach (IAA-APES), single snapshot, on a grid.
//!
//! Each iteration forms `R_cov = sum_n p_n a_n a_n^H + loading I` with
//! `a_n = R e_n`, then updates
//! `p_n = |a_n^H R_cov^{-1} y|^2 / (a_n^H R_cov^{-1} a_n)^2`.
//!
//! Because `F diag(p) F^H` only depends on index differences, `R_cov` is
//! assembled from one pruned FFT of `p` and precomputed correlations of the
//! coefficient rows, and `a_n^H C a_n` for all `n` comes from one more FFT.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::PrunedTransform3;
use crate::grid::{GridDictionary, GridIndex, GridSpec, SparseSolution};
use crate::linalg::ZERO;
use crate::radar::{MeasurementVector, MimoOperator, ProbingSignalSet, Target};
use crate::solvers::{extract_targets, DEFAULT_CLUSTER_RADIUS, DEFAULT_THRESHOLD_FRAC};

/// Largest grid for which [`IaaResult::write_power_csv`] writes output.
pub const POWER_CSV_CAP: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IaaOptions {
    pub iterations: usize,
    /// Diagonal loading relative to `trace(R_cov) / M`.
    pub diag_load: f64,
    pub threshold_frac: f64,
    pub cluster_radius: usize,
}

impl Default for IaaOptions {
    fn default() -> Self {
        Self {
            iterations: 15,
            diag_load: 1e-8,
            threshold_frac: DEFAULT_THRESHOLD_FRAC,
            cluster_radius: DEFAULT_CLUSTER_RADIUS,
        }
    }
}

impl IaaOptions {
    pub fn validated(self) -> Result<Self> {
        if self.iterations == 0 {
            return Err(Error::InvalidOption("iterations must be >= 1".into()));
        }
        if !(self.diag_load >= 0.0 && self.diag_load.is_finite()) {
            return Err(Error::InvalidOption(format!("diag_load must be >= 0, got {}", self.diag_load)));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaaResult {
    pub grid: GridSpec,
    /// `p_n` in grid order.
    pub powers: Vec<f64>,
    /// `a_n^H C y / (a_n^H C a_n)` in grid order.
    pub amplitudes: Vec<Complex64>,
    pub targets: Vec<Target>,
    pub iterations: usize,
    /// Absolute loading used in the last iteration.
    pub loading: f64,
}

impl IaaResult {
    /// CSV `n1,n2,n3,power`; refuses grids above [`POWER_CSV_CAP`].
    pub fn write_power_csv<W: Write>(&self, writer: W) -> Result<()> {
        if self.powers.len() > POWER_CSV_CAP {
            return Err(Error::SizeGuard {
                rows: 1,
                cols: self.powers.len(),
                cap: POWER_CSV_CAP,
            });
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n1", "n2", "n3", "power"])
            .map_err(crate::solvers::csv_err)?;
        for (f, p) in self.powers.iter().enumerate() {
            let i = self.grid.unflat(f);
            w.serialize((i.n1, i.n2, i.n3, p)).map_err(crate::solvers::csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn iaa_recover(
    signals: &ProbingSignalSet,
    grid: &GridSpec,
    y: &MeasurementVector,
    opts: &IaaOptions,
) -> Result<IaaResult> {
    iaa_recover_with(&GridDictionary::new(signals, *grid)?, y, opts)
}

/// Correlations `sum_k a_{p,k,j} conj(a_{p',k-dk,j'})` of the coefficient rows.
struct RowCorrelation {
    n_tx: usize,
    l: usize,
    data: Vec<Complex64>,
}

impl RowCorrelation {
    fn new(op: &MimoOperator) -> Self {
        let spec = op.spec();
        let (n_tx, l) = (spec.n_tx(), spec.signal_len());
        let n = spec.half_len() as i64;
        let width = 2 * l - 1;
        let mut data = vec![ZERO; n_tx * l * n_tx * l * width];
        for j in 0..n_tx {
            for (pi, p) in (-n..=n).enumerate() {
                let row = op.coefficient_row(j, p);
                for jj in 0..n_tx {
                    for (qi, q) in (-n..=n).enumerate() {
                        let other = op.coefficient_row(jj, q);
                        let base = (((j * l + pi) * n_tx + jj) * l + qi) * width;
                        // dk = k - k', both in -N..=N
                        for (ki, a) in row.iter().enumerate() {
                            for (kk, b) in other.iter().enumerate() {
                                data[base + ki + 2 * n as usize - kk] += a * b.conj();
                            }
                        }
                    }
                }
            }
        }
        Self { n_tx, l, data }
    }

    /// Slice over `dk = -2N..=2N` for `(j, p, j', p')` given as offsets.
    #[inline]
    fn get(&self, j: usize, pi: usize, jj: usize, qi: usize) -> &[Complex64] {
        let width = 2 * self.l - 1;
        let base = (((j * self.l + pi) * self.n_tx + jj) * self.l + qi) * width;
        &self.data[base..base + width]
    }
}

struct Structure<'a> {
    dict: &'a GridDictionary,
    corr: RowCorrelation,
    /// Window `dv = -(VT-1)..=VT-1`, `dk, dp = -2N..=2N`.
    diff: PrunedTransform3,
}

impl Structure<'_> {
    fn diff_dims(&self) -> [usize; 3] {
        self.diff.window_dims()
    }

    /// `R_cov` without loading.
    fn covariance(&self, powers: &[f64]) -> DMatrix<Complex64> {
        let spec = self.dict.operator().spec();
        let (n_tx, n_rx, l) = (spec.n_tx(), spec.n_rx(), spec.signal_len());
        let p_complex: Vec<Complex64> = powers.iter().map(|&p| Complex64::new(p, 0.0)).collect();
        let phat = self.diff.synthesize(&p_complex);
        let [_, wk, wp] = self.diff_dims();
        let vt = spec.virtual_len() as i64;
        let m = spec.measurement_len();
        let mut cov = DMatrix::from_element(m, m, ZERO);
        // block Toeplitz in the receiver index
        for dr in -(n_rx as i64 - 1)..n_rx as i64 {
            let mut block = vec![ZERO; l * l];
            for pi in 0..l {
                for qi in 0..l {
                    let dp = pi as i64 - qi as i64 + 2 * (l as i64 / 2);
                    let mut acc = ZERO;
                    for j in 0..n_tx {
                        for jj in 0..n_tx {
                            let dv = dr * n_tx as i64 + j as i64 - jj as i64 + vt - 1;
                            let line = &phat[(dv as usize * wk) * wp..];
                            for (dk, c) in self.corr.get(j, pi, jj, qi).iter().enumerate() {
                                acc += line[dk * wp + dp as usize] * c;
                            }
                        }
                    }
                    block[pi * l + qi] = acc;
                }
            }
            for r in 0..n_rx as i64 {
                let rr = r - dr;
                if rr < 0 || rr >= n_rx as i64 {
                    continue;
                }
                for pi in 0..l {
                    for qi in 0..l {
                        cov[(r as usize * l + pi, rr as usize * l + qi)] = block[pi * l + qi];
                    }
                }
            }
        }
        cov
    }

    /// `a_n^H C a_n` for every grid point.
    fn quadratic_forms(&self, c: &DMatrix<Complex64>) -> Vec<f64> {
        let spec = self.dict.operator().spec();
        let (n_tx, n_rx, l) = (spec.n_tx(), spec.n_rx(), spec.signal_len());
        let [wv, wk, wp] = self.diff_dims();
        let vt = spec.virtual_len() as i64;
        let mut what = vec![ZERO; wv * wk * wp];
        for r in 0..n_rx {
            for rr in 0..n_rx {
                for pi in 0..l {
                    for qi in 0..l {
                        let cval = c[(r * l + pi, rr * l + qi)];
                        let dp = pi + 2 * (l / 2) - qi;
                        for j in 0..n_tx {
                            for jj in 0..n_tx {
                                let dv = ((r * n_tx + j) as i64 - (rr * n_tx + jj) as i64 + vt - 1) as usize;
                                let base = dv * wk * wp + dp;
                                for (dk, corr) in self.corr.get(j, pi, jj, qi).iter().enumerate() {
                                    what[base + dk * wp] += cval * corr.conj();
                                }
                            }
                        }
                    }
                }
            }
        }
        self.diff.analyze(&what).into_iter().map(|v| v.re).collect()
    }
}

fn invert_hermitian(mut cov: DMatrix<Complex64>, loading: f64) -> Option<DMatrix<Complex64>> {
    for i in 0..cov.nrows() {
        cov[(i, i)] += loading;
    }
    // symmetrize rounding noise before the factorization
    let herm = (&cov + cov.adjoint()) * Complex64::new(0.5, 0.0);
    herm.cholesky().map(|ch| ch.inverse())
}

/// Amplitudes at the cyclic 3x3x3 local maxima of the power spectrum; the
/// dense IAA spectrum would otherwise merge nearby targets into one cluster.
pub fn local_peaks(grid: &GridSpec, powers: &[f64], amplitudes: &[Complex64]) -> SparseSolution {
    let dims = grid.dims();
    let mut sol = SparseSolution::new(*grid);
    for (f, &p) in powers.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let i = grid.unflat(f);
        let mut is_peak = true;
        'scan: for d1 in [dims[0] - 1, 0, 1] {
            for d2 in [dims[1] - 1, 0, 1] {
                for d3 in [dims[2] - 1, 0, 1] {
                    let j = GridIndex::new((i.n1 + d1) % dims[0], (i.n2 + d2) % dims[1], (i.n3 + d3) % dims[2]);
                    let g = grid.flat(j);
                    // ties go to the lower flat index
                    if g != f && (powers[g] > p || (powers[g] == p && g < f)) {
                        is_peak = false;
                        break 'scan;
                    }
                }
            }
        }
        if is_peak {
            sol.insert(i, amplitudes[f]);
        }
    }
    sol
}

pub fn iaa_recover_with(dict: &GridDictionary, y: &MeasurementVector, opts: &IaaOptions) -> Result<IaaResult> {
    let opts = opts.validated()?;
    let grid = *dict.grid();
    let corr_y = dict.adjoint(y)?;
    let norms = dict.column_norms_sq()?;
    let mut powers: Vec<f64> = corr_y
        .iter()
        .zip(&norms)
        .map(|(c, n)| if *n > 0.0 { c.norm_sqr() / (n * n) } else { 0.0 })
        .collect();
    let mut amplitudes: Vec<Complex64> = corr_y
        .iter()
        .zip(&norms)
        .map(|(c, n)| if *n > 0.0 { c / n } else { ZERO })
        .collect();
    drop(corr_y);
    drop(norms);
    if y.norm() == 0.0 {
        return Ok(IaaResult {
            grid,
            powers,
            amplitudes,
            targets: Vec::new(),
            iterations: 0,
            loading: 0.0,
        });
    }

    let spec = dict.operator().spec();
    let (vt, n) = (spec.virtual_len() as i64, spec.half_len() as i64);
    let structure = Structure {
        dict,
        corr: RowCorrelation::new(dict.operator()),
        diff: PrunedTransform3::new(
            grid.dims(),
            [
                (-(vt - 1)..vt).collect(),
                (-2 * n..=2 * n).collect(),
                (-2 * n..=2 * n).collect(),
            ],
        ),
    };
    let m = spec.measurement_len();
    let mut loading = 0.0;
    for _ in 0..opts.iterations {
        let cov = structure.covariance(&powers);
        let trace: f64 = (0..m).map(|i| cov[(i, i)].re).sum();
        loading = opts.diag_load * trace / m as f64;
        let c = match invert_hermitian(cov.clone(), loading) {
            Some(c) => c,
            None => {
                loading = (opts.diag_load * 1e3).max(1e-10) * trace / m as f64;
                invert_hermitian(cov, loading).ok_or(Error::CovarianceSolve(loading))?
            }
        };
        let cy: Vec<Complex64> = (&c * nalgebra::DVector::from_column_slice(y.data()))
            .iter()
            .copied()
            .collect();
        let num = dict.adjoint_raw(&cy);
        let den = structure.quadratic_forms(&c);
        for ((p, a), (nu, de)) in powers.iter_mut().zip(amplitudes.iter_mut()).zip(num.iter().zip(&den)) {
            if *de > 0.0 {
                *a = nu / de;
                *p = a.norm_sqr();
            } else {
                *a = ZERO;
                *p = 0.0;
            }
        }
    }

    let targets = extract_targets(
        &local_peaks(&grid, &powers, &amplitudes),
        opts.threshold_frac,
        opts.cluster_radius,
    )?;
    Ok(IaaResult {
        grid,
        powers,
        amplitudes,
        targets,
        iterations: opts.iterations,
        loading,
    })
}
