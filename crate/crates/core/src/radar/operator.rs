use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{frac_freq_shift, frac_time_shift, ArraySpec, Location, MeasurementVector, ProbingSignalSet, TargetScene};
use crate::error::{Error, Result};
use crate::fourier::centered_idft;
use crate::linalg::ZERO;

/// Largest dense matrix (in entries) [`MimoOperator::dense`] will build.
pub const DENSE_ENTRY_CAP: usize = 1 << 24;

/// `e^{i 2 pi m / L}` with the integer phase reduced modulo `L` first.
fn root_of_unity(m: i64, len: usize) -> Complex64 {
    Complex64::cis(2.0 * PI * m.rem_euclid(len as i64) as f64 / len as f64)
}

/// Atom `f(r)` with entries `e^{i2pi(v beta + k tau + p nu)}`, `v = 0..N_T N_R`.
pub fn atom(spec: ArraySpec, loc: Location) -> Vec<Complex64> {
    let n = spec.half_len() as i64;
    let pv: Vec<Complex64> = (0..spec.virtual_len())
        .map(|v| Complex64::cis(2.0 * PI * v as f64 * loc.beta()))
        .collect();
    let pk: Vec<Complex64> = (-n..=n).map(|k| Complex64::cis(2.0 * PI * k as f64 * loc.tau())).collect();
    let pp: Vec<Complex64> = (-n..=n).map(|p| Complex64::cis(2.0 * PI * p as f64 * loc.nu())).collect();
    let mut out = Vec::with_capacity(spec.atom_len());
    for &a in &pv {
        for &b in &pk {
            let ab = a * b;
            out.extend(pp.iter().map(|&c| ab * c));
        }
    }
    out
}

/// Samples the scene through the fractional shift operators directly.
pub fn simulate_measurement(scene: &TargetScene, signals: &ProbingSignalSet) -> MeasurementVector {
    let spec = signals.spec();
    let l = spec.signal_len();
    let mut y = MeasurementVector::zeros(spec);
    let mut w = vec![ZERO; l];
    for target in &scene.targets {
        let loc = target.loc;
        w.iter_mut().for_each(|v| *v = ZERO);
        for (j, x) in signals.signals().iter().enumerate() {
            let shifted = frac_freq_shift(&frac_time_shift(x, loc.tau()).expect("odd length"), loc.nu())
                .expect("odd length");
            let phase = Complex64::cis(2.0 * PI * j as f64 * loc.beta());
            for (wp, s) in w.iter_mut().zip(shifted) {
                *wp += phase * s;
            }
        }
        for r in 0..spec.n_rx() {
            let phase = target.gain * Complex64::cis(2.0 * PI * (r * spec.n_tx()) as f64 * loc.beta());
            for (yp, &wp) in y.data_mut()[r * l..(r + 1) * l].iter_mut().zip(&w) {
                *yp += phase * wp;
            }
        }
    }
    y
}

/// The structured measurement matrix `A` in `C^{N_R L x N_R N_T L^2}`.
///
/// Row `(r, p)` of `A` only touches the columns `(v = r N_T + j, k, p)`, with
/// weights `a_{p,k,j}`; `A A^H` is therefore diagonal.
#[derive(Debug, Clone)]
pub struct MimoOperator {
    spec: ArraySpec,
    /// `a_{p,k,j}` at `(j * L + p + N) * L + k + N`.
    coeffs: Vec<Complex64>,
    /// `sum_{j,k} |a_{p,k,j}|^2` for each `p`.
    row_energy: Vec<f64>,
}

impl MimoOperator {
    /// One inverse DFT per transmit signal gives every `a_{p,k,j}`.
    pub fn new(signals: &ProbingSignalSet) -> Self {
        let spec = signals.spec();
        let l = spec.signal_len();
        let n = spec.half_len() as i64;
        let mut coeffs = vec![ZERO; spec.n_tx() * l * l];
        for (j, x) in signals.signals().iter().enumerate() {
            // c_k = (1/L) sum_l x_l e^{i2pi l k / L}
            let c: Vec<Complex64> = centered_idft(x).into_iter().map(|v| v / l as f64).collect();
            for p in -n..=n {
                let row = &mut coeffs[(j * l + (p + n) as usize) * l..(j * l + (p + n) as usize + 1) * l];
                for k in -n..=n {
                    row[(k + n) as usize] = c[(k + n) as usize] * root_of_unity(-p * k, l);
                }
            }
        }
        let mut row_energy = vec![0.0; l];
        for j in 0..spec.n_tx() {
            for (pi, e) in row_energy.iter_mut().enumerate() {
                *e += coeffs[(j * l + pi) * l..(j * l + pi + 1) * l]
                    .iter()
                    .map(|a| a.norm_sqr())
                    .sum::<f64>();
            }
        }
        Self {
            spec,
            coeffs,
            row_energy,
        }
    }

    pub fn spec(&self) -> ArraySpec {
        self.spec
    }

    pub fn rows(&self) -> usize {
        self.spec.measurement_len()
    }

    pub fn cols(&self) -> usize {
        self.spec.atom_len()
    }

    /// `a_{p,k,j}` for `k = -N..=N`, in storage order.
    #[inline]
    pub fn coefficient_row(&self, j: usize, p: i64) -> &[Complex64] {
        let l = self.spec.signal_len();
        let pi = (p + self.spec.half_len() as i64) as usize;
        &self.coeffs[(j * l + pi) * l..(j * l + pi + 1) * l]
    }

    pub fn coefficient(&self, p: i64, k: i64, j: usize) -> Complex64 {
        self.coefficient_row(j, p)[(k + self.spec.half_len() as i64) as usize]
    }

    /// Diagonal of `A A^H` for sample index `p + N` (identical for every receiver).
    pub fn row_energy(&self) -> &[f64] {
        &self.row_energy
    }

    /// Factor `sqrt(N_T) L` for which `E[(cA)^H (cA)] = I` under the
    /// `1/(N_T L)` probing variance (`E[A^H A] = I / (N_T L^2)`).
    pub fn isotropy_scale(&self) -> f64 {
        (self.spec.n_tx() as f64).sqrt() * self.spec.signal_len() as f64
    }

    pub fn apply(&self, z: &[Complex64]) -> Result<MeasurementVector> {
        if z.len() != self.cols() {
            return Err(Error::DimensionMismatch {
                what: "operator input",
                expected: self.cols(),
                got: z.len(),
            });
        }
        let mut out = vec![ZERO; self.rows()];
        self.apply_into(z, &mut out);
        MeasurementVector::new(self.spec, out)
    }

    pub fn adjoint(&self, y: &MeasurementVector) -> Result<Vec<Complex64>> {
        if y.spec() != self.spec {
            return Err(Error::DimensionMismatch {
                what: "measurement length",
                expected: self.rows(),
                got: y.data().len(),
            });
        }
        let mut out = vec![ZERO; self.cols()];
        self.adjoint_into(y.data(), &mut out);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, z: &[Complex64], out: &mut [Complex64]) {
        let spec = self.spec;
        let l = spec.signal_len();
        let n = spec.half_len() as i64;
        for r in 0..spec.n_rx() {
            for (pi, p) in (-n..=n).enumerate() {
                let mut acc = ZERO;
                for j in 0..spec.n_tx() {
                    let base = (r * spec.n_tx() + j) * l * l + pi;
                    for (ki, a) in self.coefficient_row(j, p).iter().enumerate() {
                        acc += a * z[base + ki * l];
                    }
                }
                out[r * l + pi] = acc;
            }
        }
    }

    pub(crate) fn adjoint_into(&self, y: &[Complex64], out: &mut [Complex64]) {
        let spec = self.spec;
        let l = spec.signal_len();
        let n = spec.half_len() as i64;
        for r in 0..spec.n_rx() {
            for (pi, p) in (-n..=n).enumerate() {
                let yp = y[r * l + pi];
                for j in 0..spec.n_tx() {
                    let base = (r * spec.n_tx() + j) * l * l + pi;
                    for (ki, a) in self.coefficient_row(j, p).iter().enumerate() {
                        out[base + ki * l] = a.conj() * yp;
                    }
                }
            }
        }
    }

    /// `A f(r)` in `O(N_T L^2 + N_R L)` from the coefficient table.
    pub fn apply_atom(&self, loc: Location) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.rows()];
        self.apply_atom_into(loc, &mut out);
        out
    }

    pub(crate) fn apply_atom_into(&self, loc: Location, out: &mut [Complex64]) {
        let spec = self.spec;
        let l = spec.signal_len();
        let n = spec.half_len() as i64;
        let pk: Vec<Complex64> = (-n..=n).map(|k| Complex64::cis(2.0 * PI * k as f64 * loc.tau())).collect();
        let pj: Vec<Complex64> = (0..spec.n_tx())
            .map(|j| Complex64::cis(2.0 * PI * j as f64 * loc.beta()))
            .collect();
        let mut w = vec![ZERO; l];
        for (pi, p) in (-n..=n).enumerate() {
            let mut acc = ZERO;
            for (j, &phj) in pj.iter().enumerate() {
                let row: Complex64 = self.coefficient_row(j, p).iter().zip(&pk).map(|(a, e)| a * e).sum();
                acc += phj * row;
            }
            w[pi] = acc * Complex64::cis(2.0 * PI * p as f64 * loc.nu());
        }
        for r in 0..spec.n_rx() {
            let ph = Complex64::cis(2.0 * PI * (r * spec.n_tx()) as f64 * loc.beta());
            for (o, &wp) in out[r * l..(r + 1) * l].iter_mut().zip(&w) {
                *o = ph * wp;
            }
        }
    }

    /// Materializes `A` (test scale only).
    pub fn dense(&self) -> Result<DMatrix<Complex64>> {
        let (rows, cols) = (self.rows(), self.cols());
        if rows.saturating_mul(cols) > DENSE_ENTRY_CAP {
            return Err(Error::SizeGuard {
                rows,
                cols,
                cap: DENSE_ENTRY_CAP,
            });
        }
        let spec = self.spec;
        let l = spec.signal_len();
        let n = spec.half_len() as i64;
        let mut m = DMatrix::zeros(rows, cols);
        for r in 0..spec.n_rx() {
            for j in 0..spec.n_tx() {
                let v = r * spec.n_tx() + j;
                for p in -n..=n {
                    for k in -n..=n {
                        m[(r * l + (p + n) as usize, spec.flat_index(v, k, p))] = self.coefficient(p, k, j);
                    }
                }
            }
        }
        Ok(m)
    }
}
