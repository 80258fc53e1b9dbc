use num_complex::Complex64;

use super::{grid_point, GridIndex, GridSpec, SparseSolution};
use crate::error::{Error, Result};
use crate::fourier::PrunedTransform3;
use crate::linalg::ZERO;
use crate::radar::{MeasurementVector, MimoOperator, ProbingSignalSet};

/// Largest dense grid vector (in entries) the dictionary will materialize.
pub const DEFAULT_DENSE_CAP: usize = 1 << 26;

/// `R = A F`, where column `n` of `F` is the atom `f(r_n)` at grid point `r_n`.
///
/// Products with `F` and `F^H` run through a pruned 3-D FFT, so neither
/// matrix is ever formed. `R R^H = K A A^H` is diagonal.
#[derive(Debug, Clone)]
pub struct GridDictionary {
    op: MimoOperator,
    grid: GridSpec,
    transform: PrunedTransform3,
    dense_cap: usize,
}

impl GridDictionary {
    pub fn new(signals: &ProbingSignalSet, grid: GridSpec) -> Result<Self> {
        Self::from_operator(MimoOperator::new(signals), grid)
    }

    pub fn from_operator(op: MimoOperator, grid: GridSpec) -> Result<Self> {
        let spec = op.spec();
        grid.check(spec)?;
        let n = spec.half_len() as i64;
        let transform = PrunedTransform3::new(
            grid.dims(),
            [
                (0..spec.virtual_len() as i64).collect(),
                (-n..=n).collect(),
                (-n..=n).collect(),
            ],
        );
        Ok(Self {
            op,
            grid,
            transform,
            dense_cap: DEFAULT_DENSE_CAP,
        })
    }

    pub fn with_dense_cap(mut self, cap: usize) -> Self {
        self.dense_cap = cap;
        self
    }

    pub fn operator(&self) -> &MimoOperator {
        &self.op
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.op.rows()
    }

    pub fn cols(&self) -> usize {
        self.grid.len()
    }

    fn check_dense(&self) -> Result<()> {
        if self.cols() > self.dense_cap {
            return Err(Error::SizeGuard {
                rows: self.rows(),
                cols: self.cols(),
                cap: self.dense_cap,
            });
        }
        Ok(())
    }

    fn check_measurement(&self, y: &MeasurementVector) -> Result<()> {
        if y.spec() != self.op.spec() {
            return Err(Error::DimensionMismatch {
                what: "measurement length",
                expected: self.rows(),
                got: y.data().len(),
            });
        }
        Ok(())
    }

    /// Column `A f(r_n)`.
    pub fn column(&self, idx: GridIndex) -> Result<Vec<Complex64>> {
        Ok(self.op.apply_atom(grid_point(&self.grid, idx)?))
    }

    /// `R s` for a dense grid vector.
    pub fn apply_dense(&self, s: &[Complex64]) -> Result<MeasurementVector> {
        if s.len() != self.cols() {
            return Err(Error::DimensionMismatch {
                what: "grid vector",
                expected: self.cols(),
                got: s.len(),
            });
        }
        self.check_dense()?;
        let mut out = vec![ZERO; self.rows()];
        self.apply_dense_into(s, &mut out);
        MeasurementVector::new(self.op.spec(), out)
    }

    pub(crate) fn apply_dense_into(&self, s: &[Complex64], out: &mut [Complex64]) {
        let z = self.transform.synthesize(s);
        self.op.apply_into(&z, out);
    }

    /// `R s` as a sum of the columns in the support of `s`.
    pub fn apply_sparse(&self, s: &SparseSolution) -> Result<MeasurementVector> {
        if s.grid() != &self.grid {
            return Err(Error::InvalidGrid("solution grid differs from dictionary grid".into()));
        }
        let mut out = vec![ZERO; self.rows()];
        let mut col = vec![ZERO; self.rows()];
        for (idx, v) in s.iter() {
            self.op.apply_atom_into(grid_point(&self.grid, idx)?, &mut col);
            for (o, c) in out.iter_mut().zip(&col) {
                *o += v * c;
            }
        }
        MeasurementVector::new(self.op.spec(), out)
    }

    /// `R^H y` on the whole grid.
    pub fn adjoint(&self, y: &MeasurementVector) -> Result<Vec<Complex64>> {
        self.check_measurement(y)?;
        self.check_dense()?;
        Ok(self.adjoint_raw(y.data()))
    }

    pub(crate) fn adjoint_raw(&self, y: &[Complex64]) -> Vec<Complex64> {
        let mut z = vec![ZERO; self.op.cols()];
        self.op.adjoint_into(y, &mut z);
        self.transform.analyze(&z)
    }

    /// `R^H y` restricted to `indices`, without touching the rest of the grid.
    pub fn adjoint_at(&self, y: &MeasurementVector, indices: &[GridIndex]) -> Result<Vec<Complex64>> {
        self.check_measurement(y)?;
        let mut col = vec![ZERO; self.rows()];
        indices
            .iter()
            .map(|&idx| {
                self.op.apply_atom_into(grid_point(&self.grid, idx)?, &mut col);
                Ok(crate::linalg::inner(y.data(), &col))
            })
            .collect()
    }

    /// `||R e_n||^2` for every grid point.
    ///
    /// The column norm depends only on `(n1, n2)`: with
    /// `S_p(n1, n2) = sum_{j,k} a_{p,k,j} e^{i2pi(j n1/K1 + k n2/K2)}` it equals
    /// `N_R sum_p |S_p|^2`.
    pub fn column_norms_sq(&self) -> Result<Vec<f64>> {
        self.check_dense()?;
        let spec = self.op.spec();
        let (k1, k2, k3) = (self.grid.k1, self.grid.k2, self.grid.k3);
        let n = spec.half_len() as i64;
        let plane = PrunedTransform3::new([k1, k2, 1], [(0..spec.n_tx() as i64).collect(), (-n..=n).collect(), vec![0]]);
        let mut acc = vec![0.0; k1 * k2];
        let l = spec.signal_len();
        let mut window = vec![ZERO; spec.n_tx() * l];
        for p in -n..=n {
            for j in 0..spec.n_tx() {
                for (w, a) in window[j * l..(j + 1) * l].iter_mut().zip(self.op.coefficient_row(j, p)) {
                    *w = a.conj();
                }
            }
            // |conj(analyze(conj a))| = |S_p|
            for (s, v) in acc.iter_mut().zip(plane.analyze(&window)) {
                *s += v.norm_sqr();
            }
        }
        let nr = spec.n_rx() as f64;
        let mut out = Vec::with_capacity(self.grid.len());
        for v in acc {
            out.extend(std::iter::repeat_n(nr * v, k3));
        }
        Ok(out)
    }

    /// Diagonal of `R R^H`, indexed like the measurement vector.
    pub fn gram_diag(&self) -> Vec<f64> {
        let k = self.grid.len() as f64;
        let spec = self.op.spec();
        let mut out = Vec::with_capacity(self.rows());
        for _ in 0..spec.n_rx() {
            out.extend(self.op.row_energy().iter().map(|e| k * e));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{inner, norm_sqr};
    use crate::radar::ArraySpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dictionary(srf: usize) -> GridDictionary {
        let spec = ArraySpec::new(2, 2, 5).unwrap();
        let signals = ProbingSignalSet::generate(spec, 11);
        GridDictionary::new(&signals, GridSpec::from_srf(spec, srf).unwrap()).unwrap()
    }

    fn random_vec(len: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect()
    }

    #[test]
    fn dense_apply_matches_column_sum() {
        let d = dictionary(2);
        let s = random_vec(d.cols(), 1);
        let fast = d.apply_dense(&s).unwrap();
        let mut slow = vec![ZERO; d.rows()];
        for (f, v) in s.iter().enumerate() {
            let col = d.column(d.grid().unflat(f)).unwrap();
            for (o, c) in slow.iter_mut().zip(col) {
                *o += v * c;
            }
        }
        for (a, b) in fast.data().iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn adjoint_identity_and_subset() {
        let d = dictionary(2);
        let s = random_vec(d.cols(), 2);
        let y = MeasurementVector::new(d.operator().spec(), random_vec(d.rows(), 3)).unwrap();
        let lhs = inner(d.apply_dense(&s).unwrap().data(), y.data());
        let rhs = inner(&s, &d.adjoint(&y).unwrap());
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));

        let full = d.adjoint(&y).unwrap();
        let picks: Vec<GridIndex> = [0, 7, 123, d.cols() - 1].iter().map(|&f| d.grid().unflat(f)).collect();
        let at = d.adjoint_at(&y, &picks).unwrap();
        for (idx, v) in picks.iter().zip(at) {
            assert!((full[d.grid().flat(*idx)] - v).norm() < 1e-10);
        }
    }

    #[test]
    fn sparse_apply_agrees_with_dense() {
        let d = dictionary(3);
        let mut sol = SparseSolution::new(*d.grid());
        sol.insert(GridIndex::new(1, 2, 3), Complex64::new(1.0, -0.5));
        sol.insert(GridIndex::new(11, 0, 14), Complex64::new(0.0, 2.0));
        let a = d.apply_sparse(&sol).unwrap();
        let b = d.apply_dense(&sol.to_dense()).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn column_norms() {
        let d = dictionary(2);
        let norms = d.column_norms_sq().unwrap();
        for f in [0, 5, 77, d.cols() - 1] {
            let col = d.column(d.grid().unflat(f)).unwrap();
            assert!((norm_sqr(&col) - norms[f]).abs() < 1e-10);
        }
    }

    #[test]
    fn gram_is_diagonal() {
        let d = dictionary(1);
        let diag = d.gram_diag();
        for i in [0, 3, d.rows() - 1] {
            let mut e = vec![ZERO; d.rows()];
            e[i] = Complex64::new(1.0, 0.0);
            let y = MeasurementVector::new(d.operator().spec(), e).unwrap();
            let back = d.apply_dense(&d.adjoint(&y).unwrap()).unwrap();
            for (r, v) in back.data().iter().enumerate() {
                let expect = if r == i { diag[i] } else { 0.0 };
                assert!((v - Complex64::new(expect, 0.0)).norm() < 1e-9 * diag[i]);
            }
        }
    }

    #[test]
    fn size_guard() {
        let d = dictionary(2).with_dense_cap(10);
        let y = MeasurementVector::zeros(d.operator().spec());
        assert!(matches!(d.adjoint(&y), Err(Error::SizeGuard { .. })));
        assert!(d.adjoint_at(&y, &[GridIndex::new(0, 0, 0)]).is_ok());
    }
}
