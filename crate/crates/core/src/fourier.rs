//! DFT helpers for centered (symmetric-index) vectors and a pruned
//! three-axis transform between a fine grid and a small frequency window.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// Position of integer frequency `freq` in a length-`n` DFT.
#[inline]
pub(crate) fn bin(freq: i64, n: usize) -> usize {
    freq.rem_euclid(n as i64) as usize
}

fn run(fft: &dyn Fft<f64>, buf: &mut [Complex64]) {
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(buf, &mut scratch);
}

fn centered_transform(x: &[Complex64], direction: FftDirection) -> Vec<Complex64> {
    let len = x.len();
    let half = (len / 2) as i64;
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (i, &xi) in x.iter().enumerate() {
        buf[bin(i as i64 - half, len)] = xi;
    }
    run(plan(len, direction).as_ref(), &mut buf);
    (0..len).map(|i| buf[bin(i as i64 - half, len)]).collect()
}

/// `X_k = sum_l x_l exp(-i 2 pi l k / L)` with `l, k = -N..N` stored at offset `N`.
pub fn centered_dft(x: &[Complex64]) -> Vec<Complex64> {
    centered_transform(x, FftDirection::Forward)
}

/// Unnormalized inverse of [`centered_dft`] (positive exponent, no `1/L`).
pub fn centered_idft(x: &[Complex64]) -> Vec<Complex64> {
    centered_transform(x, FftDirection::Inverse)
}

/// Maps between a `K1 x K2 x K3` grid (row-major, last axis fastest) and a
/// window of integer frequencies per axis (also row-major).
///
/// `synthesize` evaluates `z_f = sum_n s_n exp(+i 2 pi <f, n/K>)` at the window
/// frequencies; `analyze` is its exact adjoint,
/// `s_n = sum_f z_f exp(-i 2 pi <f, n/K>)`. Window frequencies are taken modulo
/// the axis length, so windows wider than the grid alias correctly.
#[derive(Clone)]
pub struct PrunedTransform3 {
    dims: [usize; 3],
    freqs: [Vec<i64>; 3],
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for PrunedTransform3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PrunedTransform3")
            .field("dims", &self.dims)
            .field("window", &self.window_dims())
            .finish()
    }
}

impl PrunedTransform3 {
    pub fn new(dims: [usize; 3], freqs: [Vec<i64>; 3]) -> Self {
        let fwd = dims.map(|d| plan(d, FftDirection::Forward));
        let inv = dims.map(|d| plan(d, FftDirection::Inverse));
        Self {
            dims,
            freqs,
            fwd,
            inv,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn window_dims(&self) -> [usize; 3] {
        [self.freqs[0].len(), self.freqs[1].len(), self.freqs[2].len()]
    }

    pub fn grid_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn window_len(&self) -> usize {
        self.window_dims().iter().product()
    }

    pub fn synthesize(&self, s: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(s.len(), self.grid_len(), "grid vector length");
        let [k1, k2, k3] = self.dims;
        let [w1, w2, w3] = self.window_dims();
        let zero = Complex64::new(0.0, 0.0);
        let b1: Vec<usize> = self.freqs[0].iter().map(|&f| bin(f, k1)).collect();
        let b2: Vec<usize> = self.freqs[1].iter().map(|&f| bin(f, k2)).collect();
        let b3: Vec<usize> = self.freqs[2].iter().map(|&f| bin(f, k3)).collect();

        // axis 3
        let mut work = s.to_vec();
        run(self.inv[2].as_ref(), &mut work);
        let mut t1 = vec![zero; k1 * k2 * w3];
        for line in 0..k1 * k2 {
            let src = &work[line * k3..(line + 1) * k3];
            let dst = &mut t1[line * w3..(line + 1) * w3];
            for (d, &b) in dst.iter_mut().zip(&b3) {
                *d = src[b];
            }
        }
        drop(work);

        // axis 2, lines laid out as (n1, w3, n2)
        let mut work = vec![zero; k1 * w3 * k2];
        for n1 in 0..k1 {
            for n2 in 0..k2 {
                let row = &t1[(n1 * k2 + n2) * w3..(n1 * k2 + n2 + 1) * w3];
                for (c, &v) in row.iter().enumerate() {
                    work[(n1 * w3 + c) * k2 + n2] = v;
                }
            }
        }
        run(self.inv[1].as_ref(), &mut work);
        let mut t2 = vec![zero; k1 * w2 * w3];
        for n1 in 0..k1 {
            for c in 0..w3 {
                let line = &work[(n1 * w3 + c) * k2..(n1 * w3 + c + 1) * k2];
                for (r, &b) in b2.iter().enumerate() {
                    t2[(n1 * w2 + r) * w3 + c] = line[b];
                }
            }
        }

        // axis 1, lines laid out as (w2, w3, n1)
        let mut work = vec![zero; w2 * w3 * k1];
        for n1 in 0..k1 {
            for rc in 0..w2 * w3 {
                work[rc * k1 + n1] = t2[n1 * w2 * w3 + rc];
            }
        }
        run(self.inv[0].as_ref(), &mut work);
        let mut z = vec![zero; w1 * w2 * w3];
        for rc in 0..w2 * w3 {
            let line = &work[rc * k1..(rc + 1) * k1];
            for (a, &b) in b1.iter().enumerate() {
                z[a * w2 * w3 + rc] = line[b];
            }
        }
        z
    }

    pub fn analyze(&self, z: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(z.len(), self.window_len(), "window vector length");
        let [k1, k2, k3] = self.dims;
        let [_, w2, w3] = self.window_dims();
        let zero = Complex64::new(0.0, 0.0);
        let b1: Vec<usize> = self.freqs[0].iter().map(|&f| bin(f, k1)).collect();
        let b2: Vec<usize> = self.freqs[1].iter().map(|&f| bin(f, k2)).collect();
        let b3: Vec<usize> = self.freqs[2].iter().map(|&f| bin(f, k3)).collect();

        // axis 1
        let mut work = vec![zero; w2 * w3 * k1];
        for (a, &b) in b1.iter().enumerate() {
            for rc in 0..w2 * w3 {
                work[rc * k1 + b] += z[a * w2 * w3 + rc];
            }
        }
        run(self.fwd[0].as_ref(), &mut work);
        let mut t2 = vec![zero; k1 * w2 * w3];
        for n1 in 0..k1 {
            for rc in 0..w2 * w3 {
                t2[n1 * w2 * w3 + rc] = work[rc * k1 + n1];
            }
        }

        // axis 2
        let mut work = vec![zero; k1 * w3 * k2];
        for n1 in 0..k1 {
            for (r, &b) in b2.iter().enumerate() {
                for c in 0..w3 {
                    work[(n1 * w3 + c) * k2 + b] += t2[(n1 * w2 + r) * w3 + c];
                }
            }
        }
        run(self.fwd[1].as_ref(), &mut work);
        let mut t1 = vec![zero; k1 * k2 * w3];
        for n1 in 0..k1 {
            for c in 0..w3 {
                let line = &work[(n1 * w3 + c) * k2..(n1 * w3 + c + 1) * k2];
                for (n2, &v) in line.iter().enumerate() {
                    t1[(n1 * k2 + n2) * w3 + c] = v;
                }
            }
        }
        drop(work);

        // axis 3
        let mut s = vec![zero; k1 * k2 * k3];
        for line in 0..k1 * k2 {
            let src = &t1[line * w3..(line + 1) * w3];
            let dst = &mut s[line * k3..(line + 1) * k3];
            for (&v, &b) in src.iter().zip(&b3) {
                dst[b] += v;
            }
        }
        run(self.fwd[2].as_ref(), &mut s);
        s
    }
}
