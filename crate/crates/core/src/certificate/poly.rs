use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::PrunedTransform3;
use crate::linalg::ZERO;
use crate::radar::Location;

/// `Q(r) = sum_{v,k,p=-N}^{N} c_{v,k,p} e^{-i2pi(v beta + k tau + p nu)}`,
/// i.e. `Q(r) = <c, f~(r)>`, coefficients stored row-major at offset `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly3 {
    half: usize,
    coeffs: Vec<Complex64>,
}

impl TrigPoly3 {
    pub fn new(half: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        let l = 2 * half + 1;
        if coeffs.len() != l * l * l {
            return Err(Error::DimensionMismatch {
                what: "polynomial coefficients",
                expected: l * l * l,
                got: coeffs.len(),
            });
        }
        Ok(Self { half, coeffs })
    }

    /// `Q(r) = value` everywhere.
    pub fn constant(half: usize, value: Complex64) -> Self {
        let l = 2 * half + 1;
        let mut coeffs = vec![ZERO; l * l * l];
        coeffs[(half * l + half) * l + half] = value;
        Self { half, coeffs }
    }

    pub fn half_len(&self) -> usize {
        self.half
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    fn phases(&self, x: f64) -> Vec<Complex64> {
        let n = self.half as i64;
        (-n..=n).map(|v| Complex64::cis(-2.0 * PI * v as f64 * x)).collect()
    }

    /// `Q(r)` and `(dQ/dbeta, dQ/dtau, dQ/dnu)`.
    pub fn eval_with_grad(&self, r: Location) -> (Complex64, [Complex64; 3]) {
        let l = 2 * self.half + 1;
        let n = self.half as i64;
        let (eb, et, en) = (self.phases(r.beta()), self.phases(r.tau()), self.phases(r.nu()));
        let w = |i: usize| Complex64::new(0.0, -2.0 * PI * (i as i64 - n) as f64);
        let mut q = ZERO;
        let mut grad = [ZERO; 3];
        for a in 0..l {
            let (mut qa, mut ga_tau, mut ga_nu) = (ZERO, ZERO, ZERO);
            for b in 0..l {
                let row = &self.coeffs[(a * l + b) * l..(a * l + b + 1) * l];
                let (mut s, mut s_nu) = (ZERO, ZERO);
                for (c, (coef, e)) in row.iter().zip(&en).enumerate() {
                    let t = coef * e;
                    s += t;
                    s_nu += t * w(c);
                }
                qa += s * et[b];
                ga_tau += s * et[b] * w(b);
                ga_nu += s_nu * et[b];
            }
            q += qa * eb[a];
            grad[0] += qa * eb[a] * w(a);
            grad[1] += ga_tau * eb[a];
            grad[2] += ga_nu * eb[a];
        }
        (q, grad)
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &TrigPoly3, scale: Complex64) {
        debug_assert_eq!(self.half, other.half);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * scale;
        }
    }

    pub fn eval(&self, r: Location) -> Complex64 {
        self.eval_with_grad(r).0
    }

    /// `Q` on the grid `(n1/M1, n2/M2, n3/M3)`, flattened row-major.
    pub fn eval_grid(&self, dims: [usize; 3]) -> Vec<Complex64> {
        let n = self.half as i64;
        let window: Vec<i64> = (-n..=n).collect();
        PrunedTransform3::new(dims, [window.clone(), window.clone(), window]).analyze(&self.coeffs)
    }

    /// `|Q|` on the `(tau, nu)` plane at fixed `beta`, as CSV `tau,nu,abs_q`.
    pub fn write_slice_csv<W: Write>(&self, beta: f64, dims: [usize; 2], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["tau", "nu", "abs_q"]).map_err(crate::solvers::csv_err)?;
        // fold beta into the coefficients, then evaluate a one-plane grid
        let l = 2 * self.half + 1;
        let eb = self.phases(beta);
        let mut plane = vec![ZERO; l * l];
        for (a, e) in eb.iter().enumerate() {
            for (dst, c) in plane.iter_mut().zip(&self.coeffs[a * l * l..(a + 1) * l * l]) {
                *dst += c * e;
            }
        }
        let n = self.half as i64;
        let window: Vec<i64> = (-n..=n).collect();
        let values = PrunedTransform3::new([1, dims[0], dims[1]], [vec![0], window.clone(), window]).analyze(&plane);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                w.serialize((
                    i as f64 / dims[0] as f64,
                    j as f64 / dims[1] as f64,
                    values[i * dims[1] + j].norm(),
                ))
                .map_err(crate::solvers::csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
