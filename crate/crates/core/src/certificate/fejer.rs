use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared Fejer kernel `F(t) = sum_{k=-N}^{N} g_k e^{i2pi t k}`, normalized
/// to `F(0) = 1`.
///
/// For even `N`, `F(t) = [sin(pi m t) / (m sin(pi t))]^4` with `m = N/2 + 1`.
/// Odd `N` uses degree `N - 1` (so `g_{+-N} = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FejerKernel {
    degree: usize,
    coeffs: Vec<f64>,
}

impl FejerKernel {
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Degree actually carried by the coefficients (largest even `<= N`).
    pub fn effective_degree(&self) -> usize {
        self.degree - self.degree % 2
    }

    /// `g_k` for `k = -N..=N`, stored at `k + N`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: i64) -> f64 {
        let n = self.degree as i64;
        if k.abs() > n {
            0.0
        } else {
            self.coeffs[(k + n) as usize]
        }
    }

    /// `m` in the closed form.
    pub fn half_width(&self) -> usize {
        self.effective_degree() / 2 + 1
    }

    /// Closed-form `[sin(pi m t) / (m sin(pi t))]^4`.
    pub fn closed_form(&self, t: f64) -> f64 {
        let m = self.half_width() as f64;
        let s = (PI * t).sin();
        if s.abs() < 1e-12 {
            // limit at integer t
            return 1.0;
        }
        ((PI * m * t).sin() / (m * s)).powi(4)
    }
}

pub fn fejer_coeffs(degree: usize) -> Result<FejerKernel> {
    if degree < 2 {
        return Err(Error::InvalidOption(format!("kernel degree must be >= 2, got {degree}")));
    }
    let eff = degree - degree % 2;
    let m = (eff / 2 + 1) as i64;
    // Fejer triangle (m - |k|) / m^2, |k| < m, sums to 1
    let tri: Vec<f64> = (-(m - 1)..m).map(|k| (m - k.abs()) as f64 / (m * m) as f64).collect();
    let n = degree as i64;
    let mut coeffs = vec![0.0; 2 * degree + 1];
    for (a, ta) in tri.iter().enumerate() {
        for (b, tb) in tri.iter().enumerate() {
            let k = a as i64 + b as i64 - 2 * (m - 1);
            coeffs[(k + n) as usize] += ta * tb;
        }
    }
    let total: f64 = coeffs.iter().sum();
    coeffs.iter_mut().for_each(|g| *g /= total);
    Ok(FejerKernel { degree, coeffs })
}

/// `(i 2 pi k)^m`
pub(crate) fn deriv_factor(k: i64, order: u8) -> Complex64 {
    Complex64::new(0.0, 2.0 * PI * k as f64).powu(order as u32)
}

/// `Re sum_k g_k (i2pi k)^m e^{i2pi t k}`; the imaginary part vanishes by
/// symmetry of `g`.
///
/// # Panics
/// When `order > 3`.
pub fn fejer_eval(kernel: &FejerKernel, t: f64, order: u8) -> f64 {
    assert!(order <= 3, "derivative order {order} > 3");
    let n = kernel.degree as i64;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    for k in -n..=n {
        let g = kernel.coeff(k);
        if g == 0.0 {
            continue;
        }
        let term = deriv_factor(k, order) * g;
        scale += term.norm();
        acc += term * Complex64::cis(2.0 * PI * t * k as f64);
    }
    debug_assert!(acc.im.abs() <= 1e-12 * scale.max(1.0));
    acc.re
}

/// `Gbar^{(n1,n2,n3)}(dr) = F^{(n1)}(dbeta) F^{(n2)}(dtau) F^{(n3)}(dnu)`.
pub fn gbar(kernel: &FejerKernel, dr: [f64; 3], orders: [u8; 3]) -> f64 {
    (0..3).map(|ax| fejer_eval(kernel, dr[ax], orders[ax])).product()
}
