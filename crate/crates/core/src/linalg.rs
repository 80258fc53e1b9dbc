//! Small dense-vector helpers shared by the operators and solvers.
//!
//! Inner products are linear in the first argument: `inner(a, b) = b^H a`.

use num_complex::Complex64;

pub(crate) const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

pub fn norm_l1(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm()).sum()
}

pub fn max_abs(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// `sum_i a_i conj(b_i)`
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

pub fn sub(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Complex soft thresholding: shrinks the modulus by `t`, keeps the phase.
#[inline]
pub fn soft_threshold(x: Complex64, t: f64) -> Complex64 {
    let m = x.norm();
    if m <= t {
        ZERO
    } else {
        x * ((m - t) / m)
    }
}

/// Unit-modulus phase of `x`; zero maps to zero.
pub fn sign(x: Complex64) -> Complex64 {
    let m = x.norm();
    if m == 0.0 {
        ZERO
    } else {
        x / m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_keeps_phase() {
        let x = Complex64::new(3.0, 4.0);
        let y = soft_threshold(x, 2.0);
        assert!((y - Complex64::new(1.8, 2.4)).norm() < 1e-15);
        assert_eq!(soft_threshold(x, 5.0), ZERO);
        assert_eq!(sign(ZERO), ZERO);
    }

    #[test]
    fn inner_is_linear_in_first_argument() {
        let a = [Complex64::new(1.0, 2.0)];
        let b = [Complex64::new(0.0, 1.0)];
        let c = Complex64::new(0.0, 3.0);
        let scaled = [a[0] * c];
        assert!((inner(&scaled, &b) - c * inner(&a, &b)).norm() < 1e-15);
        assert!((inner(&a, &[b[0] * c]) - c.conj() * inner(&a, &b)).norm() < 1e-15);
    }
}
