use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{centered_dft, centered_idft};

fn check_odd(len: usize) -> Result<usize> {
    if len % 2 == 0 {
        Err(Error::EvenLength(len))
    } else {
        Ok((len - 1) / 2)
    }
}

/// Fractional time shift `T_tau`: DFT, multiply bin `k` by `e^{-i2pi k tau}`,
/// inverse DFT with `1/L`. Integer multiples of `1/L` give cyclic shifts.
pub fn frac_time_shift(x: &[Complex64], tau: f64) -> Result<Vec<Complex64>> {
    let n = check_odd(x.len())? as i64;
    let len = x.len() as f64;
    let mut spectrum = centered_dft(x);
    for (k, c) in (-n..=n).zip(spectrum.iter_mut()) {
        *c *= Complex64::cis(-2.0 * PI * k as f64 * tau);
    }
    Ok(centered_idft(&spectrum).into_iter().map(|v| v / len).collect())
}

/// Fractional frequency shift `[F_nu x]_p = x_p e^{i2pi p nu}`.
pub fn frac_freq_shift(x: &[Complex64], nu: f64) -> Result<Vec<Complex64>> {
    let n = check_odd(x.len())? as i64;
    Ok((-n..=n)
        .zip(x)
        .map(|(p, &xp)| xp * Complex64::cis(2.0 * PI * p as f64 * nu))
        .collect())
}
