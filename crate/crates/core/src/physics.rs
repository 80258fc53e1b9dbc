//! Physical target parameters to normalized `(beta, tau, nu)` and back.
//!
//! The narrowband model is used as is: `beta = -sin(theta)/2`,
//! `tau = (2d/c)/T` and `nu = (2 v f_c / c)/B`, each reduced modulo 1.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radar::{ArraySpec, Location, Target};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

fn default_wave_speed() -> f64 {
    SPEED_OF_LIGHT
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub obs_time_s: f64,
    #[serde(default = "default_wave_speed")]
    pub wave_speed: f64,
}

impl RadarConfig {
    pub fn new(carrier_hz: f64, bandwidth_hz: f64, obs_time_s: f64) -> Result<Self> {
        Self {
            carrier_hz,
            bandwidth_hz,
            obs_time_s,
            wave_speed: SPEED_OF_LIGHT,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        for (name, v) in [
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("obs_time_s", self.obs_time_s),
            ("wave_speed", self.wave_speed),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(self)
    }

    /// `B T` must equal the odd sample count `L` of `spec`.
    pub fn check_compatible(&self, spec: ArraySpec) -> Result<()> {
        let bt = self.bandwidth_hz * self.obs_time_s;
        if (bt - spec.signal_len() as f64).abs() > 1e-9 * bt.max(1.0) {
            return Err(Error::config(
                "radar",
                format!("B*T = {bt} does not match signal_len = {}", spec.signal_len()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalTarget {
    pub angle_rad: f64,
    pub range_m: f64,
    pub velocity_mps: f64,
    pub gain: Complex64,
}

/// Transmit and receive antenna spacings `c/(2 f_c)` and `N_T c/(2 f_c)`.
pub fn antenna_spacings(config: &RadarConfig, spec: ArraySpec) -> (f64, f64) {
    let d_tx = config.wave_speed / (2.0 * config.carrier_hz);
    (d_tx, spec.n_tx() as f64 * d_tx)
}

/// Normalized target; the gain absorbs the phase `e^{-i2pi nubar taubar}`.
pub fn to_normalized(t: &PhysicalTarget, config: &RadarConfig) -> Result<Target> {
    let c = config.wave_speed;
    let delay = 2.0 * t.range_m / c;
    let doppler = 2.0 * t.velocity_mps * config.carrier_hz / c;
    if t.range_m < 0.0 {
        return Err(Error::BoxConstraint {
            coord: "range_m",
            value: t.range_m,
            limit: 0.0,
        });
    }
    if delay.abs() > config.obs_time_s / 2.0 {
        return Err(Error::BoxConstraint {
            coord: "delay_s",
            value: delay,
            limit: config.obs_time_s / 2.0,
        });
    }
    if doppler.abs() > config.bandwidth_hz / 2.0 {
        return Err(Error::BoxConstraint {
            coord: "doppler_hz",
            value: doppler,
            limit: config.bandwidth_hz / 2.0,
        });
    }
    if !(t.angle_rad.abs() < PI / 2.0) {
        return Err(Error::BoxConstraint {
            coord: "angle_rad",
            value: t.angle_rad,
            limit: PI / 2.0,
        });
    }
    let loc = Location::new(
        -t.angle_rad.sin() / 2.0,
        delay / config.obs_time_s,
        doppler / config.bandwidth_hz,
    );
    let gain = t.gain * Complex64::cis(-2.0 * PI * doppler * delay);
    Ok(Target::new(gain, loc))
}

/// Maps `[1/2, 1)` to `[-1/2, 0)`.
pub fn unwrap_principal(x: f64) -> f64 {
    if x >= 0.5 {
        x - 1.0
    } else {
        x
    }
}

/// `(theta, d, v)` for a normalized location; coordinates are read in the
/// principal window, so locations with `tau` in `[1/2, 1)` give negative ranges.
pub fn from_normalized(loc: Location, config: &RadarConfig) -> Result<(f64, f64, f64)> {
    let beta = unwrap_principal(loc.beta());
    let sin_theta = -2.0 * beta;
    if sin_theta.abs() > 1.0 {
        return Err(Error::NoRealAngle(beta));
    }
    let c = config.wave_speed;
    let theta = sin_theta.asin();
    let range = unwrap_principal(loc.tau()) * config.obs_time_s * c / 2.0;
    let velocity = unwrap_principal(loc.nu()) * config.bandwidth_hz * c / (2.0 * config.carrier_hz);
    Ok((theta, range, velocity))
}
