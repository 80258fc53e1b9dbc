//! Dual certificates for grid-free recovery.
//!
//! A certificate is a trigonometric polynomial `Q(r) = <c, f~(r)>`, where
//! `f~(r)` is the atom with all three indices running over `-N..=N`. It
//! interpolates `u_k = e^{i2pi N beta_k} sign(b_k)` at the target locations
//! with vanishing gradient there, and must satisfy `|Q| < 1` everywhere else.
//!
//! The deterministic interpolant uses shifts of the kernel
//! `Gbar(r) = F(beta) F(tau) F(nu)` and its first partials. The random
//! version replaces each kernel shift, whose coefficient vector is
//! `g_n(r_k)`, by `Abar^H Abar g_n(r_k)`. `Abar` is the measurement matrix
//! scaled so that `E[Abar^H Abar] = I`. The coefficients then lie in the
//! range of `A^H`.
//!
//! Inner products are linear in the first argument. With that convention
//! `g_n(r_k)` has entries
//! `g_v g_k g_p (-i2pi v)^{n1} (-i2pi k)^{n2} (-i2pi p)^{n3} e^{+i2pi(v beta_k + k tau_k + p nu_k)}`,
//! so that `<g_n(r_k), f~(r)> = Gbar^{n}(r - r_k)`.

mod fejer;
mod poly;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::wrap_dist;
use crate::linalg::{inner, ZERO};
use crate::radar::{atom, ArraySpec, Location, MimoOperator, ProbingSignalSet};

pub use fejer::{fejer_coeffs, fejer_eval, gbar, FejerKernel};
pub use poly::TrigPoly3;

/// Largest verification grid (in points).
pub const MAX_VERIFY_POINTS: usize = 1 << 26;

/// Condition number above which the interpolation system is rejected.
pub const MAX_CONDITION: f64 = 1e12;

const ORDERS: [[u8; 3]; 4] = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateMode {
    Deterministic,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateCoefficients {
    pub alpha: Vec<Complex64>,
    pub alpha1: Vec<Complex64>,
    pub alpha2: Vec<Complex64>,
    pub alpha3: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// `max_k |Q(r_k) - u_k|`
    pub interp_residual: f64,
    /// `max_k max_axis |dQ(r_k)|`
    pub stationarity_residual: f64,
    /// `max |Q|` over verification points outside the neighborhoods.
    pub offgrid_max: f64,
    /// `max |Q|` over the punctured neighborhoods.
    pub neighborhood_max: f64,
    pub neighborhood_ok: bool,
    pub grid_density: [usize; 3],
    pub exclusion_radius: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct Certificate {
    pub mode: CertificateMode,
    pub locations: Vec<Location>,
    /// Interpolated values `u_k`.
    pub values: Vec<Complex64>,
    pub coefficients: CertificateCoefficients,
    pub polynomial: TrigPoly3,
    /// Condition number of the (equilibrated) interpolation system.
    pub condition: f64,
}

impl Certificate {
    /// [`verify_certificate`] on this certificate, with the build condition
    /// number attached to the report.
    pub fn verify(&self, densities: [usize; 3], exclusion_radius: Option<[f64; 3]>) -> Result<CertificateReport> {
        let mut report = verify_certificate(
            &self.polynomial,
            &self.locations,
            &self.values,
            densities,
            exclusion_radius,
        )?;
        report.condition = Some(self.condition);
        Ok(report)
    }
}

fn check_kernel(spec: ArraySpec, kernel: &FejerKernel) -> Result<()> {
    if kernel.degree() != spec.half_len() {
        return Err(Error::InvalidOption(format!(
            "kernel degree {} differs from N = {}",
            kernel.degree(),
            spec.half_len()
        )));
    }
    Ok(())
}

fn check_square_array(spec: ArraySpec) -> Result<()> {
    if spec.virtual_len() != spec.signal_len() {
        return Err(Error::Unsupported(format!(
            "certificate vectors need N_T N_R = L, got {} vs {}",
            spec.virtual_len(),
            spec.signal_len()
        )));
    }
    Ok(())
}

/// Coefficients of `Gbar^{orders}(. - loc)` on `(-N..=N)^3`.
fn kernel_shift(kernel: &FejerKernel, loc: Location, orders: [u8; 3]) -> Vec<Complex64> {
    let n = kernel.degree() as i64;
    let axis = |x: f64, order: u8| -> Vec<Complex64> {
        (-n..=n)
            .map(|v| fejer::deriv_factor(-v, order) * kernel.coeff(v) * Complex64::cis(2.0 * PI * v as f64 * x))
            .collect()
    };
    let (a, b, c) = (
        axis(loc.beta(), orders[0]),
        axis(loc.tau(), orders[1]),
        axis(loc.nu(), orders[2]),
    );
    let mut out = Vec::with_capacity(a.len() * b.len() * c.len());
    for x in &a {
        for y in &b {
            let xy = x * y;
            out.extend(c.iter().map(|z| xy * z));
        }
    }
    out
}

/// `g_n(loc)` in the flattening `(v + N, k + N, p + N)`.
pub fn g_vec(spec: ArraySpec, kernel: &FejerKernel, loc: Location, orders: [u8; 3]) -> Result<Vec<Complex64>> {
    check_square_array(spec)?;
    check_kernel(spec, kernel)?;
    Ok(kernel_shift(kernel, loc, orders))
}

/// `f~(r) = e^{-i2pi N beta} f(r)`, indices `-N..=N` on every axis.
pub fn f_tilde(spec: ArraySpec, loc: Location) -> Result<Vec<Complex64>> {
    check_square_array(spec)?;
    let phase = Complex64::cis(-2.0 * PI * spec.half_len() as f64 * loc.beta());
    Ok(atom(spec, loc).into_iter().map(|v| v * phase).collect())
}

/// `Abar^H Abar x`
fn normal_apply(op: &MimoOperator, x: &[Complex64]) -> Result<Vec<Complex64>> {
    let s2 = op.isotropy_scale().powi(2);
    let y = op.apply(x)?;
    Ok(op.adjoint(&y)?.into_iter().map(|v| v * s2).collect())
}

/// `G_n(r, r_k) = <Abar g_n(r_k), Abar f~(r)>`.
pub fn g_random(
    signals: &ProbingSignalSet,
    kernel: &FejerKernel,
    r: Location,
    r_k: Location,
    orders: [u8; 3],
) -> Result<Complex64> {
    let spec = signals.spec();
    let g = g_vec(spec, kernel, r_k, orders)?;
    let op = MimoOperator::new(signals);
    let scale = op.isotropy_scale();
    let ag = op.apply(&g)?;
    let phase = Complex64::cis(-2.0 * PI * spec.half_len() as f64 * r.beta());
    let af: Vec<Complex64> = op.apply_atom(r).into_iter().map(|v| v * phase).collect();
    Ok(inner(ag.data(), &af) * (scale * scale))
}

/// Solves the `4S x 4S` interpolation system for `Q(r_k) = u_k`, `grad Q(r_k) = 0`.
///
/// `signs` are the unit-modulus `sign(b_k)`; the interpolated values are
/// `u_k = e^{i2pi N beta_k} sign(b_k)`.
pub fn build_certificate(
    mode: CertificateMode,
    spec: ArraySpec,
    kernel: &FejerKernel,
    signals: Option<&ProbingSignalSet>,
    locs: &[Location],
    signs: &[Complex64],
) -> Result<Certificate> {
    check_kernel(spec, kernel)?;
    if locs.is_empty() || locs.len() != signs.len() {
        return Err(Error::InvalidOption(format!(
            "need matching non-empty locations and signs, got {} and {}",
            locs.len(),
            signs.len()
        )));
    }
    if let Some(bad) = signs.iter().find(|s| (s.norm() - 1.0).abs() > 1e-9) {
        return Err(Error::InvalidOption(format!("sign {bad} is not unit modulus")));
    }
    let half = spec.half_len();
    let op = match mode {
        CertificateMode::Deterministic => None,
        CertificateMode::Random => {
            check_square_array(spec)?;
            let signals = signals.ok_or_else(|| Error::InvalidOption("random mode needs probing signals".into()))?;
            if signals.spec() != spec {
                return Err(Error::InvalidOption("signal set does not match the array spec".into()));
            }
            Some(MimoOperator::new(signals))
        }
    };

    let s = locs.len();
    let mut basis = Vec::with_capacity(4 * s);
    for &loc in locs {
        for orders in ORDERS {
            let g = kernel_shift(kernel, loc, orders);
            let c = match &op {
                None => g,
                Some(op) => normal_apply(op, &g)?,
            };
            basis.push(TrigPoly3::new(half, c)?);
        }
    }

    let scale = fejer_eval(kernel, 0.0, 2).abs().sqrt();
    let weight = |i: usize| if i == 0 { 1.0 } else { 1.0 / scale };
    let dim = 4 * s;
    let mut system = DMatrix::from_element(dim, dim, ZERO);
    for (j, &rj) in locs.iter().enumerate() {
        for (col, p) in basis.iter().enumerate() {
            let (q, grad) = p.eval_with_grad(rj);
            let cw = weight(col % 4);
            system[(4 * j, col)] = q * cw;
            for ax in 0..3 {
                system[(4 * j + ax + 1, col)] = grad[ax] * (cw / scale);
            }
        }
    }
    let values: Vec<Complex64> = locs
        .iter()
        .zip(signs)
        .map(|(l, sg)| Complex64::cis(2.0 * PI * half as f64 * l.beta()) * sg)
        .collect();
    let mut rhs = DVector::from_element(dim, ZERO);
    for (j, u) in values.iter().enumerate() {
        rhs[4 * j] = *u;
    }

    let sv = system.clone().singular_values();
    let smin = sv.min();
    let condition = if smin > 0.0 { sv.max() / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned(condition));
    }
    let x = system
        .lu()
        .solve(&rhs)
        .ok_or(Error::IllConditioned(f64::INFINITY))?;

    let mut polynomial = TrigPoly3::constant(half, ZERO);
    for (col, p) in basis.iter().enumerate() {
        polynomial.add_scaled(p, x[col] * weight(col % 4));
    }
    let pick = |m: usize| (0..s).map(|k| x[4 * k + m] * weight(m)).collect::<Vec<_>>();
    Ok(Certificate {
        mode,
        locations: locs.to_vec(),
        values,
        coefficients: CertificateCoefficients {
            alpha: pick(0),
            alpha1: pick(1),
            alpha2: pick(2),
            alpha3: pick(3),
        },
        polynomial,
        condition,
    })
}

/// Samples `|Q|` on a `M1 x M2 x M3` grid.
///
/// Grid points within `exclusion_radius` (per axis, wrap-around; default one
/// grid cell) of some `r_k` form its neighborhood. There, and at the 26
/// points `r_k + radius * o`, `o` in `{-1,0,1}^3 \ {0}`, `|Q|` must be
/// strictly below 1, while `|Q(r_k)| = 1`. Grid points coinciding with some
/// `r_k` are skipped.
pub fn verify_certificate(
    poly: &TrigPoly3,
    locs: &[Location],
    values: &[Complex64],
    densities: [usize; 3],
    exclusion_radius: Option<[f64; 3]>,
) -> Result<CertificateReport> {
    if locs.len() != values.len() {
        return Err(Error::InvalidOption("locations and values differ in length".into()));
    }
    let points = densities.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    match points {
        Some(p) if p > 0 && p <= MAX_VERIFY_POINTS => {}
        _ => {
            return Err(Error::InvalidOption(format!(
                "verification grid {densities:?} is empty or exceeds {MAX_VERIFY_POINTS} points"
            )))
        }
    }
    let radius = exclusion_radius.unwrap_or(densities.map(|d| 1.0 / d as f64));

    let mut interp_residual: f64 = 0.0;
    let mut stationarity_residual: f64 = 0.0;
    let mut center_ok = true;
    for (&loc, &u) in locs.iter().zip(values) {
        let (q, grad) = poly.eval_with_grad(loc);
        interp_residual = interp_residual.max((q - u).norm());
        center_ok &= (q.norm() - 1.0).abs() <= 1e-6;
        for g in grad {
            stationarity_residual = stationarity_residual.max(g.norm());
        }
    }

    let grid = poly.eval_grid(densities);
    // near[k][axis][n]: 0 = outside, 1 = inside the radius, 2 = on r_k
    let near: Vec<[Vec<u8>; 3]> = locs
        .iter()
        .map(|loc| {
            let c = loc.coords();
            std::array::from_fn(|ax| {
                (0..densities[ax])
                    .map(|n| {
                        let d = wrap_dist(n as f64 / densities[ax] as f64, c[ax]);
                        if d <= 1e-9 {
                            2
                        } else if d <= radius[ax] + 1e-12 {
                            1
                        } else {
                            0
                        }
                    })
                    .collect()
            })
        })
        .collect();
    let [_, m2, m3] = densities;
    let (offgrid_max, grid_nbhd_max) = grid
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let idx = [i / (m2 * m3), (i / m3) % m2, i % m3];
            let mut inside = false;
            for k in &near {
                let flags = [k[0][idx[0]], k[1][idx[1]], k[2][idx[2]]];
                if flags.iter().all(|&f| f == 2) {
                    return (0.0, 0.0);
                }
                inside |= flags.iter().all(|&f| f > 0);
            }
            if inside {
                (0.0, q.norm())
            } else {
                (q.norm(), 0.0)
            }
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));

    let mut neighborhood_max = grid_nbhd_max;
    for loc in locs {
        let c = loc.coords();
        for a in -1..=1 {
            for b in -1..=1 {
                for d in -1..=1 {
                    if (a, b, d) == (0, 0, 0) {
                        continue;
                    }
                    let r = Location::new(
                        c[0] + a as f64 * radius[0],
                        c[1] + b as f64 * radius[1],
                        c[2] + d as f64 * radius[2],
                    );
                    neighborhood_max = neighborhood_max.max(poly.eval(r).norm());
                }
            }
        }
    }
    let neighborhood_ok = center_ok && neighborhood_max < 1.0;
    Ok(CertificateReport {
        interp_residual,
        stationarity_residual,
        offgrid_max,
        neighborhood_max,
        neighborhood_ok,
        grid_density: densities,
        exclusion_radius: radius,
        condition: None,
        passed: neighborhood_ok && offgrid_max < 1.0 && interp_residual <= 1e-6,
    })
}
