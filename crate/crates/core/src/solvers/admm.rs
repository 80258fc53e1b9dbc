//! Over-relaxed ADMM for `min ||s||_1  s.t.  ||R s - y|| <= eps` with an
//! exact projection onto the constraint set.

use std::cell::Cell;

use nalgebra::{DMatrix, DVectorView, DVectorViewMut};
use num_complex::Complex64;

use super::{SolverOptions, TraceRow};
use crate::linalg::{inner, norm, norm_l1, soft_threshold, ZERO};

/// Factored `R R^H`.
pub(crate) enum Gram {
    Diagonal(Vec<f64>),
    Eigen { vectors: DMatrix<Complex64>, values: Vec<f64> },
}

impl Gram {
    pub(crate) fn eigen(gram: DMatrix<Complex64>) -> Self {
        let eig = gram.symmetric_eigen();
        Gram::Eigen {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            Gram::Diagonal(d) => d,
            Gram::Eigen { values, .. } => values,
        }
    }

    fn to_coords(&self, r: &[Complex64]) -> Vec<Complex64> {
        match self {
            Gram::Diagonal(_) => r.to_vec(),
            Gram::Eigen { vectors, .. } => {
                let mut out = vec![ZERO; r.len()];
                DVectorViewMut::from_slice(&mut out, r.len()).gemv_ad(
                    Complex64::new(1.0, 0.0),
                    vectors,
                    &DVectorView::from_slice(r, r.len()),
                    ZERO,
                );
                out
            }
        }
    }

    fn from_coords(&self, c: &[Complex64]) -> Vec<Complex64> {
        match self {
            Gram::Diagonal(_) => c.to_vec(),
            Gram::Eigen { vectors, .. } => {
                let mut out = vec![ZERO; c.len()];
                DVectorViewMut::from_slice(&mut out, c.len()).gemv(
                    Complex64::new(1.0, 0.0),
                    vectors,
                    &DVectorView::from_slice(c, c.len()),
                    ZERO,
                );
                out
            }
        }
    }

    fn floor(&self) -> f64 {
        self.values().iter().copied().fold(0.0, f64::max) * 1e-12
    }

    /// `(R R^H)^+ r`
    pub(crate) fn pinv_apply(&self, r: &[Complex64]) -> Vec<Complex64> {
        let floor = self.floor();
        let c: Vec<Complex64> = self
            .to_coords(r)
            .iter()
            .zip(self.values())
            .map(|(c, &d)| if d > floor { c / d } else { ZERO })
            .collect();
        self.from_coords(&c)
    }
}

pub(crate) trait LinearMap {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &[Complex64], out: &mut [Complex64]);
    fn adjoint(&self, y: &[Complex64], out: &mut [Complex64]);
    fn gram(&self) -> &Gram;
}

/// Dense column subset `R_W` with its eigen-factored Gram matrix.
pub(crate) struct DenseMap {
    mat: DMatrix<Complex64>,
    gram: Gram,
}

impl DenseMap {
    pub(crate) fn new(mat: DMatrix<Complex64>) -> Self {
        let gram = Gram::eigen(&mat * mat.adjoint());
        Self { mat, gram }
    }

    pub(crate) fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }
}

impl LinearMap for DenseMap {
    fn rows(&self) -> usize {
        self.mat.nrows()
    }

    fn cols(&self) -> usize {
        self.mat.ncols()
    }

    fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        DVectorViewMut::from_slice(out, self.mat.nrows()).gemv(
            Complex64::new(1.0, 0.0),
            &self.mat,
            &DVectorView::from_slice(x, self.mat.ncols()),
            ZERO,
        );
    }

    fn adjoint(&self, y: &[Complex64], out: &mut [Complex64]) {
        DVectorViewMut::from_slice(out, self.mat.ncols()).gemv_ad(
            Complex64::new(1.0, 0.0),
            &self.mat,
            &DVectorView::from_slice(y, self.mat.nrows()),
            ZERO,
        );
    }

    fn gram(&self) -> &Gram {
        &self.gram
    }
}

/// Projection onto `{s : ||R s - y|| <= eps}` (`eps = 0` gives the affine set).
pub(crate) struct Projector<'a, M: LinearMap> {
    map: &'a M,
    y: &'a [Complex64],
    eps: f64,
    infeasible: Cell<bool>,
}

impl<'a, M: LinearMap> Projector<'a, M> {
    pub(crate) fn new(map: &'a M, y: &'a [Complex64], eps: f64) -> Self {
        Self {
            map,
            y,
            eps,
            infeasible: Cell::new(false),
        }
    }

    pub(crate) fn infeasible(&self) -> bool {
        self.infeasible.get()
    }

    pub(crate) fn project(&self, x: &[Complex64], out: &mut [Complex64]) {
        let mut r = vec![ZERO; self.map.rows()];
        self.map.apply(x, &mut r);
        for (ri, yi) in r.iter_mut().zip(self.y) {
            *ri -= yi;
        }
        let rnorm = norm(&r);
        if rnorm <= self.eps {
            out.copy_from_slice(x);
            return;
        }
        let gram = self.map.gram();
        let d = gram.values();
        let floor = gram.floor();
        let c = gram.to_coords(&r);
        let leftover: f64 = c.iter().zip(d).filter(|(_, &di)| di <= floor).map(|(ci, _)| ci.norm_sqr()).sum();
        let eps2 = self.eps * self.eps;
        let w: Vec<Complex64> = if self.eps == 0.0 || leftover >= eps2 {
            if leftover > eps2 * (1.0 + 1e-12) + 1e-30 {
                self.infeasible.set(true);
            }
            c.iter()
                .zip(d)
                .map(|(ci, &di)| if di > floor { ci / di } else { ZERO })
                .collect()
        } else {
            let lam = secular_root(&c, d, floor, leftover, eps2, rnorm / self.eps);
            c.iter()
                .zip(d)
                .map(|(ci, &di)| if di > floor { ci * (lam / (1.0 + lam * di)) } else { ZERO })
                .collect()
        };
        let back = gram.from_coords(&w);
        self.map.adjoint(&back, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi - *o;
        }
    }
}

/// Root of `sum |c_i|^2 / (1 + lam d_i)^2 + leftover = eps2`. Newton from a
/// point left of the root converges monotonically on this convex, decreasing
/// function.
fn secular_root(c: &[Complex64], d: &[f64], floor: f64, leftover: f64, eps2: f64, ratio: f64) -> f64 {
    let dmax = d.iter().copied().fold(0.0, f64::max);
    let mut lam = ((ratio - 1.0) / dmax).max(0.0);
    for _ in 0..200 {
        let mut phi = leftover - eps2;
        let mut dphi = 0.0;
        for (ci, &di) in c.iter().zip(d) {
            if di > floor {
                let q = 1.0 / (1.0 + lam * di);
                let m = ci.norm_sqr();
                phi += m * q * q;
                dphi -= 2.0 * m * di * q * q * q;
            }
        }
        if phi <= 1e-14 * eps2 || dphi == 0.0 {
            break;
        }
        let step = phi / dphi;
        lam -= step;
        if (-step) <= 1e-15 * lam {
            break;
        }
    }
    lam
}

pub(crate) struct AdmmRun {
    pub z: Vec<Complex64>,
    pub u: Vec<Complex64>,
    pub rho: f64,
    pub iterations: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub feasibility: f64,
    pub converged: bool,
    pub infeasible: bool,
    pub trace: Vec<TraceRow>,
}

pub(crate) struct Warm {
    pub z: Vec<Complex64>,
    pub u: Vec<Complex64>,
    pub rho: f64,
}

/// `||R z - y||`
pub(crate) fn residual_norm<M: LinearMap>(map: &M, z: &[Complex64], y: &[Complex64]) -> f64 {
    let mut r = vec![ZERO; map.rows()];
    map.apply(z, &mut r);
    r.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn run_admm<M: LinearMap>(
    map: &M,
    y: &[Complex64],
    eps: f64,
    opts: &SolverOptions,
    warm: Option<Warm>,
    first_iteration: usize,
) -> AdmmRun {
    let n = map.cols();
    let proj = Projector::new(map, y, eps);
    let (mut z, mut u, mut rho) = match warm {
        Some(w) => (w.z, w.u, w.rho),
        None => (vec![ZERO; n], vec![ZERO; n], opts.penalty),
    };
    let alpha = opts.over_relaxation;
    let sqrt_n = (n as f64).sqrt();
    let feas_tol = eps + opts.tol_abs * (1.0 + norm(y));
    let mut x = vec![ZERO; n];
    let mut s = vec![ZERO; n];
    let mut trace = Vec::new();
    let (mut primal_res, mut dual_res, mut feasibility) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        for ((xi, zi), ui) in x.iter_mut().zip(&z).zip(&u) {
            *xi = zi - ui;
        }
        proj.project(&x, &mut s);
        let thresh = 1.0 / rho;
        let (mut pr2, mut dz2, mut s2, mut z2, mut u2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let sh = s[i] * alpha + z[i] * (1.0 - alpha);
            let znew = soft_threshold(sh + u[i], thresh);
            u[i] += sh - znew;
            pr2 += (s[i] - znew).norm_sqr();
            dz2 += (znew - z[i]).norm_sqr();
            s2 += s[i].norm_sqr();
            z2 += znew.norm_sqr();
            u2 += u[i].norm_sqr();
            z[i] = znew;
        }
        primal_res = pr2.sqrt();
        dual_res = rho * dz2.sqrt();
        let eps_pri = sqrt_n * opts.tol_abs + opts.tol_rel * s2.sqrt().max(z2.sqrt());
        let eps_dual = sqrt_n * opts.tol_abs + opts.tol_rel * rho * u2.sqrt();
        if opts.record_trace {
            trace.push(TraceRow {
                iteration: first_iteration + iterations,
                primal_res,
                dual_res,
                objective: norm_l1(&z),
            });
        }
        if primal_res <= eps_pri && dual_res <= eps_dual {
            feasibility = residual_norm(map, &z, y);
            if feasibility <= feas_tol {
                converged = true;
                break;
            }
        }
        if iterations % 10 == 0 {
            if primal_res > 10.0 * dual_res {
                rho *= 2.0;
                u.iter_mut().for_each(|v| *v *= 0.5);
            } else if dual_res > 10.0 * primal_res {
                rho *= 0.5;
                u.iter_mut().for_each(|v| *v *= 2.0);
            }
        }
    }
    if !converged {
        feasibility = residual_norm(map, &z, y);
    }
    AdmmRun {
        z,
        u,
        rho,
        iterations,
        primal_res,
        dual_res,
        feasibility,
        converged,
        infeasible: proj.infeasible(),
        trace,
    }
}

/// Least-squares multiplier `lambda` with `R^H lambda ~ rho u`.
pub(crate) fn dual_vector<M: LinearMap>(map: &M, u: &[Complex64], rho: f64) -> Vec<Complex64> {
    let scaled: Vec<Complex64> = u.iter().map(|v| v * rho).collect();
    let mut r = vec![ZERO; map.rows()];
    map.apply(&scaled, &mut r);
    map.gram().pinv_apply(&r)
}

/// Dual objective `Re<lambda, y> - eps ||lambda||` after scaling `lambda` into
/// `||R^H lambda||_inf <= 1` given `max_corr = ||R^H lambda||_inf`.
pub(crate) fn dual_objective(lambda: &[Complex64], y: &[Complex64], eps: f64, max_corr: f64) -> f64 {
    let scale = 1.0 / max_corr.max(1.0);
    scale * (inner(y, lambda).re - eps * norm(lambda))
}
