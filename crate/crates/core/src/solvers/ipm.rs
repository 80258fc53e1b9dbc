//! Log-barrier interior-point method for the restricted equality problem
//! `min sum_i |s_i|` subject to `A s = y`, with `A` a dense `M x n` complex
//! matrix and `n` a few thousand at most.
//!
//! Each `|s_i| <= t_i` is a three-dimensional second-order cone with barrier
//! `-log(t^2 - |s|^2)`, whose inverse Hessian is `x x^T - (d/2) J`. Newton
//! steps therefore reduce to one `2M x 2M` real normal-equation solve.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::TraceRow;
use crate::error::{Error, Result};

const MAX_TAU: f64 = 1e14;
const CENTERING_TOL: f64 = 1e-7;
const MAX_CENTERING_STEPS: usize = 60;
const BARRIER_GROWTH: f64 = 20.0;

pub(crate) struct IpmRun {
    pub s: Vec<Complex64>,
    /// Multiplier of `A s = y` in the convention `max Re<lambda, y>`,
    /// `|A^H lambda|_i <= 1`.
    pub lambda: Vec<Complex64>,
    pub iterations: usize,
    pub primal_res: f64,
    /// Duality gap of the returned pair.
    pub gap: f64,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

/// Real `2M x 2n` form: column `2i` is `(Re a_i; Im a_i)`, column `2i+1` is
/// `(-Im a_i; Re a_i)`, so `Ahat (a, b)` stacks `Re` and `Im` of `a_i (a + ib)`.
fn realify(a: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    DMatrix::from_fn(2 * m, 2 * n, |r, c| {
        let v = a[(r % m, c / 2)];
        match (r < m, c % 2 == 0) {
            (true, true) => v.re,
            (false, true) => v.im,
            (true, false) => -v.im,
            (false, false) => v.re,
        }
    })
}

fn stack(y: &[Complex64]) -> DVector<f64> {
    let m = y.len();
    DVector::from_fn(2 * m, |r, _| if r < m { y[r].re } else { y[r - m].im })
}

/// Projects the constraints onto an orthonormal basis `Q` of the range of
/// `Ahat` when it is rank deficient; `Q` is returned to map multipliers back.
fn independent_rows(ahat: DMatrix<f64>, yhat: DVector<f64>) -> (DMatrix<f64>, DVector<f64>, Option<DMatrix<f64>>) {
    let eig = (&ahat * ahat.transpose()).symmetric_eigen();
    let top = eig.eigenvalues.max();
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * top)
        .collect();
    if keep.len() == ahat.nrows() {
        return (ahat, yhat, None);
    }
    let q = eig.eigenvectors.select_columns(&keep);
    let qt = q.transpose();
    (&qt * ahat, &qt * yhat, Some(q))
}

fn cholesky_solve(g: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = g.diagonal().max().max(f64::MIN_POSITIVE);
    if let Some(ch) = g.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    let mut reg = g;
    for i in 0..reg.nrows() {
        reg[(i, i)] += 1e-13 * scale;
    }
    reg.cholesky()
        .map(|ch| ch.solve(rhs))
        .ok_or(Error::IllConditioned(f64::INFINITY))
}

/// Barrier objective `tau sum t - sum log(t^2 - |u|^2)`; `None` outside the cones.
fn barrier(tau: f64, t: &[f64], u: &[f64]) -> Option<f64> {
    let mut f = 0.0;
    for (i, &ti) in t.iter().enumerate() {
        let d = ti * ti - u[2 * i] * u[2 * i] - u[2 * i + 1] * u[2 * i + 1];
        if !(ti > 0.0 && d > 0.0) {
            return None;
        }
        f += tau * ti - d.ln();
    }
    Some(f)
}

/// Dual value of `lambda = -nu / tau` after scaling it into `|a_i^H lambda| <= 1`;
/// returns the value and the scale.
fn dual_objective(ahat_t: &DMatrix<f64>, yhat: &DVector<f64>, nu: &DVector<f64>, tau: f64) -> (f64, f64) {
    let lam = nu * (-1.0 / tau);
    let corr = ahat_t * &lam;
    let peak = (0..corr.len() / 2)
        .map(|i| corr[2 * i].hypot(corr[2 * i + 1]))
        .fold(0.0, f64::max);
    let scale = peak.max(1.0);
    (yhat.dot(&lam) / scale, scale)
}

pub(crate) fn basis_pursuit_ipm(
    a: &DMatrix<Complex64>,
    y: &[Complex64],
    rel_gap: f64,
    max_newton: usize,
    record_trace: bool,
    first_iteration: usize,
) -> Result<IpmRun> {
    let n = a.ncols();
    let (ahat, yhat, basis) = independent_rows(realify(a), stack(y));
    let m2 = ahat.nrows();
    let ahat_t = ahat.transpose();

    // least-norm start, pushed into the cone interiors
    let g0 = &ahat * &ahat_t;
    let w0 = cholesky_solve(g0, &yhat)?;
    let mut u: Vec<f64> = (&ahat_t * w0).iter().copied().collect();
    let mags: Vec<f64> = (0..n).map(|i| u[2 * i].hypot(u[2 * i + 1])).collect();
    let lift = mags.iter().copied().fold(0.0, f64::max).max(1e-300);
    let mut t: Vec<f64> = mags.iter().map(|&s| s + lift).collect();
    let l1: f64 = mags.iter().sum();
    let mut tau = (2 * n) as f64 / l1.max(1e-300);

    let mut iterations = 0;
    let mut trace = Vec::new();
    // multiplier of Ahat u = yhat in the barrier problem
    let mut nu = DVector::<f64>::zeros(m2);
    let mut best: Option<Snapshot> = None;
    let mut b = DMatrix::<f64>::zeros(m2, 2 * n);
    let mut kg = DVector::<f64>::zeros(2 * n);
    let ynorm = yhat.norm();

    'outer: loop {
        let mut progressed = false;
        for _ in 0..MAX_CENTERING_STEPS {
            if iterations >= max_newton {
                break 'outer;
            }
            iterations += 1;
            // B = Ahat blkdiag(S_i), S_i = u u^T + (d/2) I
            let mut d = vec![0.0; n];
            for i in 0..n {
                let (ua, ub) = (u[2 * i], u[2 * i + 1]);
                d[i] = t[i] * t[i] - ua * ua - ub * ub;
                let h = d[i] / 2.0;
                let (s00, s01, s11) = (ua * ua + h, ua * ub, ub * ub + h);
                let (c0, c1) = (ahat.column(2 * i), ahat.column(2 * i + 1));
                b.column_mut(2 * i).copy_from(&(c0 * s00 + c1 * s01));
                b.column_mut(2 * i + 1).copy_from(&(c0 * s01 + c1 * s11));
                let f = tau * t[i] - 1.0;
                kg[2 * i] = f * ua;
                kg[2 * i + 1] = f * ub;
            }
            let u_vec = DVector::from_column_slice(&u);
            let rp = &yhat - &ahat * &u_vec;
            let g = &b * &ahat_t;
            let rhs = -(&ahat * &kg) - &rp;
            let nu_plus = cholesky_solve(g, &rhs)?;
            let v = &ahat_t * &nu_plus;

            let mut dt = vec![0.0; n];
            let mut du = vec![0.0; 2 * n];
            // dx^T H dx with H = -2J/d + 4 (Jx)(Jx)^T / d^2
            let mut decrement = 0.0;
            for i in 0..n {
                let (ua, ub) = (u[2 * i], u[2 * i + 1]);
                let (va, vb) = (v[2 * i], v[2 * i + 1]);
                let uv = ua * va + ub * vb;
                let (ti, di) = (t[i], d[i]);
                let f = tau * ti - 1.0;
                dt[i] = -(tau * ti * ti - di * tau / 2.0 - ti) - ti * uv;
                du[2 * i] = -f * ua - ua * uv - di / 2.0 * va;
                du[2 * i + 1] = -f * ub - ub * uv - di / 2.0 * vb;
                let jq = dt[i] * dt[i] - du[2 * i] * du[2 * i] - du[2 * i + 1] * du[2 * i + 1];
                let xjd = ti * dt[i] - ua * du[2 * i] - ub * du[2 * i + 1];
                decrement += -2.0 * jq / di + 4.0 * xjd * xjd / (di * di);
            }
            // backtracking on the barrier value along the Newton direction
            let f0 = barrier(tau, &t, &u).expect("iterate inside the cones");
            let mut alpha = 1.0;
            let (mut t_new, mut u_new) = (t.clone(), u.clone());
            let moved = loop {
                for i in 0..n {
                    t_new[i] = t[i] + alpha * dt[i];
                }
                for j in 0..2 * n {
                    u_new[j] = u[j] + alpha * du[j];
                }
                if let Some(f) = barrier(tau, &t_new, &u_new) {
                    if f <= f0 - 0.01 * alpha * decrement {
                        break true;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-6 {
                    break false;
                }
            };
            if !moved {
                // centered as far as this precision allows
                break;
            }
            progressed = true;
            t.copy_from_slice(&t_new);
            u.copy_from_slice(&u_new);
            nu = nu_plus;
            if record_trace {
                let objective: f64 = (0..n).map(|i| u[2 * i].hypot(u[2 * i + 1])).sum();
                trace.push(TraceRow {
                    iteration: first_iteration + iterations,
                    primal_res: rp.norm(),
                    dual_res: (2 * n) as f64 / tau,
                    objective,
                });
            }
            if decrement / 2.0 <= CENTERING_TOL {
                break;
            }
        }
        let objective = l1_norm(&u);
        let rp = (&yhat - &ahat * DVector::from_column_slice(&u)).norm();
        if rp > 1e-6 * ynorm {
            // equality drift: later iterates are no longer trustworthy
            break;
        }
        let (dual, scale) = dual_objective(&ahat_t, &yhat, &nu, tau);
        let gap = (objective - dual).abs();
        if best.as_ref().is_none_or(|b| gap < b.gap) {
            best = Some(Snapshot {
                u: u.clone(),
                lambda: &nu * (-1.0 / (tau * scale)),
                gap,
            });
        }
        if !progressed {
            break;
        }
        if gap <= rel_gap * objective.max(1.0) || tau > MAX_TAU {
            break;
        }
        tau *= BARRIER_GROWTH;
    }
    let Snapshot { mut u, lambda: mut lam, mut gap } = best.unwrap_or_else(|| Snapshot {
        u: u.clone(),
        lambda: DVector::zeros(m2),
        gap: f64::INFINITY,
    });
    // remove the remaining equality drift with a least-norm correction
    let drift = &yhat - &ahat * DVector::from_column_slice(&u);
    if drift.norm() > 0.0 {
        let fix = &ahat_t * cholesky_solve(&ahat * &ahat_t, &drift)?;
        for (x, d) in u.iter_mut().zip(fix.iter()) {
            *x += d;
        }
    }
    gap = gap.max((l1_norm(&u) - yhat.dot(&lam)).abs());
    if let Some((pu, pl, pg)) = polish(&ahat, &ahat_t, &yhat, &u) {
        if pg < gap {
            u = pu;
            lam = pl;
            gap = pg;
        }
    }
    let objective = l1_norm(&u);
    let converged = gap <= rel_gap * objective.max(1.0);

    let s: Vec<Complex64> = (0..n).map(|i| Complex64::new(u[2 * i], u[2 * i + 1])).collect();
    // real multipliers (Re; Im) back in the original rows
    let m = a.nrows();
    let lam_full = basis.as_ref().map_or_else(|| lam.clone(), |q| q * &lam);
    let lambda: Vec<Complex64> = (0..m).map(|r| Complex64::new(lam_full[r], lam_full[m + r])).collect();
    let primal_res = (&yhat - &ahat * DVector::from_column_slice(&u)).norm();
    Ok(IpmRun {
        s,
        lambda,
        iterations,
        primal_res,
        gap,
        converged,
        trace,
    })
}

struct Snapshot {
    u: Vec<f64>,
    lambda: DVector<f64>,
    gap: f64,
}

fn l1_norm(u: &[f64]) -> f64 {
    u.chunks_exact(2).map(|c| c[0].hypot(c[1])).sum()
}

/// Refits on the numerical support and builds the minimum-norm dual that matches
/// its phases; returns the pair and its duality gap when both are valid.
fn polish(
    ahat: &DMatrix<f64>,
    ahat_t: &DMatrix<f64>,
    yhat: &DVector<f64>,
    u: &[f64],
) -> Option<(Vec<f64>, DVector<f64>, f64)> {
    let n = u.len() / 2;
    let mags: Vec<f64> = (0..n).map(|i| u[2 * i].hypot(u[2 * i + 1])).collect();
    let peak = mags.iter().copied().fold(0.0, f64::max);
    let support: Vec<usize> = (0..n).filter(|&i| mags[i] > 1e-5 * peak).collect();
    if support.is_empty() || 2 * support.len() > ahat.nrows() {
        return None;
    }
    let cols: Vec<usize> = support.iter().flat_map(|&i| [2 * i, 2 * i + 1]).collect();
    let sub = ahat.select_columns(&cols);
    let gram = sub.transpose() * &sub;
    let chol = gram.cholesky()?;
    let fit = chol.solve(&(sub.transpose() * yhat));
    if (&sub * &fit - yhat).norm() > 1e-9 * yhat.norm() {
        return None;
    }
    let mut pu = vec![0.0; u.len()];
    let mut phases = DVector::zeros(cols.len());
    for (k, &i) in support.iter().enumerate() {
        let (re, im) = (fit[2 * k], fit[2 * k + 1]);
        let r = re.hypot(im);
        if r == 0.0 {
            return None;
        }
        pu[2 * i] = re;
        pu[2 * i + 1] = im;
        phases[2 * k] = re / r;
        phases[2 * k + 1] = im / r;
    }
    let lam = &sub * chol.solve(&phases);
    let corr = ahat_t * &lam;
    let scale = (0..n).map(|i| corr[2 * i].hypot(corr[2 * i + 1])).fold(1.0, f64::max);
    let lam = lam / scale;
    let gap = (l1_norm(&pu) - yhat.dot(&lam)).abs();
    Some((pu, lam, gap))
}
