//! Grid-based l1 recovery: `min ||s||_1` subject to `R s = y` or
//! `||y - R s||^2 <= delta`, solved by ADMM using only products with `R` and
//! `R^H`, plus least-squares debiasing and peak extraction.
//!
//! When the grid is much larger than the measurement, the solver works on a
//! growing set of grid columns and certifies the restricted solution with a
//! full-grid dual check; otherwise it runs matrix-free on the whole grid.

mod admm;
mod extract;
mod ipm;

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridDictionary, GridSpec, SparseSolution};
use crate::linalg::{norm, norm_l1, ZERO};
use crate::radar::{MeasurementVector, ProbingSignalSet};
use admm::{dual_objective, dual_vector, run_admm, DenseMap, Gram, LinearMap, Warm};

pub use extract::{debias_lsq, extract_targets, DebiasResult, DEFAULT_CLUSTER_RADIUS, DEFAULT_THRESHOLD_FRAC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Working set when the grid is at least four times the measurement
    /// length and the measurement has at most 500 entries.
    #[default]
    Auto,
    WorkingSet,
    FullGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// Initial ADMM penalty; adapted by residual balancing.
    pub penalty: f64,
    pub over_relaxation: f64,
    /// Relative duality gap required for `converged`.
    pub gap_tol: f64,
    pub strategy: Strategy,
    /// Cap on working-set refinements.
    pub max_outer: usize,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol_abs: 1e-6,
            tol_rel: 1e-6,
            penalty: 1.0,
            over_relaxation: 1.6,
            gap_tol: 1e-4,
            strategy: Strategy::Auto,
            max_outer: 30,
            record_trace: false,
        }
    }
}

impl SolverOptions {
    pub fn validated(self) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidOption(m));
        if self.max_iter == 0 || self.max_outer == 0 {
            return bad("max_iter and max_outer must be positive".into());
        }
        for (name, v) in [("tol_abs", self.tol_abs), ("tol_rel", self.tol_rel), ("gap_tol", self.gap_tol)] {
            if !(v > 0.0 && v <= 1e-2) {
                return bad(format!("{name} must lie in (0, 1e-2], got {v}"));
            }
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return bad(format!("penalty must be positive, got {}", self.penalty));
        }
        if !(1.0..=1.9).contains(&self.over_relaxation) {
            return bad(format!("over_relaxation must lie in [1, 1.9], got {}", self.over_relaxation));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub solution: SparseSolution,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    /// `||s||_1` of the returned solution.
    pub objective: f64,
    /// Lower bound on the optimal value from a feasible dual point.
    pub dual_objective: f64,
    pub duality_gap: f64,
    /// `||R s - y||`
    pub constraint_residual: f64,
    /// Ball radius `sqrt(delta)`; zero for the equality problem.
    pub radius: f64,
    pub penalty: f64,
    /// Final working-set size, absent for full-grid runs.
    pub working_set: Option<usize>,
    pub outer_iterations: usize,
    /// The constraint set could not be reached by projection (radius below
    /// the distance of `y` to the range of `R`).
    pub infeasible: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRow>,
}

impl RecoveryResult {
    pub fn relative_gap(&self) -> f64 {
        self.duality_gap / self.objective.max(1.0)
    }

    /// Convergence trace as CSV: `iteration,primal_res,dual_res,objective`.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "primal_res", "dual_res", "objective"])
            .map_err(csv_err)?;
        for row in &self.trace {
            w.serialize((row.iteration, row.primal_res, row.dual_res, row.objective))
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// `delta = ||n||^2` for a known noise realization.
pub fn oracle_delta(noise: &[Complex64]) -> f64 {
    crate::linalg::norm_sqr(noise)
}

/// `delta = E||n||^2 = ||A x||^2 / SNR` for a noiseless energy and an SNR in dB.
pub fn expected_delta(clean_energy: f64, snr_db: f64) -> f64 {
    clean_energy / 10f64.powf(snr_db / 10.0)
}

pub fn solve_l1_eq(
    signals: &ProbingSignalSet,
    grid: &GridSpec,
    y: &MeasurementVector,
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    solve_l1_eq_with(&GridDictionary::new(signals, *grid)?, y, opts)
}

pub fn solve_l1_err(
    signals: &ProbingSignalSet,
    grid: &GridSpec,
    y: &MeasurementVector,
    delta: f64,
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    solve_l1_err_with(&GridDictionary::new(signals, *grid)?, y, delta, opts)
}

/// [`solve_l1_eq`] on a prebuilt dictionary.
pub fn solve_l1_eq_with(dict: &GridDictionary, y: &MeasurementVector, opts: &SolverOptions) -> Result<RecoveryResult> {
    solve(dict, y, 0.0, opts)
}

/// [`solve_l1_err`] on a prebuilt dictionary.
pub fn solve_l1_err_with(
    dict: &GridDictionary,
    y: &MeasurementVector,
    delta: f64,
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidOption(format!("delta must be finite and >= 0, got {delta}")));
    }
    solve(dict, y, delta.sqrt(), opts)
}

fn zero_result(grid: GridSpec, ynorm: f64, eps: f64, penalty: f64) -> RecoveryResult {
    RecoveryResult {
        solution: SparseSolution::new(grid),
        iterations: 0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        converged: true,
        objective: 0.0,
        dual_objective: 0.0,
        duality_gap: 0.0,
        constraint_residual: ynorm,
        radius: eps,
        penalty,
        working_set: None,
        outer_iterations: 0,
        infeasible: false,
        trace: Vec::new(),
    }
}

fn solve(dict: &GridDictionary, y: &MeasurementVector, eps: f64, opts: &SolverOptions) -> Result<RecoveryResult> {
    let opts = opts.validated()?;
    if y.spec() != dict.operator().spec() {
        return Err(Error::DimensionMismatch {
            what: "measurement length",
            expected: dict.rows(),
            got: y.data().len(),
        });
    }
    let ynorm = y.norm();
    if ynorm <= eps {
        return Ok(zero_result(*dict.grid(), ynorm, eps, opts.penalty));
    }
    let (m, k) = (dict.rows(), dict.cols());
    let working_set = match opts.strategy {
        Strategy::WorkingSet => true,
        Strategy::FullGrid => false,
        Strategy::Auto => m <= 500 && k >= 4 * m,
    };
    if working_set {
        solve_working_set(dict, y.data(), eps, &opts)
    } else {
        solve_full(dict, y.data(), eps, &opts)
    }
}

struct FullMap<'a> {
    dict: &'a GridDictionary,
    gram: Gram,
}

impl LinearMap for FullMap<'_> {
    fn rows(&self) -> usize {
        self.dict.rows()
    }

    fn cols(&self) -> usize {
        self.dict.cols()
    }

    fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        self.dict.apply_dense_into(x, out);
    }

    fn adjoint(&self, y: &[Complex64], out: &mut [Complex64]) {
        out.copy_from_slice(&self.dict.adjoint_raw(y));
    }

    fn gram(&self) -> &Gram {
        &self.gram
    }
}

fn solve_full(dict: &GridDictionary, y: &[Complex64], eps: f64, opts: &SolverOptions) -> Result<RecoveryResult> {
    // allocation guard for the dense grid iterates
    dict.adjoint(&MeasurementVector::zeros(dict.operator().spec()))?;
    let map = FullMap {
        dict,
        gram: Gram::Diagonal(dict.gram_diag()),
    };
    let run = run_admm(&map, y, eps, opts, None, 0);
    let lambda = dual_vector(&map, &run.u, run.rho);
    let max_corr = crate::linalg::max_abs(&dict.adjoint_raw(&lambda));
    let dual = dual_objective(&lambda, y, eps, max_corr);
    let objective = norm_l1(&run.z);
    let gap = objective - dual;
    Ok(RecoveryResult {
        solution: SparseSolution::from_dense(*dict.grid(), &run.z),
        iterations: run.iterations,
        primal_residual: run.primal_res,
        dual_residual: run.dual_res,
        converged: run.converged && gap <= opts.gap_tol * objective.max(1.0),
        objective,
        dual_objective: dual,
        duality_gap: gap,
        constraint_residual: run.feasibility,
        radius: eps,
        penalty: run.rho,
        working_set: None,
        outer_iterations: 1,
        infeasible: run.infeasible,
        trace: run.trace,
    })
}

/// Indices of the `count` largest scores, largest first.
fn top_indices(scores: &[f64], count: usize, eligible: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| eligible(i)).collect();
    let count = count.min(idx.len());
    if count == 0 {
        return Vec::new();
    }
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]);
    if count < idx.len() {
        idx.select_nth_unstable_by(count - 1, cmp);
        idx.truncate(count);
    }
    idx.sort_unstable_by(cmp);
    idx
}

fn solve_working_set(
    dict: &GridDictionary,
    y: &[Complex64],
    eps: f64,
    opts: &SolverOptions,
) -> Result<RecoveryResult> {
    let (m, k) = (dict.rows(), dict.cols());
    let grid = *dict.grid();
    let y_vec = MeasurementVector::new(dict.operator().spec(), y.to_vec())?;
    let corr = dict.adjoint(&y_vec)?;
    let col_norms = dict.column_norms_sq()?;
    let normalized = |corr: &[Complex64]| -> Vec<f64> {
        corr.iter()
            .zip(&col_norms)
            .map(|(c, n)| if *n > 0.0 { c.norm() / n.sqrt() } else { 0.0 })
            .collect()
    };
    let scores = normalized(&corr);
    drop(corr);

    let mut active = vec![false; k];
    let mut set: Vec<usize> = top_indices(&scores, (2 * m).min(k), |_| true);
    drop(scores);
    for &i in &set {
        active[i] = true;
    }
    let mut columns: Vec<Complex64> = Vec::with_capacity(set.len() * m);
    for &i in &set {
        columns.extend(dict.column(grid.unflat(i))?);
    }

    let mut warm: Option<Warm> = None;
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut outer = 0;
    loop {
        outer += 1;
        let map = DenseMap::new(DMatrix::from_column_slice(m, set.len(), &columns));
        // y outside range(R_W) beyond the radius: grow W along the
        // least-squares residual before solving
        let resid = range_residual(&map, y);
        if norm(&resid) > eps + 1e-9 * norm(y) && outer < opts.max_outer {
            let scores = normalized(&dict.adjoint_raw(&resid));
            let extra = top_indices(&scores, m, |i| !active[i]);
            if !extra.is_empty() {
                let (mut z, mut u, rho) = match warm.take() {
                    Some(w) => (w.z, w.u, w.rho),
                    None => (vec![ZERO; set.len()], vec![ZERO; set.len()], opts.penalty),
                };
                for &i in &extra {
                    active[i] = true;
                    set.push(i);
                    columns.extend(dict.column(grid.unflat(i))?);
                    z.push(ZERO);
                    u.push(ZERO);
                }
                warm = Some(Warm { z, u, rho });
                continue;
            }
        }
        let run = if eps == 0.0 {
            restricted_ipm(&map, y, opts, iterations)?
        } else {
            let run = run_admm(&map, y, eps, opts, warm.take(), iterations);
            let lambda = dual_vector(&map, &run.u, run.rho);
            Restricted {
                lambda,
                warm: Some((run.u, run.rho)),
                z: run.z,
                iterations: run.iterations,
                primal_res: run.primal_res,
                dual_res: run.dual_res,
                feasibility: run.feasibility,
                converged: run.converged,
                infeasible: run.infeasible,
                rho: run.rho,
                trace: run.trace,
            }
        };
        iterations += run.iterations;
        trace.extend(run.trace.iter().copied());
        let full_corr = dict.adjoint_raw(&run.lambda);
        let max_corr = crate::linalg::max_abs(&full_corr);
        let dual = dual_objective(&run.lambda, y, eps, max_corr);
        let objective = norm_l1(&run.z);
        let gap = objective - dual;
        let gap_ok = gap <= opts.gap_tol * objective.max(1.0);

        let magnitudes: Vec<f64> = full_corr.iter().map(|c| c.norm()).collect();
        drop(full_corr);
        let violators = if gap_ok && run.converged {
            Vec::new()
        } else {
            top_indices(&magnitudes, m, |i| !active[i] && magnitudes[i] > 1.0)
        };

        if violators.is_empty() || outer >= opts.max_outer {
            let mut solution = SparseSolution::new(grid);
            for (&i, &v) in set.iter().zip(&run.z) {
                solution.insert(grid.unflat(i), v);
            }
            return Ok(RecoveryResult {
                solution,
                iterations,
                primal_residual: run.primal_res,
                dual_residual: run.dual_res,
                converged: run.converged && gap_ok,
                objective,
                dual_objective: dual,
                duality_gap: gap,
                constraint_residual: run.feasibility,
                radius: eps,
                penalty: run.rho,
                working_set: Some(set.len()),
                outer_iterations: outer,
                infeasible: run.infeasible,
                trace,
            });
        }

        let mut z = run.z;
        let mut u = run.warm.map(|(u, _)| u);
        for &i in &violators {
            active[i] = true;
            set.push(i);
            columns.extend(dict.column(grid.unflat(i))?);
            z.push(ZERO);
            if let Some(u) = u.as_mut() {
                u.push(ZERO);
            }
        }
        warm = u.map(|u| Warm { z, u, rho: run.rho });
    }
}

/// Outcome of one restricted solve inside the working-set loop.
struct Restricted {
    z: Vec<Complex64>,
    lambda: Vec<Complex64>,
    /// ADMM scaled dual and penalty, for warm starts.
    warm: Option<(Vec<Complex64>, f64)>,
    iterations: usize,
    primal_res: f64,
    dual_res: f64,
    feasibility: f64,
    converged: bool,
    infeasible: bool,
    rho: f64,
    trace: Vec<TraceRow>,
}

/// Relative size below which interior-point entries are reported as zero.
const IPM_PRUNE: f64 = 1e-7;

/// Equality-constrained restricted problem by the interior-point method;
/// ADMM converges too slowly on the nearly collinear columns of fine grids.
fn restricted_ipm(map: &DenseMap, y: &[Complex64], opts: &SolverOptions, first_iteration: usize) -> Result<Restricted> {
    let run = ipm::basis_pursuit_ipm(
        map.matrix(),
        y,
        0.1 * opts.gap_tol,
        opts.max_iter,
        opts.record_trace,
        first_iteration,
    )?;
    let peak = crate::linalg::max_abs(&run.s);
    let z: Vec<Complex64> = run
        .s
        .iter()
        .map(|&v| if v.norm() <= IPM_PRUNE * peak { ZERO } else { v })
        .collect();
    let mut fitted = vec![ZERO; map.rows()];
    map.apply(&z, &mut fitted);
    let feasibility = norm(&crate::linalg::sub(&fitted, y));
    Ok(Restricted {
        z,
        lambda: run.lambda,
        warm: None,
        iterations: run.iterations,
        primal_res: run.primal_res,
        dual_res: run.gap,
        feasibility,
        // the inner target is tighter than the outer gap test
        converged: run.converged || run.gap <= opts.gap_tol * norm_l1(&run.s).max(1.0),
        infeasible: false,
        rho: opts.penalty,
        trace: run.trace,
    })
}

/// `y - R R^+ y`
fn range_residual<M: LinearMap>(map: &M, y: &[Complex64]) -> Vec<Complex64> {
    let w = map.gram().pinv_apply(y);
    let mut x = vec![ZERO; map.cols()];
    map.adjoint(&w, &mut x);
    let mut fitted = vec![ZERO; map.rows()];
    map.apply(&x, &mut fitted);
    y.iter().zip(&fitted).map(|(a, b)| a - b).collect()
}

/// `||R s - y||` for a sparse solution.
pub fn constraint_residual(dict: &GridDictionary, s: &SparseSolution, y: &MeasurementVector) -> Result<f64> {
    let rs = dict.apply_sparse(s)?;
    Ok(norm(&crate::linalg::sub(rs.data(), y.data())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn option_validation() {
        assert!(SolverOptions::default().validated().is_ok());
        let o = SolverOptions {
            over_relaxation: 2.0,
            ..Default::default()
        };
        assert!(o.validated().is_err());
        let o = SolverOptions {
            tol_abs: 0.1,
            ..Default::default()
        };
        assert!(o.validated().is_err());
    }

    #[test]
    fn top_indices_orders_by_score() {
        let s = [0.1, 5.0, 3.0, 4.0, 0.0];
        assert_eq!(top_indices(&s, 3, |_| true), vec![1, 3, 2]);
        assert_eq!(top_indices(&s, 2, |i| i != 1), vec![3, 2]);
        assert!(top_indices(&s, 0, |_| true).is_empty());
    }

    #[test]
    fn delta_helpers() {
        let n = [Complex64::new(3.0, 4.0)];
        assert_eq!(oracle_delta(&n), 25.0);
        assert!((expected_delta(100.0, 20.0) - 1.0).abs() < 1e-12);
    }
}
