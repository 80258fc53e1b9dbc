use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridIndex, SparseSolution};
use crate::linalg::{norm, sub};
use crate::radar::{Location, MeasurementVector, MimoOperator, ProbingSignalSet, Target};

pub const DEFAULT_THRESHOLD_FRAC: f64 = 0.1;
pub const DEFAULT_CLUSTER_RADIUS: usize = 1;

/// Condition number above which the debiasing system is rejected.
const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasResult {
    pub gains: Vec<Complex64>,
    pub residual_norm: f64,
    pub condition: f64,
}

/// Least-squares gains for `y ~ sum_k b_k A f(r_k)`.
pub fn debias_lsq(signals: &ProbingSignalSet, locs: &[Location], y: &MeasurementVector) -> Result<DebiasResult> {
    debias_lsq_with(&MimoOperator::new(signals), locs, y)
}

pub fn debias_lsq_with(op: &MimoOperator, locs: &[Location], y: &MeasurementVector) -> Result<DebiasResult> {
    if y.spec() != op.spec() {
        return Err(Error::DimensionMismatch {
            what: "measurement length",
            expected: op.rows(),
            got: y.data().len(),
        });
    }
    if locs.is_empty() {
        return Ok(DebiasResult {
            gains: Vec::new(),
            residual_norm: y.norm(),
            condition: 1.0,
        });
    }
    let m = op.rows();
    if locs.len() > m {
        return Err(Error::InvalidOption(format!(
            "{} locations exceed the {m} measurements",
            locs.len()
        )));
    }
    let mut data = Vec::with_capacity(m * locs.len());
    for &loc in locs {
        data.extend(op.apply_atom(loc));
    }
    let a = DMatrix::from_column_slice(m, locs.len(), &data);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::RankDeficient(condition));
    }
    let b = DVector::from_column_slice(y.data());
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Unsupported(format!("least squares: {e}")))?;
    let fitted = &a * &x;
    Ok(DebiasResult {
        gains: x.iter().copied().collect(),
        residual_norm: norm(&sub(fitted.as_slice(), y.data())),
        condition,
    })
}

/// Signed offset `b - a` on a cyclic axis of length `k`, in `(-k/2, k/2]`.
fn cyclic_offset(a: usize, b: usize, k: usize) -> i64 {
    let k = k as i64;
    let d = (b as i64 - a as i64).rem_euclid(k);
    if d > k / 2 {
        d - k
    } else {
        d
    }
}

/// Peak picking on a gridded solution.
///
/// Entries with modulus at least `threshold_frac * max` are grouped into
/// connected components, two entries being adjacent when every wrap-around
/// index offset is at most `cluster_radius`. Each component gives one target at
/// its modulus-weighted centroid with the sum of its coefficients as gain.
/// Targets are returned in decreasing gain modulus.
pub fn extract_targets(sol: &SparseSolution, threshold_frac: f64, cluster_radius: usize) -> Result<Vec<Target>> {
    if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(Error::InvalidOption(format!(
            "threshold_frac must lie in (0, 1), got {threshold_frac}"
        )));
    }
    let grid = *sol.grid();
    let peak = sol.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(Vec::new());
    }
    let kept: Vec<(GridIndex, Complex64)> = sol.iter().filter(|(_, v)| v.norm() >= threshold_frac * peak).collect();
    let dims = grid.dims();
    let radius = cluster_radius as i64;
    let position: HashMap<GridIndex, usize> = kept.iter().enumerate().map(|(i, (g, _))| (*g, i)).collect();
    // offsets per axis, deduplicated when the window wraps the whole axis
    let offsets: Vec<Vec<usize>> = dims
        .iter()
        .map(|&d| {
            let mut o: Vec<usize> = (-radius..=radius).map(|r| r.rem_euclid(d as i64) as usize).collect();
            o.sort_unstable();
            o.dedup();
            o
        })
        .collect();
    let neighbours = |a: GridIndex| {
        let mut out = Vec::new();
        for &o1 in &offsets[0] {
            for &o2 in &offsets[1] {
                for &o3 in &offsets[2] {
                    let g = GridIndex::new((a.n1 + o1) % dims[0], (a.n2 + o2) % dims[1], (a.n3 + o3) % dims[2]);
                    if let Some(&i) = position.get(&g) {
                        out.push(i);
                    }
                }
            }
        }
        out
    };

    let mut label = vec![usize::MAX; kept.len()];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for start in 0..kept.len() {
        if label[start] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        label[start] = id;
        let mut members = vec![start];
        let mut head = 0;
        while head < members.len() {
            let cur = members[head];
            head += 1;
            for other in neighbours(kept[cur].0) {
                if label[other] == usize::MAX {
                    label[other] = id;
                    members.push(other);
                }
            }
        }
        clusters.push(members);
    }

    let mut targets: Vec<Target> = clusters
        .iter()
        .map(|members| {
            let anchor = members
                .iter()
                .copied()
                .max_by(|&a, &b| kept[a].1.norm().total_cmp(&kept[b].1.norm()))
                .expect("non-empty cluster");
            let base = kept[anchor].0;
            let base = [base.n1, base.n2, base.n3];
            let mut weight = 0.0;
            let mut offset = [0.0; 3];
            let mut gain = Complex64::new(0.0, 0.0);
            for &i in members {
                let (idx, v) = kept[i];
                let w = v.norm();
                weight += w;
                gain += v;
                for (ax, n) in [idx.n1, idx.n2, idx.n3].into_iter().enumerate() {
                    offset[ax] += w * cyclic_offset(base[ax], n, dims[ax]) as f64;
                }
            }
            let coord = |ax: usize| (base[ax] as f64 + offset[ax] / weight) / dims[ax] as f64;
            Target::new(gain, Location::new(coord(0), coord(1), coord(2)))
        })
        .collect();
    targets.sort_by(|a, b| b.gain.norm().total_cmp(&a.gain.norm()));
    Ok(targets)
}
