//! Algebraic outlier rejection: iteratively reweighted homogeneous least squares
//! with binary weights.
//!
//! Each iteration solves the measurement system restricted to the current inliers,
//! scores every observation by the largest of its algebraic row residuals, and keeps
//! the observations below a quantile of those scores. Only the scale-free stage of
//! the conditioning is applied while iterating, since data-dependent conditioning
//! would move with the inlier set. The full solver runs once on the final inliers.

use nalgebra::DMatrix;

use crate::correspondence::CorrespondenceSet;
use crate::dlt::measurement::check_counts;
use crate::dlt::{estimate_pose, prepare, Estimate, Method, SolverConfig};
use crate::error::{PnlError, Result};
use crate::linalg::{mean, quantile, solve_homogeneous};
use crate::prenorm::PrenormLevel;

/// Mean residual, relative to the mean row norm, treated as an exact fit.
pub const EXACT_FIT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AorConfig {
    /// Quantile used for the threshold at each iteration.
    pub schedule: Vec<f64>,
    /// Quantile used once the schedule is exhausted.
    pub floor: f64,
    pub max_iterations: usize,
    /// Relative decrease of the monitored error below which iteration stops.
    pub min_improvement: f64,
}

impl Default for AorConfig {
    fn default() -> Self {
        Self {
            schedule: vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3],
            floor: 0.25,
            max_iterations: 30,
            min_improvement: 1e-2,
        }
    }
}

impl AorConfig {
    pub fn validate(&self) -> Result<()> {
        let all = self.schedule.iter().chain(std::iter::once(&self.floor));
        if all.clone().any(|q| !(*q > 0.0 && *q <= 1.0)) {
            return Err(PnlError::InvalidConfig("quantiles must lie in (0, 1]".into()));
        }
        let v: Vec<f64> = all.copied().collect();
        if v.windows(2).any(|w| w[1] > w[0]) {
            return Err(PnlError::InvalidConfig("quantile schedule must be non-increasing".into()));
        }
        if !(0.0..1.0).contains(&self.min_improvement) {
            return Err(PnlError::InvalidConfig("minimum improvement must lie in [0, 1)".into()));
        }
        if self.max_iterations == 0 {
            return Err(PnlError::InvalidConfig("need at least one iteration".into()));
        }
        Ok(())
    }

    /// Quantile for the zero-based iteration `i`.
    pub fn quantile_at(&self, i: usize) -> f64 {
        self.schedule.get(i).copied().unwrap_or(self.floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AorReport {
    /// Reweighted solves performed, excluding the final conditioned pass.
    pub iterations: usize,
    /// Sorted observation (group) ids, aligned with `inliers`.
    pub groups: Vec<usize>,
    pub inliers: Vec<bool>,
    /// Mean residual over the inliers of each solve.
    pub errors: Vec<f64>,
    /// Full conditioning was applied only in the final pass.
    pub prenorm_deferred: bool,
}

impl AorReport {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Pose from `corrs` with outlying observations removed.
pub fn aor_estimate(
    corrs: &CorrespondenceSet,
    method: Method,
    aor: &AorConfig,
    solver: &SolverConfig,
) -> Result<(Estimate, AorReport)> {
    aor.validate()?;
    solver.validate()?;
    let groups = corrs.groups();
    let index = |g: usize| groups.binary_search(&g).expect("group of a correspondence");

    let raw = SolverConfig { prenorm: PrenormLevel::Unit, ..*solver };
    let m = prepare(corrs, method, &raw)?.measurement;
    let row_group: Vec<usize> = m.tags.iter().map(|t| index(t.group)).collect();
    let row_scale = mean(&m.matrix.row_iter().map(|r| r.norm()).collect::<Vec<_>>());

    let mut mask = vec![true; groups.len()];
    let mut previous = mask.clone();
    let mut errors: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < aor.max_iterations {
        let rows: Vec<usize> = (0..m.matrix.nrows()).filter(|&r| mask[row_group[r]]).collect();
        let sub = DMatrix::from_fn(rows.len(), m.matrix.ncols(), |i, j| m.matrix[(rows[i], j)]);
        let p = solve_homogeneous(&sub)?.vector;
        iterations += 1;

        let row_res = &m.matrix * p;
        let mut res = vec![0.0f64; groups.len()];
        for (r, g) in row_group.iter().enumerate() {
            res[*g] = f64::max(res[*g], row_res[r].abs());
        }
        let inlier_res: Vec<f64> = res.iter().zip(&mask).filter(|(_, &k)| k).map(|(r, _)| *r).collect();
        let error = mean(&inlier_res);

        if let Some(&prev) = errors.last() {
            if error >= prev * (1.0 - aor.min_improvement) {
                mask = previous;
                converged = true;
                break;
            }
        }
        errors.push(error);
        if error <= EXACT_FIT * row_scale {
            converged = true;
            break;
        }

        let threshold = quantile(&res, aor.quantile_at(iterations - 1));
        let next: Vec<bool> = res.iter().map(|r| *r <= threshold).collect();
        let kept = corrs.filter_groups(|g| next[index(g)]);
        if let Err(PnlError::InsufficientCorrespondences { requirement, .. }) = check_counts(&kept, method) {
            return Err(PnlError::InsufficientInliers {
                method: method.name(),
                remaining: kept.group_count(),
                requirement,
            });
        }
        previous = std::mem::replace(&mut mask, next);
    }
    if !converged {
        return Err(PnlError::NonConvergence { what: "outlier rejection", iterations: aor.max_iterations });
    }

    let inliers = corrs.filter_groups(|g| mask[index(g)]);
    let estimate = estimate_pose(&inliers, method, solver)?;
    Ok((estimate, AorReport { iterations, groups, inliers: mask, errors, prenorm_deferred: true }))
}
