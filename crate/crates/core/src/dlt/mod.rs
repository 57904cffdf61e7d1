//! The three DLT pose solvers: condition, build, solve, revert, extract.

pub mod extract;
pub mod measurement;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DVector, Matrix3x4, SMatrix};

use crate::correspondence::{CorrespondenceSet, LineLine, PointLine, PointPoint};
use crate::error::{PnlError, Result, Warning};
use crate::geometry::{HomPoint2, HomPoint3, Line2, PluckerLine3, Pose};
use crate::linalg::solve_homogeneous;
use crate::prenorm::{
    prenorm_combined, prenorm_lines_2d, prenorm_plucker_lines, prenorm_points_3d, revert_prenorm_combined,
    revert_prenorm_line_matrix, revert_prenorm_point_matrix, unit_direction, Homography2, PrenormLevel, Similarity3,
};

use self::extract::{extract_pose_combined, extract_pose_dlt_lines, extract_pose_plucker, CheiralityRefs};
use self::measurement::{build_measurement, unvectorize, MeasurementMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// 3×4 point projection matrix from points on lines.
    DltLines,
    /// 3×6 line projection matrix from Plücker lines.
    DltPlucker,
    /// 3×7 combined matrix from points and lines.
    DltCombined,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::DltLines, Method::DltPlucker, Method::DltCombined];

    pub fn name(self) -> &'static str {
        match self {
            Method::DltLines => "dlt_lines",
            Method::DltPlucker => "dlt_plucker",
            Method::DltCombined => "dlt_combined",
        }
    }

    /// Entries of the estimated projection matrix.
    pub fn columns(self) -> usize {
        match self {
            Method::DltLines => 12,
            Method::DltPlucker => 18,
            Method::DltCombined => 21,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = PnlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "dlt_lines" | "lines" => Ok(Method::DltLines),
            "dlt_plucker" | "dlt_plucker_lines" | "plucker" => Ok(Method::DltPlucker),
            "dlt_combined" | "dlt_combined_lines" | "combined" => Ok(Method::DltCombined),
            other => Err(PnlError::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Weight of the point-block estimates in the combined extraction.
    pub k: f64,
    /// Emit two of the three linearly dependent rows per line-line pairing.
    pub two_rows_per_line: bool,
    /// Conditioning applied before building the measurement matrix. `None` and
    /// `Unit` apply to every method; higher levels enable each method's full
    /// conditioning, and select the combined stages individually.
    pub prenorm: PrenormLevel,
    /// Per-axis rather than isotropic scaling in the combined conditioning.
    pub anisotropic_scale: bool,
    /// Cap on the reference points used for cheirality decisions; `None` uses all.
    pub cheirality_points: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k: 0.7,
            two_rows_per_line: true,
            prenorm: PrenormLevel::Balance,
            anisotropic_scale: false,
            cheirality_points: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.k) {
            return Err(PnlError::InvalidConfig(format!("k = {} outside [0, 1]", self.k)));
        }
        if self.cheirality_points == Some(0) {
            return Err(PnlError::InvalidConfig("cheirality sample size must be positive".into()));
        }
        Ok(())
    }
}

/// Wall-clock time spent in each pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub prenorm: Duration,
    pub build: Duration,
    pub solve: Duration,
    pub extract: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.prenorm + self.build + self.solve + self.extract
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub rows: usize,
    /// `|M p|` for the unit solution on the conditioned system.
    pub residual: f64,
    /// Ascending singular values of the measurement matrix.
    pub singular_values: Vec<f64>,
    pub relative_gap: f64,
    pub warnings: Vec<Warning>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub pose: Pose,
    pub diagnostics: Diagnostics,
}

/// How to map a solution of the conditioned system back to world coordinates.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Reversion {
    Lines { t3: Similarity3, t2: Homography2 },
    Plucker { t3: Similarity3, t2: Homography2 },
    Combined { t3: Similarity3 },
}

/// Conditioned measurement matrix ready to be solved.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub measurement: MeasurementMatrix,
    pub reversion: Reversion,
    pub prenorm_time: Duration,
    pub build_time: Duration,
}

fn finite_points(points: &[HomPoint3]) -> Result<Vec<HomPoint3>> {
    points
        .iter()
        .map(|p| {
            p.to_euclidean()
                .map(|e| HomPoint3::from_euclidean(&e))
                .ok_or_else(|| PnlError::DegenerateInput("3D point at infinity".into()))
        })
        .collect()
}

/// Applies the conditioning selected by `level` and builds the measurement matrix.
pub(crate) fn prepare(corrs: &CorrespondenceSet, method: Method, config: &SolverConfig) -> Result<Prepared> {
    measurement::check_counts(corrs, method)?;
    let started = Instant::now();
    let level = config.prenorm;
    let full = level >= PrenormLevel::Center;

    let (conditioned, reversion) = match method {
        Method::DltLines => {
            let points: Vec<HomPoint3> =
                corrs.point_line.iter().map(|c| c.point).chain(corrs.point_point.iter().map(|c| c.point3)).collect();
            let (points, t3) = match level {
                PrenormLevel::None => (points, Similarity3::identity()),
                PrenormLevel::Unit => (finite_points(&points)?, Similarity3::identity()),
                _ => prenorm_points_3d(&points)?,
            };
            let lines: Vec<Line2> = corrs.point_line.iter().map(|c| c.line).collect();
            let (lines, t2) =
                if full && !lines.is_empty() { prenorm_lines_2d(&lines)? } else { (lines, Homography2::identity()) };
            let h_inv_t =
                t2.h.try_inverse().ok_or_else(|| PnlError::SingularMatrix("2D line conditioning".into()))?.transpose();
            let n_pl = corrs.point_line.len();
            let point_line = corrs
                .point_line
                .iter()
                .enumerate()
                .map(|(i, c)| PointLine { point: points[i], line: lines[i], group: c.group })
                .collect();
            let point_point = corrs
                .point_point
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    Ok(PointPoint {
                        point3: points[n_pl + i],
                        point2: HomPoint2::new(h_inv_t * c.point2.coords())?,
                        group: c.group,
                    })
                })
                .collect::<Result<_>>()?;
            (CorrespondenceSet { point_line, line_line: Vec::new(), point_point }, Reversion::Lines { t3, t2 })
        }
        Method::DltPlucker => {
            let lines3: Vec<PluckerLine3> = corrs.line_line.iter().map(|c| c.line3).collect();
            let (lines3, t3) = match level {
                PrenormLevel::None => (lines3, Similarity3::identity()),
                PrenormLevel::Unit => (unit_direction(&lines3)?, Similarity3::identity()),
                _ => prenorm_plucker_lines(&lines3)?,
            };
            let lines2: Vec<Line2> = corrs.line_line.iter().map(|c| c.line2).collect();
            let (lines2, t2) = if full { prenorm_lines_2d(&lines2)? } else { (lines2, Homography2::identity()) };
            let line_line = corrs
                .line_line
                .iter()
                .enumerate()
                .map(|(i, c)| LineLine { line3: lines3[i], line2: lines2[i], group: c.group })
                .collect();
            (
                CorrespondenceSet { point_line: Vec::new(), line_line, point_point: Vec::new() },
                Reversion::Plucker { t3, t2 },
            )
        }
        Method::DltCombined => {
            let points: Vec<HomPoint3> =
                corrs.point_line.iter().map(|c| c.point).chain(corrs.point_point.iter().map(|c| c.point3)).collect();
            let lines3: Vec<PluckerLine3> = corrs.line_line.iter().map(|c| c.line3).collect();
            let pre = prenorm_combined(&points, &lines3, level, config.anisotropic_scale)?;
            let n_pl = corrs.point_line.len();
            let point_line = corrs
                .point_line
                .iter()
                .enumerate()
                .map(|(i, c)| PointLine { point: pre.points[i], line: c.line, group: c.group })
                .collect();
            let point_point = corrs
                .point_point
                .iter()
                .enumerate()
                .map(|(i, c)| PointPoint { point3: pre.points[n_pl + i], point2: c.point2, group: c.group })
                .collect();
            let line_line = corrs
                .line_line
                .iter()
                .enumerate()
                .map(|(i, c)| LineLine { line3: pre.lines[i], line2: c.line2, group: c.group })
                .collect();
            (CorrespondenceSet { point_line, line_line, point_point }, Reversion::Combined { t3: pre.transform })
        }
    };

    let conditioned_at = Instant::now();
    let balance = method == Method::DltCombined && level >= PrenormLevel::Balance;
    let measurement = build_measurement(&conditioned, method, config.two_rows_per_line, balance)?;
    Ok(Prepared {
        measurement,
        reversion,
        prenorm_time: conditioned_at - started,
        build_time: conditioned_at.elapsed(),
    })
}

/// Reverts the conditioning on a solution vector and extracts the pose.
pub(crate) fn finish(
    solution: &DVector<f64>,
    reversion: &Reversion,
    corrs: &CorrespondenceSet,
    config: &SolverConfig,
) -> Result<(Pose, Vec<Warning>)> {
    let mut points = corrs.reference_points();
    if let Some(cap) = config.cheirality_points {
        points.truncate(cap);
    }
    let lines: Vec<(PluckerLine3, Line2)> = corrs.line_line.iter().map(|c| (c.line3, c.line2)).collect();
    let refs = CheiralityRefs { points: &points, lines: &lines };

    match reversion {
        Reversion::Lines { t3, t2 } => {
            let p: Matrix3x4<f64> = unvectorize(solution.as_slice());
            extract_pose_dlt_lines(&revert_prenorm_point_matrix(&p, t3, t2))
        }
        Reversion::Plucker { t3, t2 } => {
            let p: SMatrix<f64, 3, 6> = unvectorize(solution.as_slice());
            extract_pose_plucker(&revert_prenorm_line_matrix(&p, t3, t2)?, &refs)
        }
        Reversion::Combined { t3 } => {
            let p: SMatrix<f64, 3, 7> = unvectorize(solution.as_slice());
            let (reverted, w) = revert_prenorm_combined(&p, t3)?;
            let (pose, mut warnings) = extract_pose_combined(&reverted, config.k, &refs)?;
            warnings.extend(w);
            Ok((pose, warnings))
        }
    }
}

/// Full pipeline for one image.
pub fn estimate_pose(corrs: &CorrespondenceSet, method: Method, config: &SolverConfig) -> Result<Estimate> {
    config.validate()?;
    let prepared = prepare(corrs, method, config)?;
    let t1 = Instant::now();
    let solution = solve_homogeneous(&prepared.measurement.matrix)?;
    let t2 = Instant::now();
    let (pose, extract_warnings) = finish(&solution.vector, &prepared.reversion, corrs, config)?;
    let t3 = Instant::now();

    let mut warnings: Vec<Warning> = solution.warning.into_iter().collect();
    warnings.extend(extract_warnings);
    Ok(Estimate {
        pose,
        diagnostics: Diagnostics {
            rows: prepared.measurement.matrix.nrows(),
            residual: solution.residual,
            singular_values: solution.singular_values,
            relative_gap: solution.relative_gap,
            warnings,
            timings: StageTimings {
                prenorm: prepared.prenorm_time,
                build: prepared.build_time,
                solve: t2 - t1,
                extract: t3 - t2,
            },
        },
    })
}
