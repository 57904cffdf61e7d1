//! Error measures for estimated poses.

use nalgebra::{Matrix3, Vector3};

use crate::error::{PnlError, Result};
use crate::geometry::{project_line, LineSegment2, PluckerLine3, Pose};
use crate::linalg::rotation_angle;

/// Orientation, position and reprojection error of one estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    /// Angle of the relative rotation, degrees.
    pub orientation_deg: f64,
    /// Distance between true and estimated camera positions, world units.
    pub position: f64,
    /// Mean integrated squared line distance, normalized image units squared.
    pub reprojection: f64,
}

/// How the per-line reprojection integral is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Integral over the unit segment parameter, independent of segment length.
    #[default]
    Unit,
    /// Integral over arc length.
    Length,
}

impl Weighting {
    pub fn name(self) -> &'static str {
        match self {
            Weighting::Unit => "unit",
            Weighting::Length => "length",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Weighting::Unit, Weighting::Length].into_iter().find(|w| w.name() == s)
    }
}

/// Angle between two orientations in degrees, in `[0, 180]`.
pub fn orientation_error(r_true: &Matrix3<f64>, r_est: &Matrix3<f64>) -> f64 {
    rotation_angle(&(r_true.transpose() * r_est)).to_degrees()
}

/// `|T' - T|`.
pub fn position_error(t_true: &Vector3<f64>, t_est: &Vector3<f64>) -> f64 {
    (t_est - t_true).norm()
}

/// `(da^2 + da db + db^2) / 3`: integral of `((1 - t) da + t db)^2` over `t` in `[0, 1]`.
pub fn segment_line_error(da: f64, db: f64) -> f64 {
    (da * da + da * db + db * db) / 3.0
}

/// Mean over lines of the integrated squared distance between points of an image
/// segment and the projection of the corresponding infinite 3D line.
pub fn reprojection_error(
    pose: &Pose,
    segments: &[LineSegment2],
    lines: &[PluckerLine3],
    weighting: Weighting,
) -> Result<f64> {
    if segments.len() != lines.len() {
        return Err(PnlError::DegenerateInput(format!("{} segments but {} lines", segments.len(), lines.len())));
    }
    if segments.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (seg, line) in segments.iter().zip(lines) {
        let l = project_line(pose, line)?;
        let c = l.coords();
        let n = c.xy().norm();
        if n == 0.0 {
            return Err(PnlError::DegenerateInput("line projects to the line at infinity".into()));
        }
        let d = |p: &nalgebra::Vector2<f64>| (c.x * p.x + c.y * p.y + c.z) / n;
        let e = segment_line_error(d(&seg.a), d(&seg.b));
        total += match weighting {
            Weighting::Unit => e,
            Weighting::Length => e * seg.length(),
        };
    }
    Ok(total / segments.len() as f64)
}

/// All three errors of `estimate` against `truth`.
pub fn pose_error(
    truth: &Pose,
    estimate: &Pose,
    segments: &[LineSegment2],
    lines: &[PluckerLine3],
    weighting: Weighting,
) -> Result<PoseError> {
    Ok(PoseError {
        orientation_deg: orientation_error(&truth.rotation, &estimate.rotation),
        position: position_error(&truth.position, &estimate.position),
        reprojection: reprojection_error(estimate, segments, lines, weighting)?,
    })
}
