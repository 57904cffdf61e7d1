//! Pairings of 3D primitives with their 2D observations.

use nalgebra::Vector3;

use crate::error::{PnlError, Result};
use crate::geometry::{HomPoint2, HomPoint3, Line2, LineSegment2, LineSegment3, PluckerLine3};

/// A 3D point known to lie on an observed image line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLine {
    pub point: HomPoint3,
    pub line: Line2,
    /// Index of the observation this pairing belongs to.
    pub group: usize,
}

/// A 3D line and its observed image line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineLine {
    pub line3: PluckerLine3,
    pub line2: Line2,
    pub group: usize,
}

/// A 3D point and its observed image point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPoint {
    pub point3: HomPoint3,
    pub point2: HomPoint2,
    pub group: usize,
}

/// All correspondences available for one image.
///
/// Groups tie rows to observations: outlier rejection keeps or drops a whole group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub point_line: Vec<PointLine>,
    pub line_line: Vec<LineLine>,
    pub point_point: Vec<PointPoint>,
}

impl CorrespondenceSet {
    /// One group per segment pair: both 3D endpoints are paired with the observed
    /// image line, and the 3D line with the image line. Image lines are scaled so
    /// that `l1^2 + l2^2 = 1`.
    pub fn from_segments(segments3: &[LineSegment3], segments2: &[LineSegment2]) -> Result<Self> {
        if segments3.len() != segments2.len() {
            return Err(PnlError::DegenerateInput(format!(
                "{} 3D segments but {} image segments",
                segments3.len(),
                segments2.len()
            )));
        }
        let mut set = Self::default();
        for (group, (s3, s2)) in segments3.iter().zip(segments2).enumerate() {
            let line = s2.line().normalized();
            for p in [s3.a, s3.b] {
                set.point_line.push(PointLine { point: HomPoint3::from_euclidean(&p), line, group });
            }
            set.line_line.push(LineLine { line3: s3.plucker(), line2: line, group });
        }
        Ok(set)
    }

    /// Number of distinct groups referenced by any correspondence.
    pub fn group_count(&self) -> usize {
        self.groups().len()
    }

    /// Sorted distinct group ids.
    pub fn groups(&self) -> Vec<usize> {
        let mut g: Vec<usize> = self
            .point_line
            .iter()
            .map(|c| c.group)
            .chain(self.line_line.iter().map(|c| c.group))
            .chain(self.point_point.iter().map(|c| c.group))
            .collect();
        g.sort_unstable();
        g.dedup();
        g
    }

    /// Distinct image lines carrying point-line correspondences.
    pub fn distinct_point_line_groups(&self) -> usize {
        let mut g: Vec<usize> = self.point_line.iter().map(|c| c.group).collect();
        g.sort_unstable();
        g.dedup();
        g.len()
    }

    /// Subset of correspondences whose group passes `keep`.
    pub fn filter_groups(&self, keep: impl Fn(usize) -> bool) -> Self {
        Self {
            point_line: self.point_line.iter().filter(|c| keep(c.group)).copied().collect(),
            line_line: self.line_line.iter().filter(|c| keep(c.group)).copied().collect(),
            point_point: self.point_point.iter().filter(|c| keep(c.group)).copied().collect(),
        }
    }

    /// Finite 3D points used for cheirality decisions. Falls back to the points of
    /// the 3D lines closest to the origin when no point correspondences exist.
    pub fn reference_points(&self) -> Vec<Vector3<f64>> {
        let mut pts: Vec<Vector3<f64>> = self
            .point_line
            .iter()
            .filter_map(|c| c.point.to_euclidean())
            .chain(self.point_point.iter().filter_map(|c| c.point3.to_euclidean()))
            .collect();
        if pts.is_empty() {
            pts = self
                .line_line
                .iter()
                .filter(|c| c.line3.is_proper())
                .map(|c| c.line3.closest_point_to_origin())
                .collect();
        }
        pts
    }
}
