//! Camera pose from 2D/3D line correspondences by direct linear transformation.
//!
//! Three linear solvers are provided:
//!
//! * [`Method::DltLines`] estimates the 3×4 point projection matrix from 3D points
//!   lying on observed image lines.
//! * [`Method::DltPlucker`] estimates the 3×6 line projection matrix from 3D lines in
//!   Plücker coordinates.
//! * [`Method::DltCombined`] estimates both at once through the 3×7 matrix
//!   `[R | -RT | R[-T]x]`, which needs as few as five lines.
//!
//! The solvers can be wrapped in algebraic outlier rejection ([`aor`]), evaluated with
//! the metrics in [`metrics`], and exercised on synthetic scenes with [`synth`] and
//! [`bench`]. Real data is read through [`dataset`].

pub mod aor;
pub mod bench;
pub mod correspondence;
pub mod dataset;
pub mod dlt;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod prenorm;
pub mod records;
pub mod synth;

pub use correspondence::CorrespondenceSet;
pub use dlt::{estimate_pose, Diagnostics, Estimate, Method, SolverConfig};
pub use error::{ParseError, PnlError, Result, Warning};
pub use geometry::{CameraIntrinsics, HomPoint2, HomPoint3, Line2, LineSegment2, LineSegment3, PluckerLine3, Pose};
pub use metrics::PoseError;
