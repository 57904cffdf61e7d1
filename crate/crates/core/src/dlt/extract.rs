//! Pose parameters from estimated projection matrices.

use nalgebra::{Matrix3, Matrix3x4, SMatrix, Vector3};

use crate::error::{PnlError, Result, Warning};
use crate::geometry::{homogeneous_distance, line_projection_matrix, skew, vex, Line2, PluckerLine3, Pose};
use crate::linalg::{correct_scale, nearest_rotation, rotation_geodesic};

/// Data used to pick among the candidate poses of an essential-matrix
/// decomposition.
#[derive(Debug, Clone, Copy, Default)]
pub struct CheiralityRefs<'a> {
    /// Scene points that must end up in front of the camera.
    pub points: &'a [Vector3<f64>],
    /// Observed lines, used to break ties in the point count.
    pub lines: &'a [(PluckerLine3, Line2)],
}

/// Multiplies by the sign of the left block's determinant so that the block
/// approximates `+R` rather than `-R`.
fn fix_sign<const C: usize>(p: &SMatrix<f64, 3, C>) -> SMatrix<f64, 3, C> {
    let det = p.fixed_view::<3, 3>(0, 0).determinant();
    if det < 0.0 {
        -p
    } else {
        *p
    }
}

/// `(R, T)` from an estimate of `[R | -RT]`.
pub fn extract_pose_dlt_lines(p: &Matrix3x4<f64>) -> Result<(Pose, Vec<Warning>)> {
    let (sp, _) = correct_scale(p)?;
    let sp = fix_sign(&sp);
    let (r, w) = nearest_rotation(&sp.fixed_view::<3, 3>(0, 0).into_owned())?;
    let t = -(r.transpose() * sp.column(3));
    Ok((Pose::new(r, t)?, w.into_iter().collect()))
}

/// One candidate of the essential-matrix decomposition with its plausibility score.
#[derive(Debug, Clone, Copy)]
pub struct Candidate {
    pub pose: Pose,
    pub in_front: usize,
    /// Whether `R [-T]x` has the sign of the decomposed estimate.
    pub sign_consistent: bool,
    pub line_residual: f64,
}

fn score(pose: Pose, sign_consistent: bool, refs: &CheiralityRefs) -> Candidate {
    let in_front = refs.points.iter().filter(|p| pose.to_camera(p).z < 0.0).count();
    let pl = line_projection_matrix(&pose);
    let line_residual = refs
        .lines
        .iter()
        .map(|(l3, l2)| homogeneous_distance((pl * l3.to_vector()).as_slice(), l2.coords().as_slice()))
        .sum();
    Candidate { pose, in_front, sign_consistent, line_residual }
}

/// Decomposes `s E'`, an estimate of `R [-T]x`, into the candidate poses and picks
/// the one placing the most reference points in front of the camera. Ties go to
/// the smaller algebraic line reprojection residual, then to the candidates
/// reproducing the sign of the estimate.
///
/// Both rotation families are combined with both signs of the translation, so a
/// wrongly signed estimate still yields the right pose when the points decide.
pub fn decompose_essential(e: &Matrix3<f64>, s: f64, refs: &CheiralityRefs) -> Result<(Pose, Vec<Candidate>)> {
    let se = e * s;
    if !se.iter().all(|v| v.is_finite()) || se.iter().all(|&v| v == 0.0) {
        return Err(PnlError::ZeroBlock("essential block of the projection matrix".into()));
    }
    let svd = se.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(PnlError::SingularMatrix("SVD failed on the essential block".into())),
    };
    let v = v_t.transpose();
    let sv = svd.singular_values;
    let q = (sv[0] + sv[1]) / 2.0;

    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let z = Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let rot = |m: Matrix3<f64>| -> Matrix3<f64> {
        let r = u * m * v_t;
        let d = r.determinant().signum();
        u * m * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
    };
    // R S = E with S = [-T]x, hence T = -vex(S)
    let ra = rot(w);
    let rb = rot(w.transpose());
    let ta = -vex(&(v * z * v_t * q));
    let tb = -vex(&(v * z.transpose() * v_t * q));

    let mut candidates = Vec::with_capacity(4);
    for (r, t) in [(ra, ta), (ra, -ta), (rb, tb), (rb, -tb)] {
        let consistent = (r * skew(&-t)).dot(&se) > 0.0;
        candidates.push(score(Pose::new(r, t)?, consistent, refs));
    }
    let best = *candidates
        .iter()
        .max_by(|a, b| {
            a.in_front
                .cmp(&b.in_front)
                .then(b.line_residual.total_cmp(&a.line_residual))
                .then(a.sign_consistent.cmp(&b.sign_consistent))
        })
        .expect("four candidates");
    let total = refs.points.len();
    if total > 0 && 2 * best.in_front < total {
        return Err(PnlError::NoPlausibleCandidate { in_front: best.in_front, total });
    }
    Ok((best.pose, candidates))
}

/// `(R, T)` from an estimate of `[R | R [-T]x]`, taken from the right block alone.
pub fn extract_pose_plucker(p: &SMatrix<f64, 3, 6>, refs: &CheiralityRefs) -> Result<(Pose, Vec<Warning>)> {
    let (_, s) = correct_scale(p)?;
    let p = fix_sign(p);
    let (pose, _) = decompose_essential(&p.fixed_view::<3, 3>(0, 3).into_owned(), s, refs)?;
    Ok((pose, Vec::new()))
}

/// Fraction of the way from the point-block rotation toward the line-block rotation
/// used when blending the two estimates with interpolation factor `k`.
pub fn rotation_blend(k: f64) -> f64 {
    1.0 - k
}

/// Intermediate estimates of the combined extraction.
#[derive(Debug, Clone, Copy)]
pub struct CombinedParts {
    pub r1: Matrix3<f64>,
    pub t2: Vector3<f64>,
    pub r3: Matrix3<f64>,
    pub t3: Vector3<f64>,
}

/// Rotation from the left block, translation from the point column, and a second
/// rotation/translation pair from the essential block.
pub fn combined_parts(p: &SMatrix<f64, 3, 7>, refs: &CheiralityRefs) -> Result<(CombinedParts, Vec<Warning>)> {
    let (sp, s) = correct_scale(p)?;
    let sp = fix_sign(&sp);
    let (r1, w) = nearest_rotation(&sp.fixed_view::<3, 3>(0, 0).into_owned())?;
    let t2 = -(r1.transpose() * sp.column(3));
    let e = fix_sign(p).fixed_view::<3, 3>(0, 4).into_owned();
    let (pose3, _) = decompose_essential(&e, s, refs)?;
    Ok((CombinedParts { r1, t2, r3: pose3.rotation, t3: pose3.position }, w.into_iter().collect()))
}

/// `(R, T)` from an estimate of `[R | -RT | R [-T]x]`: the two translations are
/// mixed as `k T2 + (1 - k) T3`, the rotations along their geodesic.
pub fn extract_pose_combined(p: &SMatrix<f64, 3, 7>, k: f64, refs: &CheiralityRefs) -> Result<(Pose, Vec<Warning>)> {
    if !(0.0..=1.0).contains(&k) {
        return Err(PnlError::InvalidConfig(format!("interpolation factor {k} outside [0, 1]")));
    }
    let (parts, warnings) = combined_parts(p, refs)?;
    let (pose, _) = blend(&parts, k)?;
    Ok((pose, warnings))
}

/// Pose at interpolation factor `k` between the two estimates in `parts`.
pub fn blend(parts: &CombinedParts, k: f64) -> Result<(Pose, f64)> {
    let w = rotation_blend(k);
    let r = rotation_geodesic(&parts.r1, &parts.r3, w)?;
    let t = parts.t2 * k + parts.t3 * (1.0 - k);
    Ok((Pose::new(r, t)?, w))
}
