//! Small dense kernels: homogeneous least squares, scale correction,
//! orthogonalization and rotation geodesics.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, SMatrix, UnitQuaternion, SVD};

use crate::error::{PnlError, Result, Warning};

/// Relative gap between the two smallest singular values below which the
/// least-squares nullspace is reported as not unique.
pub const RANK_GAP_TOL: f64 = 1e-12;

/// Least-squares solution of `M p = 0` subject to `|p| = 1`.
#[derive(Debug, Clone)]
pub struct NullVector {
    pub vector: DVector<f64>,
    /// Singular values of `M` in ascending order. Rows missing from an
    /// underdetermined system contribute zeros.
    pub singular_values: Vec<f64>,
    /// `|M p|`.
    pub residual: f64,
    /// `(s2 - s1) / s_max` for the two smallest singular values.
    pub relative_gap: f64,
    pub warning: Option<Warning>,
}

/// Right singular vector belonging to the least singular value of `m`.
///
/// Tall systems are first reduced to their square triangular factor, which has
/// the same singular values and right singular vectors but is much cheaper to
/// decompose. Systems with fewer rows than columns are zero-padded so that the
/// full right basis is available.
pub fn solve_homogeneous(m: &DMatrix<f64>) -> Result<NullVector> {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return Err(PnlError::DegenerateInput("measurement matrix has no columns".into()));
    }
    if rows + 1 < cols {
        return Err(PnlError::DegenerateInput(format!(
            "measurement matrix has {rows} rows, at least {} needed",
            cols - 1
        )));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(PnlError::DegenerateInput("measurement matrix has non-finite entries".into()));
    }
    if m.iter().all(|&v| v == 0.0) {
        return Err(PnlError::DegenerateInput("measurement matrix is all zeros".into()));
    }

    let square = if rows > cols {
        m.clone().qr().r()
    } else {
        let mut padded = DMatrix::zeros(cols, cols);
        padded.view_mut((0, 0), (rows, cols)).copy_from(m);
        padded
    };
    let svd = SVD::new(square, false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| PnlError::SingularMatrix("SVD did not produce right singular vectors".into()))?;

    let sv = &svd.singular_values;
    let (imin, _) = sv.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let vector: DVector<f64> = v_t.row(imin).transpose();

    let mut singular_values: Vec<f64> = sv.iter().copied().collect();
    singular_values.sort_by(f64::total_cmp);
    let smax = singular_values[singular_values.len() - 1];
    let relative_gap =
        if singular_values.len() > 1 && smax > 0.0 { (singular_values[1] - singular_values[0]) / smax } else { 1.0 };
    let warning = (relative_gap < RANK_GAP_TOL).then_some(Warning::RankDeficient { relative_gap });
    let residual = (m * &vector).norm();

    Ok(NullVector { vector, singular_values, residual, relative_gap, warning })
}

/// Scales `p` so that the singular values of its left 3×3 block average to one.
/// Returns the scaled matrix and the factor.
pub fn correct_scale<const C: usize>(p: &SMatrix<f64, 3, C>) -> Result<(SMatrix<f64, 3, C>, f64)> {
    let left: Matrix3<f64> = p.fixed_view::<3, 3>(0, 0).into_owned();
    let mean = left.singular_values().sum() / 3.0;
    if mean.is_nan() || mean <= 0.0 || mean.is_infinite() {
        return Err(PnlError::ZeroBlock("left 3x3 block of the projection matrix".into()));
    }
    let s = 1.0 / mean;
    Ok((p * s, s))
}

/// Rotation `d U V^T` with `d = det(U V^T)`, where `U S V^T` is the SVD of `m`.
///
/// For `det(m) > 0` this is the rotation closest to `m` in the Frobenius norm;
/// otherwise it is the rotation closest to `-m`.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Result<(Matrix3<f64>, Option<Warning>)> {
    if !m.iter().all(|v| v.is_finite()) || m.iter().all(|&v| v == 0.0) {
        return Err(PnlError::ZeroBlock("matrix to orthogonalize".into()));
    }
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(PnlError::SingularMatrix("SVD failed during orthogonalization".into())),
    };
    let uv = u * v_t;
    let r = uv * uv.determinant().signum();

    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let warning = (smin <= 1e-12 * smax).then_some(Warning::AmbiguousRotation { smallest_singular_value: smin });
    Ok((r, warning))
}

/// Angle of a rotation matrix in radians, accurate near both 0 and π.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = crate::geometry::vex(r).norm();
    let c = (r.trace() - 1.0) / 2.0;
    s.atan2(c)
}

/// Point at parameter `t` on the geodesic from `a` (t = 0) to `b` (t = 1):
/// `a exp(t log(a^T b))`.
pub fn rotation_geodesic(a: &Matrix3<f64>, b: &Matrix3<f64>, t: f64) -> Result<Matrix3<f64>> {
    let rel = a.transpose() * b;
    let mut q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rel));
    if q.w < 0.0 {
        q = UnitQuaternion::new_unchecked(-q.into_inner());
    }
    let angle = 2.0 * q.imag().norm().atan2(q.w);
    if std::f64::consts::PI - angle < 1e-9 {
        return Err(PnlError::GeodesicAmbiguity);
    }
    let step = UnitQuaternion::from_scaled_axis(q.scaled_axis() * t);
    Ok(a * step.to_rotation_matrix().into_inner())
}

/// Linearly interpolated quantile of `values` (`q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (h - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3x4, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ));
        q.to_rotation_matrix().into_inner()
    }

    #[test]
    fn null_vector_of_known_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let basis = DMatrix::from_fn(20, 6, |_, _| rng.random_range(-1.0..1.0));
        // project rows onto the orthogonal complement of v
        let vn = v.normalize();
        let m = &basis - (&basis * &vn) * vn.transpose();
        let sol = solve_homogeneous(&m).unwrap();
        assert!(1.0 - sol.vector.dot(&vn).abs() < 1e-14);
        assert!((sol.vector.norm() - 1.0).abs() < 1e-14);
        assert!(sol.warning.is_none());
    }

    #[test]
    fn underdetermined_system_is_padded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = DMatrix::from_fn(5, 6, |_, _| rng.random_range(-1.0..1.0));
        let sol = solve_homogeneous(&m).unwrap();
        assert!(sol.residual < 1e-12);
        assert_eq!(sol.singular_values.len(), 6);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = DMatrix::from_fn(10, 6, |_, _| rng.random_range(-1.0..1.0));
        m.column_mut(4).fill(0.0);
        m.column_mut(5).fill(0.0);
        let sol = solve_homogeneous(&m).unwrap();
        assert!(matches!(sol.warning, Some(Warning::RankDeficient { .. })));
    }

    #[test]
    fn duplicated_rows_do_not_change_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = DMatrix::from_fn(12, 5, |_, _| rng.random_range(-1.0..1.0));
        let doubled = DMatrix::from_fn(24, 5, |i, j| m[(i % 12, j)]);
        let a = solve_homogeneous(&m).unwrap().vector;
        let b = solve_homogeneous(&doubled).unwrap().vector;
        assert!(1.0 - a.dot(&b).abs() < 1e-12);
    }

    #[test]
    fn too_few_rows_or_zero_matrix() {
        assert!(solve_homogeneous(&DMatrix::zeros(3, 12)).is_err());
        assert!(solve_homogeneous(&DMatrix::zeros(20, 12)).is_err());
    }

    #[test]
    fn scale_correction_examples() {
        let r = Rotation3::from_euler_angles(0.1, 0.2, 0.3).into_inner();
        let mut p = Matrix3x4::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&(r * 0.5));
        assert!((correct_scale(&p).unwrap().1 - 2.0).abs() < 1e-14);

        let mut q = Matrix3x4::zeros();
        q.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, 1.0)));
        assert!((correct_scale(&q).unwrap().1 - 0.75).abs() < 1e-15);

        assert!(matches!(correct_scale(&Matrix3x4::zeros()), Err(PnlError::ZeroBlock(_))));
    }

    #[test]
    fn scale_correction_normalizes_mean_singular_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let p = Matrix3x4::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let (sp, _) = correct_scale(&p).unwrap();
            let mean = sp.fixed_view::<3, 3>(0, 0).into_owned().singular_values().sum() / 3.0;
            assert!((mean - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_rotation_examples() {
        let (r, w) = nearest_rotation(&Matrix3::identity()).unwrap();
        assert!((r - Matrix3::identity()).norm() < 1e-15);
        assert!(w.is_none());

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rot = random_rotation(&mut rng);
        let (r, _) = nearest_rotation(&(rot * 2.0)).unwrap();
        assert!((r - rot).norm() < 1e-14);

        let (_, w) = nearest_rotation(&Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0))).unwrap();
        assert!(matches!(w, Some(Warning::AmbiguousRotation { .. })));
    }

    #[test]
    fn nearest_rotation_beats_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if m.determinant() < 0.0 {
            m = -m;
        }
        let (r, _) = nearest_rotation(&m).unwrap();
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        let best = (r - m).norm();
        for _ in 0..10_000 {
            let cand = random_rotation(&mut rng);
            assert!(best <= (cand - m).norm() + 1e-12);
        }
    }

    #[test]
    fn geodesic_endpoints_and_fraction() {
        let a = Matrix3::identity();
        let b = Rotation3::from_axis_angle(&Vector3::z_axis(), 10f64.to_radians()).into_inner();
        assert!((rotation_geodesic(&a, &b, 0.0).unwrap() - a).norm() < 1e-15);
        assert!((rotation_geodesic(&a, &b, 1.0).unwrap() - b).norm() < 1e-14);
        let mid = rotation_geodesic(&a, &b, 0.3).unwrap();
        let want = Rotation3::from_axis_angle(&Vector3::z_axis(), 3f64.to_radians()).into_inner();
        assert!((mid - want).norm() < 1e-14);

        let half = Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI).into_inner();
        assert_eq!(rotation_geodesic(&a, &half, 0.5), Err(PnlError::GeodesicAmbiguity));
    }

    #[test]
    fn rotation_angle_small_and_large() {
        for deg in [1e-9, 1e-4, 1.0, 90.0, 179.0, 180.0] {
            let r = Rotation3::from_axis_angle(&Vector3::y_axis(), f64::to_radians(deg)).into_inner();
            let got = rotation_angle(&r).to_degrees();
            assert!((got - deg).abs() <= 1e-9 * deg.max(1.0), "{deg} vs {got}");
        }
    }

    #[test]
    fn quantiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(median(&v), 2.5);
        assert!((quantile(&v, 0.9) - 3.7).abs() < 1e-12);
        assert!(quantile(&[], 0.5).is_nan());
    }
}
