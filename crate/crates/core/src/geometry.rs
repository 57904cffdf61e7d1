//! Projective primitives, Plücker lines and the pinhole camera model.
//!
//! Conventions used throughout the crate:
//!
//! * The camera frame is right-handed with X to the right, Y up and Z pointing
//!   *behind* the camera. Points in front of the camera have negative Z.
//! * A pose stores the camera orientation `R` and the camera position `T` in the
//!   world frame. World points map into the camera frame as `R (X - T)`.
//! * Image quantities live in the normalized image plane unless a name says
//!   otherwise (`*_px`).
//! * `vec(.)` is column-major.

use nalgebra::{Matrix3, Matrix3x4, Matrix3x6, Matrix6, Vector2, Vector3, Vector4, Vector6};

use crate::error::{PnlError, Result};

/// Relative magnitude below which a homogeneous vector is treated as zero.
const ZERO_TOL: f64 = 1e-12;

/// Skew-symmetric matrix with `skew(a) * b == a.cross(&b)`.
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Inverse of [`skew`] applied to the skew-symmetric part of `m`.
pub fn vex(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

/// `1 - |cos|` of the angle between two homogeneous coordinate vectors.
///
/// Zero means equal up to a nonzero scale factor.
pub fn homogeneous_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - (dot / (na * nb)).abs()).max(0.0)
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(PnlError::DegenerateInput(format!("{what} has non-finite coordinates")))
    }
}

/// Homogeneous 3D point `(x1, x2, x3, x4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomPoint3(Vector4<f64>);

impl HomPoint3 {
    pub fn new(coords: Vector4<f64>) -> Result<Self> {
        check_finite(coords.as_slice(), "3D point")?;
        if coords.iter().all(|&c| c == 0.0) {
            return Err(PnlError::DegenerateInput("3D point is the zero vector".into()));
        }
        Ok(Self(coords))
    }

    pub fn from_euclidean(p: &Vector3<f64>) -> Self {
        Self(p.push(1.0))
    }

    pub fn coords(&self) -> &Vector4<f64> {
        &self.0
    }

    /// Euclidean coordinates, or `None` for a point at infinity.
    pub fn to_euclidean(&self) -> Option<Vector3<f64>> {
        let w = self.0.w;
        if w.abs() <= ZERO_TOL * self.0.xyz().norm() {
            None
        } else {
            Some(self.0.xyz() / w)
        }
    }
}

/// Homogeneous 2D point in the normalized image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomPoint2(Vector3<f64>);

impl HomPoint2 {
    pub fn new(coords: Vector3<f64>) -> Result<Self> {
        check_finite(coords.as_slice(), "2D point")?;
        if coords.iter().all(|&c| c == 0.0) {
            return Err(PnlError::DegenerateInput("2D point is the zero vector".into()));
        }
        Ok(Self(coords))
    }

    pub fn from_euclidean(p: &Vector2<f64>) -> Self {
        Self(p.push(1.0))
    }

    pub fn coords(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn to_euclidean(&self) -> Option<Vector2<f64>> {
        let w = self.0.z;
        if w.abs() <= ZERO_TOL * self.0.xy().norm() {
            None
        } else {
            Some(self.0.xy() / w)
        }
    }
}

/// Homogeneous 2D line `(l1, l2, l3)`; a point `x` lies on it when `l . x = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line2(Vector3<f64>);

impl Line2 {
    pub fn new(coords: Vector3<f64>) -> Result<Self> {
        check_finite(coords.as_slice(), "2D line")?;
        if coords.iter().all(|&c| c == 0.0) {
            return Err(PnlError::DegenerateInput("2D line is the zero vector".into()));
        }
        Ok(Self(coords))
    }

    /// Line joining two image points.
    pub fn through(a: &HomPoint2, b: &HomPoint2) -> Result<Self> {
        let l = a.0.cross(&b.0);
        if l.norm() <= ZERO_TOL * a.0.norm() * b.0.norm() {
            return Err(PnlError::DegenerateInput("line through two coincident points".into()));
        }
        Ok(Self(l))
    }

    pub fn coords(&self) -> &Vector3<f64> {
        &self.0
    }

    /// Rescaled so that `l1^2 + l2^2 = 1`; `l . x` is then the signed distance of
    /// a point `x = (u, v, 1)`. Lines at infinity are returned with unit norm.
    pub fn normalized(&self) -> Self {
        let n = self.0.xy().norm();
        if n > ZERO_TOL * self.0.norm() {
            Self(self.0 / n)
        } else {
            Self(self.0.normalize())
        }
    }
}

/// 3D line in Plücker coordinates `(U; V)`.
///
/// `V` is the direction and `U` the moment, i.e. the normal of the plane through
/// the line and the origin. `U . V = 0` for every valid line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluckerLine3 {
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl PluckerLine3 {
    pub fn new(u: Vector3<f64>, v: Vector3<f64>) -> Self {
        Self { u, v }
    }

    pub fn from_vector(l: &Vector6<f64>) -> Self {
        Self { u: l.fixed_rows::<3>(0).into_owned(), v: l.fixed_rows::<3>(3).into_owned() }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.u.x, self.u.y, self.u.z, self.v.x, self.v.y, self.v.z)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { u: self.u * s, v: self.v * s }
    }

    /// `|U . V|`, which vanishes for a valid line.
    pub fn bilinear_residual(&self) -> f64 {
        self.u.dot(&self.v).abs()
    }

    /// A line is proper (finite) when its direction does not vanish.
    pub fn is_proper(&self) -> bool {
        self.v.norm() > ZERO_TOL * self.u.norm()
    }

    /// Point of the line closest to the origin.
    pub fn closest_point_to_origin(&self) -> Vector3<f64> {
        self.v.cross(&self.u) / self.v.norm_squared()
    }

    /// Distance of a point from the line.
    pub fn distance_to(&self, p: &Vector3<f64>) -> f64 {
        let d = self.v.normalize();
        let a = self.closest_point_to_origin();
        let r = p - a;
        (r - d * d.dot(&r)).norm()
    }
}

/// Plücker coordinates of the line joining two homogeneous points.
pub fn plucker_from_points(x: &HomPoint3, y: &HomPoint3) -> Result<PluckerLine3> {
    let (xc, yc) = (x.coords(), y.coords());
    let u = xc.xyz().cross(&yc.xyz());
    let v = yc.xyz() * xc.w - xc.xyz() * yc.w;
    let scale = xc.norm() * yc.norm();
    if u.norm() + v.norm() <= ZERO_TOL * scale {
        return Err(PnlError::DegenerateInput("line through two coincident points".into()));
    }
    Ok(PluckerLine3 { u, v })
}

/// Camera orientation `R` and position `T`, both expressed in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
}

impl Pose {
    /// Builds a pose after checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, position: Vector3<f64>) -> Result<Self> {
        check_finite(rotation.as_slice(), "rotation")?;
        check_finite(position.as_slice(), "position")?;
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        let det = rotation.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(PnlError::DegenerateInput(format!(
                "not a rotation matrix (orthogonality defect {ortho:e}, det {det})"
            )));
        }
        Ok(Self { rotation, position })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), position: Vector3::zeros() }
    }

    /// World point expressed in the camera frame.
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * (p - self.position)
    }
}

/// `[R | -R T]`.
pub fn point_projection_matrix(pose: &Pose) -> Matrix3x4<f64> {
    let mut p = Matrix3x4::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&pose.rotation);
    p.set_column(3, &(-pose.rotation * pose.position));
    p
}

/// `[R | R [-T]x]`.
pub fn line_projection_matrix(pose: &Pose) -> Matrix3x6<f64> {
    let mut p = Matrix3x6::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&pose.rotation);
    p.fixed_view_mut::<3, 3>(0, 3).copy_from(&(pose.rotation * skew(&-pose.position)));
    p
}

/// Image of a homogeneous 3D point.
pub fn project_point(pose: &Pose, x: &HomPoint3) -> Result<HomPoint2> {
    let xc = x.coords();
    let img = point_projection_matrix(pose) * xc;
    let scale = xc.xyz().norm() + pose.position.norm() * xc.w.abs();
    if img.norm() <= ZERO_TOL * scale {
        return Err(PnlError::DegenerateInput("point coincides with the camera center".into()));
    }
    Ok(HomPoint2(img))
}

/// Image of a 3D line.
pub fn project_line(pose: &Pose, line: &PluckerLine3) -> Result<Line2> {
    let l = line_projection_matrix(pose) * line.to_vector();
    let scale = line.u.norm() + pose.position.norm() * line.v.norm();
    if l.norm() <= ZERO_TOL * scale {
        return Err(PnlError::DegenerateInput("line passes through the camera center".into()));
    }
    Ok(Line2(l))
}

/// Matrix mapping Plücker coordinates under the point map `x -> A x + t`:
/// `[cof(A) | [t]x A ; 0 | A]`.
pub fn plucker_transform_matrix(a: &Matrix3<f64>, t: &Vector3<f64>) -> Result<Matrix6<f64>> {
    let cof = cofactor(a)?;
    let mut d = Matrix6::zeros();
    d.fixed_view_mut::<3, 3>(0, 0).copy_from(&cof);
    d.fixed_view_mut::<3, 3>(0, 3).copy_from(&(skew(t) * a));
    d.fixed_view_mut::<3, 3>(3, 3).copy_from(a);
    Ok(d)
}

/// Plücker line transformed by the point map `x -> A x + t`.
pub fn transform_plucker(a: &Matrix3<f64>, t: &Vector3<f64>, line: &PluckerLine3) -> Result<PluckerLine3> {
    let cof = cofactor(a)?;
    let av = a * line.v;
    Ok(PluckerLine3 { u: cof * line.u + t.cross(&av), v: av })
}

/// `det(A) A^-T`, the matrix with `(A x) x (A y) = cof(A) (x x y)`.
pub fn cofactor(a: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let det = a.determinant();
    let scale = a.norm().powi(3);
    if det.abs() <= ZERO_TOL * scale || !det.is_finite() {
        return Err(PnlError::SingularMatrix("point transform is not invertible".into()));
    }
    let inv = a.try_inverse().ok_or_else(|| PnlError::SingularMatrix("point transform is not invertible".into()))?;
    Ok(inv.transpose() * det)
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Width and height in pixels, when known.
    pub image_size: Option<(u32, u32)>,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, image_size: Option<(u32, u32)>) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, image_size };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels with the principal point in the image center.
    pub fn centered(focal: f64, width: u32, height: u32) -> Result<Self> {
        Self::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0, Some((width, height)))
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(PnlError::InvalidConfig("focal length must be positive and finite".into()));
        }
        if let Some((w, h)) = self.image_size {
            if w == 0 || h == 0 {
                return Err(PnlError::InvalidConfig("image size must be positive".into()));
            }
            if self.cx < 0.0 || self.cy < 0.0 || self.cx > w as f64 || self.cy > h as f64 {
                return Err(PnlError::InvalidConfig("principal point outside the image".into()));
            }
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn pixel_to_normalized(&self, px: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy)
    }

    pub fn normalized_to_pixel(&self, p: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(p.x * self.fx + self.cx, p.y * self.fy + self.cy)
    }

    pub fn contains_pixel(&self, px: &Vector2<f64>) -> bool {
        match self.image_size {
            Some((w, h)) => px.x >= 0.0 && px.y >= 0.0 && px.x <= w as f64 && px.y <= h as f64,
            None => true,
        }
    }
}

/// Pixel-domain line mapped to the normalized image plane: `K^T l_px`.
pub fn pixel_line_to_normalized(k: &CameraIntrinsics, l_px: &Line2) -> Line2 {
    Line2(k.matrix().transpose() * l_px.coords())
}

/// Inverse of [`pixel_line_to_normalized`]: `K^-T l`.
pub fn normalized_line_to_pixel(k: &CameraIntrinsics, l: &Line2) -> Line2 {
    let c = l.coords();
    let l1 = c.x / k.fx;
    let l2 = c.y / k.fy;
    Line2(Vector3::new(l1, l2, c.z - l1 * k.cx - l2 * k.cy))
}

/// Pixel segment mapped to the normalized image plane.
pub fn pixel_segment_to_normalized(k: &CameraIntrinsics, seg_px: &LineSegment2) -> Result<LineSegment2> {
    LineSegment2::new(k.pixel_to_normalized(&seg_px.a), k.pixel_to_normalized(&seg_px.b))
}

/// Image line segment. Solvers and metrics expect normalized coordinates; pixel
/// segments reuse the type and go through [`pixel_segment_to_normalized`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment2 {
    pub a: Vector2<f64>,
    pub b: Vector2<f64>,
}

impl LineSegment2 {
    pub fn new(a: Vector2<f64>, b: Vector2<f64>) -> Result<Self> {
        check_finite(&[a.x, a.y, b.x, b.y], "2D segment")?;
        if a == b {
            return Err(PnlError::DegenerateInput("segment endpoints coincide".into()));
        }
        Ok(Self { a, b })
    }

    pub fn line(&self) -> Line2 {
        Line2(self.a.push(1.0).cross(&self.b.push(1.0)))
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }
}

/// 3D line segment with finite endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment3 {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
}

impl LineSegment3 {
    pub fn new(a: Vector3<f64>, b: Vector3<f64>) -> Result<Self> {
        check_finite(&[a.x, a.y, a.z, b.x, b.y, b.z], "3D segment")?;
        if a == b {
            return Err(PnlError::DegenerateInput("segment endpoints coincide".into()));
        }
        Ok(Self { a, b })
    }

    pub fn plucker(&self) -> PluckerLine3 {
        PluckerLine3 { u: self.a.cross(&self.b), v: self.b - self.a }
    }
}
