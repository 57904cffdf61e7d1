//! Conditioning transforms applied before building measurement matrices, and
//! their reversion on the estimated projection matrices.

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Matrix4, Matrix6, SMatrix, Vector3};

use crate::error::{PnlError, Result, Warning};
use crate::geometry::{cofactor, plucker_transform_matrix, skew, HomPoint3, Line2, PluckerLine3};

const SQRT2: f64 = std::f64::consts::SQRT_2;
const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Cumulative conditioning stages for the combined method.
///
/// Each level includes all the levels before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PrenormLevel {
    /// Primitives are used as given.
    None,
    /// Points rescaled to `X4 = 1`, Plücker lines to `|V| = sqrt(3)`.
    Unit,
    /// Additionally translate the points' centroid to the origin.
    Center,
    /// Additionally translate to minimize the joint magnitude of point
    /// coordinates and line moments.
    Shift,
    /// Additionally scale so that the per-axis magnitudes balance.
    Scale,
    /// Additionally balance the point and line blocks of the measurement matrix.
    Balance,
}

impl PrenormLevel {
    pub const ALL: [PrenormLevel; 6] = [
        PrenormLevel::None,
        PrenormLevel::Unit,
        PrenormLevel::Center,
        PrenormLevel::Shift,
        PrenormLevel::Scale,
        PrenormLevel::Balance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrenormLevel::None => "none",
            PrenormLevel::Unit => "i",
            PrenormLevel::Center => "i-ii",
            PrenormLevel::Shift => "i-iii",
            PrenormLevel::Scale => "i-iv",
            PrenormLevel::Balance => "i-v",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|l| l.name() == s)
    }
}

/// Affine point map `x -> A x + t` with diagonal positive `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity3 {
    pub scale: Vector3<f64>,
    pub translation: Vector3<f64>,
    /// Set when a scaling step was requested but skipped because the data had no
    /// magnitude to normalize (for example, every line through the origin).
    pub scale_skipped: bool,
}

impl Default for Similarity3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Similarity3 {
    pub fn identity() -> Self {
        Self { scale: Vector3::repeat(1.0), translation: Vector3::zeros(), scale_skipped: false }
    }

    pub fn a(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.scale)
    }

    pub fn is_isotropic(&self) -> bool {
        let s = self.scale;
        (s.x - s.y).abs() <= 1e-15 * s.x && (s.x - s.z).abs() <= 1e-15 * s.x
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Similarity3) -> Similarity3 {
        Similarity3 {
            scale: self.scale.component_mul(&first.scale),
            translation: self.scale.component_mul(&first.translation) + self.translation,
            scale_skipped: self.scale_skipped || first.scale_skipped,
        }
    }

    /// `[A t; 0 1]`.
    pub fn point_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.a());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Matrix acting on Plücker 6-vectors.
    pub fn line_matrix(&self) -> Result<Matrix6<f64>> {
        plucker_transform_matrix(&self.a(), &self.translation)
    }

    pub fn apply_point(&self, x: &HomPoint3) -> Result<HomPoint3> {
        HomPoint3::new(self.point_matrix() * x.coords())
    }

    pub fn apply_line(&self, l: &PluckerLine3) -> Result<PluckerLine3> {
        let cof = cofactor(&self.a())?;
        let av = self.a() * l.v;
        Ok(PluckerLine3 { u: cof * l.u + self.translation.cross(&av), v: av })
    }
}

/// Homography acting on 2D line coordinate vectors, `l' = H l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography2 {
    pub h: Matrix3<f64>,
}

impl Homography2 {
    pub fn identity() -> Self {
        Self { h: Matrix3::identity() }
    }
}

fn euclidean_points(points: &[HomPoint3]) -> Result<Vec<Vector3<f64>>> {
    points
        .iter()
        .map(|p| p.to_euclidean().ok_or_else(|| PnlError::DegenerateInput("3D point at infinity".into())))
        .collect()
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

/// Centers 3D points at the origin and scales them isotropically to mean
/// distance `sqrt(3)`. Outputs have `x4 = 1`.
pub fn prenorm_points_3d(points: &[HomPoint3]) -> Result<(Vec<HomPoint3>, Similarity3)> {
    if points.len() < 2 {
        return Err(PnlError::DegenerateInput("at least two 3D points are needed".into()));
    }
    let pts = euclidean_points(points)?;
    let c = centroid(&pts);
    let spread = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / pts.len() as f64;
    let extent = pts.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if spread <= 1e-12 * extent || spread == 0.0 {
        return Err(PnlError::DegenerateInput("all 3D points coincide".into()));
    }
    let s = SQRT3 / spread;
    let tf = Similarity3 { scale: Vector3::repeat(s), translation: -c * s, scale_skipped: false };
    let out = pts.iter().map(|p| HomPoint3::from_euclidean(&((p - c) * s))).collect();
    Ok((out, tf))
}

/// Treats line vectors as homogeneous 2D points, centers them and scales them
/// isotropically to mean distance `sqrt(2)`. Lines through the image origin map to
/// points at infinity and are left out of the statistics. Outputs have unit norm.
pub fn prenorm_lines_2d(lines: &[Line2]) -> Result<(Vec<Line2>, Homography2)> {
    if lines.len() < 2 {
        return Err(PnlError::DegenerateInput("at least two 2D lines are needed".into()));
    }
    let dual: Vec<(f64, f64)> = lines
        .iter()
        .filter_map(|l| {
            let c = l.coords();
            (c.z.abs() > 1e-12 * c.norm()).then(|| (c.x / c.z, c.y / c.z))
        })
        .collect();
    if dual.is_empty() {
        return Err(PnlError::DegenerateInput("every 2D line passes through the image origin".into()));
    }
    let n = dual.len() as f64;
    let cx = dual.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = dual.iter().map(|p| p.1).sum::<f64>() / n;
    let spread = dual.iter().map(|p| (p.0 - cx).hypot(p.1 - cy)).sum::<f64>() / n;
    let extent = dual.iter().map(|p| p.0.hypot(p.1)).fold(0.0, f64::max);
    if (spread <= 1e-12 * extent || spread == 0.0) && dual.len() == lines.len() {
        return Err(PnlError::DegenerateInput("all 2D lines are identical".into()));
    }
    let s = if spread > 0.0 { SQRT2 / spread } else { 1.0 };
    let h = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let out = lines.iter().map(|l| Line2::new((h * l.coords()).normalize())).collect::<Result<Vec<_>>>()?;
    Ok((out, Homography2 { h }))
}

/// Rescales lines to `|V| = sqrt(3)`.
pub fn unit_direction(lines: &[PluckerLine3]) -> Result<Vec<PluckerLine3>> {
    lines
        .iter()
        .map(|l| {
            let n = l.v.norm();
            if !l.is_proper() || n == 0.0 {
                Err(PnlError::DegenerateInput("3D line with vanishing direction".into()))
            } else {
                Ok(l.scaled(SQRT3 / n))
            }
        })
        .collect()
}

/// Solves `B t = c` for symmetric positive semi-definite `B`, dropping the
/// null directions (minimum-norm solution).
fn pseudo_solve(b: &Matrix3<f64>, c: &Vector3<f64>) -> Vector3<f64> {
    let eig = b.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let mut t = Vector3::zeros();
    for k in 0..3 {
        let lambda = eig.eigenvalues[k];
        if lambda.abs() > 1e-12 * lmax && lambda != 0.0 {
            let q = eig.eigenvectors.column(k);
            t += q * (q.dot(c) / lambda);
        }
    }
    t
}

/// Translation `t` minimizing `sum_i d_i(t)^q`, where `d_i(t)` is the distance of
/// line `i` translated by `t` from the origin. Lines with zero moment are left out.
/// Weiszfeld-type iteration: each step solves the weighted least-squares problem
/// with weights `d_i^(q-2)` frozen at the previous iterate.
pub fn weiszfeld_translation(lines: &[PluckerLine3], q: f64, max_iter: usize) -> Result<Vector3<f64>> {
    let active: Vec<&PluckerLine3> = lines.iter().filter(|l| l.u.norm() > 1e-14 * l.v.norm()).collect();
    if active.is_empty() {
        return Ok(Vector3::zeros());
    }
    let pts: Vec<Vector3<f64>> = active.iter().map(|l| l.closest_point_to_origin()).collect();
    let lo = pts.iter().fold(Vector3::repeat(f64::INFINITY), |a, p| a.inf(p));
    let hi = pts.iter().fold(Vector3::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
    let diameter = (hi - lo).norm().max(pts.iter().map(|p| p.norm()).fold(0.0, f64::max)).max(f64::MIN_POSITIVE);

    // d_i(t) |V_i| = |U_i + t x V_i| = |U_i - [V_i]x t|
    let mut t = Vector3::zeros();
    for _ in 0..max_iter {
        let mut b = Matrix3::zeros();
        let mut c = Vector3::zeros();
        for l in &active {
            let vx = skew(&l.v);
            let w = if q == 2.0 {
                1.0
            } else {
                let d = (l.u - vx * t).norm() / l.v.norm();
                d.max(1e-12 * diameter).powf(q - 2.0)
            };
            b += vx.transpose() * vx * w;
            c += vx.transpose() * l.u * w;
        }
        let next = pseudo_solve(&b, &c);
        let step = (next - t).norm();
        t = next;
        if step < 1e-10 * diameter {
            return Ok(t);
        }
    }
    Err(PnlError::NonConvergence { what: "Weiszfeld translation", iterations: max_iter })
}

/// Plücker lines rescaled to `|V| = sqrt(3)`, translated to minimize the sum of
/// squared distances from the origin, then scaled isotropically so that the mean
/// `|U|` equals `sqrt(3)`.
pub fn prenorm_plucker_lines(lines: &[PluckerLine3]) -> Result<(Vec<PluckerLine3>, Similarity3)> {
    if lines.len() < 2 {
        return Err(PnlError::DegenerateInput("at least two 3D lines are needed".into()));
    }
    let unit = unit_direction(lines)?;
    let t = weiszfeld_translation(&unit, 2.0, 100)?;
    let shift = Similarity3 { translation: t, ..Similarity3::identity() };
    let moved: Vec<PluckerLine3> = unit.iter().map(|l| shift.apply_line(l)).collect::<Result<_>>()?;

    let mean_u = moved.iter().map(|l| l.u.norm()).sum::<f64>() / moved.len() as f64;
    let scale_of_v = SQRT3;
    let (s, skipped) = if mean_u > 1e-12 * scale_of_v { (scale_of_v / mean_u, false) } else { (1.0, true) };
    let scale = Similarity3 { scale: Vector3::repeat(s), translation: Vector3::zeros(), scale_skipped: skipped };
    let tf = scale.compose(&shift);
    let out = moved.iter().map(|l| scale.apply_line(l)).collect::<Result<Vec<_>>>().and_then(|v| unit_direction(&v))?;
    Ok((out, tf))
}

/// Transform applied at each stage of the combined conditioning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageLog {
    pub center: Option<Similarity3>,
    pub shift: Option<Similarity3>,
    pub scale: Option<Similarity3>,
}

#[derive(Debug, Clone)]
pub struct CombinedPrenorm {
    pub points: Vec<HomPoint3>,
    pub lines: Vec<PluckerLine3>,
    pub transform: Similarity3,
    pub log: StageLog,
}

/// Translation minimizing `sum |X_i + t|^2 + sum |U_j + t x V_j|^2`.
pub fn joint_shift(points: &[Vector3<f64>], lines: &[PluckerLine3]) -> Vector3<f64> {
    let mut b = Matrix3::identity() * points.len() as f64;
    let mut c = -points.iter().sum::<Vector3<f64>>();
    for l in lines {
        let vx = skew(&l.v);
        b += vx.transpose() * vx;
        c += vx.transpose() * l.u;
    }
    pseudo_solve(&b, &c)
}

/// Per-axis factors `a_k = (mean|X4| + mean|V|) / (mean|X_k| + mean|U_k|)`.
pub fn axis_balance_factors(points: &[Vector3<f64>], lines: &[PluckerLine3]) -> Vector3<f64> {
    let np = points.len().max(1) as f64;
    let nl = lines.len().max(1) as f64;
    let mean_w = if points.is_empty() { 0.0 } else { 1.0 };
    let mean_v = lines.iter().map(|l| l.v.abs().sum()).sum::<f64>() / (3.0 * nl);
    Vector3::from_fn(|k, _| {
        let mx = points.iter().map(|p| p[k].abs()).sum::<f64>() / np;
        let mu = lines.iter().map(|l| l.u[k].abs()).sum::<f64>() / nl;
        let den = mx + mu;
        if den > 0.0 {
            (mean_w + mean_v) / den
        } else {
            f64::NAN
        }
    })
}

/// Conditioning of points and lines for the combined method, up to `level`.
///
/// With `anisotropic` the stage-(iv) scale uses the per-axis factors directly;
/// otherwise their geometric mean.
pub fn prenorm_combined(
    points: &[HomPoint3],
    lines: &[PluckerLine3],
    level: PrenormLevel,
    anisotropic: bool,
) -> Result<CombinedPrenorm> {
    if points.is_empty() || lines.is_empty() {
        return Err(PnlError::DegenerateInput("combined conditioning needs points and lines".into()));
    }
    if level == PrenormLevel::None {
        return Ok(CombinedPrenorm {
            points: points.to_vec(),
            lines: lines.to_vec(),
            transform: Similarity3::identity(),
            log: StageLog::default(),
        });
    }

    let mut pts = euclidean_points(points)?;
    let mut lns = unit_direction(lines)?;
    let mut total = Similarity3::identity();
    let mut log = StageLog::default();

    let mut push = |tf: Similarity3, pts: &mut Vec<Vector3<f64>>, lns: &mut Vec<PluckerLine3>| -> Result<()> {
        for p in pts.iter_mut() {
            *p = p.component_mul(&tf.scale) + tf.translation;
        }
        let moved = lns.iter().map(|l| tf.apply_line(l)).collect::<Result<Vec<_>>>()?;
        *lns = unit_direction(&moved)?;
        total = tf.compose(&total);
        Ok(())
    };

    if level >= PrenormLevel::Center {
        let tf = Similarity3 { translation: -centroid(&pts), ..Similarity3::identity() };
        push(tf, &mut pts, &mut lns)?;
        log.center = Some(tf);
    }
    if level >= PrenormLevel::Shift {
        let tf = Similarity3 { translation: joint_shift(&pts, &lns), ..Similarity3::identity() };
        push(tf, &mut pts, &mut lns)?;
        log.shift = Some(tf);
    }
    if level >= PrenormLevel::Scale {
        let a = axis_balance_factors(&pts, &lns);
        let tf = if a.iter().all(|v| v.is_finite() && *v > 0.0) {
            let scale = if anisotropic { a } else { Vector3::repeat(a.product().cbrt()) };
            Similarity3 { scale, translation: Vector3::zeros(), scale_skipped: false }
        } else {
            Similarity3 { scale_skipped: true, ..Similarity3::identity() }
        };
        push(tf, &mut pts, &mut lns)?;
        log.scale = Some(tf);
    }

    Ok(CombinedPrenorm {
        points: pts.iter().map(HomPoint3::from_euclidean).collect(),
        lines: lns,
        transform: total,
        log,
    })
}

/// Row weights `(a_point, a_line)` equalizing the Frobenius norms of the point and
/// line blocks of a combined measurement matrix; `a_point * a_line = 1`.
pub fn balance_measurement_blocks(point_rows: &DMatrix<f64>, line_rows: &DMatrix<f64>) -> Result<(f64, f64)> {
    let np = point_rows.norm();
    let nl = line_rows.norm();
    if np == 0.0 {
        return Err(PnlError::ZeroBlock("point rows of the measurement matrix".into()));
    }
    if nl == 0.0 {
        return Err(PnlError::ZeroBlock("line rows of the measurement matrix".into()));
    }
    Ok(((nl / np).sqrt(), (np / nl).sqrt()))
}

/// `H^T P T4`: point projection matrix estimated on conditioned data mapped back to
/// the original coordinates.
pub fn revert_prenorm_point_matrix(p: &Matrix3x4<f64>, t3d: &Similarity3, t2d: &Homography2) -> Matrix3x4<f64> {
    t2d.h.transpose() * p * t3d.point_matrix()
}

/// `H^-1 P D`: line projection matrix mapped back to the original coordinates.
pub fn revert_prenorm_line_matrix(
    p: &SMatrix<f64, 3, 6>,
    t3d: &Similarity3,
    t2d: &Homography2,
) -> Result<SMatrix<f64, 3, 6>> {
    let h_inv = t2d.h.try_inverse().ok_or_else(|| PnlError::SingularMatrix("2D line conditioning".into()))?;
    Ok(h_inv * p * t3d.line_matrix()?)
}

/// Reverts a combined 3×7 estimate block by block, reconciling the scale of the
/// two left 3×3 blocks by least squares.
pub fn revert_prenorm_combined(
    p: &SMatrix<f64, 3, 7>,
    transform: &Similarity3,
) -> Result<(SMatrix<f64, 3, 7>, Option<Warning>)> {
    let mut pp = Matrix3x4::zeros();
    pp.fixed_view_mut::<3, 4>(0, 0).copy_from(&p.fixed_view::<3, 4>(0, 0));
    let mut pl = SMatrix::<f64, 3, 6>::zeros();
    pl.fixed_view_mut::<3, 3>(0, 0).copy_from(&p.fixed_view::<3, 3>(0, 0));
    pl.fixed_view_mut::<3, 3>(0, 3).copy_from(&p.fixed_view::<3, 3>(0, 4));

    let rp = pp * transform.point_matrix();
    let rl = pl * transform.line_matrix()?;
    let qp = rp.fixed_view::<3, 3>(0, 0).into_owned();
    let ql = rl.fixed_view::<3, 3>(0, 0).into_owned();
    let qq = ql.norm_squared();
    if qq == 0.0 {
        return Err(PnlError::ZeroBlock("left block of the combined estimate".into()));
    }
    let alpha = ql.dot(&qp) / qq;
    let relative = (ql * alpha - qp).norm() / qp.norm().max(f64::MIN_POSITIVE);
    let warning = (relative > 1e-6).then_some(Warning::ReconciliationResidual { relative });

    let mut out = SMatrix::<f64, 3, 7>::zeros();
    out.fixed_view_mut::<3, 4>(0, 0).copy_from(&rp);
    out.fixed_view_mut::<3, 3>(0, 4).copy_from(&(rl.fixed_view::<3, 3>(0, 3) * alpha));
    Ok((out, warning))
}
