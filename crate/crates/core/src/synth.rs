//! Random line scenes observed by a virtual pinhole camera.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::correspondence::CorrespondenceSet;
use crate::error::{PnlError, Result};
use crate::geometry::{pixel_segment_to_normalized, CameraIntrinsics, LineSegment2, LineSegment3, PluckerLine3, Pose};

/// Camera placements tried before giving up on the field-of-view constraint.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Structural degeneracy imposed on the generated lines. Directions and
/// concurrency are forced by turning random segments about their midpoints, so
/// segment lengths are distributed as in unconstrained scenes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SingularMode {
    #[default]
    None,
    /// All line directions drawn from `k` random directions, mutually orthogonal
    /// when `orthogonal` is set.
    Directions { k: usize, orthogonal: bool },
    /// The cube squashed along z by `ratio`.
    Flatten(f64),
    /// This fraction of the lines passes through one common interior point.
    Concurrent(f64),
}

impl SingularMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SingularMode::None => Ok(()),
            SingularMode::Directions { k, orthogonal } => {
                if k == 0 || (orthogonal && k > 3) {
                    Err(PnlError::InvalidConfig(format!("cannot draw {k} directions (orthogonal: {orthogonal})")))
                } else {
                    Ok(())
                }
            }
            SingularMode::Flatten(r) => {
                if r > 0.0 && r <= 1.0 {
                    Ok(())
                } else {
                    Err(PnlError::InvalidConfig(format!("flatten ratio {r} outside (0, 1]")))
                }
            }
            SingularMode::Concurrent(f) => {
                if (0.0..=1.0).contains(&f) {
                    Ok(())
                } else {
                    Err(PnlError::InvalidConfig(format!("concurrent fraction {f} outside [0, 1]")))
                }
            }
        }
    }
}

impl fmt::Display for SingularMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SingularMode::None => f.write_str("none"),
            SingularMode::Directions { k, orthogonal: false } => write!(f, "directions:{k}"),
            SingularMode::Directions { k, orthogonal: true } => write!(f, "directions:{k}:orthogonal"),
            SingularMode::Flatten(r) => write!(f, "flatten:{r}"),
            SingularMode::Concurrent(c) => write!(f, "concurrent:{c}"),
        }
    }
}

impl FromStr for SingularMode {
    type Err = PnlError;

    /// `none`, `directions:<k>[:orthogonal]`, `flatten:<ratio>` or `concurrent:<fraction>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || PnlError::InvalidConfig(format!("unrecognized singular mode `{s}`"));
        let number = |v: &str| v.parse::<f64>().map_err(|_| bad());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let mode = match parts.as_slice() {
            ["none"] => SingularMode::None,
            ["directions", k] => SingularMode::Directions { k: k.parse().map_err(|_| bad())?, orthogonal: false },
            ["directions", k, "orthogonal"] => {
                SingularMode::Directions { k: k.parse().map_err(|_| bad())?, orthogonal: true }
            }
            ["flatten", r] => SingularMode::Flatten(number(r)?),
            ["concurrent", c] => SingularMode::Concurrent(number(c)?),
            _ => return Err(bad()),
        };
        mode.validate()?;
        Ok(mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    /// Number of line segments `m`.
    pub lines: usize,
    /// Edge length of the cube holding the endpoints.
    pub cube_side: f64,
    /// Center of the cube in world coordinates.
    pub cube_center: Vector3<f64>,
    /// Distance of the camera from the cube center.
    pub camera_distance: f64,
    pub intrinsics: CameraIntrinsics,
    /// Standard deviation of the endpoint noise, pixels.
    pub sigma: f64,
    pub seed: u64,
    pub singular: SingularMode,
    /// Share of the lines whose endpoints get extra gross noise.
    pub outlier_fraction: f64,
    /// Standard deviation of the gross noise, pixels.
    pub outlier_sigma: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            lines: 100,
            cube_side: 10.0,
            cube_center: Vector3::zeros(),
            camera_distance: 25.0,
            intrinsics: CameraIntrinsics { fx: 800.0, fy: 800.0, cx: 320.0, cy: 240.0, image_size: Some((640, 480)) },
            sigma: 0.0,
            seed: 0,
            singular: SingularMode::None,
            outlier_fraction: 0.0,
            outlier_sigma: 100.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PnlError::InvalidConfig(msg));
        if self.lines < 3 {
            return bad(format!("need at least 3 lines, got {}", self.lines));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("noise sigma {} must be finite and non-negative", self.sigma));
        }
        if !(self.outlier_sigma >= 0.0 && self.outlier_sigma.is_finite()) {
            return bad(format!("outlier sigma {} must be finite and non-negative", self.outlier_sigma));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad(format!("outlier fraction {} outside [0, 1)", self.outlier_fraction));
        }
        if !(self.cube_side > 0.0 && self.cube_side.is_finite()) {
            return bad(format!("cube side {} must be positive", self.cube_side));
        }
        if !(self.camera_distance > 0.0 && self.camera_distance.is_finite()) {
            return bad(format!("camera distance {} must be positive", self.camera_distance));
        }
        if !self.cube_center.iter().all(|v| v.is_finite()) {
            return bad("cube center must be finite".into());
        }
        self.intrinsics.validate()?;
        self.singular.validate()
    }

    /// Number of lines receiving gross noise.
    pub fn outlier_count(&self) -> usize {
        (self.outlier_fraction * self.lines as f64).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub pose: Pose,
    pub segments3: Vec<LineSegment3>,
    /// Exact projections, pixels.
    pub pixels_clean: Vec<LineSegment2>,
    /// Observed endpoints, pixels.
    pub pixels_noisy: Vec<LineSegment2>,
    /// Exact projections in normalized image coordinates.
    pub image_clean: Vec<LineSegment2>,
    /// Observations in normalized image coordinates.
    pub image_noisy: Vec<LineSegment2>,
    /// Lines that received gross noise.
    pub outliers: Vec<bool>,
    /// Pairings built from the 3D segments and the noisy observations.
    pub correspondences: CorrespondenceSet,
}

impl SyntheticScene {
    pub fn lines3(&self) -> Vec<PluckerLine3> {
        self.segments3.iter().map(LineSegment3::plucker).collect()
    }
}

/// Scene drawn from a generator seeded with `config.seed`.
pub fn generate_scene(config: &SceneConfig) -> Result<SyntheticScene> {
    generate_scene_with(config, &mut ChaCha8Rng::seed_from_u64(config.seed))
}

/// Scene drawn from `rng`; `config.seed` is recorded but not used.
pub fn generate_scene_with<R: Rng>(config: &SceneConfig, rng: &mut R) -> Result<SyntheticScene> {
    config.validate()?;
    let segments3 = random_segments(config, rng)?;
    let k = &config.intrinsics;

    let mut placed = None;
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let pose = random_camera(config, rng)?;
        let projected: Option<Vec<(Vector2<f64>, Vector2<f64>)>> =
            segments3.iter().map(|s| Some((project_pixel(&pose, k, &s.a)?, project_pixel(&pose, k, &s.b)?))).collect();
        if let Some(px) = projected {
            placed = Some((pose, px));
            break;
        }
    }
    let (pose, projected) = placed.ok_or(PnlError::RetryExhausted(MAX_PLACEMENT_ATTEMPTS))?;

    let noise = Normal::new(0.0, config.sigma).map_err(|e| PnlError::InvalidConfig(e.to_string()))?;
    let gross = Normal::new(0.0, config.outlier_sigma).map_err(|e| PnlError::InvalidConfig(e.to_string()))?;
    let mut outliers = vec![false; config.lines];
    for i in sample(rng, config.lines, config.outlier_count()) {
        outliers[i] = true;
    }

    let mut pixels_clean = Vec::with_capacity(config.lines);
    let mut pixels_noisy = Vec::with_capacity(config.lines);
    for (i, (a, b)) in projected.into_iter().enumerate() {
        let mut perturb = |p: Vector2<f64>| {
            let mut q = p + Vector2::new(noise.sample(rng), noise.sample(rng));
            if outliers[i] {
                q += Vector2::new(gross.sample(rng), gross.sample(rng));
            }
            q
        };
        let (na, nb) = (perturb(a), perturb(b));
        pixels_clean.push(LineSegment2::new(a, b)?);
        pixels_noisy.push(LineSegment2::new(na, nb)?);
    }
    let to_image = |segs: &[LineSegment2]| -> Result<Vec<LineSegment2>> {
        segs.iter().map(|s| pixel_segment_to_normalized(k, s)).collect()
    };
    let image_clean = to_image(&pixels_clean)?;
    let image_noisy = to_image(&pixels_noisy)?;
    let correspondences = CorrespondenceSet::from_segments(&segments3, &image_noisy)?;

    Ok(SyntheticScene {
        config: *config,
        pose,
        segments3,
        pixels_clean,
        pixels_noisy,
        image_clean,
        image_noisy,
        outliers,
        correspondences,
    })
}

/// Pixel image of `p`, or `None` when it is behind the camera or outside the image.
fn project_pixel(pose: &Pose, k: &CameraIntrinsics, p: &Vector3<f64>) -> Option<Vector2<f64>> {
    let c = pose.to_camera(p);
    if c.z >= 0.0 {
        return None;
    }
    let px = k.normalized_to_pixel(&Vector2::new(c.x / c.z, c.y / c.z));
    k.contains_pixel(&px).then_some(px)
}

fn unit_vector<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Segment `ab` turned about its midpoint to direction `d`, keeping its length;
/// `None` if an endpoint leaves the cube of half side `h`.
fn turn_about_midpoint(
    a: Vector3<f64>,
    b: Vector3<f64>,
    d: Vector3<f64>,
    h: f64,
) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let (mid, half) = ((a + b) / 2.0, (b - a).norm() / 2.0);
    let ends = (mid - d * half, mid + d * half);
    (ends.0.amax() <= h && ends.1.amax() <= h).then_some(ends)
}

/// Camera on a sphere around the cube center, looking at it, with random roll.
fn random_camera<R: Rng>(config: &SceneConfig, rng: &mut R) -> Result<Pose> {
    let back = unit_vector(rng);
    let side = loop {
        let r = unit_vector(rng);
        let s = r - back * r.dot(&back);
        if s.norm() > 1e-3 {
            break s.normalize();
        }
    };
    let up = back.cross(&side);
    let rotation = Matrix3::from_rows(&[side.transpose(), up.transpose(), back.transpose()]);
    Pose::new(rotation, config.cube_center + back * config.camera_distance)
}

fn random_segments<R: Rng>(config: &SceneConfig, rng: &mut R) -> Result<Vec<LineSegment3>> {
    let h = config.cube_side / 2.0;
    let in_cube = |rng: &mut R| Vector3::from_fn(|_, _| rng.random_range(-h..h));
    let min_len = 1e-3 * config.cube_side;
    let m = config.lines;

    let mut ends: Vec<(Vector3<f64>, Vector3<f64>)> = Vec::with_capacity(m);
    match config.singular {
        SingularMode::None | SingularMode::Flatten(_) => {
            while ends.len() < m {
                let (a, b) = (in_cube(rng), in_cube(rng));
                if (b - a).norm() > min_len {
                    ends.push((a, b));
                }
            }
        }
        SingularMode::Directions { k, orthogonal } => {
            let dirs: Vec<Vector3<f64>> = if orthogonal {
                let x = unit_vector(rng);
                let y = loop {
                    let r = unit_vector(rng);
                    let s = r - x * r.dot(&x);
                    if s.norm() > 1e-3 {
                        break s.normalize();
                    }
                };
                [x, y, x.cross(&y)][..k].to_vec()
            } else {
                (0..k).map(|_| unit_vector(rng)).collect()
            };
            while ends.len() < m {
                let d = dirs[ends.len() % k];
                let (a, b) = (in_cube(rng), in_cube(rng));
                if (b - a).norm() > min_len {
                    ends.extend(turn_about_midpoint(a, b, d, h));
                }
            }
        }
        SingularMode::Concurrent(f) => {
            let common = Vector3::from_fn(|_, _| rng.random_range(-h / 2.0..h / 2.0));
            let forced = (f * m as f64).round() as usize;
            while ends.len() < m {
                let (a, b) = (in_cube(rng), in_cube(rng));
                let towards = common - (a + b) / 2.0;
                if (b - a).norm() <= min_len || towards.norm() <= min_len {
                    continue;
                }
                if ends.len() < forced {
                    ends.extend(turn_about_midpoint(a, b, towards.normalize(), h));
                } else {
                    ends.push((a, b));
                }
            }
        }
    }
    if let SingularMode::Flatten(r) = config.singular {
        for (a, b) in ends.iter_mut() {
            a.z *= r;
            b.z *= r;
        }
    }
    ends.into_iter().map(|(a, b)| LineSegment3::new(a + config.cube_center, b + config.cube_center)).collect()
}
