//! Line-correspondence datasets on disk and their evaluation against ground truth.
//!
//! The text format is line oriented, whitespace separated and UTF-8:
//!
//! ```text
//! pnl-dataset 1
//! K <fx> <fy> <cx> <cy>                      default intrinsics, pixels
//! L3 <id> <x1> <y1> <z1> <x2> <y2> <z2>      3D segment, world units
//! IMG <image-id>                             starts an image block
//! K <fx> <fy> <cx> <cy>                      optional, this image only
//! GT <p11> <p12> ... <p34>                   optional ground-truth projection, row major
//! C <l3-id> <u1> <v1> <u2> <v2>              observed segment in pixels
//! ```
//!
//! `#` starts a comment. The ground-truth projection is `K [R | -R T]` up to a
//! non-zero scale; the pose is recovered from it when the file is loaded.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::aor::{aor_estimate, AorConfig};
use crate::bench::ErrorStats;
use crate::correspondence::CorrespondenceSet;
use crate::dlt::measurement::check_counts;
use crate::dlt::{estimate_pose, Method, SolverConfig};
use crate::error::{ParseError, PnlError};
use crate::geometry::{
    pixel_segment_to_normalized, point_projection_matrix, CameraIntrinsics, LineSegment2, LineSegment3, Pose,
};
use crate::linalg::{mean, nearest_rotation};
use crate::metrics::{pose_error, PoseError, Weighting};
use crate::records::{fmt_real, Table};
use crate::synth::SyntheticScene;

pub const HEADER: &str = "pnl-dataset 1";

/// Largest relative deviation from a scaled rotation tolerated in `K^-1 P`.
pub const GT_ORTHONORMALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("line {line}: image `{image}` refers to unknown 3D segment `{id}`")]
    DanglingId { line: usize, image: String, id: String },

    #[error("line {line}: duplicate {what} id `{id}`")]
    DuplicateId { line: usize, what: &'static str, id: String },

    #[error("line {line}: non-finite number `{token}`")]
    NonFinite { line: usize, token: String },

    #[error("image `{image}` has no intrinsics")]
    MissingIntrinsics { image: String },

    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment3Record {
    pub id: String,
    pub segment: LineSegment3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub line_id: String,
    /// Endpoints in pixels.
    pub segment: LineSegment2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `K [R | -R T]` up to scale, as stored.
    pub projection: Matrix3x4<f64>,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetImage {
    pub id: String,
    pub intrinsics: CameraIntrinsics,
    pub ground_truth: Option<GroundTruth>,
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub segments: Vec<Segment3Record>,
    pub images: Vec<DatasetImage>,
}

/// Pose from a pixel projection matrix `P ~ K [R | -R T]`.
pub fn factor_projection(k: &CameraIntrinsics, p: &Matrix3x4<f64>) -> Result<Pose, String> {
    let kinv = k.matrix().try_inverse().ok_or("singular intrinsics")?;
    let m = kinv * p;
    let left: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let s = left.determinant().cbrt();
    if !(s.is_finite() && s != 0.0) {
        return Err("left 3x3 block of K^-1 P is singular".into());
    }
    let scaled = left / s;
    let (r, _) = nearest_rotation(&scaled).map_err(|e| e.to_string())?;
    let deviation = (scaled - r).norm() / 3f64.sqrt();
    if deviation > GT_ORTHONORMALITY_TOL {
        return Err(format!("K^-1 P is not a scaled rotation (deviation {deviation:e})"));
    }
    let t = -r.transpose() * (m.column(3) / s);
    Pose::new(r, t).map_err(|e| e.to_string())
}

impl Dataset {
    /// Single-image dataset holding the noisy observations and the true pose of `scene`.
    pub fn from_scene(scene: &SyntheticScene, name: &str) -> Self {
        let k = CameraIntrinsics { image_size: None, ..scene.config.intrinsics };
        let projection = k.matrix() * point_projection_matrix(&scene.pose);
        let pose = factor_projection(&k, &projection).expect("projection of a valid pose");
        let segments: Vec<Segment3Record> = scene
            .segments3
            .iter()
            .enumerate()
            .map(|(i, s)| Segment3Record { id: format!("l{i}"), segment: *s })
            .collect();
        let observations = scene
            .pixels_noisy
            .iter()
            .zip(&segments)
            .map(|(s, r)| Observation { line_id: r.id.clone(), segment: *s })
            .collect();
        Dataset {
            name: name.to_string(),
            segments,
            images: vec![DatasetImage {
                id: "0".into(),
                intrinsics: k,
                ground_truth: Some(GroundTruth { projection, pose }),
                observations,
            }],
        }
    }

    pub fn segment(&self, id: &str) -> Option<&LineSegment3> {
        self.segments.iter().find(|s| s.id == id).map(|s| &s.segment)
    }
}

struct Cursor<'a> {
    line: usize,
    tokens: std::str::SplitWhitespace<'a>,
}

impl<'a> Cursor<'a> {
    fn word(&mut self, what: &str) -> Result<&'a str, DatasetError> {
        self.tokens.next().ok_or_else(|| ParseError::new(self.line, format!("missing {what}")).into())
    }

    fn real(&mut self, what: &str) -> Result<f64, DatasetError> {
        let t = self.word(what)?;
        let v: f64 = t.parse().map_err(|_| ParseError::new(self.line, format!("invalid {what} `{t}`")))?;
        if !v.is_finite() {
            return Err(DatasetError::NonFinite { line: self.line, token: t.to_string() });
        }
        Ok(v)
    }

    fn reals<const N: usize>(&mut self, what: &str) -> Result<[f64; N], DatasetError> {
        let mut out = [0.0; N];
        for v in out.iter_mut() {
            *v = self.real(what)?;
        }
        Ok(out)
    }

    fn end(&mut self) -> Result<(), DatasetError> {
        match self.tokens.next() {
            None => Ok(()),
            Some(t) => Err(ParseError::new(self.line, format!("unexpected trailing token `{t}`")).into()),
        }
    }
}

struct PendingImage {
    id: String,
    intrinsics: Option<CameraIntrinsics>,
    ground_truth: Option<(usize, Matrix3x4<f64>)>,
    observations: Vec<(usize, Observation)>,
}

/// Parses and validates dataset text. `name` becomes the dataset name.
pub fn parse_dataset(text: &str, name: &str) -> Result<Dataset, DatasetError> {
    let mut header_seen = false;
    let mut default_k: Option<CameraIntrinsics> = None;
    let mut segments: Vec<Segment3Record> = Vec::new();
    let mut segment_ids: HashSet<String> = HashSet::new();
    let mut images: Vec<PendingImage> = Vec::new();
    let mut image_ids: HashSet<String> = HashSet::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if !header_seen {
            if content.split_whitespace().collect::<Vec<_>>() != HEADER.split(' ').collect::<Vec<_>>() {
                return Err(ParseError::new(line, format!("expected `{HEADER}`")).into());
            }
            header_seen = true;
            continue;
        }
        let mut c = Cursor { line, tokens: content.split_whitespace() };
        let keyword = c.word("keyword")?;
        match keyword {
            "K" => {
                let [fx, fy, cx, cy] = c.reals::<4>("intrinsic")?;
                c.end()?;
                let k = CameraIntrinsics::new(fx, fy, cx, cy, None)
                    .map_err(|e| DatasetError::Invalid { line, reason: e.to_string() })?;
                let slot = match images.last_mut() {
                    Some(img) => &mut img.intrinsics,
                    None => &mut default_k,
                };
                if slot.replace(k).is_some() {
                    return Err(ParseError::new(line, "intrinsics given twice").into());
                }
            }
            "L3" => {
                let id = c.word("segment id")?.to_string();
                let [x1, y1, z1, x2, y2, z2] = c.reals::<6>("coordinate")?;
                c.end()?;
                let segment = LineSegment3::new(Vector3::new(x1, y1, z1), Vector3::new(x2, y2, z2))
                    .map_err(|e| DatasetError::Invalid { line, reason: e.to_string() })?;
                if !segment_ids.insert(id.clone()) {
                    return Err(DatasetError::DuplicateId { line, what: "3D segment", id });
                }
                segments.push(Segment3Record { id, segment });
            }
            "IMG" => {
                let id = c.word("image id")?.to_string();
                c.end()?;
                if !image_ids.insert(id.clone()) {
                    return Err(DatasetError::DuplicateId { line, what: "image", id });
                }
                images.push(PendingImage { id, intrinsics: None, ground_truth: None, observations: Vec::new() });
            }
            "GT" => {
                let v = c.reals::<12>("projection entry")?;
                c.end()?;
                let img = images.last_mut().ok_or_else(|| ParseError::new(line, "GT outside an image block"))?;
                if img.ground_truth.replace((line, Matrix3x4::from_row_slice(&v))).is_some() {
                    return Err(ParseError::new(line, "ground truth given twice").into());
                }
            }
            "C" => {
                let line_id = c.word("segment id")?.to_string();
                let [u1, v1, u2, v2] = c.reals::<4>("pixel coordinate")?;
                c.end()?;
                let segment = LineSegment2::new(Vector2::new(u1, v1), Vector2::new(u2, v2))
                    .map_err(|e| DatasetError::Invalid { line, reason: e.to_string() })?;
                let img = images.last_mut().ok_or_else(|| ParseError::new(line, "C outside an image block"))?;
                img.observations.push((line, Observation { line_id, segment }));
            }
            other => return Err(ParseError::new(line, format!("unknown record `{other}`")).into()),
        }
    }
    if !header_seen {
        return Err(ParseError::new(1, format!("expected `{HEADER}`")).into());
    }

    let mut out = Vec::with_capacity(images.len());
    for img in images {
        let intrinsics =
            img.intrinsics.or(default_k).ok_or(DatasetError::MissingIntrinsics { image: img.id.clone() })?;
        let ground_truth = match img.ground_truth {
            None => None,
            Some((line, projection)) => {
                let pose = factor_projection(&intrinsics, &projection)
                    .map_err(|reason| DatasetError::Invalid { line, reason })?;
                Some(GroundTruth { projection, pose })
            }
        };
        let mut observations = Vec::with_capacity(img.observations.len());
        for (line, obs) in img.observations {
            if !segment_ids.contains(&obs.line_id) {
                return Err(DatasetError::DanglingId { line, image: img.id.clone(), id: obs.line_id });
            }
            observations.push(obs);
        }
        out.push(DatasetImage { id: img.id, intrinsics, ground_truth, observations });
    }
    Ok(Dataset { name: name.to_string(), segments, images: out })
}

/// Reads a dataset file; the dataset is named after the file stem.
pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| DatasetError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_dataset(&text, &name)
}

fn k_line(k: &CameraIntrinsics) -> String {
    format!("K {} {} {} {}", k.fx, k.fy, k.cx, k.cy)
}

/// Canonical text of `dataset`. Intrinsics shared by all images are written once.
pub fn write_dataset(dataset: &Dataset) -> String {
    let mut out = format!("{HEADER}\n# {}\n", dataset.name);
    let shared = dataset.images.first().map(|i| i.intrinsics).filter(|k| {
        dataset.images.iter().all(|i| {
            i.intrinsics.fx == k.fx && i.intrinsics.fy == k.fy && i.intrinsics.cx == k.cx && i.intrinsics.cy == k.cy
        })
    });
    if let Some(k) = &shared {
        out.push_str(&k_line(k));
        out.push('\n');
    }
    for s in &dataset.segments {
        let (a, b) = (s.segment.a, s.segment.b);
        out.push_str(&format!("L3 {} {} {} {} {} {} {}\n", s.id, a.x, a.y, a.z, b.x, b.y, b.z));
    }
    for img in &dataset.images {
        out.push_str(&format!("IMG {}\n", img.id));
        if shared.is_none() {
            out.push_str(&k_line(&img.intrinsics));
            out.push('\n');
        }
        if let Some(gt) = &img.ground_truth {
            let v: Vec<String> = gt.projection.transpose().iter().map(|x| x.to_string()).collect();
            out.push_str(&format!("GT {}\n", v.join(" ")));
        }
        for o in &img.observations {
            let (a, b) = (o.segment.a, o.segment.b);
            out.push_str(&format!("C {} {} {} {} {}\n", o.line_id, a.x, a.y, b.x, b.y));
        }
    }
    out
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    std::fs::write(path, write_dataset(dataset))
        .map_err(|e| DatasetError::Io { path: path.display().to_string(), message: e.to_string() })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageOutcome {
    /// Too few correspondences for the method.
    Skipped(String),
    /// The solver returned an error.
    Failed(String),
    Estimated {
        pose: Pose,
        /// Present when the image has ground truth.
        error: Option<PoseError>,
        warnings: usize,
        inliers: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEvaluation {
    pub image: String,
    pub method: Method,
    pub outcome: ImageOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub estimated: usize,
    pub skipped: usize,
    pub failed: usize,
    /// Mean errors over estimated images with ground truth.
    pub mean: Option<ErrorStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEvaluation {
    pub dataset: String,
    /// Image-major, then method.
    pub images: Vec<ImageEvaluation>,
    pub summaries: Vec<MethodSummary>,
}

/// Correspondences of one image in normalized image coordinates, in observation order.
pub fn image_correspondences(dataset: &Dataset, image: &DatasetImage) -> Result<CorrespondenceSet, PnlError> {
    let mut s3 = Vec::with_capacity(image.observations.len());
    let mut s2 = Vec::with_capacity(image.observations.len());
    for o in &image.observations {
        let seg = dataset
            .segment(&o.line_id)
            .ok_or_else(|| PnlError::DegenerateInput(format!("unknown 3D segment `{}`", o.line_id)))?;
        s3.push(*seg);
        s2.push(pixel_segment_to_normalized(&image.intrinsics, &o.segment)?);
    }
    CorrespondenceSet::from_segments(&s3, &s2)
}

fn evaluate_image(
    dataset: &Dataset,
    image: &DatasetImage,
    method: Method,
    aor: Option<&AorConfig>,
    solver: &SolverConfig,
    weighting: Weighting,
) -> ImageOutcome {
    let corrs = match image_correspondences(dataset, image) {
        Ok(c) => c,
        Err(e) => return ImageOutcome::Failed(e.to_string()),
    };
    if let Err(e) = check_counts(&corrs, method) {
        return ImageOutcome::Skipped(e.to_string());
    }
    let result = match aor {
        Some(cfg) => aor_estimate(&corrs, method, cfg, solver).map(|(e, r)| (e, Some(r.inlier_count()))),
        None => estimate_pose(&corrs, method, solver).map(|e| (e, None)),
    };
    let (est, inliers) = match result {
        Ok(r) => r,
        Err(e) => return ImageOutcome::Failed(e.to_string()),
    };
    let error = match &image.ground_truth {
        None => None,
        Some(gt) => {
            let segs: Vec<LineSegment2> = match image
                .observations
                .iter()
                .map(|o| pixel_segment_to_normalized(&image.intrinsics, &o.segment))
                .collect()
            {
                Ok(s) => s,
                Err(e) => return ImageOutcome::Failed(e.to_string()),
            };
            let lines: Vec<_> = corrs.line_line.iter().map(|c| c.line3).collect();
            match pose_error(&gt.pose, &est.pose, &segs, &lines, weighting) {
                Ok(e) => Some(e),
                Err(e) => return ImageOutcome::Failed(e.to_string()),
            }
        }
    };
    ImageOutcome::Estimated { pose: est.pose, error, warnings: est.diagnostics.warnings.len(), inliers }
}

/// Estimates every image with every method, in parallel over images.
pub fn evaluate_dataset(
    dataset: &Dataset,
    methods: &[Method],
    aor: Option<&AorConfig>,
    solver: &SolverConfig,
    weighting: Weighting,
) -> DatasetEvaluation {
    let images: Vec<ImageEvaluation> = dataset
        .images
        .par_iter()
        .flat_map_iter(|img| {
            methods.iter().map(move |&method| ImageEvaluation {
                image: img.id.clone(),
                method,
                outcome: evaluate_image(dataset, img, method, aor, solver, weighting),
            })
        })
        .collect();
    let summaries = methods
        .iter()
        .map(|&method| {
            let mine: Vec<&ImageEvaluation> = images.iter().filter(|e| e.method == method).collect();
            let count = |f: fn(&ImageOutcome) -> bool| mine.iter().filter(|e| f(&e.outcome)).count();
            let errors: Vec<PoseError> = mine
                .iter()
                .filter_map(|e| match &e.outcome {
                    ImageOutcome::Estimated { error, .. } => *error,
                    _ => None,
                })
                .collect();
            let stat = |f: fn(&PoseError) -> f64| mean(&errors.iter().map(f).collect::<Vec<_>>());
            MethodSummary {
                method,
                estimated: count(|o| matches!(o, ImageOutcome::Estimated { .. })),
                skipped: count(|o| matches!(o, ImageOutcome::Skipped(_))),
                failed: count(|o| matches!(o, ImageOutcome::Failed(_))),
                mean: (!errors.is_empty()).then(|| ErrorStats {
                    orientation_deg: stat(|e| e.orientation_deg),
                    position: stat(|e| e.position),
                    reprojection: stat(|e| e.reprojection),
                }),
            }
        })
        .collect();
    DatasetEvaluation { dataset: dataset.name.clone(), images, summaries }
}

/// Per-image pose (rotation row major, then camera position) and errors.
pub fn image_table(eval: &DatasetEvaluation) -> Table {
    let mut t = Table::new(&[
        "image", "method", "status", "rot_deg", "pos", "reproj", "r11", "r12", "r13", "r21", "r22", "r23", "r31",
        "r32", "r33", "t1", "t2", "t3", "reason",
    ]);
    for e in &eval.images {
        let mut row = vec![e.image.clone(), e.method.name().to_string()];
        let dash = |n: usize| vec!["-".to_string(); n];
        match &e.outcome {
            ImageOutcome::Estimated { pose, error, .. } => {
                row.push("ok".into());
                match error {
                    Some(err) => row.extend([err.orientation_deg, err.position, err.reprojection].map(fmt_real)),
                    None => row.extend(dash(3)),
                }
                row.extend(pose.rotation.transpose().iter().map(|v| v.to_string()));
                row.extend(pose.position.iter().map(|v| v.to_string()));
                row.push("-".into());
            }
            ImageOutcome::Skipped(reason) | ImageOutcome::Failed(reason) => {
                row.push(if matches!(e.outcome, ImageOutcome::Skipped(_)) { "skipped" } else { "failed" }.into());
                row.extend(dash(15));
                row.push(reason.clone());
            }
        }
        t.push(row);
    }
    t
}

/// Mean errors with sequences as columns and one row per error measure and method.
pub fn sequence_table(evals: &[DatasetEvaluation]) -> Table {
    let mut headers = vec!["measure".to_string(), "method".to_string()];
    headers.extend(evals.iter().map(|e| e.dataset.clone()));
    let mut t = Table { headers, rows: Vec::new() };
    let mut methods: Vec<Method> = evals.iter().flat_map(|e| e.summaries.iter().map(|s| s.method)).collect();
    methods.sort_unstable();
    methods.dedup();
    for (m, measure) in ["rot_deg", "pos", "reproj"].iter().enumerate() {
        for &method in &methods {
            let mut row = vec![measure.to_string(), method.name().to_string()];
            for e in evals {
                let s = e.summaries.iter().find(|s| s.method == method).and_then(|s| s.mean);
                row.push(s.map(|s| fmt_real(s.as_array()[m])).unwrap_or_else(|| "-".into()));
            }
            t.push(row);
        }
    }
    t
}
