//! Record files for experiment reports, and their tabular summaries.
//!
//! A record file is one header line followed by one tab-separated record per
//! trial. The header carries the experiment kind, the seed and every setting the
//! trials depend on as `key=value` fields, so a report can be rebuilt from the
//! file alone:
//!
//! ```text
//! #pnl-records  version=1  kind=synth  seed=7  trials=50  ...  columns=method,lines,...
//! dlt_combined  100  2  0  i-v  false  0  ok  0.21  0.13  1.9e-6  0  -  -  -
//! ```
//!
//! Missing values are written as `-`. Reals use the shortest representation that
//! reads back to the same value.

use std::collections::BTreeMap;
use std::fmt::{self, Display};
use std::str::FromStr;

use nalgebra::Vector3;

use crate::aor::AorConfig;
use crate::bench::{
    ablation_table, summarize, AggregateReport, BenchOptions, CellKey, CellSummary, ExperimentKind, TrialReport,
};
use crate::dlt::{Method, SolverConfig};
use crate::error::ParseError;
use crate::geometry::CameraIntrinsics;
use crate::metrics::{PoseError, Weighting};
use crate::prenorm::PrenormLevel;
use crate::synth::{SceneConfig, SingularMode};

pub const MAGIC: &str = "#pnl-records";
pub const VERSION: u32 = 1;

pub const COLUMNS: [&str; 15] = [
    "method",
    "lines",
    "sigma",
    "outliers",
    "prenorm",
    "aor",
    "trial",
    "status",
    "orientation_deg",
    "position",
    "reprojection",
    "warnings",
    "inliers",
    "runtime_ms",
    "message",
];

const HEADER_KEYS: [&str; 26] = [
    "version",
    "kind",
    "seed",
    "trials",
    "success_threshold",
    "lines",
    "sigma",
    "outlier_fraction",
    "outlier_sigma",
    "cube_side",
    "cube_center",
    "camera_distance",
    "intrinsics",
    "singular",
    "k",
    "rows_per_line",
    "prenorm",
    "scaling",
    "cheirality_points",
    "weighting",
    "timing",
    "aor_schedule",
    "aor_floor",
    "aor_max_iterations",
    "aor_min_improvement",
    "columns",
];

fn opt<T: Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
}

/// Shortest round-trip text, in exponent form outside moderate magnitudes.
fn real(v: f64) -> String {
    if v == 0.0 || (1e-3..1e9).contains(&v.abs()) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn clean(message: &str) -> String {
    let m: String = message.chars().map(|c| if c.is_control() { ' ' } else { c }).collect();
    if m.is_empty() {
        "-".into()
    } else {
        m
    }
}

/// The header line of `report`, without a line terminator.
pub fn header_line(report: &AggregateReport) -> String {
    let s = &report.scene;
    let o = &report.options;
    let k = &s.intrinsics;
    let mut intr = vec![k.fx, k.fy, k.cx, k.cy];
    if let Some((w, h)) = k.image_size {
        intr.extend([w as f64, h as f64]);
    }
    let fields: Vec<(&str, String)> = vec![
        ("version", VERSION.to_string()),
        ("kind", report.kind.to_string()),
        ("seed", report.seed.to_string()),
        ("trials", report.trials_per_cell.to_string()),
        ("success_threshold", opt(report.success_threshold)),
        ("lines", s.lines.to_string()),
        ("sigma", s.sigma.to_string()),
        ("outlier_fraction", s.outlier_fraction.to_string()),
        ("outlier_sigma", s.outlier_sigma.to_string()),
        ("cube_side", s.cube_side.to_string()),
        ("cube_center", join(s.cube_center.as_slice())),
        ("camera_distance", s.camera_distance.to_string()),
        ("intrinsics", join(&intr)),
        ("singular", s.singular.to_string()),
        ("k", o.solver.k.to_string()),
        ("rows_per_line", if o.solver.two_rows_per_line { "2" } else { "3" }.into()),
        ("prenorm", o.solver.prenorm.name().into()),
        ("scaling", if o.solver.anisotropic_scale { "anisotropic" } else { "isotropic" }.into()),
        ("cheirality_points", o.solver.cheirality_points.map(|n| n.to_string()).unwrap_or_else(|| "all".into())),
        ("weighting", o.weighting.name().into()),
        ("timing", o.timing.to_string()),
        ("aor_schedule", join(&o.aor.schedule)),
        ("aor_floor", o.aor.floor.to_string()),
        ("aor_max_iterations", o.aor.max_iterations.to_string()),
        ("aor_min_improvement", o.aor.min_improvement.to_string()),
        ("columns", COLUMNS.join(",")),
    ];
    let mut line = MAGIC.to_string();
    for (key, value) in fields {
        line.push('\t');
        line.push_str(key);
        line.push('=');
        line.push_str(&value);
    }
    line
}

fn record_line(t: &TrialReport) -> String {
    let key = &t.key;
    let (status, errors, message) = match &t.outcome {
        Ok(e) => ("ok", [e.orientation_deg, e.position, e.reprojection].map(real), "-".to_string()),
        Err(msg) => ("failed", ["-", "-", "-"].map(String::from), clean(msg)),
    };
    let fields = [
        key.method.name().to_string(),
        key.lines.to_string(),
        key.sigma.to_string(),
        key.outlier_fraction.to_string(),
        key.prenorm.name().to_string(),
        key.aor.to_string(),
        t.trial.to_string(),
        status.to_string(),
        errors[0].clone(),
        errors[1].clone(),
        errors[2].clone(),
        t.warnings.to_string(),
        opt(t.inliers),
        t.runtime_ms.map(real).unwrap_or_else(|| "-".into()),
        message,
    ];
    fields.join("\t")
}

/// Complete record file for `report`, newline-terminated.
pub fn write_records(report: &AggregateReport) -> String {
    let mut out = header_line(report);
    out.push('\n');
    for t in &report.trials {
        out.push_str(&record_line(t));
        out.push('\n');
    }
    out
}

fn parse_value<T: FromStr>(line: usize, what: &str, v: &str) -> Result<T, ParseError> {
    v.parse().map_err(|_| ParseError::new(line, format!("invalid {what} `{v}`")))
}

fn parse_real(line: usize, what: &str, v: &str) -> Result<f64, ParseError> {
    let x: f64 = parse_value(line, what, v)?;
    if x.is_nan() {
        return Err(ParseError::new(line, format!("{what} is not a number")));
    }
    Ok(x)
}

fn parse_reals(line: usize, what: &str, v: &str) -> Result<Vec<f64>, ParseError> {
    v.split(',').map(|x| parse_real(line, what, x)).collect()
}

fn parse_opt<T: FromStr>(line: usize, what: &str, v: &str) -> Result<Option<T>, ParseError> {
    if v == "-" {
        Ok(None)
    } else {
        parse_value(line, what, v).map(Some)
    }
}

fn parse_bool(line: usize, what: &str, v: &str) -> Result<bool, ParseError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ParseError::new(line, format!("invalid {what} `{v}`, expected true or false"))),
    }
}

/// Kind, seed, trials per cell, success threshold, scene and options.
type Header = (ExperimentKind, u64, usize, Option<f64>, SceneConfig, BenchOptions);

fn parse_header(text: &str) -> Result<Header, ParseError> {
    let err = |reason: String| ParseError::new(1, reason);
    let mut fields = text.split('\t');
    if fields.next() != Some(MAGIC) {
        return Err(err(format!("missing `{MAGIC}` header")));
    }
    let mut map: BTreeMap<&str, &str> = BTreeMap::new();
    for f in fields {
        let (key, value) = f.split_once('=').ok_or_else(|| err(format!("header field `{f}` is not key=value")))?;
        if !HEADER_KEYS.contains(&key) {
            return Err(err(format!("unknown header key `{key}`")));
        }
        if map.insert(key, value).is_some() {
            return Err(err(format!("duplicate header key `{key}`")));
        }
    }
    let get = |key: &str| map.get(key).copied().ok_or_else(|| err(format!("header lacks `{key}`")));

    let version: u32 = parse_value(1, "version", get("version")?)?;
    if version != VERSION {
        return Err(err(format!("unsupported version {version}")));
    }
    if get("columns")? != COLUMNS.join(",") {
        return Err(err("unexpected column list".into()));
    }
    let kind: ExperimentKind = parse_value(1, "kind", get("kind")?)?;
    let seed: u64 = parse_value(1, "seed", get("seed")?)?;
    let trials: usize = parse_value(1, "trials", get("trials")?)?;
    let success_threshold: Option<f64> = parse_opt(1, "success threshold", get("success_threshold")?)?;

    let center = parse_reals(1, "cube center", get("cube_center")?)?;
    if center.len() != 3 {
        return Err(err("cube center needs three coordinates".into()));
    }
    let intr = parse_reals(1, "intrinsics", get("intrinsics")?)?;
    let image_size = match intr.len() {
        4 => None,
        6 => {
            let dim = |v: f64| {
                if v.fract() == 0.0 && v > 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(err(format!("invalid image dimension {v}")))
                }
            };
            Some((dim(intr[4])?, dim(intr[5])?))
        }
        _ => return Err(err("intrinsics need fx,fy,cx,cy[,width,height]".into())),
    };
    let singular: SingularMode = get("singular")?.parse().map_err(|e| err(format!("{e}")))?;
    let scene = SceneConfig {
        lines: parse_value(1, "lines", get("lines")?)?,
        cube_side: parse_real(1, "cube side", get("cube_side")?)?,
        cube_center: Vector3::new(center[0], center[1], center[2]),
        camera_distance: parse_real(1, "camera distance", get("camera_distance")?)?,
        intrinsics: CameraIntrinsics { fx: intr[0], fy: intr[1], cx: intr[2], cy: intr[3], image_size },
        sigma: parse_real(1, "sigma", get("sigma")?)?,
        seed,
        singular,
        outlier_fraction: parse_real(1, "outlier fraction", get("outlier_fraction")?)?,
        outlier_sigma: parse_real(1, "outlier sigma", get("outlier_sigma")?)?,
    };
    scene.validate().map_err(|e| err(e.to_string()))?;

    let rows = get("rows_per_line")?;
    let solver = SolverConfig {
        k: parse_real(1, "k", get("k")?)?,
        two_rows_per_line: match rows {
            "2" => true,
            "3" => false,
            _ => return Err(err(format!("rows_per_line must be 2 or 3, got `{rows}`"))),
        },
        prenorm: PrenormLevel::parse(get("prenorm")?)
            .ok_or_else(|| err(format!("unknown conditioning level `{}`", map["prenorm"])))?,
        anisotropic_scale: match get("scaling")? {
            "isotropic" => false,
            "anisotropic" => true,
            other => return Err(err(format!("unknown scaling `{other}`"))),
        },
        cheirality_points: match get("cheirality_points")? {
            "all" => None,
            n => Some(parse_value(1, "cheirality points", n)?),
        },
    };
    solver.validate().map_err(|e| err(e.to_string()))?;
    let aor = AorConfig {
        schedule: parse_reals(1, "AOR schedule", get("aor_schedule")?)?,
        floor: parse_real(1, "AOR floor", get("aor_floor")?)?,
        max_iterations: parse_value(1, "AOR iteration cap", get("aor_max_iterations")?)?,
        min_improvement: parse_real(1, "AOR minimum improvement", get("aor_min_improvement")?)?,
    };
    aor.validate().map_err(|e| err(e.to_string()))?;
    let options = BenchOptions {
        timing: parse_bool(1, "timing", get("timing")?)?,
        weighting: Weighting::parse(get("weighting")?)
            .ok_or_else(|| err(format!("unknown weighting `{}`", map["weighting"])))?,
        solver,
        aor,
    };
    Ok((kind, seed, trials, success_threshold, scene, options))
}

fn parse_record(line: usize, text: &str) -> Result<TrialReport, ParseError> {
    let f: Vec<&str> = text.split('\t').collect();
    if f.len() != COLUMNS.len() {
        return Err(ParseError::new(line, format!("expected {} fields, found {}", COLUMNS.len(), f.len())));
    }
    let method: Method = f[0].parse().map_err(|_| ParseError::new(line, format!("unknown method `{}`", f[0])))?;
    let key = CellKey {
        method,
        lines: parse_value(line, "line count", f[1])?,
        sigma: parse_real(line, "sigma", f[2])?,
        outlier_fraction: parse_real(line, "outlier fraction", f[3])?,
        prenorm: PrenormLevel::parse(f[4])
            .ok_or_else(|| ParseError::new(line, format!("unknown conditioning level `{}`", f[4])))?,
        aor: parse_bool(line, "aor flag", f[5])?,
    };
    let outcome = match f[7] {
        "ok" => {
            if f[14] != "-" {
                return Err(ParseError::new(line, "successful trial carries a message"));
            }
            Ok(PoseError {
                orientation_deg: parse_real(line, "orientation error", f[8])?,
                position: parse_real(line, "position error", f[9])?,
                reprojection: parse_real(line, "reprojection error", f[10])?,
            })
        }
        "failed" => {
            if f[8..11].iter().any(|v| *v != "-") {
                return Err(ParseError::new(line, "failed trial carries errors"));
            }
            Err(if f[14] == "-" { String::new() } else { f[14].to_string() })
        }
        other => return Err(ParseError::new(line, format!("unknown status `{other}`"))),
    };
    Ok(TrialReport {
        key,
        trial: parse_value(line, "trial index", f[6])?,
        outcome,
        runtime_ms: parse_opt(line, "runtime", f[13])?,
        warnings: parse_value(line, "warning count", f[11])?,
        inliers: parse_opt(line, "inlier count", f[12])?,
    })
}

/// Rebuilds the report held in a record file; cell summaries are recomputed
/// from the trials.
pub fn parse_records(text: &str) -> Result<AggregateReport, ParseError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| ParseError::new(1, "empty record file"))?;
    let (kind, seed, trials_per_cell, success_threshold, scene, options) = parse_header(header)?;
    let mut trials = Vec::new();
    for (i, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        trials.push(parse_record(i + 1, line)?);
    }
    let cells = summarize(&trials, success_threshold);
    Ok(AggregateReport { kind, seed, trials_per_cell, scene, options, success_threshold, trials, cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TableFormat {
    /// Space-aligned columns.
    #[default]
    Text,
    /// Comma-separated values with a header row.
    Csv,
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(TableFormat::Text),
            "csv" => Ok(TableFormat::Csv),
            _ => Err(format!("unknown table format `{s}` (expected text or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: TableFormat) -> String {
        match format {
            TableFormat::Text => self.to_string(),
            TableFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.headers).expect("in-memory write");
                for r in &self.rows {
                    w.write_record(r).expect("in-memory write");
                }
                String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
            }
        }
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.headers.len();
        let width: Vec<usize> = (0..n)
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].chars().count())
                    .chain([self.headers[c].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let numeric: Vec<bool> = (0..n)
            .map(|c| !self.rows.is_empty() && self.rows.iter().all(|r| r[c] == "-" || r[c].parse::<f64>().is_ok()))
            .collect();
        let line = |f: &mut fmt::Formatter<'_>, cells: &[String]| -> fmt::Result {
            let parts: Vec<String> = cells
                .iter()
                .enumerate()
                .map(
                    |(c, v)| {
                        if numeric[c] {
                            format!("{v:>w$}", w = width[c])
                        } else {
                            format!("{v:<w$}", w = width[c])
                        }
                    },
                )
                .collect();
            writeln!(f, "{}", parts.join("  ").trim_end())
        };
        line(f, &self.headers)?;
        for r in &self.rows {
            line(f, r)?;
        }
        Ok(())
    }
}

/// Compact rendering of a real for tables.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        "-".into()
    } else if x == 0.0 {
        "0".into()
    } else if x.abs() < 1e-3 || x.abs() >= 1e5 {
        format!("{x:.3e}")
    } else {
        format!("{x:.4}")
    }
}

/// One row per cell: medians and means of the three errors, failure counts, and
/// success rates or timings when present.
pub fn summary_table(cells: &[CellSummary]) -> Table {
    let success = cells.iter().any(|c| c.success_rate.is_some());
    let timing = cells.iter().any(|c| c.runtime_mean_ms.is_some());
    let mut headers = vec![
        "method",
        "lines",
        "sigma",
        "outliers",
        "prenorm",
        "aor",
        "trials",
        "failed",
        "warned",
        "median_rot_deg",
        "median_pos",
        "median_reproj",
        "mean_rot_deg",
        "mean_pos",
        "mean_reproj",
    ];
    if success {
        headers.push("success_rate");
    }
    if timing {
        headers.extend(["time_ms", "time_sd_ms"]);
    }
    let mut t = Table::new(&headers);
    for c in cells {
        let k = &c.key;
        let mut row = vec![
            k.method.name().to_string(),
            k.lines.to_string(),
            k.sigma.to_string(),
            k.outlier_fraction.to_string(),
            k.prenorm.name().to_string(),
            k.aor.to_string(),
            c.trials.to_string(),
            c.failures.to_string(),
            c.warned.to_string(),
        ];
        row.extend(c.median.as_array().into_iter().chain(c.mean.as_array()).map(fmt_real));
        if success {
            row.push(c.success_rate.map(fmt_real).unwrap_or_else(|| "-".into()));
        }
        if timing {
            row.push(c.runtime_mean_ms.map(fmt_real).unwrap_or_else(|| "-".into()));
            row.push(c.runtime_std_ms.map(fmt_real).unwrap_or_else(|| "-".into()));
        }
        t.push(row);
    }
    t
}

/// Conditioning stages against median errors, with the percent improvement of
/// each row over the one before it.
pub fn ablation_summary_table(cells: &[CellSummary]) -> Table {
    let mut t = Table::new(&["stages", "rot_deg", "pos", "reproj", "rot_gain_pct", "pos_gain_pct", "reproj_gain_pct"]);
    for r in ablation_table(cells) {
        let mut row = vec![r.prenorm.name().to_string()];
        row.extend(r.median.as_array().map(fmt_real));
        match r.improvement {
            Some(i) => row.extend(i.as_array().map(|p| format!("{p:.1}"))),
            None => row.extend(["-", "-", "-"].map(String::from)),
        }
        t.push(row);
    }
    t
}

/// Mean runtime per method (rows) and line count (columns), with standard deviations.
pub fn runtime_table(cells: &[CellSummary]) -> Table {
    let mut lines: Vec<usize> = cells.iter().map(|c| c.key.lines).collect();
    lines.sort_unstable();
    lines.dedup();
    let mut methods: Vec<Method> = cells.iter().map(|c| c.key.method).collect();
    methods.sort_unstable();
    methods.dedup();
    let headers: Vec<String> = std::iter::once("method".to_string())
        .chain(lines.iter().flat_map(|m| [format!("m{m}_ms"), format!("m{m}_sd_ms")]))
        .collect();
    let mut t = Table { headers, rows: Vec::new() };
    for method in methods {
        let mut row = vec![method.name().to_string()];
        for &m in &lines {
            let c = cells.iter().find(|c| c.key.method == method && c.key.lines == m);
            row.push(c.and_then(|c| c.runtime_mean_ms).map(fmt_real).unwrap_or_else(|| "-".into()));
            row.push(c.and_then(|c| c.runtime_std_ms).map(fmt_real).unwrap_or_else(|| "-".into()));
        }
        t.push(row);
    }
    t
}

/// The table matching the experiment kind of `report`.
pub fn report_table(report: &AggregateReport) -> Table {
    match report.kind {
        ExperimentKind::Ablation => ablation_summary_table(&report.cells),
        ExperimentKind::Runtime => runtime_table(&report.cells),
        ExperimentKind::MonteCarlo | ExperimentKind::Outliers => summary_table(&report.cells),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::run_monte_carlo;

    fn small_report() -> AggregateReport {
        let base = SceneConfig { singular: SingularMode::Flatten(0.5), ..Default::default() };
        run_monte_carlo(&Method::ALL, &[(10, 0.0), (20, 1.5)], 3, 7, &base, &BenchOptions::default()).unwrap()
    }

    #[test]
    fn round_trip() {
        let r = small_report();
        let text = write_records(&r);
        assert_eq!(text.lines().count(), 1 + 2 * 3 * 3);
        let back = parse_records(&text).unwrap();
        assert_eq!(back.trials, r.trials);
        assert_eq!(back.scene, r.scene);
        assert_eq!(back.options, r.options);
        assert_eq!(write_records(&back), text);
    }

    #[test]
    fn failed_trials_round_trip() {
        let mut r = small_report();
        r.trials[0].outcome = Err("scene generation:\tbad\nthing".into());
        let back = parse_records(&write_records(&r)).unwrap();
        assert_eq!(back.trials[0].outcome, Err("scene generation: bad thing".into()));
    }

    #[test]
    fn positioned_errors() {
        let text = write_records(&small_report());
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3] = lines[3].replace("\tok\t", "\tmaybe\t");
        let e = parse_records(&lines.join("\n")).unwrap_err();
        assert_eq!(e.line, 4);
        assert!(e.reason.contains("maybe"));

        let e = parse_records("hello").unwrap_err();
        assert_eq!(e.line, 1);
        let header = text.lines().next().unwrap();
        let e = parse_records(&header.replace("version=1", "version=2")).unwrap_err();
        assert!(e.reason.contains("version"));
        let e = parse_records(&format!("{header}\tbogus=1")).unwrap_err();
        assert!(e.reason.contains("bogus"));
    }

    #[test]
    fn tables_render() {
        let r = small_report();
        let t = report_table(&r);
        assert_eq!(t.rows.len(), 6);
        let csv = t.render(TableFormat::Csv);
        let mut reader = csv::Reader::from_reader(csv.as_bytes());
        assert_eq!(reader.headers().unwrap().len(), t.headers.len());
        assert_eq!(reader.records().count(), 6);
        let text = t.render(TableFormat::Text);
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("method"));
    }
}
