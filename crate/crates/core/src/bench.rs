//! Monte-Carlo experiments on synthetic scenes.
//!
//! Every trial draws one scene from its own generator stream, so results do not
//! depend on scheduling, and all solver variants of a trial see the same scene.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aor::{aor_estimate, AorConfig};
use crate::dlt::{estimate_pose, Method, SolverConfig};
use crate::error::{PnlError, Result};
use crate::linalg::{mean, median};
use crate::metrics::{pose_error, PoseError, Weighting};
use crate::prenorm::PrenormLevel;
use crate::synth::{generate_scene_with, SceneConfig, SyntheticScene};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    MonteCarlo,
    Ablation,
    Outliers,
    Runtime,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MonteCarlo => "synth",
            ExperimentKind::Ablation => "ablate",
            ExperimentKind::Outliers => "outliers",
            ExperimentKind::Runtime => "bench",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = PnlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synth" => Ok(ExperimentKind::MonteCarlo),
            "ablate" => Ok(ExperimentKind::Ablation),
            "outliers" => Ok(ExperimentKind::Outliers),
            "bench" => Ok(ExperimentKind::Runtime),
            _ => Err(PnlError::InvalidConfig(format!("unknown experiment kind `{s}`"))),
        }
    }
}

/// Everything that distinguishes one cell of an experiment from another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub method: Method,
    pub lines: usize,
    pub sigma: f64,
    pub outlier_fraction: f64,
    pub prenorm: PrenormLevel,
    pub aor: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub key: CellKey,
    pub trial: usize,
    /// Errors of the estimate, or the reason the trial failed.
    pub outcome: std::result::Result<PoseError, String>,
    /// Wall-clock solver time in milliseconds, when timing was requested.
    pub runtime_ms: Option<f64>,
    pub warnings: usize,
    /// Observations kept by outlier rejection.
    pub inliers: Option<usize>,
}

/// Per-measure statistic of the three pose errors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorStats {
    pub orientation_deg: f64,
    pub position: f64,
    pub reprojection: f64,
}

impl ErrorStats {
    fn of(errors: &[PoseError], stat: fn(&[f64]) -> f64) -> Self {
        let pick = |f: fn(&PoseError) -> f64| stat(&errors.iter().map(f).collect::<Vec<_>>());
        Self {
            orientation_deg: pick(|e| e.orientation_deg),
            position: pick(|e| e.position),
            reprojection: pick(|e| e.reprojection),
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.orientation_deg, self.position, self.reprojection]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub key: CellKey,
    pub trials: usize,
    pub failures: usize,
    /// Trials that produced at least one warning.
    pub warned: usize,
    /// Statistics over successful trials; NaN when none succeeded.
    pub median: ErrorStats,
    pub mean: ErrorStats,
    pub runtime_mean_ms: Option<f64>,
    pub runtime_std_ms: Option<f64>,
    /// Share of trials with a position error below the success threshold.
    pub success_rate: Option<f64>,
}

/// Cells in order of first appearance, computed from `trials` alone.
pub fn summarize(trials: &[TrialReport], success_threshold: Option<f64>) -> Vec<CellSummary> {
    let mut keys: Vec<CellKey> = Vec::new();
    for t in trials {
        if !keys.contains(&t.key) {
            keys.push(t.key);
        }
    }
    keys.into_iter()
        .map(|key| {
            let cell: Vec<&TrialReport> = trials.iter().filter(|t| t.key == key).collect();
            let ok: Vec<PoseError> = cell.iter().filter_map(|t| t.outcome.as_ref().ok().copied()).collect();
            let times: Vec<f64> = cell.iter().filter_map(|t| t.runtime_ms).collect();
            let (runtime_mean_ms, runtime_std_ms) = if times.is_empty() {
                (None, None)
            } else {
                let m = mean(&times);
                let var = times.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / times.len() as f64;
                (Some(m), Some(var.sqrt()))
            };
            let success_rate =
                success_threshold.map(|thr| ok.iter().filter(|e| e.position < thr).count() as f64 / cell.len() as f64);
            CellSummary {
                key,
                trials: cell.len(),
                failures: cell.len() - ok.len(),
                warned: cell.iter().filter(|t| t.warnings > 0).count(),
                median: ErrorStats::of(&ok, median),
                mean: ErrorStats::of(&ok, mean),
                runtime_mean_ms,
                runtime_std_ms,
                success_rate,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    /// Record wall-clock solver times. Off by default so that reports are
    /// reproducible bit for bit.
    pub timing: bool,
    pub weighting: Weighting,
    pub solver: SolverConfig,
    pub aor: AorConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { timing: false, weighting: Weighting::Unit, solver: SolverConfig::default(), aor: AorConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub trials_per_cell: usize,
    /// Scene settings shared by all cells; per-cell values live in the cell keys.
    pub scene: SceneConfig,
    pub options: BenchOptions,
    pub success_threshold: Option<f64>,
    pub trials: Vec<TrialReport>,
    pub cells: Vec<CellSummary>,
}

/// One solver configuration applied to every scene of a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Variant {
    method: Method,
    prenorm: PrenormLevel,
    aor: bool,
}

/// Generator for trial `trial` of scene cell `cell`.
pub fn trial_rng(seed: u64, cell: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((cell as u64) << 32) | trial as u64);
    rng
}

fn run_variant(scene: &SyntheticScene, v: &Variant, options: &BenchOptions) -> (TrialOutcome, Option<f64>) {
    let solver = SolverConfig { prenorm: v.prenorm, ..options.solver };
    let started = Instant::now();
    let result = if v.aor {
        aor_estimate(&scene.correspondences, v.method, &options.aor, &solver)
            .map(|(est, report)| (est, Some(report.inlier_count())))
    } else {
        estimate_pose(&scene.correspondences, v.method, &solver).map(|est| (est, None))
    };
    let elapsed = started.elapsed().as_secs_f64() * 1e3;
    let outcome = result.and_then(|(est, inliers)| {
        let err = pose_error(&scene.pose, &est.pose, &scene.image_clean, &scene.lines3(), options.weighting)?;
        Ok((err, est.diagnostics.warnings.len(), inliers))
    });
    (outcome.map_err(|e| e.to_string()), options.timing.then_some(elapsed))
}

type TrialOutcome = std::result::Result<(PoseError, usize, Option<usize>), String>;

fn run_trial(
    scene_cfg: &SceneConfig,
    cell: usize,
    trial: usize,
    variants: &[Variant],
    seed: u64,
    options: &BenchOptions,
) -> Vec<TrialReport> {
    let scene = generate_scene_with(scene_cfg, &mut trial_rng(seed, cell, trial));
    variants
        .iter()
        .map(|v| {
            let key = CellKey {
                method: v.method,
                lines: scene_cfg.lines,
                sigma: scene_cfg.sigma,
                outlier_fraction: scene_cfg.outlier_fraction,
                prenorm: v.prenorm,
                aor: v.aor,
            };
            let (outcome, runtime_ms) = match &scene {
                Ok(scene) => run_variant(scene, v, options),
                Err(e) => (Err(format!("scene generation: {e}")), None),
            };
            let (outcome, warnings, inliers) = match outcome {
                Ok((err, w, inl)) => (Ok(err), w, inl),
                Err(msg) => (Err(msg), 0, None),
            };
            TrialReport { key, trial, outcome, runtime_ms, warnings, inliers }
        })
        .collect()
}

fn run_cells(
    cells: &[SceneConfig],
    variants: &[Variant],
    trials: usize,
    seed: u64,
    options: &BenchOptions,
    parallel: bool,
) -> Vec<TrialReport> {
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..trials).map(move |t| (c, t))).collect();
    let run = |&(c, t): &(usize, usize)| run_trial(&cells[c], c, t, variants, seed, options);
    let per_trial: Vec<Vec<TrialReport>> =
        if parallel { jobs.par_iter().map(run).collect() } else { jobs.iter().map(run).collect() };

    // cell-major, then variant, then trial
    let mut out = Vec::with_capacity(per_trial.len() * variants.len());
    for cell in per_trial.chunks(trials) {
        for v in 0..variants.len() {
            out.extend(cell.iter().map(|row| row[v].clone()));
        }
    }
    out
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(PnlError::InvalidConfig("at least one trial per cell is required".into()));
    }
    Ok(())
}

fn check_methods(methods: &[Method]) -> Result<()> {
    if methods.is_empty() {
        return Err(PnlError::InvalidConfig("no methods selected".into()));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn report(
    kind: ExperimentKind,
    seed: u64,
    trials: usize,
    scene: &SceneConfig,
    options: &BenchOptions,
    success_threshold: Option<f64>,
    records: Vec<TrialReport>,
) -> AggregateReport {
    let cells = summarize(&records, success_threshold);
    AggregateReport {
        kind,
        seed,
        trials_per_cell: trials,
        scene: SceneConfig { seed, ..*scene },
        options: options.clone(),
        success_threshold,
        trials: records,
        cells,
    }
}

/// Accuracy of `methods` over a grid of `(lines, sigma)` cells. `base` supplies
/// every other scene setting.
pub fn run_monte_carlo(
    methods: &[Method],
    grid: &[(usize, f64)],
    trials: usize,
    seed: u64,
    base: &SceneConfig,
    options: &BenchOptions,
) -> Result<AggregateReport> {
    check_trials(trials)?;
    check_methods(methods)?;
    options.solver.validate()?;
    let cells: Vec<SceneConfig> = grid
        .iter()
        .map(|&(lines, sigma)| {
            let c = SceneConfig { lines, sigma, seed, ..*base };
            c.validate().map(|_| c)
        })
        .collect::<Result<_>>()?;
    let variants: Vec<Variant> =
        methods.iter().map(|&method| Variant { method, prenorm: options.solver.prenorm, aor: false }).collect();
    let records = run_cells(&cells, &variants, trials, seed, options, true);
    Ok(report(ExperimentKind::MonteCarlo, seed, trials, base, options, None, records))
}

/// The combined method with conditioning stages enabled one after another.
pub fn run_prenorm_ablation(
    levels: &[PrenormLevel],
    base: &SceneConfig,
    trials: usize,
    seed: u64,
    options: &BenchOptions,
) -> Result<AggregateReport> {
    check_trials(trials)?;
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PnlError::InvalidConfig("conditioning levels must be strictly cumulative".into()));
    }
    let cell = SceneConfig { seed, ..*base };
    cell.validate()?;
    let variants: Vec<Variant> =
        levels.iter().map(|&prenorm| Variant { method: Method::DltCombined, prenorm, aor: false }).collect();
    let records = run_cells(&[cell], &variants, trials, seed, options, true);
    Ok(report(ExperimentKind::Ablation, seed, trials, base, options, None, records))
}

/// `methods` wrapped in outlier rejection at increasing outlier fractions. A
/// trial succeeds when its position error is below a tenth of the camera distance.
pub fn run_outlier_experiment(
    methods: &[Method],
    fractions: &[f64],
    base: &SceneConfig,
    trials: usize,
    seed: u64,
    options: &BenchOptions,
) -> Result<AggregateReport> {
    check_trials(trials)?;
    check_methods(methods)?;
    if let Some(f) = fractions.iter().find(|f| !(0.0..=0.8).contains(*f)) {
        return Err(PnlError::InvalidConfig(format!("outlier fraction {f} outside [0, 0.8]")));
    }
    let cells: Vec<SceneConfig> = fractions
        .iter()
        .map(|&outlier_fraction| {
            let c = SceneConfig { outlier_fraction, seed, ..*base };
            c.validate().map(|_| c)
        })
        .collect::<Result<_>>()?;
    let variants: Vec<Variant> =
        methods.iter().map(|&method| Variant { method, prenorm: options.solver.prenorm, aor: true }).collect();
    let records = run_cells(&cells, &variants, trials, seed, options, !options.timing);
    let threshold = 0.1 * base.camera_distance;
    Ok(report(ExperimentKind::Outliers, seed, trials, base, options, Some(threshold), records))
}

/// Sequential timing of `methods` for each line count. `warmup` untimed runs
/// precede every cell.
pub fn run_runtime_bench(
    methods: &[Method],
    lines: &[usize],
    trials: usize,
    warmup: usize,
    seed: u64,
    base: &SceneConfig,
    options: &BenchOptions,
) -> Result<AggregateReport> {
    check_trials(trials)?;
    check_methods(methods)?;
    let options = BenchOptions { timing: true, ..options.clone() };
    let cells: Vec<SceneConfig> = lines
        .iter()
        .map(|&lines| {
            let c = SceneConfig { lines, seed, ..*base };
            c.validate().map(|_| c)
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        for &method in methods {
            let variant = [Variant { method, prenorm: options.solver.prenorm, aor: false }];
            for w in 0..warmup {
                run_trial(cell, c, trials + w, &variant, seed, &options);
            }
            for t in 0..trials {
                records.extend(run_trial(cell, c, t, &variant, seed, &options));
            }
        }
    }
    Ok(report(ExperimentKind::Runtime, seed, trials, base, &options, None, records))
}

/// Row of a conditioning ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub prenorm: PrenormLevel,
    pub median: ErrorStats,
    /// Percent decrease of each median versus the previous row.
    pub improvement: Option<ErrorStats>,
}

pub fn ablation_table(cells: &[CellSummary]) -> Vec<AblationRow> {
    let mut rows: Vec<AblationRow> = Vec::with_capacity(cells.len());
    for c in cells {
        let improvement = rows.last().map(|prev| {
            let pct = |a: f64, b: f64| 100.0 * (a - b) / a;
            ErrorStats {
                orientation_deg: pct(prev.median.orientation_deg, c.median.orientation_deg),
                position: pct(prev.median.position, c.median.position),
                reprojection: pct(prev.median.reprojection, c.median.reprojection),
            }
        });
        rows.push(AblationRow { prenorm: c.key.prenorm, median: c.median, improvement });
    }
    rows
}
