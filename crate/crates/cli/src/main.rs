use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use pnl_core::aor::AorConfig;
use pnl_core::bench::{
    run_monte_carlo, run_outlier_experiment, run_prenorm_ablation, run_runtime_bench, AggregateReport, BenchOptions,
};
use pnl_core::dataset::{
    evaluate_dataset, image_table, load_dataset, sequence_table, DatasetError, DatasetEvaluation, ImageOutcome,
};
use pnl_core::metrics::Weighting;
use pnl_core::prenorm::PrenormLevel;
use pnl_core::records::{parse_records, report_table, write_records, Table, TableFormat};
use pnl_core::synth::{SceneConfig, SingularMode};
use pnl_core::{Method, SolverConfig};

const EXIT_INVALID: u8 = 2;
const EXIT_ALL_FAILED: u8 = 3;

/// Camera pose from 2D/3D line correspondences.
#[derive(Debug, Parser)]
#[command(name = "pnl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the pose of every image of one or more datasets.
    Estimate(EstimateArgs),
    /// Monte-Carlo accuracy over a grid of line counts and noise levels.
    Synth(SynthArgs),
    /// Solver runtimes against the number of lines.
    Bench(BenchArgs),
    /// Effect of the cumulative conditioning stages on the combined method.
    Ablate(AblateArgs),
    /// Break-down of outlier rejection against the outlier fraction.
    Outliers(OutlierArgs),
    /// Render a record file as a table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Conditioning level: none, i, i-ii, i-iii, i-iv or i-v.
    #[arg(long, default_value = "i-v", value_parser = parse_prenorm)]
    prenorm: PrenormLevel,
    /// Weight of the point-block estimates in the combined method.
    #[arg(long, default_value_t = 0.7)]
    k: f64,
    /// Use all three rows of every line-line pairing.
    #[arg(long)]
    three_rows: bool,
    /// Per-axis scaling in the combined conditioning.
    #[arg(long)]
    anisotropic: bool,
    /// Weighting of the reprojection error along a segment: unit or length.
    #[arg(long, default_value = "unit", value_parser = parse_weighting)]
    weighting: Weighting,
}

impl SolverArgs {
    fn solver(&self) -> SolverConfig {
        SolverConfig {
            k: self.k,
            two_rows_per_line: !self.three_rows,
            prenorm: self.prenorm,
            anisotropic_scale: self.anisotropic,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct SceneArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Edge length of the cube holding the 3D endpoints.
    #[arg(long, default_value_t = 10.0)]
    cube_side: f64,
    /// Cube center as x,y,z.
    #[arg(long, default_value = "0,0,0", value_parser = parse_point)]
    cube_center: Vector3<f64>,
    /// Distance of the camera from the cube center.
    #[arg(long, default_value_t = 25.0)]
    distance: f64,
    /// Focal length in pixels.
    #[arg(long, default_value_t = 800.0)]
    focal: f64,
    /// Image size as width,height.
    #[arg(long, default_value = "640,480", value_parser = parse_size)]
    image_size: (u32, u32),
    /// none, directions:<k>[:orthogonal], flatten:<ratio> or concurrent:<fraction>.
    #[arg(long, default_value = "none")]
    singular_mode: SingularMode,
    /// Standard deviation of the gross noise given to outlying lines, pixels.
    #[arg(long, default_value_t = 100.0)]
    outlier_sigma: f64,
}

impl SceneArgs {
    fn scene(&self) -> Result<SceneConfig, String> {
        let intrinsics = pnl_core::CameraIntrinsics::centered(self.focal, self.image_size.0, self.image_size.1)
            .map_err(|e| e.to_string())?;
        Ok(SceneConfig {
            cube_side: self.cube_side,
            cube_center: self.cube_center,
            camera_distance: self.distance,
            intrinsics,
            seed: self.seed,
            singular: self.singular_mode,
            outlier_sigma: self.outlier_sigma,
            ..SceneConfig::default()
        })
    }
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Record file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format of the summary printed on standard output: text or csv.
    #[arg(long, default_value = "text")]
    format: TableFormat,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Dataset files.
    #[arg(required = true)]
    datasets: Vec<PathBuf>,
    /// Methods: dlt-lines, dlt-plucker, dlt-combined.
    #[arg(long, alias = "methods", value_delimiter = ',', default_value = "dlt-combined")]
    method: Vec<Method>,
    /// Wrap the solvers in algebraic outlier rejection.
    #[arg(long)]
    aor: bool,
    #[command(flatten)]
    solver: SolverArgs,
    /// Per-image table to write.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    format: TableFormat,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_delimiter = ',', default_value = "25,100,500")]
    lines: Vec<usize>,
    /// Endpoint noise levels, pixels.
    #[arg(long, value_delimiter = ',', default_value = "2,10")]
    sigma: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "dlt-lines,dlt-plucker,dlt-combined")]
    methods: Vec<Method>,
    /// Record solver wall-clock times (output is then not reproducible byte for byte).
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "100,200,500,1000")]
    lines: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Untimed runs before each timed series.
    #[arg(long, default_value_t = 5)]
    warmup: usize,
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    #[arg(long, value_delimiter = ',', default_value = "dlt-lines,dlt-plucker,dlt-combined")]
    methods: Vec<Method>,
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long, default_value_t = 200)]
    lines: usize,
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Conditioning levels, strictly cumulative.
    #[arg(long, value_delimiter = ',', default_value = "none,i,i-ii,i-iii,i-iv,i-v", value_parser = parse_prenorm)]
    levels: Vec<PrenormLevel>,
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct OutlierArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6")]
    fractions: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    lines: usize,
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "dlt-lines,dlt-combined")]
    methods: Vec<Method>,
    /// Quantile schedule of the outlier rejection.
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<f64>>,
    /// Quantile used once the schedule is exhausted.
    #[arg(long)]
    floor: Option<f64>,
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Record file written by synth, bench, ablate or outliers.
    input: PathBuf,
    #[arg(long, default_value = "text")]
    format: TableFormat,
    /// Write the table here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_prenorm(s: &str) -> Result<PrenormLevel, String> {
    PrenormLevel::parse(s).ok_or_else(|| format!("unknown conditioning level `{s}`"))
}

fn parse_point(s: &str) -> Result<Vector3<f64>, String> {
    let v: Vec<f64> =
        s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v.as_slice() {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Vector3::new(*x, *y, *z)),
        _ => Err(format!("expected three finite numbers x,y,z, got `{s}`")),
    }
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    match s.split_once(',').map(|(w, h)| (w.trim().parse(), h.trim().parse())) {
        Some((Ok(w), Ok(h))) => Ok((w, h)),
        _ => Err(format!("expected width,height, got `{s}`")),
    }
}

fn parse_weighting(s: &str) -> Result<Weighting, String> {
    Weighting::parse(s).ok_or_else(|| format!("unknown weighting `{s}`"))
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    AllFailed(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => EXIT_INVALID,
            Failure::AllFailed(_) => EXIT_ALL_FAILED,
        }
    }
}

fn invalid(e: impl ToString) -> Failure {
    Failure::Invalid(e.to_string())
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn finish_report(report: &AggregateReport, output: &OutputArgs) -> Result<(), Failure> {
    if let Some(path) = &output.out {
        write_file(path, &write_records(report))?;
    }
    print!("{}", report_table(report).render(output.format));
    Ok(())
}

fn bench_options(solver: &SolverArgs, timing: bool) -> BenchOptions {
    BenchOptions { timing, weighting: solver.weighting, solver: solver.solver(), ..BenchOptions::default() }
}

fn estimate(args: &EstimateArgs) -> Result<(), Failure> {
    let solver = args.solver.solver();
    solver.validate().map_err(invalid)?;
    let aor = args.aor.then(AorConfig::default);
    let datasets = args.datasets.iter().map(|p| {
        load_dataset(p).map_err(|e| match e {
            DatasetError::Io { .. } => invalid(e),
            _ => invalid(format!("{}: {e}", p.display())),
        })
    });
    let datasets = datasets.collect::<Result<Vec<_>, _>>()?;
    let evals: Vec<DatasetEvaluation> = datasets
        .iter()
        .map(|d| evaluate_dataset(d, &args.method, aor.as_ref(), &solver, args.solver.weighting))
        .collect();

    for e in evals.iter().flat_map(|e| &e.images) {
        match &e.outcome {
            ImageOutcome::Skipped(reason) => eprintln!("image {}: {} skipped: {reason}", e.image, e.method),
            ImageOutcome::Failed(reason) => eprintln!("image {}: {} failed: {reason}", e.image, e.method),
            ImageOutcome::Estimated { .. } => {}
        }
    }

    if let Some(path) = &args.out {
        let mut text = format!(
            "# pnl estimate methods={} aor={} prenorm={} k={} rows_per_line={} anisotropic={} weighting={}\n",
            args.method.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
            args.aor,
            solver.prenorm.name(),
            solver.k,
            if solver.two_rows_per_line { 2 } else { 3 },
            solver.anisotropic_scale,
            args.solver.weighting.name(),
        );
        let mut rows = Table { headers: Vec::new(), rows: Vec::new() };
        for e in &evals {
            text.push_str(&format!("# dataset {}\n", e.dataset));
            let t = image_table(e);
            rows.headers = std::iter::once("dataset".to_string()).chain(t.headers).collect();
            rows.rows.extend(t.rows.into_iter().map(|r| std::iter::once(e.dataset.clone()).chain(r).collect()));
        }
        text.push_str(&rows.render(args.format));
        write_file(path, &text)?;
    }
    print!("{}", sequence_table(&evals).render(args.format));

    let estimated = evals.iter().flat_map(|e| &e.images).any(|i| matches!(i.outcome, ImageOutcome::Estimated { .. }));
    if estimated {
        Ok(())
    } else {
        Err(Failure::AllFailed("no image could be estimated".into()))
    }
}

fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let grid: Vec<(usize, f64)> = args.lines.iter().flat_map(|&m| args.sigma.iter().map(move |&s| (m, s))).collect();
    let base = args.scene.scene().map_err(invalid)?;
    let options = bench_options(&args.solver, args.timing);
    let report =
        run_monte_carlo(&args.methods, &grid, args.trials, args.scene.seed, &base, &options).map_err(invalid)?;
    finish_report(&report, &args.output)
}

fn bench(args: &BenchArgs) -> Result<(), Failure> {
    let base = SceneConfig { sigma: args.sigma, ..args.scene.scene().map_err(invalid)? };
    let options = bench_options(&args.solver, true);
    let report =
        run_runtime_bench(&args.methods, &args.lines, args.trials, args.warmup, args.scene.seed, &base, &options)
            .map_err(invalid)?;
    finish_report(&report, &args.output)
}

fn ablate(args: &AblateArgs) -> Result<(), Failure> {
    let base = SceneConfig { lines: args.lines, sigma: args.sigma, ..args.scene.scene().map_err(invalid)? };
    let options = bench_options(&args.solver, args.timing);
    let report = run_prenorm_ablation(&args.levels, &base, args.trials, args.scene.seed, &options).map_err(invalid)?;
    finish_report(&report, &args.output)
}

fn outliers(args: &OutlierArgs) -> Result<(), Failure> {
    let base = SceneConfig { lines: args.lines, sigma: args.sigma, ..args.scene.scene().map_err(invalid)? };
    let mut options = bench_options(&args.solver, args.timing);
    if let Some(schedule) = &args.schedule {
        options.aor.schedule = schedule.clone();
    }
    if let Some(floor) = args.floor {
        options.aor.floor = floor;
    }
    options.aor.validate().map_err(invalid)?;
    let report = run_outlier_experiment(&args.methods, &args.fractions, &base, args.trials, args.scene.seed, &options)
        .map_err(invalid)?;
    finish_report(&report, &args.output)
}

fn report(args: &ReportArgs) -> Result<(), Failure> {
    let text =
        fs::read_to_string(&args.input).map_err(|e| Failure::Invalid(format!("{}: {e}", args.input.display())))?;
    let report = parse_records(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", args.input.display())))?;
    let table = report_table(&report).render(args.format);
    match &args.out {
        Some(path) => write_file(path, &table),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("PNL_THREADS") else { return Ok(()) };
    let threads: usize = match value.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return Err(Failure::Invalid(format!("PNL_THREADS must be a positive integer, got `{value}`"))),
    };
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(invalid)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Synth(a) => synth(a),
        Command::Bench(a) => bench(a),
        Command::Ablate(a) => ablate(a),
        Command::Outliers(a) => outliers(a),
        Command::Report(a) => report(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Invalid(msg) | Failure::AllFailed(msg)) = &f;
            eprintln!("pnl: {msg}");
            ExitCode::from(f.code())
        }
    }
}
