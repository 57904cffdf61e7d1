use std::path::Path;
use std::process::{Command, Output};

use pnl_core::dataset::{save_dataset, Dataset};
use pnl_core::records::parse_records;
use pnl_core::synth::{generate_scene, SceneConfig};

fn pnl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnl")).args(args).env("PNL_THREADS", "2").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_scene(path: &Path, lines: usize, seed: u64) {
    let scene = generate_scene(&SceneConfig { lines, sigma: 1.0, seed, ..Default::default() }).unwrap();
    save_dataset(&Dataset::from_scene(&scene, "s"), path).unwrap();
}

fn csv_rows(text: &str) -> Vec<csv::StringRecord> {
    let rows: Vec<_> = csv::Reader::from_reader(text.as_bytes()).records().collect::<Result<_, _>>().unwrap();
    rows
}

#[test]
fn synth_grid_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.rec"), dir.path().join("b.rec"));
    let args = |p: &Path| {
        ["synth", "--lines", "10,100", "--sigma", "0,2", "--trials", "50", "--seed", "7", "--out"]
            .iter()
            .map(|s| s.to_string())
            .chain([p.display().to_string()])
            .collect::<Vec<_>>()
    };
    for p in [&a, &b] {
        let out = pnl(&args(p).iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let report = parse_records(std::str::from_utf8(&bytes).unwrap()).unwrap();
    assert_eq!(report.seed, 7);
    assert_eq!(report.trials.len(), 4 * 3 * 50);
    assert_eq!(report.cells.len(), 12);
    let mut grid: Vec<(usize, f64)> = report.cells.iter().map(|c| (c.key.lines, c.key.sigma)).collect();
    grid.dedup();
    assert_eq!(grid.len(), 4);
}

#[test]
fn report_csv_is_tabular() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("r.rec");
    let out = pnl(&["synth", "--lines", "20", "--sigma", "1", "--trials", "5", "--out", rec.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let before = std::fs::read(&rec).unwrap();
    let out = pnl(&["report", rec.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 3);
    assert_eq!(std::fs::read(&rec).unwrap(), before);
    let text = pnl(&["report", rec.to_str().unwrap()]);
    assert!(stdout(&text).starts_with("method"));
}

#[test]
fn singular_mode_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("f.rec");
    let out = pnl(&[
        "synth",
        "--lines",
        "30",
        "--sigma",
        "1",
        "--trials",
        "3",
        "--singular-mode",
        "flatten:0.01",
        "--out",
        rec.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&rec).unwrap();
    assert!(text.lines().next().unwrap().contains("singular=flatten:0.01"));
    assert_eq!(code(&pnl(&["synth", "--singular-mode", "flatten:2"])), 2);
}

#[test]
fn estimate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.pnl");
    write_scene(&good, 30, 1);
    let before = std::fs::read(&good).unwrap();
    let table = dir.path().join("poses.txt");
    let out = pnl(&["estimate", good.to_str().unwrap(), "--method", "dlt-combined", "--out", table.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&good).unwrap(), before);
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("# pnl estimate"));
    assert!(text.contains("dlt_combined") && text.contains(" ok "));
    assert!(stdout(&out).contains("rot_deg"));

    let out = pnl(&["estimate", dir.path().join("missing.pnl").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(!out.stderr.is_empty());

    let short = dir.path().join("short.pnl");
    write_scene(&short, 4, 2);
    let out = pnl(&["estimate", short.to_str().unwrap(), "--method", "dlt-lines,dlt-plucker,dlt-combined"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped"));

    let bad = dir.path().join("bad.pnl");
    std::fs::write(&bad, "pnl-dataset 1\nK 1 1 0 0\nL3 a 0 0 0 1 1 1\nIMG 0\nC b 0 0 1 1\n").unwrap();
    let out = pnl(&["estimate", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("`b`"));
}

#[test]
fn estimate_csv_and_aor() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.pnl"), dir.path().join("b.pnl"));
    write_scene(&a, 60, 3);
    write_scene(&b, 60, 4);
    let out = pnl(&[
        "estimate",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--methods",
        "dlt-lines,dlt-combined",
        "--aor",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0].len(), 4);
}

#[test]
fn bench_and_ablate_shapes() {
    let out = pnl(&["bench", "--lines", "10,100", "--trials", "2", "--warmup", "1"]);
    assert_eq!(code(&out), 0);
    let head = stdout(&out).lines().next().unwrap().to_string();
    assert!(head.contains("m10_ms") && head.contains("m100_ms"), "{head}");
    assert_eq!(stdout(&out).lines().count(), 4);

    let out = pnl(&["ablate", "--trials", "3", "--lines", "50"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.lines().next().unwrap().contains("pos_gain_pct"));
    assert_eq!(text.lines().count(), 7);

    let out = pnl(&["outliers", "--trials", "2", "--lines", "100", "--fractions", "0,0.2", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    assert_eq!(csv_rows(&stdout(&out)).len(), 4);
}

#[test]
fn validation_errors() {
    assert_eq!(code(&pnl(&["synth", "--methods", "dlt-nothing"])), 2);
    assert_eq!(code(&pnl(&["synth", "--trials", "0", "--lines", "10"])), 2);
    assert_eq!(code(&pnl(&["ablate", "--levels", "i-v,i"])), 2);
    assert_eq!(code(&pnl(&["outliers", "--fractions", "0.9"])), 2);
    assert_eq!(code(&pnl(&["report", "--format", "xml", "x"])), 2);
    let out = Command::new(env!("CARGO_BIN_EXE_pnl"))
        .args(["synth", "--lines", "10", "--trials", "1"])
        .env("PNL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for threads in ["1", "3"] {
        let p = dir.path().join(format!("t{threads}.rec"));
        let out = Command::new(env!("CARGO_BIN_EXE_pnl"))
            .args(["outliers", "--trials", "4", "--lines", "80", "--fractions", "0.3", "--out", p.to_str().unwrap()])
            .env("PNL_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        files.push(std::fs::read(&p).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn scene_geometry_flags() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("c.rec");
    let out = pnl(&[
        "ablate",
        "--trials",
        "2",
        "--lines",
        "30",
        "--levels",
        "none,i,i-ii",
        "--cube-center",
        "20,0,-5",
        "--image-size",
        "800,600",
        "--out",
        rec.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let header = std::fs::read_to_string(&rec).unwrap().lines().next().unwrap().to_string();
    assert!(header.contains("cube_center=20,0,-5"), "{header}");
    assert!(header.contains("intrinsics=800,800,400,300,800,600"), "{header}");
    assert_eq!(code(&pnl(&["ablate", "--cube-center", "1,2"])), 2);
    assert_eq!(code(&pnl(&["ablate", "--image-size", "800"])), 2);
}
