use pnl_core::aor::AorConfig;
use pnl_core::bench::ErrorStats;
use pnl_core::dataset::*;
use pnl_core::metrics::{pose_error, Weighting};
use pnl_core::synth::{generate_scene, SceneConfig};
use pnl_core::{estimate_pose, CorrespondenceSet, Method, SolverConfig};

const METHODS: [Method; 3] = [Method::DltLines, Method::DltPlucker, Method::DltCombined];

fn scene_dataset(lines: usize, seed: u64) -> (pnl_core::synth::SyntheticScene, Dataset) {
    let scene = generate_scene(&SceneConfig { lines, sigma: 1.0, seed, ..Default::default() }).unwrap();
    let d = Dataset::from_scene(&scene, "scene");
    (scene, d)
}

#[test]
fn save_load_round_trip() {
    let (_, d) = scene_dataset(40, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.pnl");
    save_dataset(&d, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back, d);
    assert_eq!(write_dataset(&back), write_dataset(&d));
}

#[test]
fn reloaded_evaluation_is_identical() {
    let (_, d) = scene_dataset(60, 2);
    let back = parse_dataset(&write_dataset(&d), "scene").unwrap();
    let solver = SolverConfig::default();
    for aor in [None, Some(AorConfig::default())] {
        let a = evaluate_dataset(&d, &METHODS, aor.as_ref(), &solver, Weighting::default());
        let b = evaluate_dataset(&back, &METHODS, aor.as_ref(), &solver, Weighting::default());
        assert_eq!(a, b);
    }
}

#[test]
fn evaluation_matches_direct_scene_run() {
    let (scene, d) = scene_dataset(80, 3);
    let solver = SolverConfig::default();
    let eval = evaluate_dataset(&d, &METHODS, None, &solver, Weighting::default());
    let corrs = CorrespondenceSet::from_segments(&scene.segments3, &scene.image_noisy).unwrap();
    let lines: Vec<_> = scene.segments3.iter().map(|s| s.plucker()).collect();
    for e in &eval.images {
        let direct = estimate_pose(&corrs, e.method, &solver).unwrap();
        let want = pose_error(&scene.pose, &direct.pose, &scene.image_noisy, &lines, Weighting::default()).unwrap();
        let ImageOutcome::Estimated { pose, error: Some(got), .. } = &e.outcome else { panic!("{:?}", e.outcome) };
        assert_eq!(pose, &direct.pose);
        assert_eq!(got.reprojection, want.reprojection);
        // The stored truth passes through K [R | -RT] and back.
        assert!((got.orientation_deg - want.orientation_deg).abs() < 1e-9);
        assert!((got.position - want.position).abs() < 1e-11);
    }
    for s in &eval.summaries {
        assert_eq!((s.estimated, s.skipped, s.failed), (1, 0, 0));
        let m: ErrorStats = s.mean.unwrap();
        assert!(m.position < 2.0, "{:?} {m:?}", s.method);
    }
}

#[test]
fn dangling_id_is_rejected() {
    let text = "pnl-dataset 1\nK 800 800 320 240\nL3 a 0 0 0 1 0 0\nIMG 0\nC b 1 2 3 4\n";
    match parse_dataset(text, "x") {
        Err(DatasetError::DanglingId { line: 5, image, id }) => assert_eq!((image.as_str(), id.as_str()), ("0", "b")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_inputs_are_rejected() {
    let base = "pnl-dataset 1\nK 800 800 320 240\n";
    let cases = [
        ("", "header"),
        ("pnl-dataset 2\n", "header"),
        (&*format!("{base}L3 a 0 0 0 1 0\n"), "short"),
        (&*format!("{base}L3 a 0 0 0 1 0 nan\n"), "nan"),
        (&*format!("{base}L3 a 0 0 0 1 0 0\nL3 a 0 0 0 0 1 0\n"), "dup"),
        (&*format!("{base}L3 a 0 0 0 0 0 0\n"), "degenerate"),
        (&*format!("{base}C a 1 2 3 4\n"), "outside"),
        (&*format!("{base}K 1 1 0 0\n"), "twice"),
        (&*format!("{base}IMG 0\nGT 1 0 0 0 0 1 0 0 0 0 1 0\nGT 1 0 0 0 0 1 0 0 0 0 1 0\n"), "gt twice"),
        (&*format!("{base}IMG 0\nGT 1 0 0 0 0 2 0 0 0 0 1 0\n"), "not a rotation"),
        ("pnl-dataset 1\nIMG 0\n", "no intrinsics"),
        (&*format!("{base}IMG 0\nIMG 0\n"), "dup image"),
        (&*format!("{base}X\n"), "keyword"),
        (&*format!("{base}K 0 800 320 240\n"), "bad K"),
    ];
    for (text, why) in cases {
        assert!(parse_dataset(text, "x").is_err(), "{why}: {text:?}");
    }
}

#[test]
fn too_few_lines_are_skipped() {
    let (_, mut d) = scene_dataset(4, 5);
    d.images[0].id = "short".into();
    let eval = evaluate_dataset(&d, &METHODS, None, &SolverConfig::default(), Weighting::default());
    for e in &eval.images {
        assert!(matches!(e.outcome, ImageOutcome::Skipped(_)), "{:?}", e);
    }
    assert!(eval.summaries.iter().all(|s| s.skipped == 1 && s.mean.is_none()));
    let table = image_table(&eval).to_string();
    assert!(table.contains("skipped"));
}

#[test]
fn minimal_file_is_accepted_by_combined() {
    let (scene, _) = scene_dataset(5, 6);
    let d = Dataset::from_scene(&scene, "min");
    let text = write_dataset(&d);
    assert_eq!(text.lines().filter(|l| l.starts_with("L3 ")).count(), 5);
    let d = parse_dataset(&text, "min").unwrap();
    let eval = evaluate_dataset(&d, &[Method::DltCombined], None, &SolverConfig::default(), Weighting::default());
    assert!(matches!(eval.images[0].outcome, ImageOutcome::Estimated { .. }), "{:?}", eval.images[0]);
}

#[test]
fn images_without_ground_truth_have_no_error() {
    let (_, mut d) = scene_dataset(30, 7);
    d.images[0].ground_truth = None;
    let d = parse_dataset(&write_dataset(&d), "x").unwrap();
    let eval = evaluate_dataset(&d, &[Method::DltLines], None, &SolverConfig::default(), Weighting::default());
    assert!(matches!(eval.images[0].outcome, ImageOutcome::Estimated { error: None, .. }));
    assert!(eval.summaries[0].mean.is_none());
}

#[test]
fn sequence_table_has_one_column_per_dataset() {
    let evals: Vec<_> = (10..12)
        .map(|seed| {
            let (_, mut d) = scene_dataset(30, seed);
            d.name = format!("seq{seed}");
            evaluate_dataset(&d, &METHODS, None, &SolverConfig::default(), Weighting::default())
        })
        .collect();
    let t = sequence_table(&evals);
    assert_eq!(t.headers, ["measure", "method", "seq10", "seq11"]);
    assert_eq!(t.rows.len(), 9);
}
