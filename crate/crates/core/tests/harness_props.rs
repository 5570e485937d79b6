use pendular_core::harness::{self, svg::PlotSpec, QpSweepConfig, SweepResult};

fn csv_bytes(r: &SweepResult) -> Vec<u8> {
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    buf
}

#[test]
fn identical_config_gives_identical_csv() {
    let cfg = QpSweepConfig::test_b().unwrap();
    let a = harness::run_test_b(&cfg).unwrap();
    let b = harness::run_test_b(&cfg).unwrap();
    assert_eq!(csv_bytes(&a), csv_bytes(&b));

    let k = harness::KinkConfig::go1().unwrap();
    assert_eq!(csv_bytes(&harness::run_kink(&k).unwrap()), csv_bytes(&harness::run_kink(&k).unwrap()));
}

#[test]
fn test_b_schema_and_overlay() {
    let r = harness::run_test_b(&QpSweepConfig::test_b().unwrap()).unwrap();
    let text = String::from_utf8(csv_bytes(&r)).unwrap();
    assert!(text.starts_with("alpha,hdot_over_m,analytic_K_over_alpha,solver_iters,residual\n"));
    assert!(r.rows.windows(2).all(|w| w[0].param < w[1].param));
    assert_eq!(r.fitted["spot_check_max_rel_diff"], 0.0);
    // overlay column is K_a / α
    let k_a = r.overlays["K_a"];
    for (a, v) in r.column("analytic_K_over_alpha").unwrap() {
        assert!((v * a - k_a).abs() < 1e-12 * k_a);
    }
}

#[test]
fn cancellation_ratios_separate_four_and_two_feet() {
    let b = harness::run_test_b(&QpSweepConfig::test_b().unwrap()).unwrap();
    let c = harness::run_test_c(&QpSweepConfig::test_c().unwrap()).unwrap();
    let ratio = |r: &SweepResult| r.value_at("hdot_over_m", 1.0).unwrap() / r.value_at("hdot_over_m", 1000.0).unwrap();
    assert!(ratio(&b) >= 50.0, "N=4 ratio {}", ratio(&b));
    assert!(ratio(&c) <= 2.0, "N=2 ratio {}", ratio(&c));
}

#[test]
fn artifacts_are_written_and_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let r = harness::run_prefactor(&harness::PrefactorConfig::go1().unwrap()).unwrap();
    let spec = PlotSpec::new("prefactor", "lambda/alpha", "ratio", (true, false), &["measured"], &["analytic"]);
    let paths = r.write_artifacts(dir.path(), "123", &spec).unwrap();
    let names: Vec<String> = paths.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["prefactor.csv", "prefactor_summary.txt", "prefactor_123.svg"]);
    let back = SweepResult::read_csv("prefactor", std::fs::File::open(&paths[0]).unwrap()).unwrap();
    assert_eq!(back.rows, r.rows);
    let summary = std::fs::read_to_string(&paths[1]).unwrap();
    assert!(summary.contains("max_abs_err="));
}

#[test]
fn failing_rows_are_recorded_not_fatal() {
    // a near-frictionless floor cannot carry the sway, so every row fails
    let mut cfg = QpSweepConfig::test_b().unwrap();
    cfg.scenario.stance = cfg.scenario.stance.with_mu(0.001).unwrap();
    cfg.alphas = vec![1.0, 10.0, 100.0, 1000.0];
    let r = harness::run_test_b(&cfg).unwrap();
    assert_eq!(r.rows.len(), 4);
    assert_eq!(r.errors().len(), 4);
    assert!(r.rows.iter().all(|row| row.values[0].is_nan()));

    let dir = tempfile::tempdir().unwrap();
    let spec = PlotSpec::new("b", "alpha", "y", (true, true), &["hdot_over_m"], &[]);
    let paths = r.write_artifacts(dir.path(), "1", &spec).unwrap();
    assert!(paths.iter().any(|p| p.ends_with("test_b_errors.csv")));
}
