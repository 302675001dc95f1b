use lorentz_avg::harness::{run_comparison, run_comparison_full, to_json_bytes, write_series_csv, Config, MomentMode};

const TOML: &str = r#"
metric = "minkowski"
field.name = "null"
dist.kind = "gaussian_bump"
dist.sigma = 0.01
run.T = 3.0
run.tol = 1e-10
run.n_out = 30
"#;

#[test]
fn field_free_run_has_no_divergence() {
    let cfg = Config::from_toml_str(TOML).unwrap();
    let r = run_comparison(&cfg).unwrap();
    assert_eq!(r.series.len(), 31);
    assert!(r.pass);
    let worst = r.series.iter().map(|p| p.div_x.max(p.div_v)).fold(0.0, f64::max);
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn config_file_drives_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, TOML).unwrap();
    let cfg = Config::from_path(&path).unwrap();
    assert_eq!(cfg.run.n_out, 30);
    assert_eq!(Config::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap(), cfg);
}

#[test]
fn report_json_keeps_field_order() {
    let mut cfg = Config::default();
    cfg.run.t = 1.0;
    cfg.run.n_out = 5;
    let text = String::from_utf8(to_json_bytes(&run_comparison(&cfg).unwrap()).unwrap()).unwrap();
    let keys = [
        "\"alpha\"",
        "\"energy\"",
        "\"norm_F\"",
        "\"constants\"",
        "\"series\"",
        "\"hypotheses\"",
        "\"pass\"",
    ];
    let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{pos:?}");
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for k in ["C", "C2", "B2", "K", "K2", "D2"] {
        assert!(v["constants"][k].is_number(), "{k}");
    }
}

#[test]
fn frozen_moments_leave_the_vlasov_regime() {
    let mut cfg = Config::default();
    cfg.run.t = 2.0;
    cfg.run.n_out = 4;
    let vlasov = run_comparison_full(&cfg).unwrap();
    cfg.run.mode = MomentMode::Frozen;
    let frozen = run_comparison_full(&cfg).unwrap();
    assert_eq!(vlasov.report.series[0], frozen.report.series[0]);
    // frozen moments stop gyrating with the bunch
    assert!(vlasov.report.pass);
    let last = |r: &lorentz_avg::harness::ComparisonRun| r.report.series.last().unwrap().div_x;
    assert!(last(&frozen) > 1e3 * last(&vlasov));
    let mut buf = Vec::new();
    write_series_csv(&mut buf, &vlasov.report.series).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("t,div_x,bound_x,div_v,bound_v\n"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn divergence_to_bound_ratio_is_lorentz_covariant() {
    use lorentz_avg::harness::{compare_ensemble, initial_ensemble, CompareOptions};
    use lorentz_avg::Vector;

    let mut cfg = Config::default();
    cfg.run.t = 10.0;
    cfg.run.n_out = 20;
    let metric = cfg.metric_field().unwrap();
    let field = cfg.field_preset().unwrap();
    let x0 = Vector::zeros(4);
    let lab = initial_ensemble(&cfg, &metric, &x0).unwrap();
    // a boost along B leaves a uniform magnetic field unchanged
    let (ch, sh) = (0.6f64.cosh(), 0.6f64.sinh());
    let mut moved = lab.clone();
    for y in &mut moved.points {
        let (y0, y3) = (y[0], y[3]);
        y[0] = ch * y0 + sh * y3;
        y[3] = sh * y0 + ch * y3;
    }
    let opts = CompareOptions::from_config(&cfg);
    let a = compare_ensemble(&metric, &field, &x0, &lab, None, &opts).unwrap().report;
    let opts = CompareOptions {
        t_end: ch * cfg.run.t,
        ..opts
    };
    let b = compare_ensemble(&metric, &field, &x0, &moved, None, &opts).unwrap().report;
    let (ma, mb) = (a.multiplier_x.unwrap(), b.multiplier_x.unwrap());
    assert!((ma / mb - 1.0).abs() < 0.05, "{ma:e} vs {mb:e}");
    // lab 3-velocities transverse to the boost shrink by 1/cosh, the
    // velocity bound does not
    let (ma, mb) = (a.multiplier_v.unwrap(), b.multiplier_v.unwrap());
    assert!((ma / mb - ch).abs() < 0.05 * ch, "{ma:e} vs {mb:e}");
}
