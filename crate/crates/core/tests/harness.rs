use odeclass::estimators::{fit_nls, DesignSample, OdeParamModel};
use odeclass::harness::emit::read_runs_csv;
use odeclass::harness::{run_experiment, simulate, ExperimentConfig};

const CONFIG: &str = r#"
[experiment]
seed = 11
replications = 10
sigma = 0.2
n_ladder = [32, 64, 128]

[truth]
name = "quadratic"

[method]
name = "spline"

[output]
bounds = true
"#;

#[test]
fn simulation_is_reproducible_across_thread_counts() {
    let cfg = ExperimentConfig::from_toml_str(CONFIG).unwrap();
    let a = simulate(&cfg, Some(1)).unwrap();
    let b = simulate(&cfg, Some(4)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 30);
    assert!(a.iter().all(|r| !r.failed && r.mse > 0.0));
}

#[test]
fn experiment_writes_artifacts() {
    let cfg = ExperimentConfig::from_toml_str(CONFIG).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (records, summary) = run_experiment(&cfg, dir.path(), None).unwrap();
    assert_eq!(read_runs_csv(&dir.path().join("runs.csv")).unwrap(), records);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("rates.json")).unwrap()).unwrap();
    assert_eq!(json["config_hash"], summary.config_hash);
    assert_eq!(json["regression"]["n_values"], serde_json::json!([32, 64, 128]));
    let bounds = std::fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert_eq!(bounds.lines().count(), 4);

    let again = tempfile::tempdir().unwrap();
    run_experiment(&cfg, again.path(), None).unwrap();
    for f in ["runs.csv", "rates.json", "bounds.csv"] {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_hash_tracks_content() {
    let a = ExperimentConfig::from_toml_str(CONFIG).unwrap();
    let b = ExperimentConfig::from_toml_str(&CONFIG.replace("seed = 11", "seed = 12")).unwrap();
    assert_eq!(a.hash(), ExperimentConfig::from_toml_str(CONFIG).unwrap().hash());
    assert_ne!(a.hash(), b.hash());
    assert!(ExperimentConfig::from_toml_str(&CONFIG.replace("sigma = 0.2", "sigma = 0.2\nbogus = 1")).is_err());
}

#[test]
fn design_csv_feeds_estimators() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let mut text = String::from("x, y\n");
    for i in 1..=40 {
        let x = 0.9 * i as f64 / 40.0;
        text.push_str(&format!("{x}, {}\n", (-0.5 * x).exp()));
    }
    std::fs::write(&path, text).unwrap();
    let data = DesignSample::from_csv(&path, 0.0).unwrap();
    assert_eq!(data.n(), 40);
    let fit = fit_nls(&data, &OdeParamModel::linear_decay(), 17).unwrap();
    assert!((fit.weights[0] - 0.5).abs() < 1e-6);
}
