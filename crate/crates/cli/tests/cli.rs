use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_odeclass")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn derivs_reports_factorial_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.json");
    ok(&["derivs", "--ode", "extremal", "--kmax", "5", "--json-out", out.to_str().unwrap()]);
    let v = json(&out);
    let certs = v.as_array().or_else(|| v["certificates"].as_array()).expect("certificate list");
    assert_eq!(certs.len(), 5);
    for (k, c) in certs.iter().enumerate() {
        let bound = c["bound"].as_f64().unwrap();
        assert_eq!(bound, (1..=k).product::<usize>() as f64);
        assert!(c["slack"].as_f64().unwrap() >= -1e-8);
    }
}

#[test]
fn derivs_accepts_a_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("ode.toml");
    std::fs::write(&spec, "ode = \"sin\"\ny0 = 0.5\n").unwrap();
    ok(&["derivs", "--ode", spec.to_str().unwrap(), "--kmax", "3"]);
    assert!(!run(&["derivs", "--ode", "no-such-ode"]).status.success());
}

#[test]
fn bounds_sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    ok(&["bounds", "--formula", "kolmogorov", "--gamma", "1", "--sweep", "0.001:0.1:5", "--csv-out", csv.to_str().unwrap()]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    // upper and lower bound per delta
    assert_eq!(lines.len(), 1 + 2 * 5);
    assert!(lines[0].starts_with("formula,delta,gamma,value"));
    assert!(lines[1].starts_with("KolmogorovUpper,0.001,"));
    assert!(lines[2].starts_with("KolmogorovLower,0.001,"));
    assert!(lines[10].starts_with("KolmogorovLower,0.1,"));
}

#[test]
fn bounds_rejects_out_of_range_delta() {
    assert!(!run(&["bounds", "--formula", "kolmogorov", "--delta", "1.5"]).status.success());
}

#[test]
fn rates_figure_one_crossover() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("f1.csv");
    let stdout = ok(&["rates", "--figure", "1", "--delta", "0.01", "--gamma-max", "6", "--csv-out", csv.to_str().unwrap()]);
    assert!(stdout.contains('2'), "{stdout}");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 2 * 7);
}

#[test]
fn fit_and_gronwall_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let mut text = String::from("x,y\n");
    for i in 1..=32 {
        let x = 0.95 * i as f64 / 32.0;
        text.push_str(&format!("{x},{}\n", (-0.5 * x).exp()));
    }
    std::fs::write(&data, text).unwrap();
    let fit = dir.path().join("fit.json");
    ok(&[
        "fit",
        "--method",
        "nls",
        "--data",
        data.to_str().unwrap(),
        "--truth",
        "linear-decay",
        "--json-out",
        fit.to_str().unwrap(),
    ]);
    let v = json(&fit);
    assert!((v["fit"]["weights"][0].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert!(v["in_sample_mse"].as_f64().unwrap() < 1e-12);

    let pair = dir.path().join("pair.toml");
    std::fs::write(&pair, "kind = \"linear\"\nf = [1.0]\ng = [1.0]\ny0 = [1.0]\nz0 = [0.9]\nb = 2.0\n").unwrap();
    let g = dir.path().join("g.json");
    ok(&["gronwall", "--pair", pair.to_str().unwrap(), "--json-out", g.to_str().unwrap()]);
    assert!((json(&g)["max_ratio"].as_f64().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "[experiment]\nseed = 3\nreplications = 10\nsigma = 0.3\nn_ladder = [32, 64, 128]\n\n[truth]\nname = \"separable-cos\"\n\n[method]\nname = \"spline\"\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(std::fs::read_to_string(out.join("runs.csv")).unwrap().lines().count(), 31);
    assert!(json(&out.join("rates.json"))["regression"]["slope"].as_f64().unwrap() < 0.0);
}
