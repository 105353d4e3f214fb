//! Monte-Carlo experiments over sample-size ladders, rate regression and
//! artifact output.

pub mod config;
pub mod emit;
pub mod rng;
pub mod simulate;
pub mod truths;

use std::path::Path;

pub use config::{Aggregation, DesignKind, ExperimentConfig, MethodName};
pub use simulate::{design_points, rate_regression, run_method, simulate, target_slope, RateReport, RunRecord};
pub use truths::Truth;

use crate::deriv::OdeKind;
use crate::error::Result;
use crate::rates::{critical_radius, kernel_radius, standard_class_radius, RateParams};
use emit::TheoryRow;

#[derive(Debug, Clone, serde::Serialize)]
pub struct RatesJson {
    pub config_hash: String,
    pub method: String,
    pub design: DesignKind,
    pub target_slope: f64,
    pub regression: Option<RateReport>,
    pub regression_error: Option<String>,
}

/// Theoretical radii next to the empirical mean MSE for each ladder entry.
pub fn theory_table(cfg: &ExperimentConfig, records: &[RunRecord]) -> Result<Vec<TheoryRow>> {
    let sigma = if cfg.experiment.sigma > 0.0 { cfg.experiment.sigma } else { 1.0 };
    let beta = cfg.method.beta;
    cfg.experiment
        .n_ladder
        .iter()
        .map(|&n| {
            let ok: Vec<f64> = records.iter().filter(|r| r.n == n && !r.failed).map(|r| r.mse).collect();
            let mean_mse = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 };
            let p = RateParams::new(n, sigma, beta)?;
            Ok(TheoryRow {
                n,
                mean_mse,
                critical_r2: critical_radius(&p, OdeKind::Autonomous).r_squared,
                kernel_r2: kernel_radius(&p).r_squared,
                standard_r2: standard_class_radius(beta, &p),
            })
        })
        .collect()
}

/// Runs the experiment and writes `runs.csv`, `rates.json` and, when
/// requested, `bounds.csv` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, jobs: Option<usize>) -> Result<(Vec<RunRecord>, RatesJson)> {
    let records = simulate(cfg, jobs)?;
    emit::write_runs_csv(&records, &out_dir.join("runs.csv"))?;
    let (regression, regression_error) = match rate_regression(&records, None, cfg.experiment.aggregation) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let summary = RatesJson {
        config_hash: cfg.hash(),
        method: cfg.method.name.as_str().to_string(),
        design: cfg.experiment.design,
        target_slope: target_slope(cfg.method.beta),
        regression,
        regression_error,
    };
    emit::write_json(&summary, &out_dir.join("rates.json"))?;
    if cfg.output.bounds {
        emit::write_theory_csv(&theory_table(cfg, &records)?, &out_dir.join("bounds.csv"))?;
    }
    Ok((records, summary))
}
