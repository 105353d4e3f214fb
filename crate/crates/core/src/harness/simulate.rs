use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    fit_constrained_krr, fit_constrained_krr_cv, fit_nls, fit_picard, fit_standard_spline, mse_against, DesignSample,
    FitDiagnostics, FitModel, OdeParamModel, CV_GRID,
};
use crate::harness::config::{Aggregation, DesignKind, ExperimentConfig, MethodName, MethodSection};
use crate::harness::rng::{design_rng, gaussian_noise, replication_rng};
use crate::harness::truths::Truth;
use crate::numeric::ols_line;

/// Fraction of the truth's interval covered by the design.
pub const DESIGN_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub method: String,
    /// `NaN` for failed runs.
    pub mse: f64,
    pub failed: bool,
    #[serde(skip)]
    pub wall_time: f64,
    #[serde(skip)]
    pub diagnostics: Option<FitDiagnostics>,
}

impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.rep == other.rep
            && self.seed == other.seed
            && self.method == other.method
            && (self.mse == other.mse || (self.mse.is_nan() && other.mse.is_nan()))
            && self.failed == other.failed
    }
}

/// Design points `x_i = hi i / n`, `i = 1..n` (or sorted uniform draws on `[0, hi]`).
pub fn design_points(kind: DesignKind, n: usize, hi: f64, seed: u64) -> Vec<f64> {
    match kind {
        DesignKind::Equispaced => (1..=n).map(|i| hi * i as f64 / n as f64).collect(),
        DesignKind::Uniform => {
            let mut rng = design_rng(seed, n);
            let mut xs: Vec<f64> = (0..n).map(|_| hi * rng.random::<f64>()).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            xs
        }
    }
}

/// Runs the configured estimator on one data set.
pub fn run_method(method: &MethodSection, data: &DesignSample) -> Result<FitModel> {
    match method.name {
        MethodName::Spline => fit_standard_spline(data),
        MethodName::Krr if method.cv => fit_constrained_krr_cv(data, method.beta, method.variant, &CV_GRID),
        MethodName::Krr => fit_constrained_krr(data, method.beta, method.variant, method.c),
        MethodName::Nls => fit_nls(data, &OdeParamModel::by_name(&method.model)?, method.resolution),
        MethodName::Picard => fit_picard(data, &OdeParamModel::by_name(&method.model)?, method.y0_hat, method.r, method.t),
    }
}

fn one_run(cfg: &ExperimentConfig, xs: &[f64], truth: &[f64], n: usize, rep: usize) -> RunRecord {
    let start = Instant::now();
    let e = &cfg.experiment;
    let mut rng = replication_rng(e.seed, n, rep);
    let noise = gaussian_noise(&mut rng, xs.len(), e.sigma);
    let ys: Vec<f64> = truth.iter().zip(&noise).map(|(t, z)| t + z).collect();
    let outcome = DesignSample::new(xs.to_vec(), ys, e.sigma).and_then(|data| run_method(&cfg.method, &data));
    let (mse, failed, diagnostics) = match outcome {
        Ok(fit) => {
            let mse = fit.fitted.iter().zip(truth).map(|(f, t)| (f - t).powi(2)).sum::<f64>() / truth.len() as f64;
            (mse, !mse.is_finite(), Some(fit.diagnostics))
        }
        Err(_) => (f64::NAN, true, None),
    };
    RunRecord {
        n,
        rep,
        seed: e.seed,
        method: cfg.method.name.as_str().to_string(),
        mse,
        failed,
        wall_time: start.elapsed().as_secs_f64(),
        diagnostics,
    }
}

/// One record per `(n, replication)`, in `(n, replication)` order.
///
/// Estimator failures mark the record as failed; they do not stop the run.
pub fn simulate(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let truth = Truth::by_name(&cfg.truth.name)?;
    let hi = DESIGN_FRACTION * truth.alpha;
    let mut tasks = Vec::new();
    let mut designs = Vec::new();
    for &n in &cfg.experiment.n_ladder {
        let xs = design_points(cfg.experiment.design, n, hi, cfg.experiment.seed);
        let ys = truth.values(&xs)?;
        designs.push((xs, ys));
        for rep in 0..cfg.experiment.replications {
            tasks.push((designs.len() - 1, n, rep));
        }
    }
    let work = || -> Vec<RunRecord> {
        tasks.par_iter().map(|&(d, n, rep)| one_run(cfg, &designs[d].0, &designs[d].1, n, rep)).collect()
    };
    let mut records = match jobs {
        Some(j) => {
            rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build().map_err(|e| Error::Config(e.to_string()))?.install(work)
        }
        None => work(),
    };
    records.sort_by_key(|r| (r.n, r.rep));
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub slope: f64,
    pub stderr: f64,
    pub r2: f64,
    pub n_values: Vec<usize>,
    pub mean_mse: Vec<f64>,
    pub replications: Vec<usize>,
}

fn aggregate(values: &mut [f64], how: Aggregation) -> f64 {
    match how {
        Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregation::Trimmed => {
            values.sort_by(f64::total_cmp);
            let cut = (values.len() as f64 * 0.05).floor() as usize;
            let kept = &values[cut..values.len() - cut];
            kept.iter().sum::<f64>() / kept.len() as f64
        }
    }
}

/// OLS of `log(mean MSE)` on `log n` over successful records.
pub fn rate_regression(records: &[RunRecord], method: Option<&str>, how: Aggregation) -> Result<RateReport> {
    let mut by_n: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for r in records {
        if r.failed || method.is_some_and(|m| m != r.method) {
            continue;
        }
        by_n.entry(r.n).or_default().push(r.mse);
    }
    by_n.retain(|_, v| v.len() >= 10);
    if by_n.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} sample sizes with at least 10 successful replications; 3 are required",
            by_n.len()
        )));
    }
    let n_values: Vec<usize> = by_n.keys().copied().collect();
    let replications: Vec<usize> = by_n.values().map(Vec::len).collect();
    let mean_mse: Vec<f64> = by_n.values_mut().map(|v| aggregate(v, how)).collect();
    let lx: Vec<f64> = n_values.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = mean_mse.iter().map(|m| m.ln()).collect();
    let (slope, _, stderr, r2) = ols_line(&lx, &ly);
    Ok(RateReport { slope, stderr, r2, n_values, mean_mse, replications })
}

/// `-2 (beta + 2) / (2 (beta + 2) + 1)`.
pub fn target_slope(beta: usize) -> f64 {
    let e = beta as f64 + 2.0;
    -2.0 * e / (2.0 * e + 1.0)
}

/// Empirical MSE of an arbitrary prediction against a closed-form truth.
pub fn prediction_mse(pred: &[f64], xs: &[f64], truth: impl Fn(f64) -> f64) -> f64 {
    mse_against(pred, xs, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(powers: &[(usize, f64)], reps: usize) -> Vec<RunRecord> {
        let mut out = Vec::new();
        for &(n, mse) in powers {
            for rep in 0..reps {
                out.push(RunRecord {
                    n,
                    rep,
                    seed: 0,
                    method: "spline".into(),
                    mse,
                    failed: false,
                    wall_time: 0.0,
                    diagnostics: None,
                });
            }
        }
        out
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<(usize, f64)> = [64usize, 128, 256, 512].iter().map(|&n| (n, (n as f64).powf(-0.8))).collect();
        let r = rate_regression(&records(&pts, 10), None, Aggregation::Mean).unwrap();
        assert!((r.slope + 0.8).abs() < 1e-12);
        assert_eq!(target_slope(0), -0.8);
    }

    #[test]
    fn needs_three_sizes_and_ten_reps() {
        let pts = [(64usize, 0.1), (128, 0.05), (256, 0.02)];
        assert!(matches!(rate_regression(&records(&pts[..2], 10), None, Aggregation::Mean), Err(Error::InsufficientData(_))));
        assert!(matches!(rate_regression(&records(&pts, 9), None, Aggregation::Mean), Err(Error::InsufficientData(_))));
        assert!(rate_regression(&records(&pts, 10), Some("krr"), Aggregation::Mean).is_err());
    }

    #[test]
    fn trimmed_mean_drops_tails() {
        let mut v: Vec<f64> = (0..20).map(|i| i as f64).collect();
        v[19] = 1e9;
        let t = aggregate(&mut v, Aggregation::Trimmed);
        assert!((t - (1..19).sum::<usize>() as f64 / 18.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_design_is_sorted_and_reproducible() {
        let a = design_points(DesignKind::Uniform, 50, 0.9, 3);
        assert_eq!(a, design_points(DesignKind::Uniform, 50, 0.9, 3));
        assert!(a.windows(2).all(|w| w[0] < w[1]) && a.iter().all(|&x| (0.0..=0.9).contains(&x)));
    }
}
