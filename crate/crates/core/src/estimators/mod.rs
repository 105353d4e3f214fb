//! Noisy-recovery estimators: norm-constrained kernel regression, the
//! standard spline estimator, nonlinear least squares over ODE parameters and
//! the Picard-iteration estimator, plus the QCQP solver they share.

pub mod kernel;
pub mod krr;
pub mod parametric;
pub mod qcqp;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kernel::{build_kernel, kernel_entry, KernelSystem};
pub use krr::{
    fit_constrained_krr, fit_constrained_krr_cv, fit_constrained_krr_with, fit_standard_spline, fit_standard_spline_with_radius,
    CV_GRID,
};
pub use parametric::{fit_nls, fit_picard, picard_iterates, OdeParamModel, PicardIterates};
pub use qcqp::{qcqp_solve, Ellipsoid, QcqpDiagnostics, QcqpMethod, QcqpOptions, QcqpSolution};

/// Observations `Y_i = y(x_i) + eps_i` on an ascending design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSample {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub sigma: f64,
}

impl DesignSample {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, sigma: f64) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidArgument(format!("{} design points but {} observations", xs.len(), ys.len())));
        }
        if xs.len() < 2 {
            return Err(Error::InvalidArgument("at least two observations are required".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("design points must be strictly ascending".into()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("design and observations must be finite".into()));
        }
        Ok(DesignSample { xs, ys, sigma })
    }

    /// Reads a CSV with header columns `x` and `y` (extra columns are ignored).
    pub fn from_csv(path: &std::path::Path, sigma: f64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            x: f64,
            y: f64,
        }
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for row in rd.deserialize::<Row>() {
            let row = row?;
            xs.push(row.x);
            ys.push(row.y);
        }
        DesignSample::new(xs, ys, sigma)
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    /// Observations with indices `i` such that `keep(i)`.
    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> Result<DesignSample> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = (0..self.n()).filter(|&i| keep(i)).map(|i| (self.xs[i], self.ys[i])).unzip();
        DesignSample::new(xs, ys, self.sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    ConstrainedKrr,
    SplineKrr,
    Nls,
    Picard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub objective: f64,
    pub constraint_slacks: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Candidates whose ODE solve left the box (parametric fits only).
    pub discarded_candidates: usize,
    /// Constraint level used by a kernel fit, after cross-validation if any.
    pub c: Option<f64>,
}

/// A fitted regression function.
///
/// Kernel fits predict `alpha_0 + alpha_1 x + n^(-1/2) sum_i pi_i K_k(x, x_i)`;
/// parametric fits predict by solving the fitted ODE.
#[derive(Clone, Serialize, Deserialize)]
pub struct FitModel {
    pub kind: FitKind,
    /// `[alpha]` for constrained KRR, `[alpha_0, alpha_1]` for the spline,
    /// `[y0_hat]` for parametric fits.
    pub intercept: Vec<f64>,
    /// Kernel weights `pi` or parameters `theta`.
    pub weights: Vec<f64>,
    pub kernel_order: Option<usize>,
    pub design: Vec<f64>,
    pub fitted: Vec<f64>,
    pub diagnostics: FitDiagnostics,
    /// Picard settings `(R, T, alpha_bar)` for Picard fits.
    pub picard: Option<(usize, usize, f64)>,
    #[serde(skip)]
    pub model: Option<Arc<OdeParamModel>>,
}

impl fmt::Debug for FitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FitModel")
            .field("kind", &self.kind)
            .field("intercept", &self.intercept)
            .field("weights", &self.weights)
            .field("kernel_order", &self.kernel_order)
            .field("diagnostics", &self.diagnostics)
            .finish_non_exhaustive()
    }
}

impl PartialEq for FitModel {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.intercept == other.intercept
            && self.weights == other.weights
            && self.kernel_order == other.kernel_order
            && self.design == other.design
            && self.fitted == other.fitted
            && self.diagnostics == other.diagnostics
            && self.picard == other.picard
    }
}

impl FitModel {
    /// Fitted function evaluated at `xs`.
    pub fn predict(&self, xs: &[f64]) -> Result<Vec<f64>> {
        if xs == self.design.as_slice() {
            return Ok(self.fitted.clone());
        }
        match self.kind {
            FitKind::ConstrainedKrr | FitKind::SplineKrr => {
                let order = self.kernel_order.expect("kernel fits record their order");
                let ks = KernelSystem { order, matrix: nalgebra::DMatrix::zeros(0, 0), design: self.design.clone() };
                let scale = 1.0 / (self.design.len() as f64).sqrt();
                xs.iter()
                    .map(|&x| {
                        let row = ks.row(x)?;
                        let kern: f64 = row.iter().zip(&self.weights).map(|(k, p)| k * p).sum::<f64>() * scale;
                        let affine = self.intercept[0] + self.intercept.get(1).map_or(0.0, |s| s * x);
                        Ok(affine + kern)
                    })
                    .collect()
            }
            FitKind::Nls => {
                let model = self.model.as_ref().ok_or_else(|| Error::InvalidArgument("fit carries no ODE model".into()))?;
                model.solve(&self.weights, self.intercept[0], xs)
            }
            FitKind::Picard => {
                let model = self.model.as_ref().ok_or_else(|| Error::InvalidArgument("fit carries no ODE model".into()))?;
                let (r, t, alpha_bar) = self.picard.expect("Picard fits record their settings");
                let it = picard_iterates(model, &self.weights, self.intercept[0], r, t, alpha_bar)?;
                xs.iter().map(|&x| it.eval(r + 1, x)).collect()
            }
        }
    }
}

/// `(1/n) sum_i (yhat(x_i) - y(x_i))^2`.
pub fn in_sample_mse<F: Fn(f64) -> f64>(fit: &FitModel, truth: F, xs: &[f64]) -> Result<f64> {
    let pred = fit.predict(xs)?;
    Ok(mse_against(&pred, xs, truth))
}

pub fn mse_against<F: Fn(f64) -> f64>(pred: &[f64], xs: &[f64], truth: F) -> f64 {
    pred.iter().zip(xs).map(|(p, &x)| (p - truth(x)).powi(2)).sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_fit(c: f64, xs: Vec<f64>) -> FitModel {
        FitModel {
            kind: FitKind::SplineKrr,
            intercept: vec![c, 0.0],
            weights: vec![0.0; xs.len()],
            kernel_order: Some(1),
            fitted: vec![c; xs.len()],
            design: xs,
            diagnostics: FitDiagnostics {
                objective: 0.0,
                constraint_slacks: vec![],
                kkt_residual: 0.0,
                iterations: 0,
                converged: true,
                discarded_candidates: 0,
                c: None,
            },
            picard: None,
            model: None,
        }
    }

    #[test]
    fn mse_examples() {
        let xs = vec![0.1, 0.4, 0.7];
        let fit = constant_fit(0.0, xs.clone());
        assert_eq!(in_sample_mse(&fit, |_| 0.0, &xs).unwrap(), 0.0);
        let shifted = constant_fit(0.1, xs.clone());
        assert!((in_sample_mse(&shifted, |_| 0.0, &xs).unwrap() - 0.01).abs() < 1e-15);
        // off-design prediction goes through the kernel expansion
        assert!((in_sample_mse(&shifted, |_| 0.0, &[0.2, 0.3]).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn sample_validation() {
        assert!(DesignSample::new(vec![0.1], vec![1.0], 1.0).is_err());
        assert!(DesignSample::new(vec![0.2, 0.1], vec![1.0, 2.0], 1.0).is_err());
        assert!(DesignSample::new(vec![0.1, 0.2], vec![1.0], 1.0).is_err());
        let s = DesignSample::new(vec![0.1, 0.2, 0.3], vec![1.0, 2.0, 3.0], 1.0).unwrap();
        assert_eq!(s.subset(|i| i != 1).unwrap().xs, vec![0.1, 0.3]);
    }
}
