//! Parametric ODE fits: nonlinear least squares over `(theta, y0)` and the
//! Picard-iteration estimator.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimators::{DesignSample, FitDiagnostics, FitKind, FitModel};
use crate::numeric::{nelder_mead, rk4_dense};

/// `f(x, y, theta)`.
pub type ParamRhs = Arc<dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync>;

/// RK4 step bound used for every parametric solve.
pub const SOLVE_STEP: f64 = 1.0 / 256.0;
/// Grid points per parameter dimension and for the initial value.
pub const DEFAULT_RESOLUTION: usize = 17;
const MAX_GRID_DIM: usize = 3;
const REFINE_ITERS: usize = 200;

/// `y' = f(x, y; theta)` with `theta` in the unit `q`-ball and `|y0| <= C0`.
#[derive(Clone)]
pub struct OdeParamModel {
    pub name: String,
    pub f: ParamRhs,
    pub theta_dim: usize,
    /// Norm index of the parameter ball; `f64::INFINITY` for the sup norm.
    pub q: f64,
    pub l_k: f64,
    pub c0: f64,
    /// Solutions must stay in `[-C0 - b, C0 + b]`.
    pub b: f64,
}

impl fmt::Debug for OdeParamModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeParamModel")
            .field("name", &self.name)
            .field("theta_dim", &self.theta_dim)
            .field("q", &self.q)
            .field("l_k", &self.l_k)
            .field("c0", &self.c0)
            .field("b", &self.b)
            .finish()
    }
}

impl OdeParamModel {
    pub fn new(name: impl Into<String>, f: ParamRhs, theta_dim: usize, q: f64, l_k: f64, c0: f64, b: f64) -> Result<Self> {
        if theta_dim == 0 {
            return Err(Error::InvalidArgument("parameter dimension must be at least 1".into()));
        }
        if !(q >= 1.0) {
            return Err(Error::InvalidArgument(format!("norm index q = {q} must lie in [1, inf]")));
        }
        Ok(OdeParamModel { name: name.into(), f, theta_dim, q, l_k, c0, b })
    }

    /// `y' = -theta y`.
    pub fn linear_decay() -> Self {
        OdeParamModel::new("linear-decay", Arc::new(|_, y, t: &[f64]| -t[0] * y), 1, 2.0, 1.0, 1.0, 1.0).expect("valid builtin")
    }

    /// `y' = theta_1 sin(y) + theta_2 cos(x)`.
    pub fn sine_forced() -> Self {
        OdeParamModel::new("sine-forced", Arc::new(|x, y: f64, t: &[f64]| t[0] * y.sin() + t[1] * x.cos()), 2, 2.0, 1.0, 1.0, 1.0)
            .expect("valid builtin")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "linear-decay" => Ok(Self::linear_decay()),
            "sine-forced" => Ok(Self::sine_forced()),
            other => Err(Error::UnknownBuiltin(other.to_string())),
        }
    }

    pub fn q_norm(&self, theta: &[f64]) -> f64 {
        if self.q.is_infinite() {
            theta.iter().fold(0.0, |m, v| m.max(v.abs()))
        } else {
            theta.iter().map(|v| v.abs().powf(self.q)).sum::<f64>().powf(1.0 / self.q)
        }
    }

    /// Maps `theta` back into the unit `q`-ball (radially for finite `q`).
    pub fn project_theta(&self, theta: &mut [f64]) {
        if self.q.is_infinite() {
            for v in theta.iter_mut() {
                *v = v.clamp(-1.0, 1.0);
            }
        } else {
            let norm = self.q_norm(theta);
            if norm > 1.0 {
                for v in theta.iter_mut() {
                    *v /= norm;
                }
            }
        }
    }

    /// Solution values at the ascending `xs`, integrating from `x = 0`.
    pub fn solve(&self, theta: &[f64], y0: f64, xs: &[f64]) -> Result<Vec<f64>> {
        let bound = self.c0 + self.b;
        let f = &self.f;
        let out = rk4_dense(
            |x, w, out| out[0] = f(x, w[0], theta),
            0.0,
            &[y0],
            xs,
            SOLVE_STEP,
            |x, w| {
                if w[0].abs() > bound || !w[0].is_finite() {
                    Err(Error::IntegrationFailure(format!("solution left [-{bound}, {bound}] at x = {x}")))
                } else {
                    Ok(())
                }
            },
        )?;
        Ok(out.into_iter().map(|w| w[0]).collect())
    }
}

fn grid_axis(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

/// All points of the `dim`-fold product grid on `[-1, 1]` inside the unit `q`-ball.
fn theta_grid(model: &OdeParamModel, points: usize) -> Vec<Vec<f64>> {
    let axis = grid_axis(-1.0, 1.0, points);
    let mut out = vec![Vec::new()];
    for _ in 0..model.theta_dim {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out.retain(|t| model.q_norm(t) <= 1.0 + 1e-12);
    out
}

fn half_sq_error(pred: &[f64], ys: &[f64]) -> f64 {
    pred.iter().zip(ys).map(|(p, y)| (y - p).powi(2)).sum::<f64>() / (2.0 * ys.len() as f64)
}

/// `(theta_hat, y0_hat)` minimizing the empirical squared error, by a grid
/// search over the parameter ball and `[-C0, C0]` refined with Nelder–Mead.
///
/// Candidates whose solution leaves the box are discarded and counted.
pub fn fit_nls(data: &DesignSample, model: &OdeParamModel, resolution: usize) -> Result<FitModel> {
    if model.theta_dim > MAX_GRID_DIM {
        return Err(Error::InvalidArgument(format!("grid search supports at most {MAX_GRID_DIM} parameters")));
    }
    let dim = model.theta_dim;
    let y0_axis = grid_axis(-model.c0, model.c0, resolution);
    let mut discarded = 0usize;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for theta in theta_grid(model, resolution) {
        for &y0 in &y0_axis {
            match model.solve(&theta, y0, &data.xs) {
                Ok(pred) => {
                    let v = half_sq_error(&pred, &data.ys);
                    if best.as_ref().is_none_or(|(_, b)| v < *b) {
                        let mut p = theta.clone();
                        p.push(y0);
                        best = Some((p, v));
                    }
                }
                Err(_) => discarded += 1,
            }
        }
    }
    let (start, _) = best.ok_or_else(|| Error::IntegrationFailure("every grid candidate left the box".into()))?;
    let step = 2.0 / (resolution.max(2) - 1) as f64;
    let c0 = model.c0;
    let objective = |p: &[f64]| match model.solve(&p[..dim], p[dim], &data.xs) {
        Ok(pred) => half_sq_error(&pred, &data.ys),
        Err(_) => f64::INFINITY,
    };
    let nm = nelder_mead(objective, &start, step, REFINE_ITERS, 1e-16, |p: &mut [f64]| {
        model.project_theta(&mut p[..dim]);
        p[dim] = p[dim].clamp(-c0, c0);
    });
    let theta = nm.x[..dim].to_vec();
    let y0 = nm.x[dim];
    let fitted = model.solve(&theta, y0, &data.xs)?;
    Ok(FitModel {
        kind: FitKind::Nls,
        intercept: vec![y0],
        weights: theta,
        kernel_order: None,
        design: data.xs.clone(),
        fitted,
        diagnostics: FitDiagnostics {
            objective: nm.value,
            constraint_slacks: vec![],
            kkt_residual: 0.0,
            iterations: nm.iterations,
            converged: nm.value.is_finite(),
            discarded_candidates: discarded,
            c: None,
        },
        picard: None,
        model: Some(Arc::new(model.clone())),
    })
}

/// Picard iterates `y_0 = y0_hat`, `y_{r+1}(x) = y0_hat + int_0^x f(s, y_r(s)) ds`,
/// stored on the nodes `j alpha_bar / T` with the integral taken by the
/// midpoint rule and linear interpolation between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardIterates {
    pub alpha_bar: f64,
    pub slices: usize,
    /// `values[r][j]` is iterate `r` at node `j`, for `r = 0..=R+1`.
    pub values: Vec<Vec<f64>>,
}

impl PicardIterates {
    pub fn iterates(&self) -> usize {
        self.values.len()
    }

    /// Iterate `r` at `x in [0, alpha_bar]`.
    pub fn eval(&self, r: usize, x: f64) -> Result<f64> {
        if x < -1e-12 || x > self.alpha_bar * (1.0 + 1e-12) {
            return Err(Error::DomainError(format!("x = {x} outside [0, {}]", self.alpha_bar)));
        }
        let vals = self.values.get(r).ok_or_else(|| Error::InvalidArgument(format!("iterate {r} not computed")))?;
        let h = self.alpha_bar / self.slices as f64;
        let pos = (x / h).clamp(0.0, self.slices as f64);
        let j = (pos.floor() as usize).min(self.slices - 1);
        let frac = pos - j as f64;
        Ok(vals[j] + frac * (vals[j + 1] - vals[j]))
    }
}

pub fn picard_iterates(
    model: &OdeParamModel,
    theta: &[f64],
    y0: f64,
    r: usize,
    t: usize,
    alpha_bar: f64,
) -> Result<PicardIterates> {
    if t == 0 {
        return Err(Error::InvalidArgument("at least one quadrature slice is required".into()));
    }
    if !(alpha_bar > 0.0 && alpha_bar < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha_bar = {alpha_bar} must lie in (0, 1)")));
    }
    let bound = model.c0 + model.b;
    let h = alpha_bar / t as f64;
    let mut values = Vec::with_capacity(r + 2);
    values.push(vec![y0; t + 1]);
    for _ in 0..=r {
        let prev = values.last().expect("at least one iterate");
        let mut next = Vec::with_capacity(t + 1);
        let mut acc = y0;
        next.push(acc);
        for i in 0..t {
            let mid = (i as f64 + 0.5) * h;
            let y_mid = 0.5 * (prev[i] + prev[i + 1]);
            acc += h * (model.f)(mid, y_mid, theta);
            if acc.abs() > bound || !acc.is_finite() {
                return Err(Error::BoxExit { x: (i + 1) as f64 * h, lo: -bound, hi: bound });
            }
            next.push(acc);
        }
        values.push(next);
    }
    Ok(PicardIterates { alpha_bar, slices: t, values })
}

fn picard_predictions(
    model: &OdeParamModel,
    theta: &[f64],
    y0: f64,
    r: usize,
    t: usize,
    alpha_bar: f64,
    xs: &[f64],
) -> Result<Vec<f64>> {
    let it = picard_iterates(model, theta, y0, r, t, alpha_bar)?;
    xs.iter().map(|&x| it.eval(r + 1, x)).collect()
}

/// `theta_hat` minimizing the squared error of `y_{R+1}(x_i; theta)` with the
/// initial value held at `y0_hat`; the iterates live on `[0, max x_i]`.
pub fn fit_picard(data: &DesignSample, model: &OdeParamModel, y0_hat: f64, r: usize, t: usize) -> Result<FitModel> {
    if model.theta_dim > MAX_GRID_DIM {
        return Err(Error::InvalidArgument(format!("grid search supports at most {MAX_GRID_DIM} parameters")));
    }
    let alpha_bar = *data.xs.last().expect("non-empty design");
    if data.xs[0] < 0.0 {
        return Err(Error::InvalidArgument("design points must be non-negative".into()));
    }
    let mut discarded = 0usize;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for theta in theta_grid(model, DEFAULT_RESOLUTION) {
        match picard_predictions(model, &theta, y0_hat, r, t, alpha_bar, &data.xs) {
            Ok(pred) => {
                let v = half_sq_error(&pred, &data.ys);
                if best.as_ref().is_none_or(|(_, b)| v < *b) {
                    best = Some((theta, v));
                }
            }
            Err(_) => discarded += 1,
        }
    }
    let (start, _) = best.ok_or_else(|| Error::IntegrationFailure("every grid candidate left the box".into()))?;
    let step = 2.0 / (DEFAULT_RESOLUTION - 1) as f64;
    let objective = |p: &[f64]| match picard_predictions(model, p, y0_hat, r, t, alpha_bar, &data.xs) {
        Ok(pred) => half_sq_error(&pred, &data.ys),
        Err(_) => f64::INFINITY,
    };
    let nm = nelder_mead(objective, &start, step, REFINE_ITERS, 1e-16, |p: &mut [f64]| model.project_theta(p));
    let fitted = picard_predictions(model, &nm.x, y0_hat, r, t, alpha_bar, &data.xs)?;
    Ok(FitModel {
        kind: FitKind::Picard,
        intercept: vec![y0_hat],
        weights: nm.x,
        kernel_order: None,
        design: data.xs.clone(),
        fitted,
        diagnostics: FitDiagnostics {
            objective: nm.value,
            constraint_slacks: vec![],
            kkt_residual: 0.0,
            iterations: nm.iterations,
            converged: nm.value.is_finite(),
            discarded_candidates: discarded,
            c: None,
        },
        picard: Some((r, t, alpha_bar)),
        model: Some(Arc::new(model.clone())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::in_sample_mse;

    fn decay_data(n: usize, hi: f64, theta: f64) -> DesignSample {
        let xs: Vec<f64> = (1..=n).map(|i| hi * i as f64 / n as f64).collect();
        let ys = xs.iter().map(|&x| (-theta * x).exp()).collect();
        DesignSample::new(xs, ys, 0.0).unwrap()
    }

    #[test]
    fn nls_recovers_decay_rate() {
        let data = decay_data(32, 0.95, 0.5);
        let fit = fit_nls(&data, &OdeParamModel::linear_decay(), DEFAULT_RESOLUTION).unwrap();
        assert!((fit.weights[0] - 0.5).abs() < 1e-4, "{:?}", fit.weights);
        assert!((fit.intercept[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn nls_objective_vanishes_at_grid_truth() {
        // theta = 0.5 and y0 = 0.5 are both grid points
        let xs: Vec<f64> = (1..=16).map(|i| i as f64 / 17.0).collect();
        let model = OdeParamModel::linear_decay();
        let ys = model.solve(&[0.5], 0.5, &xs).unwrap();
        let data = DesignSample::new(xs, ys, 0.0).unwrap();
        let fit = fit_nls(&data, &model, DEFAULT_RESOLUTION).unwrap();
        assert!(fit.diagnostics.objective < 1e-20);
    }

    #[test]
    fn zero_rhs_iterates_are_constant() {
        let zero = OdeParamModel::new("zero", Arc::new(|_, _, _: &[f64]| 0.0), 1, 2.0, 1.0, 1.0, 1.0).unwrap();
        let it = picard_iterates(&zero, &[0.3], 0.7, 4, 16, 0.9).unwrap();
        assert!(it.values.iter().flatten().all(|&v| v == 0.7));
    }

    #[test]
    fn picard_fit_recovers_decay_rate() {
        let data = decay_data(32, 0.9, 0.5);
        let fit = fit_picard(&data, &OdeParamModel::linear_decay(), 1.0, 8, 256).unwrap();
        assert!((fit.weights[0] - 0.5).abs() < 1e-3, "{:?}", fit.weights);
        let r0 = fit_picard(&data, &OdeParamModel::linear_decay(), 1.0, 0, 256).unwrap();
        let truth = |x: f64| (-0.5 * x).exp();
        assert!(in_sample_mse(&r0, truth, &data.xs).unwrap() > in_sample_mse(&fit, truth, &data.xs).unwrap());
    }

    #[test]
    fn iterate_domain_is_checked() {
        let it = picard_iterates(&OdeParamModel::linear_decay(), &[0.5], 1.0, 1, 8, 0.5).unwrap();
        assert!(it.eval(1, 0.6).is_err());
        assert!(picard_iterates(&OdeParamModel::linear_decay(), &[0.5], 1.0, 1, 8, 1.0).is_err());
    }
}
