//! Kernel regression with norm constraints.
//!
//! Kernel matrices are normalized as `KK_k = K_k / n`, so that
//! `sqrt(n) KK pi` is the vector of kernel-part fitted values and
//! `pi^T KK_k pi` is the squared RKHS norm of the fitted function in the
//! `K_k` space.
//!
//! For the multi-constraint program the weights are reparametrized as
//! `pi = V Lambda^(-1/2) u` through the eigenbasis of `sum_k KK_k / b_k`
//! (`b_k` the radius at `C = 1`), so every scaled constraint matrix is at
//! most the identity. The spline program uses the eigenbasis of `KK_1`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::deriv::OdeKind;
use crate::error::{Error, Result};
use crate::estimators::kernel::build_kernel;
use crate::estimators::qcqp::{intercept_solver, least_squares_qcqp, Ellipsoid, QcqpOptions};
use crate::estimators::{DesignSample, FitDiagnostics, FitKind, FitModel};
use crate::numeric::factorial;

/// Largest supported `beta`; the factorial radii overflow usefulness beyond it.
pub const MAX_KRR_BETA: usize = 8;
/// Cross-validation grid for the constraint level `C`.
pub const CV_GRID: [f64; 5] = [1e-2, 1e-1, 1.0, 1e1, 1e2];
const CV_FOLDS: usize = 5;
const CACHE_LIMIT: usize = 16;

/// Relative diagonal regularization applied before the eigendecomposition.
const RIDGE: f64 = 1e-12;

fn design_key(xs: &[f64], tag: u64) -> Vec<u64> {
    let mut key: Vec<u64> = xs.iter().map(|x| x.to_bits()).collect();
    key.push(tag);
    key
}

fn cached<T, F>(cache: &'static OnceLock<Mutex<HashMap<Vec<u64>, Arc<T>>>>, key: Vec<u64>, build: F) -> Result<Arc<T>>
where
    F: FnOnce() -> Result<T>,
{
    let map = cache.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = map.lock().expect("cache lock").get(&key) {
        return Ok(v.clone());
    }
    let value = Arc::new(build()?);
    let mut guard = map.lock().expect("cache lock");
    if guard.len() >= CACHE_LIMIT {
        guard.clear();
    }
    guard.insert(key, value.clone());
    Ok(value)
}

/// `V (Lambda + eps)^(-1/2)` for the normalized matrix, with `eps = 1e-12 trace / n`.
fn whitening(kk: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = kk.nrows();
    let eps = RIDGE * kk.trace() / n as f64;
    let eig = SymmetricEigen::new(kk.clone());
    let lam = eig.eigenvalues.map(|v| v.max(0.0) + eps);
    let mut t = eig.eigenvectors;
    for (j, mut col) in t.column_iter_mut().enumerate() {
        col /= lam[j].sqrt();
    }
    (t, lam)
}

/// Per-design data for the multi-constraint program.
struct KrrDesign {
    /// Normalized kernel matrices `KK_0..KK_{beta+1}`.
    kk: Vec<DMatrix<f64>>,
    /// `pi = t u`.
    t: DMatrix<f64>,
    /// `sqrt(n) KK_{beta+1} t`.
    a: DMatrix<f64>,
    /// `t^T KK_k t`.
    q: Vec<DMatrix<f64>>,
}

static KRR_CACHE: OnceLock<Mutex<HashMap<Vec<u64>, Arc<KrrDesign>>>> = OnceLock::new();

fn krr_design(xs: &[f64], beta: usize, variant: OdeKind) -> Result<Arc<KrrDesign>> {
    let tag = 2 * beta as u64 + matches!(variant, OdeKind::Nonautonomous) as u64;
    cached(&KRR_CACHE, design_key(xs, tag), || {
        let n = xs.len() as f64;
        let kk: Vec<DMatrix<f64>> = (0..=beta + 1).map(|k| build_kernel(k, xs).map(|ks| ks.matrix / n)).collect::<Result<_>>()?;
        let top = &kk[beta + 1];
        // whitening against the radius-weighted sum keeps every `t^T KK_k t / r_k <= I`
        let mut s = DMatrix::zeros(xs.len(), xs.len());
        for (k, m) in kk.iter().enumerate() {
            s += m / constraint_radius(variant, k, 1.0);
        }
        let (t, _) = whitening(&s);
        let a = top * &t * n.sqrt();
        let q = kk.iter().map(|m| t.transpose() * m * &t).map(|m| symmetrize(&m)).collect();
        Ok(KrrDesign { kk, t, a, q })
    })
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `C (k!)^2` for autonomous problems, `C (2^k k!)^2` for nonautonomous ones.
pub fn constraint_radius(kind: OdeKind, k: usize, c: f64) -> f64 {
    let base = match kind {
        OdeKind::Autonomous => factorial(k),
        OdeKind::Nonautonomous => 2f64.powi(k as i32) * factorial(k),
    };
    c * base * base
}

/// Least squares over `(alpha, pi)` with `y_hat = alpha + sqrt(n) KK_{beta+1} pi`,
/// subject to `pi^T KK_k pi <= constraint_radius(k)` for `k = 0..=beta+1`.
pub fn fit_constrained_krr(data: &DesignSample, beta: usize, variant: OdeKind, c: f64) -> Result<FitModel> {
    fit_constrained_krr_with(data, beta, variant, c, &QcqpOptions::default())
}

/// [`fit_constrained_krr`] with explicit solver options.
pub fn fit_constrained_krr_with(
    data: &DesignSample,
    beta: usize,
    variant: OdeKind,
    c: f64,
    opts: &QcqpOptions,
) -> Result<FitModel> {
    if beta > MAX_KRR_BETA {
        return Err(Error::InvalidArgument(format!("beta = {beta} exceeds the supported maximum {MAX_KRR_BETA}")));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
    }
    let design = krr_design(&data.xs, beta, variant)?;
    let n = data.n();
    let y = DVector::from_column_slice(&data.ys);
    let ones = DMatrix::from_element(n, 1, 1.0);
    let ellipsoids: Vec<Ellipsoid> =
        design.q.iter().enumerate().map(|(k, q)| Ellipsoid::new(q.clone(), constraint_radius(variant, k, c))).collect();
    let sol = least_squares_qcqp(&design.a, &y, Some(&ones), &ellipsoids, opts)?;
    let pi = &design.t * &sol.pi;
    let slacks: Vec<f64> =
        design.kk.iter().enumerate().map(|(k, m)| constraint_radius(variant, k, c) - pi.dot(&(m * &pi))).collect();
    Ok(FitModel {
        kind: FitKind::ConstrainedKrr,
        intercept: vec![sol.alpha[0]],
        weights: pi.iter().copied().collect(),
        kernel_order: Some(beta + 1),
        design: data.xs.clone(),
        fitted: sol.fitted.iter().copied().collect(),
        diagnostics: FitDiagnostics {
            objective: sol.diagnostics.objective,
            constraint_slacks: slacks,
            kkt_residual: sol.diagnostics.kkt_residual,
            iterations: sol.diagnostics.iterations,
            converged: sol.diagnostics.converged,
            discarded_candidates: 0,
            c: Some(c),
        },
        picard: None,
        model: None,
    })
}

/// Picks `C` from `grid` by 5-fold interleaved cross-validation, then refits
/// on all observations.
pub fn fit_constrained_krr_cv(data: &DesignSample, beta: usize, variant: OdeKind, grid: &[f64]) -> Result<FitModel> {
    if data.n() < 2 * CV_FOLDS {
        return Err(Error::InsufficientData(format!("cross-validation needs at least {} observations", 2 * CV_FOLDS)));
    }
    let mut best: Option<(f64, f64)> = None;
    for &c in grid {
        let mut err = 0.0;
        for fold in 0..CV_FOLDS {
            let train = data.subset(|i| i % CV_FOLDS != fold)?;
            let test = data.subset(|i| i % CV_FOLDS == fold)?;
            let fit = fit_constrained_krr(&train, beta, variant, c)?;
            let pred = fit.predict(&test.xs)?;
            err += pred.iter().zip(&test.ys).map(|(p, y)| (p - y).powi(2)).sum::<f64>();
        }
        if best.is_none_or(|(_, e)| err < e) {
            best = Some((c, err));
        }
    }
    let (c, _) = best.ok_or_else(|| Error::InvalidArgument("empty cross-validation grid".into()))?;
    fit_constrained_krr(data, beta, variant, c)
}

/// Per-design data for the single-constraint spline program, reduced to
/// `minimize 1/2 sum s_i v_i^2 - c^T v  subject to |v|^2 <= r`.
struct SplineDesign {
    z: DMatrix<f64>,
    zsolve: DMatrix<f64>,
    kk1: DMatrix<f64>,
    /// Maps `v`-coordinates to kernel-part fitted values.
    f: DMatrix<f64>,
    /// Maps `v`-coordinates to `pi`.
    b: DMatrix<f64>,
    spectrum: DVector<f64>,
}

static SPLINE_CACHE: OnceLock<Mutex<HashMap<Vec<u64>, Arc<SplineDesign>>>> = OnceLock::new();

fn spline_design(xs: &[f64]) -> Result<Arc<SplineDesign>> {
    cached(&SPLINE_CACHE, design_key(xs, u64::MAX), || {
        let n = xs.len();
        let nf = n as f64;
        let kk1 = build_kernel(1, xs)?.matrix / nf;
        let (t, lam) = whitening(&kk1);
        // t^T KK_1 t is diagonal with entries lambda / (lambda + eps)
        let eps = RIDGE * kk1.trace() / nf;
        let d_inv_sqrt = lam.map(|l| (l / (l - eps).max(f64::MIN_POSITIVE)).sqrt().min(1e8));
        let mut td = t;
        for (j, mut col) in td.column_iter_mut().enumerate() {
            col *= d_inv_sqrt[j];
        }
        let a = &kk1 * &td * nf.sqrt();
        let mut z = DMatrix::from_element(n, 2, 1.0);
        for (i, &x) in xs.iter().enumerate() {
            z[(i, 1)] = x;
        }
        let zsolve = intercept_solver(&z)?;
        let pa = &a - &z * (&zsolve * &a);
        let h = symmetrize(&(pa.transpose() * &pa / nf));
        let eig = SymmetricEigen::new(h);
        let w = eig.eigenvectors;
        let f = &a * &w;
        let b = &td * &w;
        Ok(SplineDesign { z, zsolve, kk1, f, b, spectrum: eig.eigenvalues })
    })
}

/// Standard spline estimator with `pi^T KK_1 pi <= 1`.
pub fn fit_standard_spline(data: &DesignSample) -> Result<FitModel> {
    fit_standard_spline_with_radius(data, 1.0)
}

/// `y_hat = alpha_0 + alpha_1 x + n^(-1/2) sum_i pi_i K_1(x, x_i)` with
/// `pi^T KK_1 pi <= radius`.
pub fn fit_standard_spline_with_radius(data: &DesignSample, radius: f64) -> Result<FitModel> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be non-negative, got {radius}")));
    }
    let d = spline_design(&data.xs)?;
    let n = data.n();
    let nf = n as f64;
    let y = DVector::from_column_slice(&data.ys);
    let py = &y - &d.z * (&d.zsolve * &y);
    let c = d.f.transpose() * &py / nf;
    let s_max = d.spectrum.iter().fold(0.0f64, |m, v| m.max(*v));
    let cut = 1e-13 * s_max.max(f64::MIN_POSITIVE);

    // v_i(mu) = c_i / (s_i + mu); directions with s_i ~ 0 carry no signal.
    let coords = |mu: f64| -> DVector<f64> {
        DVector::from_iterator(
            n,
            c.iter().zip(d.spectrum.iter()).map(|(&ci, &si)| if si <= cut && mu == 0.0 { 0.0 } else { ci / (si.max(0.0) + mu) }),
        )
    };
    let norm2 = |mu: f64| coords(mu).norm_squared();
    let (mu, iterations) = if radius == 0.0 {
        (f64::INFINITY, 0)
    } else if norm2(0.0) <= radius {
        (0.0, 0)
    } else {
        let mut hi = s_max.max(1e-300);
        while norm2(hi) > radius {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        let mut it = 0;
        while it < 200 {
            it += 1;
            let mid = 0.5 * (lo + hi);
            if norm2(mid) > radius {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        (hi, it)
    };
    let v = if mu.is_infinite() { DVector::zeros(n) } else { coords(mu) };
    let kern = &d.f * &v;
    let alpha = &d.zsolve * (&y - &kern);
    let fitted = &kern + &d.z * &alpha;
    let pi = &d.b * &v;
    let used = pi.dot(&(&d.kk1 * &pi));
    let mu_finite = if mu.is_finite() { mu } else { 0.0 };
    let stationarity = {
        let grad = DVector::from_iterator(
            n,
            v.iter().zip(d.spectrum.iter()).zip(c.iter()).map(|((vi, si), ci)| si * vi + mu_finite * vi - ci),
        );
        let mut g_eff = c.clone();
        for (gi, si) in g_eff.iter_mut().zip(d.spectrum.iter()) {
            if *si <= cut {
                *gi = 0.0;
            }
        }
        let mut grad = grad;
        for (gi, si) in grad.iter_mut().zip(d.spectrum.iter()) {
            if *si <= cut {
                *gi = 0.0;
            }
        }
        let scale = g_eff.norm();
        if scale > 0.0 {
            grad.norm() / scale
        } else {
            0.0
        }
    };
    let energy = 1.0 + c.dot(&v).abs();
    let kkt = stationarity
        + mu_finite * (radius - v.norm_squared()).abs() / energy
        + (v.norm_squared() - radius).max(0.0) / (1.0 + radius);
    Ok(FitModel {
        kind: FitKind::SplineKrr,
        intercept: vec![alpha[0], alpha[1]],
        weights: pi.iter().copied().collect(),
        kernel_order: Some(1),
        design: data.xs.clone(),
        fitted: fitted.iter().copied().collect(),
        diagnostics: FitDiagnostics {
            objective: (&y - &fitted).norm_squared() / (2.0 * nf),
            constraint_slacks: vec![radius - used],
            kkt_residual: kkt,
            iterations,
            converged: true,
            discarded_candidates: 0,
            c: Some(radius),
        },
        picard: None,
        model: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::in_sample_mse;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Vec<f64> {
        (1..=n).map(|i| i as f64 / n as f64).collect()
    }

    fn sample(xs: Vec<f64>, f: impl Fn(f64) -> f64) -> DesignSample {
        let ys = xs.iter().map(|&x| f(x)).collect();
        DesignSample::new(xs, ys, 0.0).unwrap()
    }

    #[test]
    fn linear_data_is_reproduced_by_the_spline() {
        let data = sample(grid(40), |x| 0.3 - 1.7 * x);
        let fit = fit_standard_spline(&data).unwrap();
        assert!((fit.intercept[0] - 0.3).abs() < 1e-8 && (fit.intercept[1] + 1.7).abs() < 1e-8, "{:?}", fit.intercept);
        assert!(fit.weights.iter().all(|w| w.abs() < 1e-6));
    }

    #[test]
    fn smooth_target_spline() {
        let truth = |x: f64| (2.0 * PI * x).sin() / (2.0 * PI).powi(2);
        let data = sample(grid(128), truth);
        let fit = fit_standard_spline(&data).unwrap();
        let mse = in_sample_mse(&fit, truth, &data.xs).unwrap();
        assert!(mse <= 1e-5, "{mse}");
        assert!(fit.diagnostics.constraint_slacks[0] >= -1e-8);
    }

    #[test]
    fn spline_mse_is_monotone_in_radius() {
        let truth = |x: f64| (6.0 * x).sin();
        let data = sample(grid(64), truth);
        let mses: Vec<f64> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&r| in_sample_mse(&fit_standard_spline_with_radius(&data, r).unwrap(), truth, &data.xs).unwrap())
            .collect();
        assert!(mses[0] >= mses[1] - 1e-12 && mses[1] >= mses[2] - 1e-12, "{mses:?}");
    }

    #[test]
    fn constant_data_krr() {
        let data = sample(grid(32), |_| 2.5);
        let fit = fit_constrained_krr(&data, 1, OdeKind::Autonomous, 1e6).unwrap();
        assert!((fit.intercept[0] - 2.5).abs() < 1e-8);
        assert!(fit.weights.iter().all(|w| w.abs() < 1e-6), "{:?}", fit.weights);
    }

    #[test]
    fn tiny_c_pins_the_roughest_constraint() {
        let data = sample(grid(32), |x| x * (1.0 - x) / 2.0);
        for beta in 0..3 {
            let fit = fit_constrained_krr(&data, beta, OdeKind::Autonomous, 1e-6).unwrap();
            let s = &fit.diagnostics.constraint_slacks;
            assert!(s.iter().all(|&v| v >= -1e-8), "{s:?}");
            assert!(s[0] <= 1e-8, "{s:?}");
            assert!(fit.diagnostics.kkt_residual <= 1e-6);
        }
    }

    #[test]
    fn quadratic_target_krr() {
        let truth = |x: f64| x * (1.0 - x) / 2.0;
        let data = sample(grid(64), truth);
        let fit = fit_constrained_krr(&data, 0, OdeKind::Autonomous, 1.0).unwrap();
        assert!(fit.diagnostics.kkt_residual <= 1e-6, "{:?}", fit.diagnostics);
        let fista = QcqpOptions { method: crate::estimators::QcqpMethod::Fista, max_iter: 5000, tol: 1e-13 };
        let other = fit_constrained_krr_with(&data, 0, OdeKind::Autonomous, 1.0, &fista).unwrap();
        let (a, b) = (fit.diagnostics.objective, other.diagnostics.objective);
        assert!(a <= b * (1.0 + 1e-6) + 1e-15, "{a} vs {b}");
        let loose = fit_constrained_krr(&data, 0, OdeKind::Autonomous, 100.0).unwrap();
        assert!(in_sample_mse(&loose, truth, &data.xs).unwrap() <= 1e-4);
    }

    #[test]
    fn huge_c_stays_converged() {
        let truth = |x: f64| x * (1.0 - x) / 2.0;
        let data = sample(grid(64), truth);
        let mut last = f64::INFINITY;
        for c in [1.0, 1e2, 1e4, 1e6] {
            let fit = fit_constrained_krr(&data, 0, OdeKind::Autonomous, c).unwrap();
            assert!(fit.diagnostics.converged && fit.diagnostics.kkt_residual <= 1e-6, "{c}: {:?}", fit.diagnostics);
            let mse = in_sample_mse(&fit, truth, &data.xs).unwrap();
            assert!(mse <= last * (1.0 + 1e-9) + 1e-15, "{c}: {mse} > {last}");
            last = mse;
        }
    }
}
