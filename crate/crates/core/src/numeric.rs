//! Small numerical building blocks shared by the other modules: quadrature,
//! a fixed-step RK4 integrator, bracketing root finding and Nelder–Mead.

use crate::error::{Error, Result};

/// `k!` as a float. Exact for `k <= 22`.
pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

pub fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// `log(prod_{i=0}^{gamma} i!)`.
pub fn ln_factorial_product(gamma: usize) -> f64 {
    (0..=gamma).map(ln_factorial).sum()
}

/// Adaptive Simpson quadrature with an absolute error target.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, abs_tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton iteration on P_n).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates `f` over `[a, b]` with an `n`-point Gauss–Legendre rule.
pub fn gauss_legendre_integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes.iter().zip(&weights).map(|(t, w)| w * f(mid + half * t)).sum::<f64>() * half
}

/// Classic RK4 for `w' = F(x, w)`, stepping from `x0` through the ascending
/// abscissae `xs` (each landed on exactly) with steps no larger than `max_step`.
/// `guard` is called after every step and may abort the integration.
pub fn rk4_dense<F, G>(rhs: F, x0: f64, w0: &[f64], xs: &[f64], max_step: f64, mut guard: G) -> Result<Vec<Vec<f64>>>
where
    F: Fn(f64, &[f64], &mut [f64]),
    G: FnMut(f64, &[f64]) -> Result<()>,
{
    let dim = w0.len();
    let mut w = w0.to_vec();
    let mut x = x0;
    let mut out = Vec::with_capacity(xs.len());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut tmp = vec![0.0; dim];
    for &target in xs {
        if target < x - 1e-15 {
            return Err(Error::InvalidArgument(format!("rk4 abscissae must be ascending from x0 (got {target} after {x})")));
        }
        let span = target - x;
        let steps = (span / max_step).ceil().max(if span > 0.0 { 1.0 } else { 0.0 }) as usize;
        if steps > 0 {
            let h = span / steps as f64;
            for s in 0..steps {
                let xs0 = x + s as f64 * h;
                rhs(xs0, &w, &mut k1);
                for i in 0..dim {
                    tmp[i] = w[i] + 0.5 * h * k1[i];
                }
                rhs(xs0 + 0.5 * h, &tmp, &mut k2);
                for i in 0..dim {
                    tmp[i] = w[i] + 0.5 * h * k2[i];
                }
                rhs(xs0 + 0.5 * h, &tmp, &mut k3);
                for i in 0..dim {
                    tmp[i] = w[i] + h * k3[i];
                }
                rhs(xs0 + h, &tmp, &mut k4);
                for i in 0..dim {
                    w[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                guard(xs0 + h, &w)?;
            }
        }
        x = target;
        out.push(w.clone());
    }
    Ok(out)
}

/// Bisection for a sign change of `f` on `[lo, hi]`; `f(lo)` and `f(hi)` must
/// differ in sign. Stops once the bracket is below `rel_tol * hi`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= rel_tol * hi.abs() {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Nelder–Mead simplex minimization. `project` maps trial points back into
/// the feasible set before they are evaluated.
pub fn nelder_mead<F, P>(f: F, start: &[f64], step: f64, max_iter: usize, tol: f64, project: P) -> NelderMeadResult
where
    F: Fn(&[f64]) -> f64,
    P: Fn(&mut [f64]),
{
    let dim = start.len();
    let eval = |p: &mut Vec<f64>| {
        project(p);
        let v = f(p);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let mut p0 = start.to_vec();
    let v0 = eval(&mut p0);
    simplex.push((p0, v0));
    for i in 0..dim {
        let mut p = start.to_vec();
        p[i] += step;
        let v = eval(&mut p);
        simplex.push((p, v));
    }
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if (worst - best).abs() <= tol * (1.0 + best.abs()) {
            let spread = simplex
                .iter()
                .map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if spread <= tol.sqrt() * 1e-3 {
                break;
            }
        }
        let centroid: Vec<f64> = (0..dim).map(|j| simplex[..dim].iter().map(|(p, _)| p[j]).sum::<f64>() / dim as f64).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[dim].0).map(|(c, w)| c + t * (w - c)).collect() };
        let mut reflected = along(-1.0);
        let fr = eval(&mut reflected);
        if fr < simplex[0].1 {
            let mut expanded = along(-2.0);
            let fe = eval(&mut expanded);
            simplex[dim] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
            continue;
        }
        let (mut contracted, fc) = if fr < simplex[dim].1 {
            let mut c = along(-0.5);
            let v = eval(&mut c);
            (c, v)
        } else {
            let mut c = along(0.5);
            let v = eval(&mut c);
            (c, v)
        };
        if fc < simplex[dim].1.min(fr) {
            simplex[dim] = (std::mem::take(&mut contracted), fc);
            continue;
        }
        let best_point = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            let mut p: Vec<f64> = best_point.iter().zip(&entry.0).map(|(b, q)| b + 0.5 * (q - b)).collect();
            let v = eval(&mut p);
            *entry = (p, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    NelderMeadResult { x, value, iterations }
}

/// `n` equispaced points covering `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Ordinary least-squares line fit; returns `(slope, intercept, slope_stderr, r2)`.
pub fn ols_line(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let stderr = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    (slope, intercept, stderr, r2)
}
