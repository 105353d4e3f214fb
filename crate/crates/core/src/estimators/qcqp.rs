//! Convex quadratic programs with ellipsoidal constraints:
//!
//! ```text
//! minimize  1/2 x^T H x - g^T x   subject to  x^T Q_k x <= r_k,  k = 1..K
//! ```
//!
//! with `H` and every `Q_k` positive semidefinite. The default method maximizes
//! the concave dual over the multipliers by projected Newton steps; each dual
//! evaluation is one solve with `H + sum mu_k Q_k`. Accelerated projected
//! gradient with Dykstra projections is available as an alternative.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Ellipsoid {
    pub matrix: DMatrix<f64>,
    pub radius: f64,
}

impl Ellipsoid {
    pub fn new(matrix: DMatrix<f64>, radius: f64) -> Self {
        Ellipsoid { matrix, radius }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.matrix * x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcqpMethod {
    DualNewton,
    Fista,
}

#[derive(Debug, Clone, Copy)]
pub struct QcqpOptions {
    pub method: QcqpMethod,
    pub max_iter: usize,
    /// Target for the KKT residual.
    pub tol: f64,
}

impl Default for QcqpOptions {
    fn default() -> Self {
        QcqpOptions { method: QcqpMethod::DualNewton, max_iter: 500, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcqpDiagnostics {
    pub objective: f64,
    /// `r_k - x^T Q_k x`, non-negative when feasible.
    pub slacks: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// False when the iteration limit was hit; the returned point is still feasible.
    pub converged: bool,
    pub method: QcqpMethod,
}

#[derive(Debug, Clone)]
pub struct QcqpSolution {
    pub x: DVector<f64>,
    pub diagnostics: QcqpDiagnostics,
}

impl QcqpSolution {
    /// Turns a non-converged solve into [`Error::MaxIterations`].
    pub fn strict(self) -> Result<Self> {
        if self.diagnostics.converged {
            Ok(self)
        } else {
            Err(Error::MaxIterations { iterations: self.diagnostics.iterations, kkt_residual: self.diagnostics.kkt_residual })
        }
    }
}

fn validate(h: &DMatrix<f64>, g: &DVector<f64>, ellipsoids: &[Ellipsoid]) -> Result<()> {
    let p = h.nrows();
    if h.ncols() != p || g.len() != p {
        return Err(Error::InvalidArgument(format!(
            "gram is {}x{} but linear term has length {}",
            h.nrows(),
            h.ncols(),
            g.len()
        )));
    }
    for (k, e) in ellipsoids.iter().enumerate() {
        if e.matrix.nrows() != p || e.matrix.ncols() != p {
            return Err(Error::InvalidArgument(format!("ellipsoid {k} has the wrong shape")));
        }
        if !(e.radius >= 0.0) {
            return Err(Error::InvalidArgument(format!("ellipsoid {k} has negative radius {}", e.radius)));
        }
    }
    Ok(())
}

/// Solves the program. Zero-radius ellipsoids restrict `x` to the common null
/// space of their matrices; the remaining constraints are handled by the
/// selected method.
pub fn qcqp_solve(h: &DMatrix<f64>, g: &DVector<f64>, ellipsoids: &[Ellipsoid], opts: &QcqpOptions) -> Result<QcqpSolution> {
    validate(h, g, ellipsoids)?;
    let p = h.nrows();
    let (zero, positive): (Vec<usize>, Vec<usize>) = (0..ellipsoids.len()).partition(|&k| ellipsoids[k].radius == 0.0);

    let (x, mu_pos, iterations, converged) = if zero.is_empty() {
        let cons: Vec<&Ellipsoid> = positive.iter().map(|&k| &ellipsoids[k]).collect();
        solve_reduced(h, g, &cons, opts)?
    } else {
        let mut s = DMatrix::zeros(p, p);
        for &k in &zero {
            s += &ellipsoids[k].matrix;
        }
        let basis = null_space(&s);
        if basis.ncols() == 0 {
            (DVector::zeros(p), vec![0.0; positive.len()], 0, true)
        } else {
            let hn = basis.transpose() * h * &basis;
            let gn = basis.transpose() * g;
            let reduced: Vec<Ellipsoid> = positive
                .iter()
                .map(|&k| Ellipsoid::new(basis.transpose() * &ellipsoids[k].matrix * &basis, ellipsoids[k].radius))
                .collect();
            let refs: Vec<&Ellipsoid> = reduced.iter().collect();
            let (z, mu, it, conv) = solve_reduced(&hn, &gn, &refs, opts)?;
            (&basis * z, mu, it, conv)
        }
    };

    let mut multipliers = vec![0.0; ellipsoids.len()];
    for (slot, &k) in positive.iter().enumerate() {
        multipliers[k] = mu_pos[slot];
    }
    let x = make_feasible(x, ellipsoids);
    let kkt_residual = kkt_residual(h, g, ellipsoids, &x, &multipliers);
    let diagnostics = QcqpDiagnostics {
        objective: 0.5 * x.dot(&(h * &x)) - g.dot(&x),
        slacks: ellipsoids.iter().map(|e| e.radius - e.value(&x)).collect(),
        multipliers,
        kkt_residual,
        iterations,
        converged: converged && kkt_residual.is_finite(),
        method: opts.method,
    };
    Ok(QcqpSolution { x, diagnostics })
}

type Reduced = (DVector<f64>, Vec<f64>, usize, bool);

fn solve_reduced(h: &DMatrix<f64>, g: &DVector<f64>, cons: &[&Ellipsoid], opts: &QcqpOptions) -> Result<Reduced> {
    match opts.method {
        QcqpMethod::DualNewton => {
            let dual = dual_newton(h, g, cons, opts)?;
            if dual.3 {
                return Ok(dual);
            }
            // Multipliers far below the resolution of `H` stall the dual
            // iteration; continue from its (feasible) point with FISTA.
            let owned: Vec<Ellipsoid> = cons.iter().map(|e| (*e).clone()).collect();
            let start = make_feasible(dual.0.clone(), &owned);
            let budget = QcqpOptions { max_iter: (opts.max_iter / 5).max(1), ..*opts };
            let primal = fista(h, g, cons, &budget, start)?;
            let objective = |x: &DVector<f64>| 0.5 * x.dot(&(h * x)) - g.dot(x);
            let fx = make_feasible(primal.0.clone(), &owned);
            if objective(&fx) <= objective(&make_feasible(dual.0.clone(), &owned)) {
                Ok((primal.0, primal.1, dual.2 + primal.2, primal.3))
            } else {
                Ok(dual)
            }
        }
        QcqpMethod::Fista => fista(h, g, cons, opts, DVector::zeros(h.nrows())),
    }
}

/// Orthonormal basis of the null space of a PSD matrix.
fn null_space(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(s.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = 1e-12 * top.max(f64::MIN_POSITIVE);
    let cols: Vec<DVector<f64>> =
        (0..s.nrows()).filter(|&i| eig.eigenvalues[i] <= cut).map(|i| eig.eigenvectors.column(i).into_owned()).collect();
    if cols.is_empty() {
        DMatrix::zeros(s.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Radially shrinks `x` until every constraint holds.
fn make_feasible(mut x: DVector<f64>, ellipsoids: &[Ellipsoid]) -> DVector<f64> {
    let mut scale: f64 = 1.0;
    for e in ellipsoids {
        let v = e.value(&x);
        if v > e.radius {
            scale = scale.min(if v > 0.0 { (e.radius / v).sqrt() } else { 0.0 });
        }
    }
    if scale < 1.0 {
        x *= scale * (1.0 - 4.0 * f64::EPSILON);
        for e in ellipsoids.iter().filter(|e| e.radius == 0.0) {
            if e.value(&x) > 0.0 {
                return DVector::zeros(x.len());
            }
        }
    }
    x
}

/// Stationarity backward error plus complementarity plus primal infeasibility.
///
/// Stationarity is `|Hx - g + sum mu_k Q_k x|` relative to
/// `| |H||x| + |g| + sum mu_k |Q_k||x| |` (elementwise absolute values), the
/// size of the terms the residual is computed from.
pub fn kkt_residual(h: &DMatrix<f64>, g: &DVector<f64>, ellipsoids: &[Ellipsoid], x: &DVector<f64>, mu: &[f64]) -> f64 {
    let ax = x.abs();
    let mut grad = h * x - g;
    let mut size = h.abs() * &ax + g.abs();
    for (e, &m) in ellipsoids.iter().zip(mu) {
        if m != 0.0 {
            grad += (&e.matrix * x) * m;
            size += (e.matrix.abs() * &ax) * m;
        }
    }
    let scale = size.norm();
    let stationarity = if scale > 0.0 { grad.norm() / scale } else { grad.norm() };
    let energy = 1.0 + g.dot(x).abs();
    let mut comp = 0.0;
    let mut infeas: f64 = 0.0;
    for (e, &m) in ellipsoids.iter().zip(mu) {
        let c = e.value(x);
        comp += m * (e.radius - c).abs() / energy;
        infeas = infeas.max((c - e.radius).max(0.0) / (1.0 + e.radius));
    }
    stationarity + comp + infeas
}

/// Factorization of `H + sum mu_k Q_k`: Cholesky when it is numerically
/// definite, otherwise a pseudo-inverse on the numerical range.
enum Factor {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Pinv { vecs: DMatrix<f64>, inv: DVector<f64> },
}

impl Factor {
    fn new(m: &DMatrix<f64>) -> Factor {
        let scale = (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
        if let Some(c) = Cholesky::new(m.clone()) {
            let d = c.l_dirty().diagonal();
            let lo = d.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
            if lo * lo > 1e-13 * scale {
                return Factor::Chol(c);
            }
        }
        let eig = SymmetricEigen::new(m.clone());
        let top = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let cut = 1e-14 * top.max(f64::MIN_POSITIVE) * m.nrows() as f64;
        let inv = eig.eigenvalues.map(|v| if v > cut { 1.0 / v } else { 0.0 });
        Factor::Pinv { vecs: eig.eigenvectors, inv }
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Chol(c) => c.solve(b),
            Factor::Pinv { vecs, inv } => vecs * (vecs.transpose() * b).component_mul(inv),
        }
    }
}

struct DualPoint {
    x: DVector<f64>,
    factor: Factor,
    values: Vec<f64>,
    dual: f64,
}

fn dual_eval(h: &DMatrix<f64>, g: &DVector<f64>, cons: &[&Ellipsoid], mu: &[f64]) -> Result<DualPoint> {
    let mut m = h.clone();
    for (e, &w) in cons.iter().zip(mu) {
        if w != 0.0 {
            m += &e.matrix * w;
        }
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::LinearAlgebra("dual system is not finite".into()));
    }
    let factor = Factor::new(&m);
    let x = factor.solve(g);
    let values: Vec<f64> = cons.iter().map(|e| e.value(&x)).collect();
    let dual = -0.5 * g.dot(&x) - 0.5 * cons.iter().zip(mu).map(|(e, &w)| w * e.radius).sum::<f64>();
    Ok(DualPoint { x, factor, values, dual })
}

fn dual_kkt(cons: &[&Ellipsoid], mu: &[f64], values: &[f64], energy: f64) -> f64 {
    let mut r: f64 = 0.0;
    for ((e, &m), &c) in cons.iter().zip(mu).zip(values) {
        r = r.max((c - e.radius).max(0.0) / e.radius);
        r = r.max(m * (e.radius - c).abs() / (1.0 + energy));
    }
    r
}

fn dual_newton(h: &DMatrix<f64>, g: &DVector<f64>, cons: &[&Ellipsoid], opts: &QcqpOptions) -> Result<Reduced> {
    let kn = cons.len();
    let mut mu = vec![0.0; kn];
    let mut pt = dual_eval(h, g, cons, &mu)?;
    if kn == 0 {
        return Ok((pt.x, mu, 0, true));
    }
    let mut iterations = 0;
    let mut damping: f64 = 0.0;
    while iterations < opts.max_iter {
        let energy = g.dot(&pt.x).abs();
        if dual_kkt(cons, &mu, &pt.values, energy) <= opts.tol {
            return Ok((pt.x, mu, iterations, true));
        }
        iterations += 1;

        let grad: Vec<f64> = cons.iter().zip(&pt.values).map(|(e, &c)| 0.5 * (c - e.radius)).collect();
        let free: Vec<usize> = (0..kn).filter(|&k| mu[k] > 0.0 || grad[k] > 0.0).collect();
        if free.is_empty() {
            return Ok((pt.x, mu, iterations, true));
        }
        // curvature B_jk = (Q_j x)^T M^{-1} (Q_k x) on the free set
        let qx: Vec<DVector<f64>> = free.iter().map(|&k| &cons[k].matrix * &pt.x).collect();
        let mq: Vec<DVector<f64>> = qx.iter().map(|v| pt.factor.solve(v)).collect();
        let nf = free.len();
        let mut b = DMatrix::zeros(nf, nf);
        for i in 0..nf {
            for j in 0..=i {
                let v = qx[i].dot(&mq[j]);
                b[(i, j)] = v;
                b[(j, i)] = v;
            }
        }
        let trace = (0..nf).map(|i| b[(i, i)]).sum::<f64>().max(f64::MIN_POSITIVE);
        let rhs = DVector::from_iterator(nf, free.iter().map(|&k| grad[k]));

        let mut accepted = false;
        let mut lm = damping.max(1e-14 * trace);
        for _ in 0..40 {
            let mut bd = b.clone();
            for i in 0..nf {
                bd[(i, i)] += lm;
            }
            let Some(step) = Cholesky::new(bd).map(|c| c.solve(&rhs)) else {
                lm *= 10.0;
                continue;
            };
            let mut t = 1.0;
            for _ in 0..30 {
                let mut trial = mu.clone();
                for (i, &k) in free.iter().enumerate() {
                    trial[k] = (mu[k] + t * step[i]).max(0.0);
                }
                let gain: f64 = (0..kn).map(|k| grad[k] * (trial[k] - mu[k])).sum();
                if let Ok(next) = dual_eval(h, g, cons, &trial) {
                    if next.dual >= pt.dual + 1e-4 * gain && next.dual.is_finite() {
                        let moved = trial.iter().zip(&mu).any(|(a, b)| a != b);
                        mu = trial;
                        pt = next;
                        accepted = moved;
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted {
                damping = (lm * 0.1).max(0.0);
                break;
            }
            lm = (lm * 10.0).max(1e-8 * trace);
        }
        if !accepted {
            let energy = g.dot(&pt.x).abs();
            let ok = dual_kkt(cons, &mu, &pt.values, energy) <= opts.tol.max(1e-7);
            return Ok((pt.x, mu, iterations, ok));
        }
    }
    let energy = g.dot(&pt.x).abs();
    let ok = dual_kkt(cons, &mu, &pt.values, energy) <= opts.tol;
    Ok((pt.x, mu, iterations, ok))
}

/// Euclidean projection onto `{x : x^T Q x <= r}` using the eigenbasis of `Q`.
pub struct EllipsoidProjector {
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
    radius: f64,
}

impl EllipsoidProjector {
    pub fn new(e: &Ellipsoid) -> Self {
        let eig = SymmetricEigen::new(e.matrix.clone());
        EllipsoidProjector { eigvals: eig.eigenvalues.map(|v| v.max(0.0)), eigvecs: eig.eigenvectors, radius: e.radius }
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let c = self.eigvecs.transpose() * v;
        let value = |lambda: f64| -> f64 {
            c.iter().zip(self.eigvals.iter()).map(|(ci, li)| li * (ci / (1.0 + lambda * li)).powi(2)).sum()
        };
        if value(0.0) <= self.radius {
            return v.clone();
        }
        if self.radius == 0.0 {
            let z = DVector::from_iterator(
                c.len(),
                c.iter().zip(self.eigvals.iter()).map(|(ci, li)| if *li > 0.0 { 0.0 } else { *ci }),
            );
            return &self.eigvecs * z;
        }
        let mut hi = 1.0;
        while value(hi) > self.radius {
            hi *= 2.0;
            if hi > 1e300 {
                break;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if value(mid) > self.radius {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        let z = DVector::from_iterator(c.len(), c.iter().zip(self.eigvals.iter()).map(|(ci, li)| ci / (1.0 + hi * li)));
        &self.eigvecs * z
    }
}

/// Dykstra's alternating projections onto an intersection of ellipsoids.
pub fn dykstra_project(v: &DVector<f64>, projectors: &[EllipsoidProjector], sweeps: usize, tol: f64) -> DVector<f64> {
    let mut x = v.clone();
    let mut corrections: Vec<DVector<f64>> = vec![DVector::zeros(v.len()); projectors.len()];
    for _ in 0..sweeps {
        let before = x.clone();
        for (proj, corr) in projectors.iter().zip(corrections.iter_mut()) {
            let y = proj.project(&(&x + &*corr));
            *corr = &x + &*corr - &y;
            x = y;
        }
        if (&x - &before).norm() <= tol * (1.0 + x.norm()) {
            break;
        }
    }
    x
}

/// Multipliers that best explain stationarity at `x` in the least-squares sense,
/// restricted to active constraints and clipped at zero.
fn estimate_multipliers(h: &DMatrix<f64>, g: &DVector<f64>, cons: &[&Ellipsoid], x: &DVector<f64>) -> Vec<f64> {
    let resid = g - h * x;
    let active: Vec<usize> = (0..cons.len()).filter(|&k| cons[k].value(x) >= cons[k].radius * (1.0 - 1e-6)).collect();
    let mut mu = vec![0.0; cons.len()];
    if active.is_empty() {
        return mu;
    }
    let cols: Vec<DVector<f64>> = active.iter().map(|&k| &cons[k].matrix * x).collect();
    let a = DMatrix::from_columns(&cols);
    let ata = a.transpose() * &a;
    let atb = a.transpose() * resid;
    if let Some(sol) = ata.clone().pseudo_inverse(1e-14).ok().map(|pinv| pinv * atb) {
        for (i, &k) in active.iter().enumerate() {
            mu[k] = sol[i].max(0.0);
        }
    }
    mu
}

fn fista(h: &DMatrix<f64>, g: &DVector<f64>, cons: &[&Ellipsoid], opts: &QcqpOptions, start: DVector<f64>) -> Result<Reduced> {
    let lip = SymmetricEigen::new(h.clone()).eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };
    let projectors: Vec<EllipsoidProjector> = cons.iter().map(|e| EllipsoidProjector::new(e)).collect();
    let project = |v: &DVector<f64>| {
        if projectors.len() == 1 {
            projectors[0].project(v)
        } else {
            dykstra_project(v, &projectors, 500, 1e-14)
        }
    };

    let mut x = start;
    let mut yk = x.clone();
    let mut t: f64 = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    let max_iter = opts.max_iter.max(1) * 20;
    while iterations < max_iter {
        iterations += 1;
        let grad = h * &yk - g;
        let next = project(&(&yk - grad * step));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let delta = &next - &x;
        yk = &next + &delta * ((t - 1.0) / t_next);
        let moved = delta.norm();
        x = next;
        t = t_next;
        if moved <= opts.tol * (1.0 + x.norm()) {
            converged = true;
            break;
        }
    }
    let mu = estimate_multipliers(h, g, cons, &x);
    Ok((x, mu, iterations, converged))
}

/// Least-squares program
///
/// ```text
/// minimize (1/2n) |y - Z alpha - A pi|^2  subject to  pi^T Q_k pi <= r_k
/// ```
///
/// The unconstrained intercept `alpha` is eliminated by projecting onto the
/// orthogonal complement of the columns of `Z`.
#[derive(Debug, Clone)]
pub struct LeastSquaresSolution {
    pub pi: DVector<f64>,
    pub alpha: DVector<f64>,
    pub fitted: DVector<f64>,
    pub diagnostics: QcqpDiagnostics,
}

/// `(Z^T Z)^{-1} Z^T` for the intercept columns.
pub fn intercept_solver(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ztz = z.transpose() * z;
    let chol = Cholesky::new(ztz).ok_or_else(|| Error::LinearAlgebra("intercept columns are collinear".into()))?;
    Ok(chol.solve(&z.transpose()))
}

pub fn least_squares_qcqp(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    intercept: Option<&DMatrix<f64>>,
    ellipsoids: &[Ellipsoid],
    opts: &QcqpOptions,
) -> Result<LeastSquaresSolution> {
    let n = y.len();
    if a.nrows() != n {
        return Err(Error::InvalidArgument("design and response lengths differ".into()));
    }
    let nf = n as f64;
    let (pa, py, zsolve) = match intercept {
        Some(z) => {
            let zs = intercept_solver(z)?;
            let pa = a - z * (&zs * a);
            let py = y - z * (&zs * y);
            (pa, py, Some(zs))
        }
        None => (a.clone(), y.clone(), None),
    };
    let h = pa.transpose() * &pa / nf;
    let g = pa.transpose() * &py / nf;
    let sol = qcqp_solve(&h, &g, ellipsoids, opts)?;
    let api = a * &sol.x;
    let alpha = match (&zsolve, intercept) {
        (Some(zs), Some(_)) => zs * (y - &api),
        _ => DVector::zeros(0),
    };
    let fitted = match intercept {
        Some(z) => &api + z * &alpha,
        None => api,
    };
    let mut diagnostics = sol.diagnostics;
    diagnostics.objective = (y - &fitted).norm_squared() / (2.0 * nf);
    Ok(LeastSquaresSolution { pi: sol.x, alpha, fitted, diagnostics })
}
