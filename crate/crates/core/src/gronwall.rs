//! Gronwall-type stability bounds for pairs of ODEs and their numerical check.
//!
//! An order-`m` equation `y^(m) = f(x, y, y', ..., y^(m-1))` is handled through
//! its companion system `W' = F(x, W)` with `W = (y, y', ..., y^(m-1))` and
//! `F(x, W) = (W_2, ..., W_m, f(x, W))`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::deriv::{builtins, OdeInstance};
use crate::error::{Error, Result};
use crate::numeric::{adaptive_simpson, rk4_dense};

/// `f(x, (y, y', ..., y^(m-1)))`.
pub type HigherOrderRhs = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type Perturbation = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const SUP_POINTS: usize = 512;
const SUP_INFLATION: f64 = 1.1;
const BOUND_QUAD_TOL: f64 = 1e-10;
const RK4_MAX_STEP: f64 = 1.0 / 2048.0;

#[derive(Clone)]
pub struct OdePair {
    pub f: HigherOrderRhs,
    pub g: HigherOrderRhs,
    pub y0: Vec<f64>,
    pub z0: Vec<f64>,
    pub lipschitz: f64,
    pub phi: Perturbation,
    pub a0: f64,
    pub a: f64,
    pub b: f64,
    pub c0: f64,
}

impl fmt::Debug for OdePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdePair")
            .field("y0", &self.y0)
            .field("z0", &self.z0)
            .field("lipschitz", &self.lipschitz)
            .field("a0", &self.a0)
            .field("a", &self.a)
            .field("b", &self.b)
            .field("c0", &self.c0)
            .finish()
    }
}

impl OdePair {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        f: HigherOrderRhs,
        g: HigherOrderRhs,
        y0: Vec<f64>,
        z0: Vec<f64>,
        lipschitz: f64,
        phi: Perturbation,
        a: f64,
        b: f64,
    ) -> Result<Self> {
        if y0.is_empty() || y0.len() != z0.len() {
            return Err(Error::InvalidArgument("initial values must be non-empty and of equal length".into()));
        }
        if !(lipschitz >= 0.0) {
            return Err(Error::InvalidArgument(format!("Lipschitz constant must be non-negative, got {lipschitz}")));
        }
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidArgument(format!("a and b must be positive (a = {a}, b = {b})")));
        }
        let c0 = norm2(&y0).max(norm2(&z0));
        Ok(OdePair { f, g, y0, z0, lipschitz, phi, a0: 0.0, a, b, c0 })
    }

    /// Pair of scalar first-order problems sharing the box of `f`.
    pub fn first_order(f: &OdeInstance, g: &OdeInstance, z0: f64, lipschitz: f64, phi: Perturbation) -> Result<Self> {
        let (fo, go) = (f.oracle.clone(), g.oracle.clone());
        let mut pair = OdePair::new(
            Arc::new(move |x, w: &[f64]| fo.partial(0, 0, x, w[0])),
            Arc::new(move |x, w: &[f64]| go.partial(0, 0, x, w[0])),
            vec![f.y0],
            vec![z0],
            lipschitz,
            phi,
            f.a,
            f.b,
        )?;
        pair.a0 = f.x0;
        Ok(pair)
    }

    pub fn order(&self) -> usize {
        self.y0.len()
    }

    /// `M`: sampled `sup |F|` over the domain and the state ball of radius `b`
    /// around `Y0`, for both right-hand sides, inflated by 10%.
    pub fn sup_rhs(&self) -> f64 {
        let m = self.order();
        let mut best: f64 = 0.0;
        let mut eval = |x: f64, w: &[f64]| {
            let tail: f64 = w[1..].iter().map(|v| v * v).sum();
            for h in [&self.f, &self.g] {
                let last = h(x, w);
                best = best.max((tail + last * last).sqrt());
            }
        };
        if m == 1 {
            let (nx, ny) = (32, SUP_POINTS / 32);
            for i in 0..nx {
                let x = self.a0 + self.a * i as f64 / (nx - 1) as f64;
                for j in 0..ny {
                    let y = self.y0[0] - self.b + 2.0 * self.b * j as f64 / (ny - 1) as f64;
                    eval(x, &[y]);
                }
            }
        } else {
            // Halton points in (x, W), with W scaled into the ball.
            let scale = self.b / (m as f64).sqrt();
            let mut w = vec![0.0; m];
            for i in 1..=SUP_POINTS {
                let x = self.a0 + self.a * halton(i, PRIMES[0]);
                for (d, wd) in w.iter_mut().enumerate() {
                    *wd = self.y0[d] + scale * (2.0 * halton(i, PRIMES[(d + 1) % PRIMES.len()]) - 1.0);
                }
                eval(x, &w);
            }
        }
        best * SUP_INFLATION
    }

    /// `min{a, b / M}`.
    pub fn existence_interval(&self) -> f64 {
        let m = self.sup_rhs();
        if m > 0.0 {
            self.a.min(self.b / m)
        } else {
            self.a
        }
    }
}

const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn halton(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Growth rate used by the bound: `L` for first-order problems, `sqrt(L^2 + 1)` otherwise.
pub fn growth_rate(lipschitz: f64, m: usize) -> f64 {
    if m <= 1 {
        lipschitz
    } else {
        (lipschitz * lipschitz + 1.0).sqrt()
    }
}

/// `e^(c (x - a0)) |Y0 - Z0|_2 + int_{a0}^{x} e^(c (x - s)) phi(s) ds`.
///
/// `c` is given by [`growth_rate`]. The bound is evaluated for any `x` in the
/// domain `[a0, a0 + a]`.
pub fn gronwall_bound(pair: &OdePair, x: f64, m: usize) -> Result<f64> {
    let end = pair.a0 + pair.a;
    if x > end + 1e-12 || x < pair.a0 - 1e-12 {
        return Err(Error::DomainExceeded { x, end });
    }
    let c = growth_rate(pair.lipschitz, m);
    let gap: Vec<f64> = pair.y0.iter().zip(&pair.z0).map(|(a, b)| a - b).collect();
    let initial = (c * (x - pair.a0)).exp() * if m <= 1 { gap[0].abs() } else { norm2(&gap) };
    let phi = &pair.phi;
    let forcing = adaptive_simpson(|s| (c * (x - s)).exp() * phi(s), pair.a0, x, BOUND_QUAD_TOL);
    Ok(initial + forcing)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub max_ratio: f64,
    pub worst_x: f64,
    /// Derivative index attaining `max_ratio`.
    pub k: usize,
    /// Set when some grid point had a zero gap and a zero bound.
    pub zero_over_zero: bool,
    /// `min{a, b / M}` for the pair; grid points beyond it are still checked.
    pub existence_interval: f64,
}

/// Integrates both companion systems with RK4 through `grid` and reports the
/// largest ratio `|y^(k) - z^(k)| / bound` over the grid and `k < m`.
pub fn verify_pair(pair: &OdePair, grid: &[f64], m: usize) -> Result<ViolationReport> {
    if m != pair.order() {
        return Err(Error::InvalidArgument(format!("pair has order {} but m = {m}", pair.order())));
    }
    let ys = integrate_companion(&pair.f, &pair.y0, pair, grid)?;
    let zs = integrate_companion(&pair.g, &pair.z0, pair, grid)?;
    let mut report = ViolationReport {
        max_ratio: 0.0,
        worst_x: grid.first().copied().unwrap_or(pair.a0),
        k: 0,
        zero_over_zero: false,
        existence_interval: pair.existence_interval(),
    };
    for ((&x, y), z) in grid.iter().zip(&ys).zip(&zs) {
        let bound = gronwall_bound(pair, x, m)?;
        for k in 0..m {
            let gap = (y[k] - z[k]).abs();
            let ratio = if bound > 0.0 {
                gap / bound
            } else if gap == 0.0 {
                report.zero_over_zero = true;
                0.0
            } else {
                f64::INFINITY
            };
            if ratio > report.max_ratio {
                report.max_ratio = ratio;
                report.worst_x = x;
                report.k = k;
            }
        }
    }
    Ok(report)
}

fn integrate_companion(rhs: &HigherOrderRhs, w0: &[f64], pair: &OdePair, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    let m = w0.len();
    let centre = pair.y0.clone();
    let radius = pair.b;
    rk4_dense(
        |x, w, out| {
            out[..m - 1].copy_from_slice(&w[1..]);
            out[m - 1] = rhs(x, w);
        },
        pair.a0,
        w0,
        grid,
        RK4_MAX_STEP,
        |x, w| {
            let dist = w.iter().zip(&centre).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if dist > radius || !dist.is_finite() {
                Err(Error::BoxExit { x, lo: -radius, hi: radius })
            } else {
                Ok(())
            }
        },
    )
}

/// Pair of constant-coefficient linear equations
/// `y^(m) = sum_j coeffs[j] y^(j)` sharing the same box.
pub fn linear_pair(f_coeffs: Vec<f64>, g_coeffs: Vec<f64>, y0: Vec<f64>, z0: Vec<f64>, a: f64, b: f64) -> Result<OdePair> {
    let m = y0.len();
    if f_coeffs.len() != m || g_coeffs.len() != m {
        return Err(Error::InvalidArgument("one coefficient per state component is required".into()));
    }
    let lipschitz = norm2(&f_coeffs);
    let diff: Vec<f64> = f_coeffs.iter().zip(&g_coeffs).map(|(a, b)| a - b).collect();
    let diff_norm = norm2(&diff);
    // |f - g| at Z(x) is at most |f_coeffs - g_coeffs|_2 |Z|_2 <= diff_norm (|Z0| + b)
    let z_bound = norm2(&y0) + b;
    let lin = |c: Vec<f64>| -> HigherOrderRhs { Arc::new(move |_, w: &[f64]| c.iter().zip(w).map(|(a, b)| a * b).sum()) };
    OdePair::new(lin(f_coeffs), lin(g_coeffs), y0, z0, lipschitz, Arc::new(move |_| diff_norm * z_bound), a, b)
}

/// File form of a pair, tagged by `kind`.
///
/// ```toml
/// kind = "linear"        # y^(m) = sum_j f[j] y^(j) against the g coefficients
/// f = [1.0]
/// g = [1.0]
/// y0 = [1.0]
/// z0 = [0.9]
/// a = 1.0
/// b = 2.0
/// ```
///
/// ```toml
/// kind = "builtin"       # z' = g(x, z) + perturb cos(x), g defaulting to f
/// f = "sin"
/// z0 = 1.0
/// lipschitz = 1.0
/// perturb = 0.05
/// ```
///
/// For `builtin` pairs `phi` defaults to `|perturb|`; it must be given when
/// `g` names a different right-hand side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairSpec {
    Linear {
        f: Vec<f64>,
        g: Vec<f64>,
        y0: Vec<f64>,
        z0: Vec<f64>,
        #[serde(default = "unit")]
        a: f64,
        #[serde(default = "unit")]
        b: f64,
    },
    Builtin {
        f: String,
        #[serde(default)]
        g: Option<String>,
        #[serde(default)]
        z0: Option<f64>,
        lipschitz: f64,
        #[serde(default)]
        perturb: f64,
        #[serde(default)]
        phi: Option<f64>,
    },
}

fn unit() -> f64 {
    1.0
}

impl PairSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn build(&self) -> Result<OdePair> {
        match self {
            PairSpec::Linear { f, g, y0, z0, a, b } => linear_pair(f.clone(), g.clone(), y0.clone(), z0.clone(), *a, *b),
            PairSpec::Builtin { f, g, z0, lipschitz, perturb, phi } => {
                let fi = builtins::by_name(f)?;
                let gi = match g {
                    Some(name) => builtins::by_name(name)?,
                    None => fi.clone(),
                };
                let phi = match (phi, g) {
                    (Some(v), _) => *v,
                    (None, None) => perturb.abs(),
                    (None, Some(_)) => return Err(Error::Config("`phi` is required when `g` differs from `f`".into())),
                };
                let eps = *perturb;
                let go = gi.oracle.clone();
                let shifted = OdeInstance {
                    oracle: Arc::new(move |px: usize, py: usize, x: f64, y: f64| {
                        let base = go.partial(px, py, x, y);
                        if py == 0 {
                            base + eps * dcos(px, x)
                        } else {
                            base
                        }
                    }),
                    ..gi
                };
                OdePair::first_order(&fi, &shifted, z0.unwrap_or(fi.y0), *lipschitz, Arc::new(move |_| phi))
            }
        }
    }
}

fn dcos(p: usize, t: f64) -> f64 {
    match p % 4 {
        0 => t.cos(),
        1 => -t.sin(),
        2 => -t.cos(),
        _ => t.sin(),
    }
}
