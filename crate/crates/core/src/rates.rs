//! Critical radii and rate functions for least-squares recovery of solution
//! classes, plus the entropy-integral radius.

use serde::{Deserialize, Serialize};

use crate::deriv::OdeKind;
use crate::error::{Error, Result};
use crate::numeric::{adaptive_simpson, bisect, factorial, ln_factorial_product};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub n: usize,
    pub sigma: f64,
    pub beta: usize,
}

impl RateParams {
    pub fn new(n: usize, sigma: f64, beta: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        Ok(RateParams { n, sigma, beta })
    }

    /// `sigma^2 / n`.
    pub fn noise_ratio(&self) -> f64 {
        self.sigma * self.sigma / self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MFunction {
    M1a,
    M2a,
    M1,
    M2,
    M3,
}

impl MFunction {
    pub const ALL: [MFunction; 5] = [MFunction::M1a, MFunction::M2a, MFunction::M1, MFunction::M2, MFunction::M3];

    pub fn name(self) -> &'static str {
        match self {
            MFunction::M1a => "M1a",
            MFunction::M2a => "M2a",
            MFunction::M1 => "M1",
            MFunction::M2 => "M2",
            MFunction::M3 => "M3",
        }
    }
}

impl std::str::FromStr for MFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MFunction::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown rate function `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    M1a,
    M2a,
    M1,
    M2,
    KernelM3,
    StandardClass,
}

impl From<MFunction> for Branch {
    fn from(m: MFunction) -> Self {
        match m {
            MFunction::M1a => Branch::M1a,
            MFunction::M2a => Branch::M2a,
            MFunction::M1 => Branch::M1,
            MFunction::M2 => Branch::M2,
            MFunction::M3 => Branch::KernelM3,
        }
    }
}

/// Which argument of a `max{...}` attained the value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveTerm {
    LogFactorial,
    Parametric,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub r_squared: f64,
    pub minimizing_gamma: usize,
    pub branch: Branch,
    pub active_term: ActiveTerm,
    pub asymptotic_constants_unity: bool,
}

fn power_exponent(e: f64, gamma: usize) -> f64 {
    let g = gamma as f64;
    2.0 * (g + e) / (2.0 * (g + e) + 1.0)
}

/// Arguments of the `max` defining `which(gamma)`, labelled.
pub fn m_function_terms(which: MFunction, gamma: usize, p: &RateParams) -> Result<Vec<(ActiveTerm, f64)>> {
    let s = p.noise_ratio();
    let g = gamma as f64;
    let gv1 = g.max(1.0);
    Ok(match which {
        MFunction::M1a => vec![
            (ActiveTerm::LogFactorial, s * ln_factorial_product(gamma)),
            (ActiveTerm::Parametric, s),
            (ActiveTerm::Power, s.powf(power_exponent(2.0, gamma))),
        ],
        MFunction::M2a => vec![(ActiveTerm::Parametric, s * gv1), (ActiveTerm::Power, s.powf(power_exponent(1.0, gamma)))],
        MFunction::M1 => vec![
            (ActiveTerm::LogFactorial, s * ln_factorial_product(gamma)),
            (ActiveTerm::Parametric, s * (g * g).max(1.0)),
            (ActiveTerm::Power, s.powf(power_exponent(2.0, gamma))),
        ],
        MFunction::M2 => {
            if gamma == 0 {
                if s > 1.0 {
                    return Err(Error::GammaUnsupported {
                        gamma,
                        reason: "M2 is only defined for gamma >= 1 when sigma^2/n > 1".into(),
                    });
                }
                return m_function_terms(MFunction::M2, 1, p);
            }
            vec![(ActiveTerm::Parametric, s * (g * g).max(1.0)), (ActiveTerm::Power, s.powf((g + 1.0) / (g + 2.0)))]
        }
        MFunction::M3 => vec![(ActiveTerm::Power, (gv1 * s).powf(power_exponent(2.0, gamma)))],
    })
}

fn argmax(terms: &[(ActiveTerm, f64)]) -> (ActiveTerm, f64) {
    let mut best = terms[0];
    for &t in &terms[1..] {
        if t.1 > best.1 {
            best = t;
        }
    }
    best
}

/// `which(gamma)` evaluated at `p`.
pub fn m_function(which: MFunction, gamma: usize, p: &RateParams) -> Result<f64> {
    Ok(argmax(&m_function_terms(which, gamma, p)?).1)
}

/// Pair of rate functions minimized for the given problem kind.
pub fn rate_pair(kind: OdeKind) -> [MFunction; 2] {
    match kind {
        OdeKind::Autonomous => [MFunction::M1a, MFunction::M2a],
        OdeKind::Nonautonomous => [MFunction::M1, MFunction::M2],
    }
}

/// `min{min_gamma first(gamma), min_gamma second(gamma)}` over `gamma in 0..=beta`.
///
/// Candidates that are undefined (`M2` at `gamma = 0` with `sigma^2/n > 1`)
/// are skipped. Ties go to the smallest `gamma`, then to the first function.
pub fn critical_radius(p: &RateParams, kind: OdeKind) -> RadiusReport {
    let mut best: Option<RadiusReport> = None;
    for gamma in 0..=p.beta {
        for which in rate_pair(kind) {
            let Ok(terms) = m_function_terms(which, gamma, p) else { continue };
            let (active_term, r_squared) = argmax(&terms);
            if best.is_none_or(|b| r_squared < b.r_squared) {
                best = Some(RadiusReport {
                    r_squared,
                    minimizing_gamma: gamma,
                    branch: which.into(),
                    active_term,
                    asymptotic_constants_unity: true,
                });
            }
        }
    }
    best.expect("M1 and M1a are defined for every gamma")
}

/// `[2^(gamma+1) (gamma+1)!]^(2/(2 gamma + 5))`.
pub fn kernel_prefactor(gamma: usize) -> f64 {
    let g = gamma as f64;
    (2f64.powi(gamma as i32 + 1) * factorial(gamma + 1)).powf(2.0 / (2.0 * g + 5.0))
}

pub fn kernel_radius_terms(gamma: usize, p: &RateParams) -> Vec<(ActiveTerm, f64)> {
    let s = p.noise_ratio();
    let dof = (gamma.min(p.n) as f64).max(1.0);
    vec![(ActiveTerm::Parametric, s * dof), (ActiveTerm::Power, kernel_prefactor(gamma) * s.powf(power_exponent(2.0, gamma)))]
}

/// Radius achieved by norm-constrained kernel regression, minimized over `gamma`.
pub fn kernel_radius(p: &RateParams) -> RadiusReport {
    let mut best: Option<RadiusReport> = None;
    for gamma in 0..=p.beta {
        let (active_term, r_squared) = argmax(&kernel_radius_terms(gamma, p));
        if best.is_none_or(|b| r_squared < b.r_squared) {
            best = Some(RadiusReport {
                r_squared,
                minimizing_gamma: gamma,
                branch: Branch::KernelM3,
                active_term,
                asymptotic_constants_unity: true,
            });
        }
    }
    best.expect("gamma = 0 is always a candidate")
}

/// Critical radius of the standard smooth class of degree `gamma + 1`.
pub fn standard_class_radius(gamma: usize, p: &RateParams) -> f64 {
    let s = p.noise_ratio();
    let g = gamma as f64;
    (s * g.max(1.0)).max(s.powf(power_exponent(1.0, gamma)))
}

/// `sigma^2 (beta sqrt(log(beta v 1)))^(4 beta + 10)`.
pub fn sample_threshold(beta: usize, sigma: f64) -> f64 {
    let b = beta as f64;
    let base = b * b.max(1.0).ln().sqrt();
    if base == 0.0 {
        return 0.0;
    }
    sigma * sigma * base.powf(4.0 * b + 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub gamma: usize,
    pub series_name: String,
    pub value: f64,
}

/// `((gamma v 1) log(1/delta), delta^(-1/(gamma+1)))` for `gamma = 0..=gamma_max`.
pub fn figure1_series(delta: f64, gamma_max: usize) -> Result<Vec<(usize, f64, f64)>> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::DeltaOutOfRange { delta, range: "(0, 1)".into() });
    }
    Ok((0..=gamma_max)
        .map(|g| {
            let gf = g as f64;
            (g, gf.max(1.0) * (1.0 / delta).ln(), delta.powf(-1.0 / (gf + 1.0)))
        })
        .collect())
}

/// Smallest `gamma` at which the log term exceeds the power term.
pub fn figure1_crossover(delta: f64, gamma_max: usize) -> Result<Option<usize>> {
    Ok(figure1_series(delta, gamma_max)?.into_iter().find(|&(_, log_term, power)| log_term > power).map(|(g, _, _)| g))
}

pub fn figure1_rows(delta: f64, gamma_max: usize) -> Result<Vec<SeriesRow>> {
    let mut rows = Vec::new();
    for (gamma, log_term, power) in figure1_series(delta, gamma_max)? {
        rows.push(SeriesRow { gamma, series_name: "log_term".into(), value: log_term });
        rows.push(SeriesRow { gamma, series_name: "power_term".into(), value: power });
    }
    Ok(rows)
}

/// The five rate functions for `gamma = 0..=gamma_max`. `M2` is `None` at
/// `gamma = 0`.
pub fn figure2_series(p: &RateParams, gamma_max: usize) -> Vec<(usize, [Option<f64>; 5])> {
    (0..=gamma_max)
        .map(|g| {
            let mut row = [None; 5];
            for (slot, which) in row.iter_mut().zip(MFunction::ALL) {
                if which == MFunction::M2 && g == 0 {
                    continue;
                }
                *slot = m_function(which, g, p).ok();
            }
            (g, row)
        })
        .collect()
}

pub fn figure2_rows(p: &RateParams, gamma_max: usize) -> Vec<SeriesRow> {
    let mut rows = Vec::new();
    for (gamma, values) in figure2_series(p, gamma_max) {
        for (which, v) in MFunction::ALL.into_iter().zip(values) {
            if let Some(value) = v {
                rows.push(SeriesRow { gamma, series_name: which.name().into(), value });
            }
        }
    }
    rows
}

pub const DUDLEY_LOWER: f64 = 1e-12;
const DUDLEY_QUAD_TOL: f64 = 1e-10;
const DUDLEY_REL_TOL: f64 = 1e-8;

/// Smallest `r in (0, sigma]` with
/// `n^(-1/2) int_{r^2/(4 sigma)}^{r} sqrt(logcover(d)) dd <= r^2 / sigma`.
///
/// Returns 0 when the inequality already holds at the bottom of the bracket.
pub fn dudley_radius<F: Fn(f64) -> f64>(logcover: F, p: &RateParams) -> Result<f64> {
    let sigma = p.sigma;
    let sqrt_n = (p.n as f64).sqrt();
    let gap = |r: f64| {
        let integral = adaptive_simpson(|d| logcover(d).max(0.0).sqrt(), r * r / (4.0 * sigma), r, DUDLEY_QUAD_TOL);
        integral / sqrt_n - r * r / sigma
    };
    if gap(DUDLEY_LOWER) <= 0.0 {
        return Ok(0.0);
    }
    if gap(sigma) > 0.0 {
        return Err(Error::NoSolutionInRange);
    }
    Ok(bisect(gap, DUDLEY_LOWER, sigma, DUDLEY_REL_TOL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(n: usize, sigma: f64, beta: usize) -> RateParams {
        RateParams::new(n, sigma, beta).unwrap()
    }

    #[test]
    fn m_function_examples() {
        assert_relative_eq!(m_function(MFunction::M2a, 1, &p(50, 1.0, 1)).unwrap(), 0.02f64.powf(0.8), epsilon = 1e-15);
        assert_relative_eq!(m_function(MFunction::M2a, 1, &p(50, 1.0, 1)).unwrap(), 0.04373, epsilon = 1e-5);
        assert_relative_eq!(m_function(MFunction::M1a, 0, &p(100, 1.0, 0)).unwrap(), 0.02512, epsilon = 1e-5);
        assert_relative_eq!(m_function(MFunction::M3, 0, &p(50, 1.0, 0)).unwrap(), 0.04373, epsilon = 1e-5);
    }

    #[test]
    fn m2_at_gamma_zero() {
        let ok = p(100, 1.0, 0);
        assert_eq!(m_function(MFunction::M2, 0, &ok).unwrap(), m_function(MFunction::M2, 1, &ok).unwrap());
        let bad = p(1, 2.0, 0);
        assert!(matches!(m_function(MFunction::M2, 0, &bad), Err(Error::GammaUnsupported { gamma: 0, .. })));
    }

    #[test]
    fn critical_radius_beta_zero() {
        let r = critical_radius(&p(100, 1.0, 0), OdeKind::Autonomous);
        assert_relative_eq!(r.r_squared, 0.01f64.powf(0.8), epsilon = 1e-15);
        assert_eq!(r.branch, Branch::M1a);
        assert_eq!(r.active_term, ActiveTerm::Power);
    }

    #[test]
    fn critical_radius_small_n_prefers_small_gamma() {
        for kind in [OdeKind::Autonomous, OdeKind::Nonautonomous] {
            let r = critical_radius(&p(50, 1.0, 10), kind);
            assert!(r.minimizing_gamma <= 2, "{r:?}");
        }
    }

    #[test]
    fn critical_radius_decreases_along_doubling_ladder() {
        for kind in [OdeKind::Autonomous, OdeKind::Nonautonomous] {
            let mut prev = f64::INFINITY;
            for k in 4..16 {
                let r = critical_radius(&p(1 << k, 1.0, 4), kind).r_squared;
                assert!(r < prev);
                prev = r;
            }
        }
    }

    #[test]
    fn kernel_examples() {
        let params = p(100, 1.0, 0);
        assert_relative_eq!(kernel_radius(&params).r_squared, 2f64.powf(0.4) * 0.01f64.powf(0.8), epsilon = 1e-15);
        assert_relative_eq!(kernel_radius(&params).r_squared, 0.03315, epsilon = 1e-5);
        assert_relative_eq!(kernel_prefactor(3), 384f64.powf(2.0 / 11.0), epsilon = 1e-14);
        assert_relative_eq!(kernel_prefactor(3), 2.9498, epsilon = 2e-3);
    }

    #[test]
    fn standard_class_examples() {
        assert_relative_eq!(standard_class_radius(1, &p(1000, 1.0, 1)), 1000f64.powf(-0.8), epsilon = 1e-15);
        assert_relative_eq!(standard_class_radius(3, &p(100, 1.0, 3)), 0.03, epsilon = 1e-15);
        assert_eq!(standard_class_radius(0, &p(1, 1.0, 0)), 1.0);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(sample_threshold(1, 1.0), 0.0);
        assert_eq!(sample_threshold(0, 1.0), 0.0);
        let t = sample_threshold(2, 1.0);
        let oracle = (18.0 * (2f64.ln() + 0.5 * 2f64.ln().ln())).exp();
        assert_relative_eq!(t, oracle, max_relative = 1e-12);
        assert!((t - 9682.09).abs() < 0.01, "{t}");
        assert_relative_eq!(sample_threshold(2, 2.0), 4.0 * t, max_relative = 1e-14);
        for b in 2..12 {
            assert!(sample_threshold(b + 1, 1.0) > sample_threshold(b, 1.0));
        }
    }

    #[test]
    fn figure_series() {
        let s = figure1_series(0.01, 8).unwrap();
        assert_relative_eq!(s[1].1, 4.6052, epsilon = 1e-4);
        assert_relative_eq!(s[1].2, 10.0, epsilon = 1e-12);
        assert_relative_eq!(s[3].1, 13.816, epsilon = 1e-3);
        assert_relative_eq!(s[3].2, 3.1623, epsilon = 1e-4);
        let s = figure1_series(0.001, 0).unwrap();
        assert_relative_eq!(s[0].1, 6.9078, epsilon = 1e-4);
        assert_relative_eq!(s[0].2, 1000.0, epsilon = 1e-9);
        assert_eq!(figure1_rows(0.01, 8).unwrap().len(), 18);
        assert!(figure1_series(1.0, 3).is_err());

        let small = figure2_series(&p(50, 1.0, 0), 6);
        let large = figure2_series(&p(50000, 1.0, 0), 6);
        assert_relative_eq!(small[0].1[4].unwrap(), 0.04373, epsilon = 1e-5);
        assert_relative_eq!(large[0].1[4].unwrap(), 1.7411e-4, epsilon = 1e-8);
        assert!(small[0].1[3].is_none());
        for (a, b) in small.iter().zip(&large) {
            for (x, y) in a.1.iter().zip(&b.1) {
                if let (Some(x), Some(y)) = (x, y) {
                    assert!(y < x);
                }
            }
        }
    }

    #[test]
    fn dudley_singleton_class() {
        assert_eq!(dudley_radius(|_| 0.0, &p(100, 1.0, 0)).unwrap(), 0.0);
    }

    #[test]
    fn dudley_constant_entropy() {
        // sqrt(A)/sqrt(n) (r - r^2/(4 sigma)) = r^2/sigma has the root
        // r = sqrt(A/n) / (1/sigma + sqrt(A/n)/(4 sigma)).
        let (a, n, sigma) = (4.0, 400, 1.0);
        let c = (a / n as f64).sqrt();
        let want = c / (1.0 / sigma + c / (4.0 * sigma));
        let got = dudley_radius(|_| a, &p(n, sigma, 0)).unwrap();
        assert_relative_eq!(got, want, max_relative = 1e-7);
    }

    #[test]
    fn dudley_reports_missing_root() {
        assert_eq!(dudley_radius(|_| 1e6, &p(1, 1.0, 0)), Err(Error::NoSolutionInRange));
    }
}
