//! Covering-number bounds for smooth classes and ODE solution classes.
//!
//! Every bound is a log covering number in the sup norm with natural logs and
//! all hidden constants set to one. Bounds that are sums report their
//! individual addends so that callers can see which term dominates.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::deriv::OdeKind;
use crate::error::{Error, Result};
use crate::numeric::ln_factorial_product;

/// `(beta, rho, dim, domain)` description of a smooth class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothClassSpec {
    pub beta: usize,
    pub rho: f64,
    pub dim: usize,
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
}

impl SmoothClassSpec {
    pub fn new(beta: usize, rho: f64, domain_lo: Vec<f64>, domain_hi: Vec<f64>) -> Result<Self> {
        let dim = domain_lo.len();
        if !(1..=2).contains(&dim) || domain_hi.len() != dim {
            return Err(Error::InvalidArgument("dimension must be 1 or 2 with matching bounds".into()));
        }
        if domain_lo.iter().zip(&domain_hi).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidArgument("domain_lo must be below domain_hi".into()));
        }
        if !(rho > 0.0) {
            return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
        }
        Ok(SmoothClassSpec { beta, rho, dim, domain_lo, domain_hi })
    }
}

/// Domain constants shared by the solution-class bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ClassConstantsSpec", into = "ClassConstantsSpec")]
pub struct ClassConstants {
    /// Radius of the ball containing the initial values.
    pub c0: f64,
    /// Half-width of the state box.
    pub b: f64,
    /// `min{1, b}`.
    pub alpha: f64,
    /// `C0 + b`.
    pub cbar: f64,
    /// Lipschitz constant of `f` in the state.
    pub lipschitz: f64,
    /// Lipschitz constant of `f` in its parameter vector.
    pub lipschitz_param: f64,
    /// Parameter dimension.
    pub param_dim: usize,
    /// ODE order.
    pub m: usize,
    /// Replaces the closed-form `L_max` when set.
    pub l_max_override: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClassConstantsSpec {
    #[serde(default = "one")]
    c0: f64,
    #[serde(default = "one")]
    b: f64,
    #[serde(default = "one")]
    lipschitz: f64,
    #[serde(default = "one")]
    lipschitz_param: f64,
    #[serde(default = "one_usize")]
    param_dim: usize,
    #[serde(default = "one_usize")]
    m: usize,
    #[serde(default)]
    l_max: Option<f64>,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}

impl From<ClassConstantsSpec> for ClassConstants {
    fn from(s: ClassConstantsSpec) -> Self {
        let mut c = ClassConstants::new(s.c0, s.b);
        c.lipschitz = s.lipschitz;
        c.lipschitz_param = s.lipschitz_param;
        c.param_dim = s.param_dim;
        c.m = s.m;
        c.l_max_override = s.l_max;
        c
    }
}

impl From<ClassConstants> for ClassConstantsSpec {
    fn from(c: ClassConstants) -> Self {
        ClassConstantsSpec {
            c0: c.c0,
            b: c.b,
            lipschitz: c.lipschitz,
            lipschitz_param: c.lipschitz_param,
            param_dim: c.param_dim,
            m: c.m,
            l_max: c.l_max_override,
        }
    }
}

impl Default for ClassConstants {
    fn default() -> Self {
        ClassConstants::new(1.0, 1.0)
    }
}

impl ClassConstants {
    /// Unit Lipschitz constants, one parameter, first order.
    pub fn new(c0: f64, b: f64) -> Self {
        ClassConstants {
            c0,
            b,
            alpha: b.min(1.0),
            cbar: c0 + b,
            lipschitz: 1.0,
            lipschitz_param: 1.0,
            param_dim: 1,
            m: 1,
            l_max_override: None,
        }
    }

    /// Reads constants from TOML; omitted keys default to 1.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn with_l_max(mut self, l_max: f64) -> Self {
        self.l_max_override = Some(l_max);
        self
    }

    /// `L_max` for the general bound: the override if set, else [`l_max`]
    /// with this class's Lipschitz constant, `alpha` and order.
    pub fn l_max(&self) -> f64 {
        self.l_max_override.unwrap_or_else(|| l_max(self.lipschitz, self.alpha, self.m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formula {
    KolmogorovUpper,
    KolmogorovLower,
    General,
    Parametric,
    Z1,
    Z2,
    Z3,
    W1,
    W2,
    W3,
    SeparableLower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Solutions,
    FirstDerivatives,
}

impl std::str::FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "solutions" => Ok(Target::Solutions),
            "first_derivatives" | "first-derivatives" => Ok(Target::FirstDerivatives),
            other => Err(Error::InvalidArgument(format!("unknown target `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub label: String,
    pub value: f64,
}

fn term(label: &str, value: f64) -> Term {
    Term { label: label.to_string(), value }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub value: f64,
    pub minimizing_gamma: Option<usize>,
    pub terms: Vec<Term>,
    pub formula: Formula,
    pub asymptotic_constants_unity: bool,
}

impl BoundReport {
    pub fn from_terms(formula: Formula, gamma: Option<usize>, terms: Vec<Term>) -> Self {
        BoundReport {
            value: terms.iter().map(|t| t.value).sum(),
            minimizing_gamma: gamma,
            terms,
            formula,
            asymptotic_constants_unity: true,
        }
    }
}

fn check_unit_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::DeltaOutOfRange { delta, range: "(0, 1)".into() })
    }
}

fn check_fifth(delta: f64, alpha: f64) -> Result<()> {
    let d5 = delta / 5.0;
    if d5 > 0.0 && d5 < alpha {
        Ok(())
    } else {
        Err(Error::DeltaOutOfRange { delta, range: format!("delta/5 in (0, {alpha})") })
    }
}

/// `delta^(-1/(gamma+1)) + (gamma+1) log(1/delta)`.
pub fn kolmogorov_upper(delta: f64, gamma: usize) -> Result<f64> {
    Ok(kolmogorov_upper_report(delta, gamma)?.value)
}

pub fn kolmogorov_upper_report(delta: f64, gamma: usize) -> Result<BoundReport> {
    check_unit_delta(delta)?;
    let g = gamma as f64;
    Ok(BoundReport::from_terms(
        Formula::KolmogorovUpper,
        Some(gamma),
        vec![term("power", delta.powf(-1.0 / (g + 1.0))), term("log", (g + 1.0) * (1.0 / delta).ln())],
    ))
}

/// `delta^(-1/(gamma+1))`.
pub fn kolmogorov_lower(delta: f64, gamma: usize) -> Result<f64> {
    check_unit_delta(delta)?;
    Ok(delta.powf(-1.0 / (gamma as f64 + 1.0)))
}

/// `sup_{x in [0, alpha]} e^(c x) (1 + int_0^x e^(-c s) ds)` in closed form.
///
/// `c = sqrt(L^2 + 1)` for `m >= 2` and `c = L` for first-order problems. The
/// expression is increasing in `x`, so the supremum sits at `x = alpha`.
pub fn l_max(lipschitz: f64, alpha: f64, m: usize) -> f64 {
    let c = if m <= 1 { lipschitz } else { (lipschitz * lipschitz + 1.0).sqrt() };
    let integral = if c.abs() < 1e-12 { alpha } else { (1.0 - (-c * alpha).exp()) / c };
    (c * alpha).exp() * (1.0 + integral)
}

/// `log N(delta / L_max, F) + m log(2 C0 L_max / delta + 1)`.
pub fn general_bound<F>(delta: f64, logcover_f: F, consts: &ClassConstants) -> Result<BoundReport>
where
    F: Fn(f64) -> Result<f64>,
{
    if delta <= 0.0 {
        return Err(Error::DeltaOutOfRange { delta, range: "(0, inf)".into() });
    }
    let lm = consts.l_max();
    let f_term = logcover_f(delta / lm)?;
    let init = consts.m as f64 * (2.0 * consts.c0 * lm / delta + 1.0).ln();
    Ok(BoundReport::from_terms(Formula::General, None, vec![term("rhs_class", f_term), term("initial_values", init)]))
}

/// `K log(1 + 2 L_max L_K / delta) + m log(2 C0 L_max / delta + 1)`.
pub fn parametric_bound(delta: f64, consts: &ClassConstants) -> Result<BoundReport> {
    if delta <= 0.0 {
        return Err(Error::DeltaOutOfRange { delta, range: "(0, inf)".into() });
    }
    let lm = consts.l_max();
    let params = consts.param_dim as f64 * (1.0 + 2.0 * lm * consts.lipschitz_param / delta).ln();
    let init = consts.m as f64 * (2.0 * consts.c0 * lm / delta + 1.0).ln();
    Ok(BoundReport::from_terms(Formula::Parametric, None, vec![term("parameters", params), term("initial_values", init)]))
}

fn ln5over(delta: f64) -> f64 {
    (5.0 / delta).ln()
}

fn fifth_pow(delta: f64, e: f64) -> f64 {
    (delta / 5.0).powf(e)
}

/// Addends of `Z1(delta, gamma)`.
pub fn z1_terms(delta: f64, gamma: usize, c: &ClassConstants) -> Vec<Term> {
    let g = gamma as f64;
    vec![
        term("log_factorial_product", ln_factorial_product(gamma)),
        term("log_5_over_delta", (g + 3.0) / 2.0 * ln5over(delta)),
        term("power", c.alpha * fifth_pow(delta, -1.0 / (g + 2.0)) * LN_2),
        term("log_4cbar", (4.0 * c.cbar).ln()),
    ]
}

/// Addends of `Z2(delta, gamma)` (callers pass `delta / L_max` where required).
pub fn z2_terms(delta: f64, gamma: usize, c: &ClassConstants) -> Vec<Term> {
    let g = gamma as f64;
    vec![
        term("log_5_over_delta", (g + 2.0) / 2.0 * ln5over(delta)),
        term("power", 2.0 * c.cbar * LN_2 * fifth_pow(delta, -1.0 / (g + 1.0))),
        term("log_4", 4f64.ln()),
        term("initial_values", (c.c0 / delta + 1.0).ln()),
    ]
}

pub fn z3_terms(delta: f64, gamma: usize, c: &ClassConstants) -> Vec<Term> {
    let g = gamma as f64;
    vec![
        term("log_factorial_product", ln_factorial_product(gamma)),
        term("log_5_over_delta", (g + 2.0) / 2.0 * ln5over(delta)),
        term("power", c.alpha * fifth_pow(delta, -1.0 / (g + 1.0)) * LN_2),
        term("log_4", 4f64.ln()),
    ]
}

pub fn w1_terms(delta: f64, gamma: usize, c: &ClassConstants) -> Vec<Term> {
    let g = gamma as f64;
    vec![
        term("log_factorial_product", ln_factorial_product(gamma)),
        term("exponential", (g * g + g) / 2.0 * LN_2),
        term("log_5_over_delta", (g + 3.0) / 2.0 * ln5over(delta)),
        term("power", c.alpha * fifth_pow(delta, -1.0 / (g + 2.0)) * 4f64.ln()),
        term("log_4cbar", (4.0 * c.cbar).ln()),
    ]
}

pub fn w2_terms(delta: f64, gamma: usize, c: &ClassConstants) -> Vec<Term> {
    let g = gamma as f64;
    vec![
        term("log_5_over_delta", (g + 2.0) * (g + 3.0) / 6.0 * ln5over(delta)),
        term("power", 20.0 * c.cbar.max(1.0) * LN_2 * fifth_pow(delta, -2.0 / (g + 1.0))),
        term("log_16", 4.0 * LN_2),
        term("initial_values", (c.c0 / delta + 1.0).ln()),
    ]
}

pub fn w3_terms(delta: f64, gamma: usize, c: &ClassConstants) -> Vec<Term> {
    let g = gamma as f64;
    vec![
        term("log_factorial_product", ln_factorial_product(gamma)),
        term("exponential", (g * g + g) / 2.0 * LN_2),
        term("log_5_over_delta", (g + 2.0) / 2.0 * ln5over(delta)),
        term("power", c.alpha * fifth_pow(delta, -1.0 / (g + 1.0)) * 4f64.ln()),
        term("log_4", 4f64.ln()),
    ]
}

fn sum(terms: &[Term]) -> f64 {
    terms.iter().map(|t| t.value).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub first: f64,
    pub second: f64,
    pub third: f64,
}

/// Raw `(Z1, Z2, Z3)` at the same `delta`; requires `delta / 5 in (0, alpha)`.
pub fn z_bounds(delta: f64, gamma: usize, consts: &ClassConstants) -> Result<Triple> {
    check_fifth(delta, consts.alpha)?;
    Ok(Triple {
        first: sum(&z1_terms(delta, gamma, consts)),
        second: sum(&z2_terms(delta, gamma, consts)),
        third: sum(&z3_terms(delta, gamma, consts)),
    })
}

/// Raw `(W1, W2, W3)` at the same `delta`; requires `delta / 5 in (0, alpha)`.
pub fn w_bounds(delta: f64, gamma: usize, consts: &ClassConstants) -> Result<Triple> {
    check_fifth(delta, consts.alpha)?;
    Ok(Triple {
        first: sum(&w1_terms(delta, gamma, consts)),
        second: sum(&w2_terms(delta, gamma, consts)),
        third: sum(&w3_terms(delta, gamma, consts)),
    })
}

/// `L_max` used by the solution-class bounds: unit Lipschitz constant, first order.
pub fn solution_class_l_max(consts: &ClassConstants) -> f64 {
    consts.l_max_override.unwrap_or_else(|| l_max(1.0, consts.alpha, 1))
}

type TermFn = fn(f64, usize, &ClassConstants) -> Vec<Term>;

/// Minimum over `gamma in {0..beta}` of the relevant bound family.
///
/// For solutions, the minimum also ranges over the general-bound branch
/// evaluated at `delta / L_max`. Ties go to the smallest `gamma`, then to the
/// derivative-bound branch.
pub fn solution_class_bound(
    delta: f64,
    beta: usize,
    consts: &ClassConstants,
    kind: OdeKind,
    target: Target,
) -> Result<BoundReport> {
    check_fifth(delta, consts.alpha)?;
    let lm = solution_class_l_max(consts);
    let branches: Vec<(Formula, TermFn, f64)> = match (kind, target) {
        (OdeKind::Autonomous, Target::Solutions) => vec![(Formula::Z1, z1_terms, delta), (Formula::Z2, z2_terms, delta / lm)],
        (OdeKind::Autonomous, Target::FirstDerivatives) => vec![(Formula::Z3, z3_terms, delta)],
        (OdeKind::Nonautonomous, Target::Solutions) => vec![(Formula::W1, w1_terms, delta), (Formula::W2, w2_terms, delta / lm)],
        (OdeKind::Nonautonomous, Target::FirstDerivatives) => vec![(Formula::W3, w3_terms, delta)],
    };
    let mut best: Option<BoundReport> = None;
    for gamma in 0..=beta {
        for (formula, f, d) in &branches {
            let report = BoundReport::from_terms(*formula, Some(gamma), f(*d, gamma, consts));
            if best.as_ref().is_none_or(|b| report.value < b.value) {
                best = Some(report);
            }
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Lower bound from the separable subclass: `delta^(-1/(beta+2))` for solutions,
/// `delta^(-1/(beta+1))` for first derivatives.
pub fn separable_lower(delta: f64, beta: usize, target: Target) -> Result<f64> {
    check_unit_delta(delta)?;
    let e = match target {
        Target::Solutions => beta as f64 + 2.0,
        Target::FirstDerivatives => beta as f64 + 1.0,
    };
    Ok(delta.powf(-1.0 / e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kolmogorov_examples() {
        assert_relative_eq!(kolmogorov_upper(0.01, 1).unwrap(), 10.0 + 2.0 * 100f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(kolmogorov_upper(0.01, 1).unwrap(), 19.2103, epsilon = 1e-4);
        assert_relative_eq!(kolmogorov_upper(0.001, 2).unwrap(), 30.723, epsilon = 1e-3);
        assert_relative_eq!(kolmogorov_upper(1.0 - 1e-12, 0).unwrap(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(kolmogorov_lower(0.01, 1).unwrap(), 10.0, epsilon = 1e-12);
        assert_relative_eq!(kolmogorov_lower(0.25, 0).unwrap(), 4.0, epsilon = 1e-12);
        assert!(matches!(kolmogorov_upper(1.0, 0), Err(Error::DeltaOutOfRange { .. })));
        assert!(matches!(kolmogorov_lower(0.0, 0), Err(Error::DeltaOutOfRange { .. })));
    }

    #[test]
    fn l_max_examples() {
        assert_relative_eq!(l_max(1.0, 1.0, 1), 2.0 * std::f64::consts::E - 1.0, epsilon = 1e-12);
        assert_relative_eq!(l_max(1.0, 1.0, 1), 4.43656, epsilon = 1e-5);
        assert_relative_eq!(l_max(0.0, 1.0, 2), 4.43656, epsilon = 1e-5);
        assert_relative_eq!(l_max(2.0, 1e-14, 2), 1.0, epsilon = 1e-12);
        // first order, no state dependence: 1 + alpha
        assert_relative_eq!(l_max(0.0, 1.0, 1), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn general_bound_examples() {
        let zero = |_: f64| Ok(0.0);
        let singleton = ClassConstants::new(0.0, 1.0);
        assert_eq!(general_bound(0.3, zero, &singleton).unwrap().value, 0.0);

        let c = ClassConstants::new(1.0, 1.0);
        assert_relative_eq!(general_bound(0.1, zero, &c).unwrap().value, 4.4968, epsilon = 1e-4);

        let c = ClassConstants::new(1.0, 1.0).with_l_max(2.0);
        let r = general_bound(0.5, |d: f64| Ok(1.0 / d), &c).unwrap();
        assert_relative_eq!(r.value, 4.0 + 9f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(r.value, 6.1972, epsilon = 1e-4);

        let failing = |_: f64| Err(Error::InvalidArgument("boom".into()));
        assert!(general_bound(0.5, failing, &c).is_err());
    }

    #[test]
    fn parametric_examples() {
        let c = ClassConstants::new(0.0, 1.0).with_l_max(1.0);
        assert_relative_eq!(parametric_bound(1.0, &c).unwrap().value, 3f64.ln(), epsilon = 1e-12);
        let mut c0 = ClassConstants::new(0.0, 1.0);
        c0.param_dim = 0;
        assert_eq!(parametric_bound(0.37, &c0).unwrap().value, 0.0);
        let mut c2 = ClassConstants::new(1.0, 1.0);
        c2.param_dim = 2;
        assert_relative_eq!(parametric_bound(0.1, &c2).unwrap().value, 13.490, epsilon = 1e-3);
    }

    #[test]
    fn z_examples() {
        let c = ClassConstants::new(0.0, 1.0); // alpha = 1, cbar = 1
        let z = z_bounds(0.5, 0, &c).unwrap();
        assert_relative_eq!(z.first, 7.0321, epsilon = 1e-4);
        assert_relative_eq!(z.third, 10.620, epsilon = 1e-3);
        assert!(matches!(z_bounds(5.0, 0, &c), Err(Error::DeltaOutOfRange { .. })));
        assert!(matches!(z_bounds(0.0, 0, &c), Err(Error::DeltaOutOfRange { .. })));
    }

    #[test]
    fn w_examples() {
        let c = ClassConstants::new(1.0, 0.0 + 1.0);
        let c = ClassConstants { cbar: 1.0, ..c };
        let z = z_bounds(0.5, 0, &c).unwrap();
        let w = w_bounds(0.5, 0, &c).unwrap();
        assert_relative_eq!(w.first - z.first, 2.1919, epsilon = 1e-4);
        assert_relative_eq!(w.second, 1392.47, epsilon = 1e-2);
    }

    #[test]
    fn factorial_beats_exponential_from_five() {
        let first = (0..20).find(|&g| ln_factorial_product(g) >= (g * g + g) as f64 / 2.0 * LN_2 && g > 0).unwrap();
        assert_eq!(first, 5);
    }

    #[test]
    fn separable_examples() {
        assert_relative_eq!(separable_lower(1.0 / 16.0, 2, Target::Solutions).unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(separable_lower(0.01, 0, Target::Solutions).unwrap(), 10.0, epsilon = 1e-12);
        assert_relative_eq!(separable_lower(0.01, 1, Target::FirstDerivatives).unwrap(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn beta_zero_has_a_single_gamma() {
        let c = ClassConstants::new(1.0, 1.0);
        let r = solution_class_bound(0.5, 0, &c, OdeKind::Autonomous, Target::Solutions).unwrap();
        assert_eq!(r.minimizing_gamma, Some(0));
        let lm = solution_class_l_max(&c);
        let z1 = sum(&z1_terms(0.5, 0, &c));
        let z2 = sum(&z2_terms(0.5 / lm, 0, &c));
        assert_eq!(r.value, z1.min(z2));
    }

    #[test]
    fn bound_decreases_in_delta() {
        let c = ClassConstants::new(1.0, 1.0);
        for kind in [OdeKind::Autonomous, OdeKind::Nonautonomous] {
            let v: Vec<f64> =
                [0.1, 0.2, 0.4].iter().map(|&d| solution_class_bound(d, 4, &c, kind, Target::Solutions).unwrap().value).collect();
            assert!(v[0] >= v[1] && v[1] >= v[2], "{v:?}");
        }
    }

    #[test]
    fn report_flags_unit_constants() {
        let r = kolmogorov_upper_report(0.1, 2).unwrap();
        assert!(r.asymptotic_constants_unity);
        assert_eq!(r.terms.len(), 2);
    }
}
