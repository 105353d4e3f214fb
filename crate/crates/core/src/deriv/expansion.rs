//! Combinatorial expansions of `y^(k)` for `y' = f(y)` and `y' = f(x, y)`.
//!
//! A term is a product of partial derivatives of `f` evaluated along the
//! trajectory. Each factor is stored as `(dx, dy)`, the number of
//! differentiations in `x` and in `y`; for the autonomous case `dx` is always 0.
//! Factors are kept sorted in descending order so that products that only
//! differ by the order of their factors merge into one term with a
//! multiplicity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the autonomous expansion order; the term multiplicities grow as `(k-1)!`.
pub const MAX_AUTONOMOUS_ORDER: usize = 20;
/// Default cap on the nonautonomous expansion order.
pub const MAX_NONAUTONOMOUS_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OdeKind {
    Autonomous,
    Nonautonomous,
}

impl std::str::FromStr for OdeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "autonomous" | "a" => Ok(OdeKind::Autonomous),
            "nonautonomous" | "na" | "n" => Ok(OdeKind::Nonautonomous),
            other => Err(Error::InvalidArgument(format!("unknown ODE kind `{other}`"))),
        }
    }
}

/// One product of partial derivatives of `f`, with its multiplicity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivTuple {
    /// `(dx, dy)` orders of each factor, sorted descending.
    pub factors: Vec<(u32, u32)>,
    pub multiplicity: u64,
}

impl DerivTuple {
    /// Total number of differentiations carried by the tuple.
    pub fn total_order(&self) -> u32 {
        self.factors.iter().map(|&(a, b)| a + b).sum()
    }

    /// Highest single-factor derivative order.
    pub fn max_factor_order(&self) -> u32 {
        self.factors.iter().map(|&(a, b)| a + b).max().unwrap_or(0)
    }

    /// The `y`-derivative orders of an autonomous tuple.
    pub fn exponents(&self) -> Vec<u32> {
        self.factors.iter().map(|&(_, b)| b).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivExpansion {
    pub order: usize,
    pub kind: OdeKind,
    pub terms: Vec<DerivTuple>,
}

impl DerivExpansion {
    /// `y' = f`: the single tuple `(0)` with multiplicity one.
    pub fn first(kind: OdeKind) -> Self {
        DerivExpansion { order: 1, kind, terms: vec![DerivTuple { factors: vec![(0, 0)], multiplicity: 1 }] }
    }

    pub fn total_multiplicity(&self) -> u64 {
        self.terms.iter().map(|t| t.multiplicity).sum()
    }

    /// Largest factor derivative order appearing anywhere in the expansion.
    pub fn max_factor_order(&self) -> u32 {
        self.terms.iter().map(DerivTuple::max_factor_order).max().unwrap_or(0)
    }

    /// Differentiates every term once along the trajectory and collects.
    ///
    /// Autonomous: `d/dx f^(a1..ak) = sum_j f^(a1,..,aj+1,0,..,ak)` (the chain
    /// rule contributes an extra factor `f`).
    /// Nonautonomous: each factor either gains an `x`-derivative, or gains a
    /// `y`-derivative together with an extra factor `f`.
    pub fn differentiate(&self) -> Result<DerivExpansion> {
        let mut acc: BTreeMap<Vec<(u32, u32)>, u64> = BTreeMap::new();
        for term in &self.terms {
            for j in 0..term.factors.len() {
                if self.kind == OdeKind::Nonautonomous {
                    let mut f = term.factors.clone();
                    f[j].0 += 1;
                    add_term(&mut acc, f, term.multiplicity)?;
                }
                let mut f = term.factors.clone();
                f[j].1 += 1;
                f.push((0, 0));
                add_term(&mut acc, f, term.multiplicity)?;
            }
        }
        Ok(DerivExpansion {
            order: self.order + 1,
            kind: self.kind,
            terms: acc.into_iter().rev().map(|(factors, multiplicity)| DerivTuple { factors, multiplicity }).collect(),
        })
    }
}

fn add_term(acc: &mut BTreeMap<Vec<(u32, u32)>, u64>, mut factors: Vec<(u32, u32)>, m: u64) -> Result<()> {
    factors.sort_unstable_by(|a, b| b.cmp(a));
    let slot = acc.entry(factors).or_insert(0);
    *slot = slot.checked_add(m).ok_or(Error::OrderTooLarge { k: usize::MAX, max: 0 })?;
    Ok(())
}

fn expand(kind: OdeKind, k: usize, cap: usize) -> Result<DerivExpansion> {
    if k == 0 {
        return Err(Error::ZeroOrder);
    }
    if k > cap {
        return Err(Error::OrderTooLarge { k, max: cap });
    }
    let mut e = DerivExpansion::first(kind);
    while e.order < k {
        e = e.differentiate().map_err(|_| Error::OrderTooLarge { k, max: cap })?;
    }
    Ok(e)
}

/// Expansion of `y^(k)` for `y' = f(y)`; total multiplicity is `(k-1)!`.
pub fn expand_autonomous(k: usize) -> Result<DerivExpansion> {
    expand(OdeKind::Autonomous, k, MAX_AUTONOMOUS_ORDER)
}

/// Expansion of `y^(k)` for `y' = f(x, y)`; total multiplicity is at most `2^(k-1) (k-1)!`.
pub fn expand_nonautonomous(k: usize) -> Result<DerivExpansion> {
    expand(OdeKind::Nonautonomous, k, MAX_NONAUTONOMOUS_ORDER)
}

/// Like [`expand_autonomous`] / [`expand_nonautonomous`] with an explicit order cap.
pub fn expand_with_cap(kind: OdeKind, k: usize, cap: usize) -> Result<DerivExpansion> {
    expand(kind, k, cap)
}

/// Expansions of orders `1..=k` for the given kind.
pub fn expansion_ladder(kind: OdeKind, k: usize) -> Result<Vec<DerivExpansion>> {
    let cap = match kind {
        OdeKind::Autonomous => MAX_AUTONOMOUS_ORDER,
        OdeKind::Nonautonomous => MAX_NONAUTONOMOUS_ORDER,
    };
    if k > cap {
        return Err(Error::OrderTooLarge { k, max: cap });
    }
    let mut out = Vec::with_capacity(k);
    if k == 0 {
        return Ok(out);
    }
    out.push(DerivExpansion::first(kind));
    while out.len() < k {
        let next = out.last().expect("non-empty").differentiate()?;
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::factorial;

    fn exps(e: &DerivExpansion) -> Vec<(Vec<u32>, u64)> {
        e.terms.iter().map(|t| (t.exponents(), t.multiplicity)).collect()
    }

    #[test]
    fn autonomous_low_orders() {
        assert_eq!(exps(&expand_autonomous(1).unwrap()), vec![(vec![0], 1)]);
        assert_eq!(exps(&expand_autonomous(2).unwrap()), vec![(vec![1, 0], 1)]);
        assert_eq!(exps(&expand_autonomous(3).unwrap()), vec![(vec![2, 0, 0], 1), (vec![1, 1, 0], 1)]);
        assert_eq!(
            exps(&expand_autonomous(4).unwrap()),
            vec![(vec![3, 0, 0, 0], 1), (vec![2, 1, 0, 0], 4), (vec![1, 1, 1, 0], 1)]
        );
    }

    #[test]
    fn autonomous_multiplicity_is_factorial() {
        for k in 1..=12 {
            let e = expand_autonomous(k).unwrap();
            assert_eq!(e.total_multiplicity() as f64, factorial(k - 1), "k = {k}");
            for t in &e.terms {
                assert_eq!(t.factors.len(), k);
                assert_eq!(t.total_order() as usize, k - 1);
            }
        }
    }

    #[test]
    fn nonautonomous_second_order() {
        let e = expand_nonautonomous(2).unwrap();
        // f_y * f + f_x
        assert_eq!(e.terms.len(), 2);
        assert!(e.terms.contains(&DerivTuple { factors: vec![(1, 0)], multiplicity: 1 }));
        assert!(e.terms.contains(&DerivTuple { factors: vec![(0, 1), (0, 0)], multiplicity: 1 }));
        assert_eq!(e.total_multiplicity(), 2);
    }

    #[test]
    fn nonautonomous_bound_and_degree() {
        for k in 1..=10 {
            let e = expand_nonautonomous(k).unwrap();
            let bound = 2f64.powi(k as i32 - 1) * factorial(k - 1);
            assert!(e.total_multiplicity() as f64 <= bound, "k = {k}");
            for t in &e.terms {
                assert_eq!(t.total_order() as usize, k - 1);
            }
        }
        assert!(expand_nonautonomous(3).unwrap().total_multiplicity() <= 8);
    }

    #[test]
    fn caps_and_zero() {
        assert_eq!(expand_autonomous(0), Err(Error::ZeroOrder));
        assert!(matches!(expand_autonomous(21), Err(Error::OrderTooLarge { k: 21, max: 20 })));
        assert!(matches!(expand_nonautonomous(17), Err(Error::OrderTooLarge { k: 17, .. })));
        assert!(expand_autonomous(20).is_ok());
    }
}
