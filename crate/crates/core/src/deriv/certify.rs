use serde::{Deserialize, Serialize};

use crate::deriv::expansion::OdeKind;
use crate::deriv::ode::OdeInstance;
use crate::deriv::taylor::TaylorStepper;
use crate::error::{Error, Result};
use crate::numeric::{factorial, linspace};

pub const DEFAULT_CERT_GRID: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub k: usize,
    pub observed_max: f64,
    pub bound: f64,
    pub slack: f64,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    /// Tolerance applied to the `|D^p f| <= 1` spot checks.
    pub hypothesis_tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { hypothesis_tol: 1e-8 }
    }
}

/// `(k-1)!` for autonomous problems, `2^(k-1) (k-1)!` for nonautonomous ones.
pub fn factorial_bound(kind: OdeKind, k: usize) -> f64 {
    let base = factorial(k.saturating_sub(1));
    match kind {
        OdeKind::Autonomous => base,
        OdeKind::Nonautonomous => 2f64.powi(k as i32 - 1) * base,
    }
}

/// Default certification grid: equispaced points on `[x0, x0 + alpha]`.
pub fn default_grid(ode: &OdeInstance, points: usize) -> Vec<f64> {
    linspace(ode.x0, ode.x0 + ode.existence_interval(), points)
}

/// Integrates `ode`, evaluates `|y^(k)|` on `grid` for `k = 1..=k_max` and
/// compares the maxima with the factorial bounds.
///
/// The unit bound on the partials of `f` is the caller's responsibility;
/// it is spot-checked along the computed trajectory and a violation is reported
/// as [`Error::HypothesisViolated`].
pub fn certify_bounds(
    ode: &OdeInstance,
    k_max: usize,
    grid: Option<&[f64]>,
    opts: CertifyOptions,
) -> Result<Vec<BoundCertificate>> {
    if k_max == 0 {
        return Err(Error::ZeroOrder);
    }
    let owned;
    let grid = match grid {
        Some(g) => g,
        None => {
            owned = default_grid(ode, DEFAULT_CERT_GRID);
            &owned
        }
    };
    let stepper = TaylorStepper::new(ode, k_max)?;
    let traj = stepper.integrate(grid, k_max)?;

    let check_order = k_max - 1;
    for p in &traj.points {
        for px in 0..=check_order {
            if ode.kind == OdeKind::Autonomous && px > 0 {
                break;
            }
            for py in 0..=(check_order - px) {
                let v = ode.partial(px, py, p.x, p.y()).abs();
                if v > 1.0 + opts.hypothesis_tol {
                    return Err(Error::HypothesisViolated { px, py, x: p.x, value: v });
                }
            }
        }
    }

    Ok((1..=k_max)
        .map(|k| {
            let observed_max = traj.points.iter().map(|p| p.derivs[k].abs()).fold(0.0, f64::max);
            let bound = factorial_bound(ode.kind, k);
            BoundCertificate { k, observed_max, bound, slack: bound - observed_max, grid: grid.to_vec() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deriv::ode::builtins;

    #[test]
    fn extremal_is_tight_at_origin() {
        let certs = certify_bounds(&builtins::extremal(), 6, None, CertifyOptions::default()).unwrap();
        for c in &certs {
            let want = factorial(c.k - 1);
            assert!((c.observed_max - want).abs() <= 1e-9 * want, "k = {}: {}", c.k, c.observed_max);
            assert!(c.slack >= -1e-9);
        }
    }

    #[test]
    fn sine_has_nonnegative_slack() {
        let certs = certify_bounds(&builtins::sine(1.0), 6, None, CertifyOptions::default()).unwrap();
        assert!(certs.iter().all(|c| c.slack >= 0.0));
    }

    #[test]
    fn zero_rhs_has_zero_derivatives() {
        let certs = certify_bounds(&builtins::zero(), 5, None, CertifyOptions::default()).unwrap();
        assert!(certs.iter().all(|c| c.observed_max == 0.0));
    }

    #[test]
    fn violated_hypothesis_is_reported() {
        // |f| = 2|y| > 1 near y0 = 1
        let ode = builtins::linear(2.0).with_box(0.2, 1.0);
        let err = certify_bounds(&ode, 3, None, CertifyOptions::default()).unwrap_err();
        assert!(matches!(err, Error::HypothesisViolated { px: 0, py: 0, .. }), "{err:?}");
    }
}
