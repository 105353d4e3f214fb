use serde::{Deserialize, Serialize};

use crate::deriv::expansion::{expansion_ladder, DerivExpansion, OdeKind};
use crate::deriv::ode::OdeInstance;
use crate::error::{Error, Result};
use crate::numeric::factorial;

/// Highest Taylor order used for stepping.
pub const MAX_STEP_ORDER: usize = 10;
/// Relative size of the last retained Taylor term per step.
pub const STEP_TOL: f64 = 1e-12;
pub const MIN_STEP: f64 = 1e-12;

/// Evaluates `sum_i m_i prod_j D^(p_ij) f (x, y)`.
///
/// On the true trajectory (`y = y(x)`) this is `y^(k)(x)`.
pub fn eval_expansion(exp: &DerivExpansion, ode: &OdeInstance, x: f64, y: f64) -> Result<f64> {
    let needed = exp.max_factor_order() as usize;
    if needed > ode.beta_max {
        return Err(Error::OracleOrderExceeded { needed, beta_max: ode.beta_max });
    }
    let table = PartialTable::new(ode, needed, x, y);
    Ok(table.eval(exp))
}

/// Cache of `D^(px, py) f (x, y)` for `px + py <= order` at one point.
struct PartialTable {
    stride: usize,
    values: Vec<f64>,
}

impl PartialTable {
    fn new(ode: &OdeInstance, order: usize, x: f64, y: f64) -> Self {
        let stride = order + 1;
        let mut values = vec![0.0; stride * stride];
        for px in 0..=order {
            if ode.kind == OdeKind::Autonomous && px > 0 {
                break;
            }
            for py in 0..=(order - px) {
                values[px * stride + py] = ode.partial(px, py, x, y);
            }
        }
        PartialTable { stride, values }
    }

    fn eval(&self, exp: &DerivExpansion) -> f64 {
        exp.terms
            .iter()
            .map(|t| {
                t.multiplicity as f64
                    * t.factors.iter().map(|&(a, b)| self.values[a as usize * self.stride + b as usize]).product::<f64>()
            })
            .sum()
    }
}

/// `(x, [y, y', ..., y^(order)])` along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub x: f64,
    pub derivs: Vec<f64>,
}

impl TrajectoryPoint {
    pub fn y(&self) -> f64 {
        self.derivs[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub steps: usize,
}

/// Reusable Taylor stepper: holds the expansions once so that repeated
/// integrations of the same ODE do not rebuild them.
pub struct TaylorStepper<'a> {
    ode: &'a OdeInstance,
    ladder: Vec<DerivExpansion>,
    step_order: usize,
    max_order: usize,
}

impl<'a> TaylorStepper<'a> {
    /// `output_order` is the number of derivatives reported per point.
    pub fn new(ode: &'a OdeInstance, output_order: usize) -> Result<Self> {
        if output_order > ode.beta_max + 1 {
            return Err(Error::OracleOrderExceeded { needed: output_order.saturating_sub(1), beta_max: ode.beta_max });
        }
        let step_order = (ode.beta_max + 1).clamp(1, MAX_STEP_ORDER);
        let max_order = step_order.max(output_order);
        let ladder = expansion_ladder(ode.kind, max_order)?;
        Ok(TaylorStepper { ode, ladder, step_order, max_order })
    }

    /// `[y^(1), ..., y^(upto)]` at `(x, y)`.
    pub fn derivatives(&self, x: f64, y: f64, upto: usize) -> Vec<f64> {
        let upto = upto.min(self.max_order);
        let needed = self.ladder[..upto].iter().map(|e| e.max_factor_order() as usize).max().unwrap_or(0);
        let table = PartialTable::new(self.ode, needed, x, y);
        self.ladder[..upto].iter().map(|e| table.eval(e)).collect()
    }

    pub fn integrate(&self, grid: &[f64], output_order: usize) -> Result<Trajectory> {
        let ode = self.ode;
        if grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("grid must be ascending".into()));
        }
        if let Some(&first) = grid.first() {
            if first < ode.x0 - 1e-15 {
                return Err(Error::InvalidArgument(format!("grid starts at {first} before x0 = {}", ode.x0)));
            }
        }
        let (lo, hi) = (ode.y0 - ode.b, ode.y0 + ode.b);
        let x_end = ode.x0 + ode.a;
        let mut x = ode.x0;
        let mut y = ode.y0;
        let mut steps = 0usize;
        let mut points = Vec::with_capacity(grid.len());
        let order = self.step_order;
        for &target in grid {
            if target > x_end + 1e-12 {
                return Err(Error::DomainExceeded { x: target, end: x_end });
            }
            while target - x > 1e-15 * target.abs().max(1.0) {
                let d = self.derivatives(x, y, order);
                let scale = y.abs().max(1.0) * STEP_TOL;
                let mut h = target - x;
                for k in [order.saturating_sub(1), order] {
                    if k == 0 {
                        continue;
                    }
                    let dk = d[k - 1].abs();
                    if dk > 0.0 {
                        h = h.min((scale * factorial(k) / dk).powf(1.0 / k as f64));
                    }
                }
                if h < MIN_STEP {
                    return Err(Error::StepUnderflow { x, min_step: MIN_STEP });
                }
                // Horner evaluation of sum_k d_k h^k / k!
                let mut incr = 0.0;
                for k in (1..=order).rev() {
                    incr = (incr + d[k - 1]) * h / k as f64;
                }
                y += incr;
                x = if (target - (x + h)).abs() <= 1e-15 * target.abs().max(1.0) { target } else { x + h };
                steps += 1;
                if !(lo..=hi).contains(&y) || !y.is_finite() {
                    return Err(Error::BoxExit { x, lo, hi });
                }
            }
            let mut derivs = Vec::with_capacity(output_order + 1);
            derivs.push(y);
            derivs.extend(self.derivatives(target, y, output_order));
            points.push(TrajectoryPoint { x: target, derivs });
        }
        Ok(Trajectory { points, steps })
    }
}

/// High-order Taylor integration of `ode` through the ascending `grid`, reporting
/// `y` and its first `order` derivatives at every grid point.
///
/// Stepping uses the fixed order `min(beta_max + 1, 10)`; each step is sized
/// so that the last two retained terms are below `1e-12 max(|y|, 1)`.
pub fn taylor_integrate(ode: &OdeInstance, grid: &[f64], order: usize) -> Result<Trajectory> {
    TaylorStepper::new(ode, order)?.integrate(grid, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deriv::expansion::{expand_autonomous, expand_nonautonomous};
    use crate::deriv::ode::builtins;
    use approx::assert_relative_eq;

    #[test]
    fn eval_examples() {
        let ident = builtins::linear(-1.0); // y' = y
        assert_eq!(eval_expansion(&expand_autonomous(1).unwrap(), &ident, 0.0, 2.0).unwrap(), 2.0);
        let ext = builtins::extremal();
        assert_relative_eq!(eval_expansion(&expand_autonomous(3).unwrap(), &ext, 0.0, -0.5).unwrap(), 2.0, epsilon = 1e-15);
        let s = builtins::sine(1.0);
        assert_eq!(eval_expansion(&expand_autonomous(2).unwrap(), &s, 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn oracle_order_is_enforced() {
        let mut ode = builtins::sine(1.0);
        ode.beta_max = 2;
        let e = expand_autonomous(4).unwrap();
        assert_eq!(eval_expansion(&e, &ode, 0.0, 0.3), Err(Error::OracleOrderExceeded { needed: 3, beta_max: 2 }));
        assert!(eval_expansion(&expand_autonomous(3).unwrap(), &ode, 0.0, 0.3).is_ok());
    }

    #[test]
    fn nonautonomous_second_derivative_matches_chain_rule() {
        let ode = builtins::sinx_cosy();
        let (x, y): (f64, f64) = (0.3, 0.7);
        let want = x.cos() * y.cos() + (-x.sin() * y.sin()) * (x.sin() * y.cos());
        let got = eval_expansion(&expand_nonautonomous(2).unwrap(), &ode, x, y).unwrap();
        assert_relative_eq!(got, want, epsilon = 1e-15);
    }

    #[test]
    fn exponential_growth() {
        let ode = builtins::linear(-1.0).with_box(1.0, 3.0);
        let tr = taylor_integrate(&ode, &[0.0, 0.5, 1.0], 6).unwrap();
        for (p, want) in tr.points.iter().zip([1.0, 0.5f64.exp(), 1f64.exp()]) {
            assert!((p.y() - want).abs() < 1e-8, "{} vs {want}", p.y());
            for d in &p.derivs {
                assert!((d - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn constant_solution() {
        let ode = builtins::zero().with_y0(3.25);
        let tr = taylor_integrate(&ode, &[0.0, 0.2, 0.9], 3).unwrap();
        assert!(tr.points.iter().all(|p| p.y() == 3.25 && p.derivs[1..].iter().all(|&d| d == 0.0)));
    }

    #[test]
    fn extremal_closed_form() {
        let ode = builtins::extremal();
        let grid: Vec<f64> = (0..=10).map(|i| 0.05 * i as f64).collect();
        let tr = taylor_integrate(&ode, &grid, 4).unwrap();
        for p in &tr.points {
            let want = ((-0.5f64).exp() + p.x * (-0.5f64).exp()).ln();
            assert!((p.y() - want).abs() < 1e-8);
        }
    }

    #[test]
    fn leaving_the_box_is_reported() {
        let ode = builtins::linear(-1.0).with_box(2.0, 1.0);
        let err = taylor_integrate(&ode, &[0.0, 1.5], 2).unwrap_err();
        assert!(matches!(err, Error::BoxExit { .. }), "{err:?}");
    }

    #[test]
    fn grid_beyond_box_width_is_rejected() {
        let ode = builtins::zero();
        assert!(matches!(taylor_integrate(&ode, &[0.0, 1.5], 1), Err(Error::DomainExceeded { .. })));
    }
}
