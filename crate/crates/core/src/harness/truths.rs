//! Builtin regression truths.
//!
//! | name | `y(x)` |
//! |------|--------|
//! | `separable-cos` | `sin(2 pi x) / (2 pi)^2`, the solution of `y' = cos(2 pi x) / (2 pi)`, `y(0) = 0` |
//! | `quadratic` | `x (1 - x) / 2` |
//! | `extremal` | `-1/2 + log(1 + x)`, the solution of `y' = exp(-y - 1/2)` |
//! | `linear-decay[:theta]` | `exp(-theta x)`, default `theta = 0.5` |
//! | `zero` | `0` |
//! | `ode:<builtin>` | Taylor-integrated solution of a builtin ODE |

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::deriv::{builtins, taylor_integrate, OdeInstance};
use crate::error::{Error, Result};

#[derive(Clone)]
pub enum TruthFn {
    Closed(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    Ode(OdeInstance),
}

#[derive(Clone)]
pub struct Truth {
    pub name: String,
    pub func: TruthFn,
    /// Interval length on which the truth is defined; designs use `[0, 0.95 alpha]`.
    pub alpha: f64,
}

impl fmt::Debug for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Truth").field("name", &self.name).field("alpha", &self.alpha).finish()
    }
}

fn closed(name: &str, alpha: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Truth {
    Truth { name: name.into(), func: TruthFn::Closed(Arc::new(f)), alpha }
}

impl Truth {
    pub fn by_name(name: &str) -> Result<Truth> {
        if let Some(rest) = name.strip_prefix("ode:") {
            let ode = builtins::by_name(rest)?;
            let alpha = ode.existence_interval();
            return Ok(Truth { name: name.into(), func: TruthFn::Ode(ode), alpha });
        }
        if let Some(theta) = name.strip_prefix("linear-decay:") {
            let theta: f64 = theta.parse().map_err(|_| Error::UnknownBuiltin(name.into()))?;
            return Ok(closed(name, 1.0, move |x| (-theta * x).exp()));
        }
        match name {
            "separable-cos" => Ok(closed(name, 1.0, |x| (2.0 * PI * x).sin() / (2.0 * PI).powi(2))),
            "quadratic" => Ok(closed(name, 1.0, |x| x * (1.0 - x) / 2.0)),
            "extremal" => Ok(closed(name, builtins::extremal().existence_interval(), |x| -0.5 + x.ln_1p())),
            "linear-decay" => Ok(closed(name, 1.0, |x| (-0.5 * x).exp())),
            "zero" => Ok(closed(name, 1.0, |_| 0.0)),
            other => Err(Error::UnknownBuiltin(other.to_string())),
        }
    }

    /// `y(x_i)` on an ascending design.
    pub fn values(&self, xs: &[f64]) -> Result<Vec<f64>> {
        match &self.func {
            TruthFn::Closed(f) => Ok(xs.iter().map(|&x| f(x)).collect()),
            TruthFn::Ode(ode) => {
                let shifted: Vec<f64> = xs.iter().map(|x| x + ode.x0).collect();
                Ok(taylor_integrate(ode, &shifted, 0)?.points.into_iter().map(|p| p.y()).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let t = Truth::by_name("quadratic").unwrap();
        assert_eq!(t.values(&[0.5]).unwrap(), vec![0.125]);
        let e = Truth::by_name("extremal").unwrap();
        assert!(e.alpha > 0.0 && e.alpha < 1.0);
        assert_eq!(Truth::by_name("linear-decay:2").unwrap().values(&[0.0]).unwrap(), vec![1.0]);
        assert!(Truth::by_name("nope").is_err());
    }

    #[test]
    fn ode_truth_matches_closed_form() {
        let ode = Truth::by_name("ode:extremal").unwrap();
        let closed = Truth::by_name("extremal").unwrap();
        let xs = [0.05, 0.1, 0.2, 0.3];
        for (a, b) in ode.values(&xs).unwrap().iter().zip(closed.values(&xs).unwrap()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
