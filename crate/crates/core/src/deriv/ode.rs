use std::fmt;
use std::sync::Arc;

use crate::deriv::expansion::OdeKind;
use crate::error::{Error, Result};

/// Partial derivatives `D^(px, py) f (x, y)` of a right-hand side.
///
/// Implementations must be safe to call from several threads at once; every
/// operation in this crate treats the oracle as a pure function.
pub trait DerivOracle: Send + Sync {
    fn partial(&self, px: usize, py: usize, x: f64, y: f64) -> f64;
}

impl<F> DerivOracle for F
where
    F: Fn(usize, usize, f64, f64) -> f64 + Send + Sync,
{
    fn partial(&self, px: usize, py: usize, x: f64, y: f64) -> f64 {
        self(px, py, x, y)
    }
}

/// A scalar first-order initial value problem `y' = f(y)` or `y' = f(x, y)`
/// on the rectangle `[x0 - a, x0 + a] x [y0 - b, y0 + b]`.
#[derive(Clone)]
pub struct OdeInstance {
    pub name: String,
    pub kind: OdeKind,
    pub oracle: Arc<dyn DerivOracle>,
    pub x0: f64,
    pub y0: f64,
    pub a: f64,
    pub b: f64,
    /// Highest derivative order of `f` the oracle supports.
    pub beta_max: usize,
}

impl fmt::Debug for OdeInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeInstance")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("x0", &self.x0)
            .field("y0", &self.y0)
            .field("a", &self.a)
            .field("b", &self.b)
            .field("beta_max", &self.beta_max)
            .finish()
    }
}

/// Sampling resolution used to estimate `sup |f|` on the box.
const SUP_GRID: usize = 256;
const SUP_INFLATION: f64 = 1.1;

impl OdeInstance {
    pub fn new(
        name: impl Into<String>,
        kind: OdeKind,
        oracle: Arc<dyn DerivOracle>,
        x0: f64,
        y0: f64,
        a: f64,
        b: f64,
        beta_max: usize,
    ) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidArgument(format!("box half-widths must be positive (a = {a}, b = {b})")));
        }
        Ok(OdeInstance { name: name.into(), kind, oracle, x0, y0, a, b, beta_max })
    }

    pub fn with_y0(mut self, y0: f64) -> Self {
        self.y0 = y0;
        self
    }

    pub fn with_box(mut self, a: f64, b: f64) -> Self {
        self.a = a;
        self.b = b;
        self
    }

    /// `f(x, y)`.
    pub fn rhs(&self, x: f64, y: f64) -> f64 {
        self.oracle.partial(0, 0, x, y)
    }

    /// `D^(px, py) f`, with `px` forced to zero for autonomous problems.
    pub fn partial(&self, px: usize, py: usize, x: f64, y: f64) -> f64 {
        match self.kind {
            OdeKind::Autonomous if px > 0 => 0.0,
            _ => self.oracle.partial(px, py, x, y),
        }
    }

    /// Estimate of `M = sup |f|` over the box: the maximum over a sampling grid,
    /// inflated by 10%.
    pub fn sup_abs_rhs(&self) -> f64 {
        let ys: Vec<f64> = (0..SUP_GRID).map(|i| self.y0 - self.b + 2.0 * self.b * i as f64 / (SUP_GRID - 1) as f64).collect();
        let m = match self.kind {
            OdeKind::Autonomous => ys.iter().map(|&y| self.rhs(self.x0, y).abs()).fold(0.0, f64::max),
            OdeKind::Nonautonomous => {
                let side = (SUP_GRID as f64).sqrt() as usize;
                let mut m: f64 = 0.0;
                for i in 0..side {
                    let x = self.x0 - self.a + 2.0 * self.a * i as f64 / (side - 1) as f64;
                    for j in 0..side {
                        let y = self.y0 - self.b + 2.0 * self.b * j as f64 / (side - 1) as f64;
                        m = m.max(self.rhs(x, y).abs());
                    }
                }
                m
            }
        };
        m * SUP_INFLATION
    }

    /// `alpha = min{a, b / M}`: the interval length on which the solution is
    /// guaranteed to stay inside the box.
    pub fn existence_interval(&self) -> f64 {
        let m = self.sup_abs_rhs();
        if m > 0.0 {
            self.a.min(self.b / m)
        } else {
            self.a
        }
    }
}

/// File form of an ODE: a builtin right-hand side with optional overrides of
/// the initial value and box.
///
/// ```toml
/// ode = "linear:0.3"
/// y0 = 2.0
/// a = 1.0
/// b = 3.0
/// ```
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSpec {
    pub ode: String,
    #[serde(default)]
    pub y0: Option<f64>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
}

impl OdeSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<OdeInstance> {
        let mut ode = builtins::by_name(&self.ode)?;
        if let Some(y0) = self.y0 {
            ode = ode.with_y0(y0);
        }
        let (a, b) = (self.a.unwrap_or(ode.a), self.b.unwrap_or(ode.b));
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidArgument(format!("box half-widths must be positive (a = {a}, b = {b})")));
        }
        Ok(ode.with_box(a, b))
    }
}

/// A builtin name, or the path of an [`OdeSpec`] file.
pub fn resolve_ode(arg: &str) -> Result<OdeInstance> {
    let path = std::path::Path::new(arg);
    if path.is_file() {
        OdeSpec::from_toml_str(&std::fs::read_to_string(path)?)?.build()
    } else {
        builtins::by_name(arg)
    }
}

/// Builtin right-hand sides with closed-form derivative tables.
pub mod builtins {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// Derivative of `sin` of order `p`: `sin(t + p pi/2)`.
    fn dsin(p: usize, t: f64) -> f64 {
        match p % 4 {
            0 => t.sin(),
            1 => t.cos(),
            2 => -t.sin(),
            _ => -t.cos(),
        }
    }

    fn dcos(p: usize, t: f64) -> f64 {
        dsin(p + 1, t)
    }

    const UNLIMITED: usize = 24;

    /// `y' = exp(-y - 1/2)` from `y(0) = -1/2`; every `|f^(k)(y0)| = 1`, so
    /// `|y^(k)(0)| = (k-1)!` exactly.
    pub fn extremal() -> OdeInstance {
        let oracle = |_px: usize, py: usize, _x: f64, y: f64| {
            let v = (-y - 0.5).exp();
            if py.is_multiple_of(2) {
                v
            } else {
                -v
            }
        };
        OdeInstance::new("extremal", OdeKind::Autonomous, Arc::new(oracle), 0.0, -0.5, 1.0, 1.0, UNLIMITED).expect("valid box")
    }

    /// `y' = -theta y`.
    pub fn linear(theta: f64) -> OdeInstance {
        let oracle = move |_px: usize, py: usize, _x: f64, y: f64| match py {
            0 => -theta * y,
            1 => -theta,
            _ => 0.0,
        };
        OdeInstance::new(format!("linear:{theta}"), OdeKind::Autonomous, Arc::new(oracle), 0.0, 1.0, 1.0, 1.0, UNLIMITED)
            .expect("valid box")
    }

    /// `y' = scale * sin(y)`.
    pub fn sine(scale: f64) -> OdeInstance {
        let oracle = move |_px: usize, py: usize, _x: f64, y: f64| scale * dsin(py, y);
        OdeInstance::new("sin", OdeKind::Autonomous, Arc::new(oracle), 0.0, 1.0, 1.0, 1.0, UNLIMITED).expect("valid box")
    }

    /// `y' = scale * cos(y)`.
    pub fn cosine(scale: f64) -> OdeInstance {
        let oracle = move |_px: usize, py: usize, _x: f64, y: f64| scale * dcos(py, y);
        OdeInstance::new("cos", OdeKind::Autonomous, Arc::new(oracle), 0.0, 0.0, 1.0, 1.0, UNLIMITED).expect("valid box")
    }

    /// `y' = 0`.
    pub fn zero() -> OdeInstance {
        let oracle = |_px: usize, _py: usize, _x: f64, _y: f64| 0.0;
        OdeInstance::new("zero", OdeKind::Autonomous, Arc::new(oracle), 0.0, 0.0, 1.0, 1.0, UNLIMITED).expect("valid box")
    }

    /// `y' = s sin(u x + v y + c)`; all partials are bounded by `|s| max(|u|,|v|,1)^p`.
    pub fn trig(s: f64, u: f64, v: f64, c: f64) -> OdeInstance {
        let oracle = move |px: usize, py: usize, x: f64, y: f64| {
            s * u.powi(px as i32) * v.powi(py as i32) * dsin(px + py, u * x + v * y + c)
        };
        OdeInstance::new(format!("trig:{s},{u},{v},{c}"), OdeKind::Nonautonomous, Arc::new(oracle), 0.0, 0.0, 1.0, 1.0, UNLIMITED)
            .expect("valid box")
    }

    /// `y' = sin(x) cos(y)`.
    pub fn sinx_cosy() -> OdeInstance {
        let oracle = |px: usize, py: usize, x: f64, y: f64| dsin(px, x) * dcos(py, y);
        OdeInstance::new("sinx-cosy", OdeKind::Nonautonomous, Arc::new(oracle), 0.0, 0.5, 1.0, 1.0, UNLIMITED).expect("valid box")
    }

    /// `y' = g(x)` for a named univariate `g`.
    pub fn separable(fname: &str) -> Result<OdeInstance> {
        let g: Arc<dyn Fn(usize, f64) -> f64 + Send + Sync> = match fname {
            "sin" => Arc::new(dsin),
            "cos" => Arc::new(dcos),
            // cos(2 pi x) / (2 pi): the derivative of sin(2 pi x) / (2 pi)^2
            "cos2pi" => Arc::new(|p: usize, x: f64| (2.0 * PI).powi(p as i32 - 1) * dsin(p, 2.0 * PI * x + FRAC_PI_2)),
            "exp" => Arc::new(|p: usize, x: f64| (-x).exp() * if p.is_multiple_of(2) { 1.0 } else { -1.0 }),
            other => return Err(Error::UnknownBuiltin(format!("separable:{other}"))),
        };
        let oracle = move |px: usize, py: usize, x: f64, _y: f64| if py > 0 { 0.0 } else { g(px, x) };
        OdeInstance::new(format!("separable:{fname}"), OdeKind::Nonautonomous, Arc::new(oracle), 0.0, 0.0, 1.0, 1.0, UNLIMITED)
    }

    /// Resolves a registry name: `extremal`, `linear[:theta]`, `sin`, `cos`,
    /// `zero`, `sin-x-plus-y`, `sinx-cosy`, `trig:s,u,v,c`, `separable:<fname>`.
    pub fn by_name(name: &str) -> Result<OdeInstance> {
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (name, None),
        };
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::UnknownBuiltin(name.to_string()));
        match (head, arg) {
            ("extremal", None) => Ok(extremal()),
            ("linear", None) => Ok(linear(0.5)),
            ("linear", Some(t)) => Ok(linear(parse(t)?)),
            ("sin", None) => Ok(sine(1.0)),
            ("cos", None) => Ok(cosine(1.0)),
            ("zero", None) => Ok(zero()),
            ("sin-x-plus-y", None) => Ok(trig(1.0, 1.0, 1.0, 0.0)),
            ("sinx-cosy", None) => Ok(sinx_cosy()),
            ("trig", Some(args)) => {
                let v: Vec<f64> = args.split(',').map(parse).collect::<Result<_>>()?;
                if v.len() != 4 {
                    return Err(Error::UnknownBuiltin(name.to_string()));
                }
                Ok(trig(v[0], v[1], v[2], v[3]))
            }
            ("separable", Some(f)) => separable(f),
            _ => Err(Error::UnknownBuiltin(name.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::builtins::*;
    use super::*;

    #[test]
    fn extremal_partials_have_unit_magnitude_at_start() {
        let ode = extremal();
        for k in 0..10 {
            assert!((ode.partial(0, k, 0.0, -0.5).abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn existence_interval_of_zero_rhs_is_a() {
        assert_eq!(zero().existence_interval(), 1.0);
    }

    #[test]
    fn existence_interval_uses_inflated_sup() {
        // |f| = exp(-y - 1/2) is largest at y = -3/2 on the default box
        let ode = extremal();
        let m = 1f64.exp() * 1.1;
        assert!((ode.existence_interval() - (1.0 / m)).abs() < 1e-12);
    }

    #[test]
    fn registry() {
        assert!(by_name("linear:0.8").is_ok());
        assert!(by_name("separable:cos2pi").is_ok());
        assert!(matches!(by_name("nope"), Err(Error::UnknownBuiltin(_))));
        assert!(OdeInstance::new(
            "x",
            OdeKind::Autonomous,
            Arc::new(|_: usize, _: usize, _: f64, _: f64| 0.0),
            0.0,
            0.0,
            0.0,
            1.0,
            1
        )
        .is_err());
    }
}
