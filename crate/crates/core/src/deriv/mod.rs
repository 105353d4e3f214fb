//! Solution-derivative expansions, Taylor integration and factorial-bound
//! certification for scalar first-order ODEs.

pub mod certify;
pub mod expansion;
pub mod ode;
pub mod taylor;

pub use certify::{certify_bounds, factorial_bound, BoundCertificate, CertifyOptions};
pub use expansion::{expand_autonomous, expand_nonautonomous, DerivExpansion, DerivTuple, OdeKind};
pub use ode::{builtins, resolve_ode, DerivOracle, OdeInstance, OdeSpec};
pub use taylor::{eval_expansion, taylor_integrate, TaylorStepper, Trajectory, TrajectoryPoint};
