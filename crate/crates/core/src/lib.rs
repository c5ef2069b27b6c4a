//! Differentiable satellite constellation design.
//!
//! Orbital elements are propagated with a two-body model, rotated into the
//! Earth-fixed frame and scored against ground targets. The discrete
//! coverage and revisit metrics have smooth counterparts whose exact
//! gradients drive an AdamW optimizer; simulated annealing, a genetic
//! algorithm and differential evolution serve as black-box baselines.

pub mod earth;
pub mod grad;
pub mod harness;
pub mod metrics;
pub mod objective;
pub mod optim;
pub mod orbit;

pub use earth::{GroundTarget, GroundTargetSet, SimWindow};
pub use grad::{Dual, GradientVector, Real};
pub use metrics::{HardMetrics, MetricsReport, RelaxConfig};
pub use objective::{ParamSpec, ParamVector, Problem};
pub use orbit::ElementSet;
