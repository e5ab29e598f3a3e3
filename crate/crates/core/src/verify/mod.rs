//! Numerical checks of the hypotheses and of the Hamilton-Jacobi
//! characterization: inward pointing, viscosity inequalities, pointwise
//! equations, invariance, steering and the distance estimate.

mod hj;
mod invariance;
mod ipc;
mod proximal;
mod report;
mod steering;
mod t14;
mod value_fn;

pub use hj::{check_HJ_pointwise, fd_gradient, HjOptions};
pub use invariance::{invariance_sample_test, InvarianceOptions};
pub use ipc::{ipc_check, ipc_value, IpcResult};
pub use proximal::{proximal_probe, unit_directions, Candidate, ProximalProbe, RADIUS_LEVELS};
pub use report::{Condition, Relation, ReportRow, VerificationReport};
pub use steering::{
    p7_ratio_sweep, steer_to_target, steer_with, SteeringConstants, SteeringResult, SteeringStop, SweepOptions,
};
pub use t14::{check_T14, T14Options, T14Result};
pub use value_fn::{Differentials, FnValue, ValueFn, SEGMENT_SAMPLES};
