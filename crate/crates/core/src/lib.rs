//! Error-state trajectory tracking for a small four-wheeled vehicle.
//!
//! The crate covers the whole loop of training a tracking policy purely in
//! simulation and checking that it generalizes to an unseen course:
//!
//! - [`dynamics`]: the 4-DOF model (kinematic bicycle plus powertrain) and
//!   its RK4 integration,
//! - [`paths`]: training circles and lines, the waypoint course, closest-point
//!   queries,
//! - [`control`]: body-frame error state, linearized error dynamics and a
//!   finite-horizon MPC solved by Riccati recursion,
//! - [`estimator`]: an EKF that recovers speed from position and heading,
//! - [`imitation`]: dataset collection, a two-hidden-layer regressor from
//!   error state to command, training and model files,
//! - [`harness`]: scenario configuration, closed-loop runs, the cross-track
//!   error summary and plot exports.
//!
//! Runnable walkthroughs of each capability live in `examples/`.

pub mod angle;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod imitation;
pub mod paths;

pub use dynamics::{Command, VehicleParams, VehicleState};
pub use error::{Error, Result};
pub use paths::{ReferencePath, ReferenceSample};
