//! Human-in-the-loop driving server.
//!
//! A person drives the simulated vehicle along one of the seven training
//! trajectories from a browser. The server streams the vehicle and path
//! state over a websocket at `/drive`, takes steering and throttle commands
//! back, and records (error state, command) samples into a dataset that the
//! imitation pipeline trains on like an MPC-collected one.
//!
//! [`Simulator`] holds the whole simulation and can be driven tick by tick
//! without a network. [`serve`] wraps it in a fixed-rate ticker task and an
//! axum router.

pub mod error;
pub mod protocol;
mod server;
pub mod session;
mod sim;
pub mod trajectories;

pub use error::{Error, Result};
pub use protocol::{ClientMessage, ControlAction, ServerMessage, StateBroadcast, PROTOCOL_VERSION};
pub use server::{run, serve, Bridge, BridgeOptions};
pub use session::{finalize_session, recompute_error_states, Session, SessionFiles};
pub use sim::{SimConfig, Simulator, REFERENCE_WINDOW_METERS};
pub use trajectories::{trajectory_set, Trajectory, TrajectoryInfo};
