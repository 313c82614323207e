//! Body-frame tracking error, its linearized dynamics, and the MPC that
//! regulates it.
//!
//! Sign convention: the world-frame offset from vehicle to reference is
//! rotated into the vehicle frame, so `e1 > 0` means the reference is ahead
//! and `e2 > 0` means it is to the vehicle's left. A positive steering
//! command turns left.

mod linearize;
mod mpc;

pub use linearize::{error_rate, linearize, propagate_error, LinearizedDynamics};
pub use mpc::{
    evaluate_cost, horizon_model, mpc_solve, HorizonStep, MpcConfig, MpcController, MpcSolution,
};

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::angle::wrap_angle;
use crate::dynamics::{Command, VehicleParams, VehicleState};
use crate::error::{Error, Result};
use crate::paths::{closest_point_near, ReferencePath, ReferenceSample, WARM_START_WINDOW};

/// Tracking error expressed in the vehicle frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorState {
    /// Longitudinal offset to the reference, meters.
    pub e1: f64,
    /// Lateral offset to the reference, meters.
    pub e2: f64,
    /// Heading error in (-pi, pi], radians.
    pub e3: f64,
    /// Speed error `v_r - v`, m/s.
    pub e4: f64,
}

impl ErrorState {
    pub fn new(e1: f64, e2: f64, e3: f64, e4: f64) -> Self {
        Self { e1, e2, e3, e4 }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.e1, self.e2, self.e3, self.e4)
    }

    pub fn from_vector(e: &Vector4<f64>) -> Self {
        Self::new(e[0], e[1], e[2], e[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.e1, self.e2, self.e3, self.e4]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Error of `q` with respect to the reference point `r`.
pub fn error_state(q: &VehicleState, r: &ReferenceSample) -> ErrorState {
    let (dx, dy) = (r.x - q.x, r.y - q.y);
    let (s, c) = q.theta.sin_cos();
    ErrorState {
        e1: c * dx + s * dy,
        e2: -s * dx + c * dy,
        e3: wrap_angle(r.theta - q.theta),
        e4: r.v - q.v,
    }
}

/// Steady command that keeps the vehicle on a reference point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceCommand {
    pub steering: f64,
    pub throttle: f64,
}

impl ReferenceCommand {
    pub fn as_command(&self) -> Command {
        Command::new(self.steering, self.throttle)
    }
}

/// Inverts the bicycle turning radius for steering and uses the cruise
/// throttle of the motor model for `v_r`.
pub fn reference_command(
    r: &ReferenceSample,
    curvature: f64,
    p: &VehicleParams,
) -> Result<ReferenceCommand> {
    let limit = p.beta.tan();
    if !curvature.is_finite() || (curvature * p.wheelbase).abs() >= limit {
        return Err(Error::CurvatureOutOfRange {
            curvature,
            max: p.max_curvature(),
        });
    }
    Ok(ReferenceCommand {
        steering: (curvature * p.wheelbase).atan() / p.beta,
        throttle: p.cruise_throttle(r.v),
    })
}

/// Where the vehicle sits relative to a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathFix {
    /// Nearest sample index (the cross-track metric uses this sample).
    pub index: usize,
    /// Distance to the nearest sample, meters.
    pub distance: f64,
    /// Continuous arc length of the orthogonal projection onto the polyline.
    pub s: f64,
    /// Distance to that projection, meters. Unlike `distance` it does not
    /// depend on where the vehicle sits between two samples.
    pub cross_track: f64,
}

/// Finds the nearest sample around `hint` and refines the arc length by
/// projecting onto the two adjacent polyline segments.
pub fn locate(path: &ReferencePath, position: (f64, f64), hint: Option<usize>) -> PathFix {
    let (index, sample, distance) = match hint {
        Some(h) => closest_point_near(path, position, h, WARM_START_WINDOW),
        None => crate::paths::closest_point(path, position),
    };
    let samples = path.samples();
    let n = samples.len();
    let mut best_s = sample.s;
    let mut best_d = distance;
    let neighbours = [
        if index > 0 { Some(index - 1) } else if path.is_closed() { Some(n - 1) } else { None },
        Some(index),
    ];
    for a in neighbours.into_iter().flatten() {
        let b = if a + 1 < n {
            a + 1
        } else if path.is_closed() {
            0
        } else {
            continue;
        };
        let (pa, pb) = (samples[a], samples[b]);
        let (vx, vy) = (pb.x - pa.x, pb.y - pa.y);
        let len2 = vx * vx + vy * vy;
        if len2 <= 0.0 {
            continue;
        }
        let t = (((position.0 - pa.x) * vx + (position.1 - pa.y) * vy) / len2).clamp(0.0, 1.0);
        let (px, py) = (pa.x + t * vx, pa.y + t * vy);
        let d = (position.0 - px).hypot(position.1 - py);
        if d < best_d {
            best_d = d;
            best_s = pa.s + t * len2.sqrt();
        }
    }
    PathFix {
        index,
        distance,
        s: best_s,
        cross_track: best_d,
    }
}

/// Default look-ahead of the learned policy's error state, seconds.
pub const DEFAULT_PREVIEW_TIME: f64 = 0.2;

/// Reference point a fixed time ahead of the projection, `v_r * preview`
/// meters of arc length further along the path.
pub fn preview_reference(path: &ReferencePath, s: f64, preview_time: f64) -> ReferenceSample {
    let here = path.sample_at(s);
    if preview_time <= 0.0 {
        return here;
    }
    path.sample_at(s + here.v * preview_time)
}

/// Horizon references starting at the projection `s`.
pub fn window_for(path: &ReferencePath, s: f64, horizon: usize, dt: f64) -> Vec<ReferenceSample> {
    crate::paths::window_from(path, path.sample_at(s), horizon, dt)
}

/// Error state used as the learned policy's input.
pub fn tracking_error(
    path: &ReferencePath,
    q: &VehicleState,
    fix: &PathFix,
    preview_time: f64,
) -> ErrorState {
    error_state(q, &preview_reference(path, fix.s, preview_time))
}

/// Everything a controller sees at one control tick.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub time: f64,
    /// Estimated vehicle state.
    pub state: VehicleState,
    pub path: &'a ReferencePath,
    pub fix: PathFix,
}

/// Per-step solver record for the run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    pub cost: f64,
    pub predicted: Vec<ErrorState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub command: Command,
    pub diagnostics: Option<SolverDiagnostics>,
}

impl From<Command> for ControlOutput {
    fn from(command: Command) -> Self {
        ControlOutput {
            command,
            diagnostics: None,
        }
    }
}

/// A closed-loop tracking policy. One instance drives one vehicle.
pub trait TrackingController {
    fn name(&self) -> &str;

    fn command(&mut self, obs: &Observation<'_>) -> Result<ControlOutput>;

    /// Clears any per-run state.
    fn reset(&mut self) {}
}
