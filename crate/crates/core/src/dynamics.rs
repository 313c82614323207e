//! 4-DOF vehicle model: kinematic bicycle plus a one-state powertrain.
//!
//! State `q = [x, y, theta, v]`, command `u = [steering, throttle]`:
//!
//! ```text
//! x'     = v cos(theta)
//! y'     = v sin(theta)
//! theta' = v tan(beta * steering) / l
//! v'     = T(throttle, v) * gamma * R_w / I_w
//! ```
//!
//! The same model is used as the simulated plant, as the MPC prediction
//! model and as the EKF process model.

use nalgebra::{Matrix4, Matrix4x2, Vector4};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_angle;
use crate::error::{Error, Result};

/// Largest integration step accepted by [`step`].
pub const MAX_DT: f64 = 0.1;

/// Vehicle pose and longitudinal speed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    /// East, meters.
    pub x: f64,
    /// North, meters.
    pub y: f64,
    /// Heading in (-pi, pi], radians.
    pub theta: f64,
    /// Longitudinal speed, m/s, never negative.
    pub v: f64,
}

impl VehicleState {
    /// Builds a state, wrapping the heading and clamping the speed at zero.
    pub fn new(x: f64, y: f64, theta: f64, v: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
            v: v.max(0.0),
        }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.theta, self.v)
    }

    /// Inverse of [`VehicleState::to_vector`]; re-applies the wrap and clamp.
    pub fn from_vector(q: &Vector4<f64>) -> Self {
        Self::new(q[0], q[1], q[2], q[3])
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite() && self.v.is_finite()
    }
}

/// Normalized actuator command. Both channels are clamped on construction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "RawCommand", into = "RawCommand")]
pub struct Command {
    steering: f64,
    throttle: f64,
}

#[derive(Serialize, Deserialize)]
struct RawCommand {
    steering: f64,
    throttle: f64,
}

impl From<RawCommand> for Command {
    fn from(raw: RawCommand) -> Self {
        Command::new(raw.steering, raw.throttle)
    }
}

impl From<Command> for RawCommand {
    fn from(c: Command) -> Self {
        RawCommand {
            steering: c.steering,
            throttle: c.throttle,
        }
    }
}

impl Command {
    /// Steering is clamped to [-1, 1] and throttle to [0, 1]. NaN maps to 0.
    pub fn new(steering: f64, throttle: f64) -> Self {
        Self {
            steering: clamp_or_zero(steering, -1.0, 1.0),
            throttle: clamp_or_zero(throttle, 0.0, 1.0),
        }
    }

    pub fn steering(&self) -> f64 {
        self.steering
    }

    pub fn throttle(&self) -> f64 {
        self.throttle
    }

    /// True when `new` would leave both values untouched.
    pub fn in_range(steering: f64, throttle: f64) -> bool {
        (-1.0..=1.0).contains(&steering) && (0.0..=1.0).contains(&throttle)
    }
}

fn clamp_or_zero(value: f64, lo: f64, hi: f64) -> f64 {
    if value.is_nan() {
        0.0
    } else {
        value.clamp(lo, hi)
    }
}

/// Motor torque curve `T(throttle, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotorModel {
    /// Voltage-controlled DC motor with back-EMF:
    /// `T = T_stall * (throttle - v / v_noload)`.
    ///
    /// Steady speed under constant throttle is `throttle * v_noload`, and the
    /// torque turns negative above that speed, so the vehicle can slow down
    /// without a brake input.
    #[default]
    BackEmf,
    /// Throttle-scaled torque that fades linearly to zero at `v_noload`:
    /// `T = throttle * T_stall * max(0, 1 - v / v_noload)`.
    ///
    /// Never negative, so zero throttle coasts at constant speed.
    ThrottleScaled,
}

/// Physical parameters of the 4-DOF model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// Steering gain, radians of wheel angle per unit command.
    pub beta: f64,
    /// Wheelbase, meters.
    pub wheelbase: f64,
    pub gear_ratio: f64,
    /// Wheel radius, meters.
    pub wheel_radius: f64,
    /// Wheel moment of inertia, kg m^2.
    pub wheel_inertia: f64,
    /// Motor torque at full throttle and zero speed, N m.
    pub torque_stall: f64,
    /// Speed at which full-throttle torque reaches zero, m/s.
    pub speed_noload: f64,
    pub motor: MotorModel,
}

impl Default for VehicleParams {
    fn default() -> Self {
        // gear_ratio * wheel_radius / wheel_inertia = 4, so full throttle from
        // rest accelerates at 2 m/s^2 and reaches 2 m/s in about 1.7 s.
        Self {
            beta: 0.4,
            wheelbase: 0.5,
            gear_ratio: 0.25,
            wheel_radius: 0.08,
            wheel_inertia: 0.005,
            torque_stall: 0.5,
            speed_noload: 3.0,
            motor: MotorModel::BackEmf,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta", self.beta),
            ("wheelbase", self.wheelbase),
            ("gear_ratio", self.gear_ratio),
            ("wheel_radius", self.wheel_radius),
            ("wheel_inertia", self.wheel_inertia),
            ("torque_stall", self.torque_stall),
            ("speed_noload", self.speed_noload),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {value}"
                )));
            }
        }
        if self.beta >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::InvalidParameter(format!(
                "beta must be below pi/2 so full lock stays steerable, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// `gamma * R_w / I_w`: converts motor torque into longitudinal acceleration.
    pub fn torque_to_accel(&self) -> f64 {
        self.gear_ratio * self.wheel_radius / self.wheel_inertia
    }

    /// Turning radius for a steering command; infinite for zero steering.
    pub fn turning_radius(&self, steering: f64) -> f64 {
        self.wheelbase / (self.beta * steering).tan()
    }

    /// Largest path curvature the vehicle can hold at full lock.
    pub fn max_curvature(&self) -> f64 {
        self.beta.tan() / self.wheelbase
    }

    /// Throttle whose steady speed is `v` (clamped to the command range).
    ///
    /// For the back-EMF motor this is the exact equilibrium. The
    /// throttle-scaled motor has no loss term, so `v / v_noload` is used as a
    /// smooth nominal value.
    pub fn cruise_throttle(&self, v: f64) -> f64 {
        (v / self.speed_noload).clamp(0.0, 1.0)
    }
}

/// Motor torque `T(throttle, v)` in N m.
pub fn torque(throttle: f64, v: f64, p: &VehicleParams) -> f64 {
    match p.motor {
        MotorModel::BackEmf => p.torque_stall * (throttle - v / p.speed_noload),
        MotorModel::ThrottleScaled => {
            throttle * p.torque_stall * (1.0 - v / p.speed_noload).max(0.0)
        }
    }
}

/// Partial derivatives of the torque map, `(dT/dthrottle, dT/dv)`.
pub fn torque_partials(throttle: f64, v: f64, p: &VehicleParams) -> (f64, f64) {
    match p.motor {
        MotorModel::BackEmf => (p.torque_stall, -p.torque_stall / p.speed_noload),
        MotorModel::ThrottleScaled => {
            let fade = 1.0 - v / p.speed_noload;
            if fade > 0.0 {
                (p.torque_stall * fade, -throttle * p.torque_stall / p.speed_noload)
            } else {
                (0.0, 0.0)
            }
        }
    }
}

/// Continuous-time state derivative.
pub fn derivatives(q: &VehicleState, u: &Command, p: &VehicleParams) -> Vector4<f64> {
    derivatives_raw(&q.to_vector(), u, p)
}

fn derivatives_raw(q: &Vector4<f64>, u: &Command, p: &VehicleParams) -> Vector4<f64> {
    let (theta, v) = (q[2], q[3]);
    Vector4::new(
        v * theta.cos(),
        v * theta.sin(),
        v * (p.beta * u.steering()).tan() / p.wheelbase,
        torque(u.throttle(), v, p) * p.torque_to_accel(),
    )
}

/// Jacobian of [`derivatives`] with respect to the state.
pub fn state_jacobian(q: &Vector4<f64>, u: &Command, p: &VehicleParams) -> Matrix4<f64> {
    let (theta, v) = (q[2], q[3]);
    let (_, dt_dv) = torque_partials(u.throttle(), v, p);
    let mut j = Matrix4::zeros();
    j[(0, 2)] = -v * theta.sin();
    j[(0, 3)] = theta.cos();
    j[(1, 2)] = v * theta.cos();
    j[(1, 3)] = theta.sin();
    j[(2, 3)] = (p.beta * u.steering()).tan() / p.wheelbase;
    j[(3, 3)] = dt_dv * p.torque_to_accel();
    j
}

/// Jacobian of [`derivatives`] with respect to `[steering, throttle]`.
pub fn input_jacobian(q: &Vector4<f64>, u: &Command, p: &VehicleParams) -> Matrix4x2<f64> {
    let v = q[3];
    let angle = p.beta * u.steering();
    let sec2 = 1.0 / angle.cos().powi(2);
    let (dt_da, _) = torque_partials(u.throttle(), v, p);
    let mut j = Matrix4x2::zeros();
    j[(2, 0)] = v * p.beta * sec2 / p.wheelbase;
    j[(3, 1)] = dt_da * p.torque_to_accel();
    j
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt <= MAX_DT {
        Ok(())
    } else {
        Err(Error::InvalidTimeStep { dt, max: MAX_DT })
    }
}

/// Classical RK4 advance with the command held over `dt`.
pub fn step(q: &VehicleState, u: &Command, dt: f64, p: &VehicleParams) -> Result<VehicleState> {
    check_dt(dt)?;
    Ok(VehicleState::from_vector(&rk4(&q.to_vector(), u, dt, p)))
}

/// Integrates `duration` seconds in substeps of at most `dt`.
pub fn integrate(
    q: &VehicleState,
    u: &Command,
    duration: f64,
    dt: f64,
    p: &VehicleParams,
) -> Result<VehicleState> {
    check_dt(dt)?;
    let n = (duration / dt).round().max(0.0) as usize;
    let mut state = *q;
    for _ in 0..n {
        state = step(&state, u, dt, p)?;
    }
    Ok(state)
}

fn rk4(q: &Vector4<f64>, u: &Command, dt: f64, p: &VehicleParams) -> Vector4<f64> {
    let k1 = derivatives_raw(q, u, p);
    let k2 = derivatives_raw(&(q + k1 * (0.5 * dt)), u, p);
    let k3 = derivatives_raw(&(q + k2 * (0.5 * dt)), u, p);
    let k4 = derivatives_raw(&(q + k3 * dt), u, p);
    q + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Analytic Jacobian of one RK4 step with respect to the starting state.
///
/// Heading wrap does not affect the derivative. The speed clamp at zero is
/// ignored, so the result is the Jacobian of the unclamped step.
pub fn step_jacobian(
    q: &VehicleState,
    u: &Command,
    dt: f64,
    p: &VehicleParams,
) -> Result<Matrix4<f64>> {
    check_dt(dt)?;
    let q0 = q.to_vector();
    let eye = Matrix4::<f64>::identity();
    let k1 = derivatives_raw(&q0, u, p);
    let j1 = state_jacobian(&q0, u, p);
    let q2 = q0 + k1 * (0.5 * dt);
    let k2 = derivatives_raw(&q2, u, p);
    let j2 = state_jacobian(&q2, u, p) * (eye + j1 * (0.5 * dt));
    let q3 = q0 + k2 * (0.5 * dt);
    let k3 = derivatives_raw(&q3, u, p);
    let j3 = state_jacobian(&q3, u, p) * (eye + j2 * (0.5 * dt));
    let q4 = q0 + k3 * dt;
    let j4 = state_jacobian(&q4, u, p) * (eye + j3 * dt);
    Ok(eye + (j1 + j2 * 2.0 + j3 * 2.0 + j4) * (dt / 6.0))
}
