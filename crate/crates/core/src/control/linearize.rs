use nalgebra::{Matrix4, Matrix4x2, Vector4};

use super::ErrorState;
use crate::dynamics::{torque, torque_partials, Command, VehicleParams};
use crate::paths::ReferenceSample;

/// Discrete error dynamics `e[k+1] = A e[k] + B (u[k] - u_r[k])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedDynamics {
    pub a: Matrix4<f64>,
    pub b: Matrix4x2<f64>,
}

impl LinearizedDynamics {
    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }
}

/// Continuous-time rate of the error state.
///
/// The reference point moves along the path at `v_r` with the path's
/// curvature; the vehicle speed is recovered as `v = v_r - e4`.
///
/// ```text
/// e1' =  w e2 + v_r cos(e3) - v
/// e2' = -w e1 + v_r sin(e3)
/// e3' =  v_r kappa_r - w
/// e4' = -v'
/// ```
/// with `w = v tan(beta * steering) / l` the vehicle yaw rate.
pub fn error_rate(e: &ErrorState, u: &Command, r: &ReferenceSample, p: &VehicleParams) -> Vector4<f64> {
    let v = r.v - e.e4;
    let yaw_rate = v * (p.beta * u.steering()).tan() / p.wheelbase;
    let accel = torque(u.throttle(), v, p) * p.torque_to_accel();
    Vector4::new(
        yaw_rate * e.e2 + r.v * e.e3.cos() - v,
        -yaw_rate * e.e1 + r.v * e.e3.sin(),
        r.v * r.curvature - yaw_rate,
        -accel,
    )
}

/// One explicit Euler step of the nonlinear error dynamics.
pub fn propagate_error(
    e: &ErrorState,
    u: &Command,
    r: &ReferenceSample,
    dt: f64,
    p: &VehicleParams,
) -> ErrorState {
    ErrorState::from_vector(&(e.to_vector() + error_rate(e, u, r, p) * dt))
}

/// Analytic linearization of [`propagate_error`] about `(e, u_bar)`.
pub fn linearize(
    e: &ErrorState,
    u_bar: &Command,
    r: &ReferenceSample,
    dt: f64,
    p: &VehicleParams,
) -> LinearizedDynamics {
    let v = r.v - e.e4;
    let tan_d = (p.beta * u_bar.steering()).tan();
    let sec2_d = 1.0 + tan_d * tan_d;
    let yaw_rate = v * tan_d / p.wheelbase;
    // d(yaw_rate)/d(e4) and d(yaw_rate)/d(steering)
    let dw_de4 = -tan_d / p.wheelbase;
    let dw_dd = v * p.beta * sec2_d / p.wheelbase;
    let (dt_da, dt_dv) = torque_partials(u_bar.throttle(), v, p);
    let k = p.torque_to_accel();

    let mut jac_e = Matrix4::zeros();
    jac_e[(0, 1)] = yaw_rate;
    jac_e[(0, 2)] = -r.v * e.e3.sin();
    jac_e[(0, 3)] = dw_de4 * e.e2 + 1.0;
    jac_e[(1, 0)] = -yaw_rate;
    jac_e[(1, 2)] = r.v * e.e3.cos();
    jac_e[(1, 3)] = -dw_de4 * e.e1;
    jac_e[(2, 3)] = -dw_de4;
    // v = v_r - e4, so dv/de4 = -1
    jac_e[(3, 3)] = k * dt_dv;

    let mut jac_u = Matrix4x2::zeros();
    jac_u[(0, 0)] = dw_dd * e.e2;
    jac_u[(1, 0)] = -dw_dd * e.e1;
    jac_u[(2, 0)] = -dw_dd;
    jac_u[(3, 1)] = -k * dt_da;

    LinearizedDynamics {
        a: Matrix4::identity() + jac_e * dt,
        b: jac_u * dt,
    }
}
