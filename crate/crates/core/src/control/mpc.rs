//! Finite-horizon MPC on the linearized error dynamics.
//!
//! The quadratic
//!
//! ```text
//! J = e_N' Q e_N + sum_{k<N} e_k' Q e_k + (u_k - u_r,k)' R (u_k - u_r,k)
//! ```
//!
//! is minimized without constraints by a backward Riccati pass over the
//! time-varying `(A_k, B_k)`, linearized about the reference at each step.
//! Only the first command is applied, clamped to the actuator ranges.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::{
    error_state, linearize, reference_command, window_for, ControlOutput, ErrorState,
    LinearizedDynamics, Observation, ReferenceCommand, SolverDiagnostics, TrackingController,
};
use crate::dynamics::{Command, VehicleParams};
use crate::error::{Error, Result};
use crate::paths::ReferenceSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    /// Prediction step, seconds.
    pub dt: f64,
    /// Stage and terminal error weight, row-major 4x4.
    pub q: [[f64; 4]; 4],
    /// Input weight on `u - u_r`, row-major 2x2.
    pub r: [[f64; 2]; 2],
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.1,
            q: diag4([1.0, 1.0, 0.5, 0.5]),
            r: [[0.1, 0.0], [0.0, 0.1]],
        }
    }
}

fn diag4(d: [f64; 4]) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        m[i][i] = d[i];
    }
    m
}

impl MpcConfig {
    pub fn with_diagonal(horizon: usize, dt: f64, q: [f64; 4], r: [f64; 2]) -> Self {
        Self {
            horizon,
            dt,
            q: diag4(q),
            r: [[r[0], 0.0], [0.0, r[1]]],
        }
    }

    pub fn q_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.q[i][j])
    }

    pub fn r_matrix(&self) -> Matrix2<f64> {
        Matrix2::from_fn(|i, j| self.r[i][j])
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("MPC horizon must be >= 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("MPC dt must be > 0, got {}", self.dt)));
        }
        let q = self.q_matrix();
        let r = self.r_matrix();
        if q.iter().chain(r.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MPC weights".into()));
        }
        if (q - q.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidParameter("Q must be symmetric".into()));
        }
        if (r - r.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidParameter("R must be symmetric".into()));
        }
        if q.symmetric_eigenvalues().min() < -1e-12 {
            return Err(Error::InvalidParameter("Q must be positive semidefinite".into()));
        }
        if r.cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("R"));
        }
        Ok(())
    }
}

/// Linear model and nominal command for one horizon step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonStep {
    pub model: LinearizedDynamics,
    pub nominal: ReferenceCommand,
}

/// Result of one MPC solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// First command, clamped to the actuator ranges.
    pub command: Command,
    /// `u - u_r` for every horizon step, before clamping.
    pub deviations: Vec<Vector2<f64>>,
    /// `e_0 .. e_N` under the linear model.
    pub predicted: Vec<ErrorState>,
    /// Objective evaluated on `deviations` and `predicted`.
    pub cost: f64,
    /// `e_0' P_0 e_0` from the Riccati recursion; equals `cost` up to rounding.
    pub value: f64,
    pub horizon: Vec<HorizonStep>,
}

/// Linearizes about `(e = 0, u = u_r)` at every reference in the window.
pub fn horizon_model(
    refs: &[ReferenceSample],
    dt: f64,
    p: &VehicleParams,
) -> Result<Vec<HorizonStep>> {
    refs.iter()
        .map(|r| {
            let nominal = reference_command(r, r.curvature, p)?;
            let model = linearize(&ErrorState::default(), &nominal.as_command(), r, dt, p);
            Ok(HorizonStep { model, nominal })
        })
        .collect()
}

/// Objective for a given deviation sequence rolled out through `horizon`.
pub fn evaluate_cost(
    e0: &ErrorState,
    horizon: &[HorizonStep],
    deviations: &[Vector2<f64>],
    config: &MpcConfig,
) -> (f64, Vec<ErrorState>) {
    let q = config.q_matrix();
    let r = config.r_matrix();
    let mut e = e0.to_vector();
    let mut cost = 0.0;
    let mut predicted = Vec::with_capacity(horizon.len() + 1);
    predicted.push(*e0);
    for (step, du) in horizon.iter().zip(deviations) {
        cost += (e.transpose() * q * e)[0] + (du.transpose() * r * du)[0];
        e = step.model.a * e + step.model.b * du;
        predicted.push(ErrorState::from_vector(&e));
    }
    cost += (e.transpose() * q * e)[0];
    (cost, predicted)
}

pub fn mpc_solve(
    e0: &ErrorState,
    refs: &[ReferenceSample],
    config: &MpcConfig,
    p: &VehicleParams,
) -> Result<MpcSolution> {
    config.validate()?;
    if refs.len() != config.horizon {
        return Err(Error::InvalidParameter(format!(
            "expected {} references, got {}",
            config.horizon,
            refs.len()
        )));
    }
    if !e0.is_finite() {
        return Err(Error::NonFinite("initial error state".into()));
    }
    let horizon = horizon_model(refs, config.dt, p)?;
    solve_horizon(e0, horizon, config)
}

fn solve_horizon(e0: &ErrorState, horizon: Vec<HorizonStep>, config: &MpcConfig) -> Result<MpcSolution> {
    let q = config.q_matrix();
    let r = config.r_matrix();
    let n = horizon.len();

    let mut gains = vec![nalgebra::Matrix2x4::<f64>::zeros(); n];
    let mut cost_to_go = q;
    for k in (0..n).rev() {
        let LinearizedDynamics { a, b } = horizon[k].model;
        let bt_p = b.transpose() * cost_to_go;
        let chol = (r + bt_p * b).cholesky().ok_or(Error::Riccati { step: k })?;
        let gain = chol.solve(&(bt_p * a));
        let next = q + a.transpose() * cost_to_go * (a - b * gain);
        cost_to_go = (next + next.transpose()) * 0.5;
        if !cost_to_go.iter().chain(gain.iter()).all(|v| v.is_finite()) {
            return Err(Error::Riccati { step: k });
        }
        gains[k] = gain;
    }
    let e0v: Vector4<f64> = e0.to_vector();
    let value = (e0v.transpose() * cost_to_go * e0v)[0];

    let mut deviations = Vec::with_capacity(n);
    let mut e = e0v;
    for (step, gain) in horizon.iter().zip(&gains) {
        let du = -gain * e;
        e = step.model.a * e + step.model.b * du;
        deviations.push(du);
    }
    let (cost, predicted) = evaluate_cost(e0, &horizon, &deviations, config);
    let nominal = horizon[0].nominal;
    let command = Command::new(nominal.steering + deviations[0][0], nominal.throttle + deviations[0][1]);
    Ok(MpcSolution {
        command,
        deviations,
        predicted,
        cost,
        value,
        horizon,
    })
}

/// Receding-horizon controller around [`mpc_solve`].
///
/// The error is taken against the projection of the vehicle onto the path,
/// and the horizon references advance from there at the reference speed.
#[derive(Debug, Clone)]
pub struct MpcController {
    pub config: MpcConfig,
    pub params: VehicleParams,
}

impl MpcController {
    pub fn new(config: MpcConfig, params: VehicleParams) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        Ok(Self { config, params })
    }

    pub fn solve(&self, obs: &Observation<'_>) -> Result<MpcSolution> {
        let refs = window_for(obs.path, obs.fix.s, self.config.horizon, self.config.dt);
        let e0 = error_state(&obs.state, &refs[0]);
        mpc_solve(&e0, &refs, &self.config, &self.params)
    }
}

impl TrackingController for MpcController {
    fn name(&self) -> &str {
        "mpc"
    }

    fn command(&mut self, obs: &Observation<'_>) -> Result<ControlOutput> {
        let sol = self.solve(obs)?;
        Ok(ControlOutput {
            command: sol.command,
            diagnostics: Some(SolverDiagnostics {
                cost: sol.cost,
                predicted: sol.predicted,
            }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{make_line, reference_window, SpeedProfile};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn straight_refs(n: usize, v: f64) -> Vec<ReferenceSample> {
        let path = make_line(30.0, &SpeedProfile::constant(v), 0.1).unwrap();
        reference_window(&path, 0, n, 0.1)
    }

    #[test]
    fn on_reference_returns_nominal() {
        let p = VehicleParams::default();
        let config = MpcConfig::default();
        let refs = straight_refs(config.horizon, 1.0);
        let sol = mpc_solve(&ErrorState::default(), &refs, &config, &p).unwrap();
        assert!((sol.command.steering() - 0.0).abs() < 1e-9);
        assert!((sol.command.throttle() - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(sol.cost, 0.0);
    }

    #[test]
    fn lateral_offset_steers_toward_path() {
        let p = VehicleParams::default();
        let config = MpcConfig::default();
        let refs = straight_refs(config.horizon, 1.0);
        // reference to the left: steer left
        let sol = mpc_solve(&ErrorState::new(0.0, 0.5, 0.0, 0.0), &refs, &config, &p).unwrap();
        assert!(sol.command.steering() > 0.0);
        let sol = mpc_solve(&ErrorState::new(0.0, -0.5, 0.0, 0.0), &refs, &config, &p).unwrap();
        assert!(sol.command.steering() < 0.0);
    }

    #[test]
    fn speed_error_opens_throttle() {
        let p = VehicleParams::default();
        let config = MpcConfig::default();
        let refs = straight_refs(config.horizon, 1.0);
        let sol = mpc_solve(&ErrorState::new(0.0, 0.0, 0.0, 0.5), &refs, &config, &p).unwrap();
        assert!(sol.command.throttle() > 1.0 / 3.0);
    }

    #[test]
    fn one_step_matches_least_squares() {
        let p = VehicleParams::default();
        let config = MpcConfig::with_diagonal(1, 0.1, [1.0; 4], [1.0; 2]);
        let refs = vec![ReferenceSample { x: 0.0, y: 0.0, theta: 0.0, v: 1.0, s: 0.0, curvature: 0.2 }];
        let e0 = ErrorState::new(0.1, 0.4, -0.2, 0.3);
        let sol = mpc_solve(&e0, &refs, &config, &p).unwrap();

        // minimize |A e0 + B du|^2 + |du|^2 as a stacked least-squares problem
        let m = sol.horizon[0].model;
        let mut stacked = DMatrix::<f64>::zeros(6, 2);
        let mut rhs = DVector::<f64>::zeros(6);
        let ae = m.a * e0.to_vector();
        for i in 0..4 {
            for j in 0..2 {
                stacked[(i, j)] = m.b[(i, j)];
            }
            rhs[i] = -ae[i];
        }
        stacked[(4, 0)] = 1.0;
        stacked[(5, 1)] = 1.0;
        let du = stacked.svd(true, true).solve(&rhs, 1e-14).unwrap();
        assert_relative_eq!(sol.deviations[0][0], du[0], epsilon = 1e-12);
        assert_relative_eq!(sol.deviations[0][1], du[1], epsilon = 1e-12);
    }

    #[test]
    fn riccati_value_equals_rollout_cost() {
        let p = VehicleParams::default();
        let config = MpcConfig::default();
        let refs = straight_refs(config.horizon, 1.5);
        let e0 = ErrorState::new(0.2, -0.3, 0.1, 0.4);
        let sol = mpc_solve(&e0, &refs, &config, &p).unwrap();
        assert_relative_eq!(sol.cost, sol.value, max_relative = 1e-10);
    }

    #[test]
    fn perturbations_never_lower_cost() {
        let p = VehicleParams::default();
        let config = MpcConfig::default();
        let path = crate::paths::make_circle(5.0, crate::paths::Direction::Ccw, &SpeedProfile::constant(1.0), 0.1).unwrap();
        let refs = reference_window(&path, 40, config.horizon, config.dt);
        let e0 = ErrorState::new(0.05, 0.5, -0.1, 0.2);
        let sol = mpc_solve(&e0, &refs, &config, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let perturbed: Vec<_> = sol
                .deviations
                .iter()
                .map(|d| d + Vector2::new(rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3)))
                .collect();
            let (cost, _) = evaluate_cost(&e0, &sol.horizon, &perturbed, &config);
            assert!(cost >= sol.cost - 1e-12 * sol.cost.abs());
        }
    }

    #[test]
    fn config_validation() {
        let p = VehicleParams::default();
        let refs = straight_refs(20, 1.0);
        let mut bad = MpcConfig::default();
        bad.r = [[0.0, 0.0], [0.0, 0.1]];
        assert!(matches!(mpc_solve(&ErrorState::default(), &refs, &bad, &p), Err(Error::NotPositiveDefinite("R"))));
        let mut bad = MpcConfig::default();
        bad.q[0][0] = -1.0;
        assert!(bad.validate().is_err());
        let mut bad = MpcConfig::default();
        bad.horizon = 0;
        assert!(bad.validate().is_err());
        assert!(mpc_solve(&ErrorState::default(), &refs[..5], &MpcConfig::default(), &p).is_err());
    }
}
