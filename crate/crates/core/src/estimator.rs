//! Extended Kalman filter over the 4-DOF model.
//!
//! Position (GNSS) and heading (IMU) arrive as separate measurements and are
//! fused by sequential updates. Speed is never measured directly; it is
//! observed through the model coupling between speed and position change.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, RowVector4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_angle;
use crate::dynamics::{step, step_jacobian, Command, VehicleParams, VehicleState};
use crate::error::{Error, Result};

/// Filter mean and covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    pub mean: VehicleState,
    pub covariance: Matrix4<f64>,
}

impl EkfState {
    pub fn new(mean: VehicleState, covariance: Matrix4<f64>) -> Self {
        Self { mean, covariance }
    }

    /// Diagonal prior with the given standard deviations.
    pub fn with_std(mean: VehicleState, std: [f64; 4]) -> Self {
        let d = Vector4::from(std).component_mul(&Vector4::from(std));
        Self::new(mean, Matrix4::from_diagonal(&d))
    }
}

/// Noise levels. Process noise is a continuous-time density scaled by `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Diagonal of the process noise density for `[x, y, theta, v]`.
    pub process: [f64; 4],
    /// GNSS position standard deviation, meters.
    pub position_std: f64,
    /// IMU heading standard deviation, radians.
    pub heading_std: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            process: [1e-4, 1e-4, 1e-4, 1e-2],
            position_std: 0.02,
            heading_std: 0.01,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            process: [0.0; 4],
            position_std: 0.0,
            heading_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.process.iter().chain([&self.position_std, &self.heading_std]);
        if all.into_iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("noise values must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn process_matrix(&self, dt: f64) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::from(self.process)) * dt
    }
}

/// Innovation record from the last update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateDiagnostics {
    /// Position innovation (x, y) or heading innovation in the first slot.
    pub innovation: [f64; 2],
    /// Covariance trace after the update.
    pub posterior_trace: f64,
}

fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// Propagates the mean through the RK4 step and the covariance through its
/// Jacobian.
pub fn ekf_predict(
    s: &EkfState,
    u: &Command,
    dt: f64,
    p: &VehicleParams,
    noise: &NoiseConfig,
) -> Result<EkfState> {
    let mean = step(&s.mean, u, dt, p)?;
    let f = step_jacobian(&s.mean, u, dt, p)?;
    let cov = f * s.covariance * f.transpose() + noise.process_matrix(dt);
    Ok(EkfState::new(mean, symmetrize(&cov)))
}

pub fn ekf_update_position(
    s: &EkfState,
    meas: (f64, f64),
    noise: &NoiseConfig,
) -> Result<(EkfState, UpdateDiagnostics)> {
    if !(meas.0.is_finite() && meas.1.is_finite()) {
        return Err(Error::NonFinite(format!("position measurement {meas:?}")));
    }
    let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    let r = Matrix2::identity() * noise.position_std.powi(2);
    let innovation = Vector2::new(meas.0 - s.mean.x, meas.1 - s.mean.y);
    let innov_cov = h * s.covariance * h.transpose() + r;
    let Some(inv) = innov_cov.try_inverse().filter(|m| m.iter().all(|v| v.is_finite())) else {
        // Degenerate: no uncertainty on either side. Nothing to fuse.
        return Ok((*s, diagnostics([innovation[0], innovation[1]], s)));
    };
    let gain = s.covariance * h.transpose() * inv;
    let mean = apply_correction(&s.mean, &(gain * innovation));
    let i_kh = Matrix4::identity() - gain * h;
    // Joseph form keeps the covariance symmetric positive semidefinite.
    let cov = i_kh * s.covariance * i_kh.transpose() + gain * r * gain.transpose();
    let post = EkfState::new(mean, symmetrize(&cov));
    Ok((post, diagnostics([innovation[0], innovation[1]], &post)))
}

pub fn ekf_update_heading(
    s: &EkfState,
    meas: f64,
    noise: &NoiseConfig,
) -> Result<(EkfState, UpdateDiagnostics)> {
    if !meas.is_finite() {
        return Err(Error::NonFinite(format!("heading measurement {meas}")));
    }
    let h = RowVector4::new(0.0, 0.0, 1.0, 0.0);
    let r = noise.heading_std.powi(2);
    let innovation = wrap_angle(meas - s.mean.theta);
    let innov_cov = s.covariance[(2, 2)] + r;
    if !(innov_cov > 0.0) {
        return Ok((*s, diagnostics([innovation, 0.0], s)));
    }
    let gain: Vector4<f64> = s.covariance * h.transpose() / innov_cov;
    let mean = apply_correction(&s.mean, &(gain * innovation));
    let i_kh = Matrix4::identity() - gain * h;
    let cov = i_kh * s.covariance * i_kh.transpose() + gain * gain.transpose() * r;
    let post = EkfState::new(mean, symmetrize(&cov));
    Ok((post, diagnostics([innovation, 0.0], &post)))
}

fn apply_correction(mean: &VehicleState, dx: &Vector4<f64>) -> VehicleState {
    VehicleState::new(mean.x + dx[0], mean.y + dx[1], mean.theta + dx[2], mean.v + dx[3])
}

fn diagnostics(innovation: [f64; 2], s: &EkfState) -> UpdateDiagnostics {
    UpdateDiagnostics {
        innovation,
        posterior_trace: s.covariance.trace(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn min_eigenvalue(p: &Matrix4<f64>) -> f64 {
        p.symmetric_eigenvalues().min()
    }

    #[test]
    fn predict_mean_matches_dynamics() {
        let p = VehicleParams::default();
        let s = EkfState::with_std(VehicleState::new(1.0, 2.0, 0.3, 1.0), [0.1, 0.1, 0.05, 0.3]);
        let u = Command::new(0.2, 0.5);
        let out = ekf_predict(&s, &u, 0.01, &p, &NoiseConfig::default()).unwrap();
        assert_eq!(out.mean, step(&s.mean, &u, 0.01, &p).unwrap());
        assert!(ekf_predict(&s, &u, 0.0, &p, &NoiseConfig::default()).is_err());
    }

    #[test]
    fn zero_innovation_shrinks_covariance() {
        let s = EkfState::with_std(VehicleState::new(1.0, 2.0, 0.3, 1.0), [0.5, 0.5, 0.1, 0.3]);
        let (post, diag) = ekf_update_position(&s, (1.0, 2.0), &NoiseConfig::default()).unwrap();
        assert_eq!(post.mean, s.mean);
        assert!(post.covariance.trace() < s.covariance.trace());
        assert_eq!(diag.innovation, [0.0, 0.0]);

        let (post, _) = ekf_update_heading(&s, 0.3, &NoiseConfig::default()).unwrap();
        assert_eq!(post.mean, s.mean);
    }

    #[test]
    fn uninformative_measurement_leaves_prior() {
        let s = EkfState::with_std(VehicleState::new(1.0, 2.0, 0.3, 1.0), [0.5, 0.5, 0.1, 0.3]);
        let noise = NoiseConfig { position_std: 1e6, ..Default::default() };
        let (post, _) = ekf_update_position(&s, (3.0, -1.0), &noise).unwrap();
        assert!((post.mean.x - s.mean.x).abs() < 1e-6 * 3.0);
        assert!(((post.covariance - s.covariance).norm() / s.covariance.norm()) < 1e-6);
    }

    #[test]
    fn scalar_kalman_arithmetic() {
        // diagonal prior: x-variance 4, measurement variance 1 -> gain 0.8
        let s = EkfState::new(VehicleState::new(0.0, 0.0, 0.0, 1.0), Matrix4::from_diagonal(&Vector4::new(4.0, 9.0, 1.0, 1.0)));
        let noise = NoiseConfig { position_std: 1.0, ..Default::default() };
        let (post, _) = ekf_update_position(&s, (1.0, 1.0), &noise).unwrap();
        assert_relative_eq!(post.mean.x, 0.8, epsilon = 1e-12);
        assert_relative_eq!(post.mean.y, 0.9, epsilon = 1e-12);
        assert_relative_eq!(post.covariance[(0, 0)], 4.0 * 1.0 / 5.0, epsilon = 1e-12);
        assert_relative_eq!(post.covariance[(1, 1)], 9.0 / 10.0, epsilon = 1e-12);
        assert_eq!(post.mean.v, 1.0);
    }

    #[test]
    fn heading_innovation_wraps() {
        let s = EkfState::with_std(VehicleState::new(0.0, 0.0, PI - 0.01, 1.0), [0.1, 0.1, 0.1, 0.1]);
        let (post, diag) = ekf_update_heading(&s, -PI + 0.01, &NoiseConfig::default()).unwrap();
        assert_relative_eq!(diag.innovation[0], 0.02, epsilon = 1e-12);
        // moved forward across the wrap, not back around
        assert!(post.mean.theta > PI - 0.01 || post.mean.theta < -PI + 0.02);
    }

    #[test]
    fn non_finite_measurements_rejected() {
        let s = EkfState::with_std(VehicleState::default(), [1.0; 4]);
        assert!(ekf_update_position(&s, (f64::NAN, 0.0), &NoiseConfig::default()).is_err());
        assert!(ekf_update_heading(&s, f64::INFINITY, &NoiseConfig::default()).is_err());
    }

    #[test]
    fn repeated_heading_updates_converge() {
        let s0 = EkfState::with_std(VehicleState::new(0.0, 0.0, 0.5, 1.0), [0.1, 0.1, 0.5, 0.1]);
        let mut s = s0;
        for _ in 0..50 {
            s = ekf_update_heading(&s, 0.1, &NoiseConfig::default()).unwrap().0;
        }
        assert!((s.mean.theta - 0.1).abs() < 1e-3);
    }

    #[test]
    fn noiseless_filter_tracks_truth_exactly() {
        let p = VehicleParams::default();
        let noise = NoiseConfig::noiseless();
        let mut truth = VehicleState::new(0.0, 0.0, 0.2, 0.5);
        let mut s = EkfState::new(truth, Matrix4::zeros());
        for k in 0..2000 {
            let u = Command::new((k as f64 * 0.01).sin(), 0.6);
            truth = step(&truth, &u, 0.01, &p).unwrap();
            s = ekf_predict(&s, &u, 0.01, &p, &noise).unwrap();
            s = ekf_update_heading(&s, truth.theta, &noise).unwrap().0;
            if k % 10 == 9 {
                s = ekf_update_position(&s, (truth.x, truth.y), &noise).unwrap().0;
            }
            let err = (s.mean.to_vector() - truth.to_vector()).amax();
            assert!(err <= 1e-9, "step {k}: {err}");
        }
    }

    #[test]
    fn speed_recovered_from_position_fixes() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let p = VehicleParams::default();
        let noise = NoiseConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pos = Normal::new(0.0, noise.position_std).unwrap();
        let head = Normal::new(0.0, noise.heading_std).unwrap();
        let u = Command::new(0.0, 0.5);
        let mut truth = VehicleState::new(0.0, 0.0, 0.0, 1.5);
        let mut s = EkfState::with_std(VehicleState::new(0.0, 0.0, 0.0, 0.75), [0.02, 0.02, 0.01, 1.0]);
        for k in 0..500 {
            truth = step(&truth, &u, 0.01, &p).unwrap();
            s = ekf_predict(&s, &u, 0.01, &p, &noise).unwrap();
            s = ekf_update_heading(&s, truth.theta + head.sample(&mut rng), &noise).unwrap().0;
            if k % 10 == 9 {
                let m = (truth.x + pos.sample(&mut rng), truth.y + pos.sample(&mut rng));
                s = ekf_update_position(&s, m, &noise).unwrap().0;
            }
        }
        assert!((s.mean.v - truth.v).abs() < 0.05 * truth.v, "{} vs {}", s.mean.v, truth.v);
    }

    proptest! {
        #[test]
        fn covariance_stays_symmetric_psd(
            th in -PI..PI, v in 0.0..3.0f64, steer in -1.0..1.0f64, thr in 0.0..1.0f64,
            mx in -1.0..1.0f64, my in -1.0..1.0f64, mth in -PI..PI,
        ) {
            let p = VehicleParams::default();
            let noise = NoiseConfig::default();
            let mut s = EkfState::with_std(VehicleState::new(0.0, 0.0, th, v), [0.3, 0.3, 0.2, 0.5]);
            for k in 0..20 {
                s = ekf_predict(&s, &Command::new(steer, thr), 0.01, &p, &noise).unwrap();
                let c = s.covariance;
                prop_assert!((c - c.transpose()).amax() <= 1e-12);
                prop_assert!(min_eigenvalue(&c) >= -1e-9);
                if k % 5 == 0 {
                    s = ekf_update_position(&s, (s.mean.x + mx, s.mean.y + my), &noise).unwrap().0;
                    let c = s.covariance;
                    prop_assert!((c - c.transpose()).amax() <= 1e-12);
                    prop_assert!(min_eigenvalue(&c) >= -1e-9);
                }
                s = ekf_update_heading(&s, mth, &noise).unwrap().0;
                let c = s.covariance;
                prop_assert!((c - c.transpose()).amax() <= 1e-12);
                prop_assert!(min_eigenvalue(&c) >= -1e-9);
            }
        }
    }
}
