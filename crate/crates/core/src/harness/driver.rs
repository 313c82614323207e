use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::control::{ControlOutput, Observation, TrackingController};
use crate::dynamics::{Command, VehicleParams};
use crate::error::{Error, Result};

/// A stand-in for a human at the wheel: pure pursuit toward a point well
/// down the road, a first-order reaction lag on both inputs, and a slowly
/// wandering steering offset.
///
/// It drives smoothly and merges back onto the path slowly. The fixture
/// recordings under `fixtures/` were made with it.
#[derive(Debug, Clone)]
pub struct PursuitDriver {
    pub params: VehicleParams,
    pub config: PursuitConfig,
    steering: f64,
    throttle: f64,
    drift: f64,
    last_time: Option<f64>,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PursuitConfig {
    /// Look-ahead distance is `base + per_speed * v`, meters.
    pub lookahead_base: f64,
    pub lookahead_per_speed: f64,
    /// Reaction time constant of both inputs, seconds.
    pub reaction_time: f64,
    /// Speed error to throttle gain.
    pub speed_gain: f64,
    /// Standard deviation and correlation time of the steering drift.
    pub drift_std: f64,
    pub drift_time: f64,
    pub seed: u64,
}

impl Default for PursuitConfig {
    fn default() -> Self {
        Self {
            lookahead_base: 1.5,
            lookahead_per_speed: 1.0,
            reaction_time: 0.4,
            speed_gain: 0.3,
            drift_std: 0.01,
            drift_time: 2.0,
            seed: 0,
        }
    }
}

impl PursuitDriver {
    pub fn new(params: VehicleParams, config: PursuitConfig) -> Result<Self> {
        params.validate()?;
        let positive = [
            ("lookahead_base", config.lookahead_base),
            ("reaction_time", config.reaction_time),
            ("drift_time", config.drift_time),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {value}")));
            }
        }
        if !(config.drift_std.is_finite() && config.drift_std >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "drift_std must be >= 0, got {}",
                config.drift_std
            )));
        }
        Ok(Self {
            params,
            config,
            steering: 0.0,
            throttle: 0.0,
            drift: 0.0,
            last_time: None,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }
}

impl TrackingController for PursuitDriver {
    fn name(&self) -> &str {
        "pursuit"
    }

    fn command(&mut self, obs: &Observation<'_>) -> Result<ControlOutput> {
        let q = obs.state;
        let here = obs.path.sample_at(obs.fix.s);
        let c = &self.config;
        let lookahead = c.lookahead_base + c.lookahead_per_speed * q.v.max(0.0);
        let target = obs.path.sample_at(obs.fix.s + lookahead);

        let (dx, dy) = (target.x - q.x, target.y - q.y);
        let alpha = dy.atan2(dx) - q.theta;
        let dist = dx.hypot(dy).max(1e-6);
        let curvature = 2.0 * alpha.sin() / dist;
        let want_steering = (curvature * self.params.wheelbase).atan() / self.params.beta;
        let want_throttle = self.params.cruise_throttle(target.v) + c.speed_gain * (here.v - q.v);

        let dt = match self.last_time {
            Some(t) => (obs.time - t).max(0.0),
            None => {
                // first tick: already holding the inputs it wants
                self.steering = want_steering;
                self.throttle = want_throttle;
                0.0
            }
        };
        self.last_time = Some(obs.time);
        if dt > 0.0 {
            let a = (-dt / c.reaction_time).exp();
            self.steering = a * self.steering + (1.0 - a) * want_steering;
            self.throttle = a * self.throttle + (1.0 - a) * want_throttle;
            let phi = (-dt / c.drift_time).exp();
            let kick = Normal::new(0.0, c.drift_std * (1.0 - phi * phi).sqrt())
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            self.drift = phi * self.drift + kick.sample(&mut self.rng);
        }
        // keep the lag states inside the command range so they cannot wind up
        self.steering = self.steering.clamp(-1.0, 1.0);
        self.throttle = self.throttle.clamp(0.0, 1.0);
        Ok(Command::new(self.steering + self.drift, self.throttle).into())
    }

    fn reset(&mut self) {
        self.steering = 0.0;
        self.throttle = 0.0;
        self.drift = 0.0;
        self.last_time = None;
        self.rng = ChaCha8Rng::seed_from_u64(self.config.seed);
    }
}
