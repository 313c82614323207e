use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Sample, Source};
use crate::control::{
    locate, tracking_error, MpcConfig, MpcController, Observation, TrackingController,
    DEFAULT_PREVIEW_TIME,
};
use crate::dynamics::{step, Command, VehicleParams, VehicleState};
use crate::error::{Error, Result};
use crate::paths::{NamedPath, ReferencePath};

/// Bounds of the uniform initial offsets, all symmetric about zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    /// Lateral offset along the path normal, meters.
    pub lateral: f64,
    /// Heading offset, radians.
    pub heading: f64,
    /// Speed offset, m/s.
    pub speed: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            lateral: 1.0,
            heading: 0.3,
            speed: 0.5,
        }
    }
}

impl Perturbation {
    pub fn none() -> Self {
        Self {
            lateral: 0.0,
            heading: 0.0,
            speed: 0.0,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> (f64, f64, f64) {
        let mut sym = |a: f64| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
        (sym(self.lateral), sym(self.heading), sym(self.speed))
    }
}

/// Offsets `sample` sideways by `lateral` (positive to the left), turns it by
/// `heading` and changes its speed by `speed`.
pub fn perturbed_start(path: &ReferencePath, s: f64, offset: (f64, f64, f64)) -> VehicleState {
    let r = path.sample_at(s);
    let (lateral, heading, speed) = offset;
    VehicleState::new(
        r.x - lateral * r.theta.sin(),
        r.y + lateral * r.theta.cos(),
        r.theta + heading,
        r.v + speed,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    /// Simulated time per trajectory, seconds.
    pub run_seconds: f64,
    pub control_rate_hz: u32,
    pub plant_rate_hz: u32,
    pub perturbation: Perturbation,
    /// The vehicle is re-placed at a fresh perturbed start this often.
    pub episode_seconds: f64,
    pub preview_time: f64,
    pub seed: u64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            run_seconds: 60.0,
            control_rate_hz: 10,
            plant_rate_hz: 100,
            perturbation: Perturbation::default(),
            episode_seconds: 10.0,
            preview_time: DEFAULT_PREVIEW_TIME,
            seed: 0,
        }
    }
}

impl CollectConfig {
    pub fn validate(&self) -> Result<()> {
        if self.control_rate_hz == 0 || !self.plant_rate_hz.is_multiple_of(self.control_rate_hz) {
            return Err(Error::InvalidParameter(format!(
                "plant rate {} must be a positive multiple of control rate {}",
                self.plant_rate_hz, self.control_rate_hz
            )));
        }
        let p = self.perturbation;
        let ok = self.run_seconds > 0.0
            && self.episode_seconds > 0.0
            && self.preview_time >= 0.0
            && [p.lateral, p.heading, p.speed].iter().all(|v| v.is_finite() && *v >= 0.0);
        if !ok {
            return Err(Error::InvalidParameter(format!("invalid collection config {self:?}")));
        }
        Ok(())
    }
}

/// Drives each trajectory with the MPC from seeded perturbed starts and
/// records the preview error state next to the issued command at every
/// control tick.
///
/// Trajectory `i` draws from its own random stream, so adding or removing a
/// trajectory leaves the others' samples unchanged.
pub fn collect_mpc_dataset(
    trajectories: &[NamedPath],
    p: &VehicleParams,
    mpc: &MpcConfig,
    cfg: &CollectConfig,
) -> Result<Dataset> {
    let mut controller = MpcController::new(mpc.clone(), *p)?;
    collect_dataset(trajectories, p, &mut controller, Source::Mpc, cfg)
}

/// [`collect_mpc_dataset`] with any controller as the expert.
pub fn collect_dataset(
    trajectories: &[NamedPath],
    p: &VehicleParams,
    controller: &mut dyn TrackingController,
    source: Source,
    cfg: &CollectConfig,
) -> Result<Dataset> {
    if trajectories.is_empty() {
        return Err(Error::InvalidParameter("no trajectories to collect on".into()));
    }
    cfg.validate()?;
    p.validate()?;
    let mut samples = Vec::new();
    for (i, t) in trajectories.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        controller.reset();
        let run = collect_one(t, p, controller, source, cfg, &mut rng).map_err(|e| Error::Collection {
            trajectory: t.id.clone(),
            source: Box::new(e),
        })?;
        samples.extend(run);
    }
    Ok(Dataset::new(samples))
}

/// Open paths end an episode this many seconds of travel before the end,
/// so look-ahead references stay on the path.
const END_MARGIN_SECONDS: f64 = 2.0;

fn collect_one(
    traj: &NamedPath,
    p: &VehicleParams,
    controller: &mut dyn TrackingController,
    source: Source,
    cfg: &CollectConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Sample>> {
    let path = &traj.path;
    let substeps = (cfg.plant_rate_hz / cfg.control_rate_hz) as usize;
    let plant_dt = 1.0 / cfg.plant_rate_hz as f64;
    let control_dt = 1.0 / cfg.control_rate_hz as f64;
    let total = (cfg.run_seconds * cfg.control_rate_hz as f64).round() as usize;
    let per_episode = ((cfg.episode_seconds * cfg.control_rate_hz as f64).round() as usize).max(1);
    let tail = |v: f64| v * (cfg.preview_time + END_MARGIN_SECONDS) + 1.0;

    let mut out = Vec::with_capacity(total);
    let mut state = VehicleState::default();
    let mut hint = None;
    let mut episode_step = per_episode;
    for k in 0..total {
        if episode_step >= per_episode {
            let s0 = if path.is_closed() {
                rng.random_range(0.0..path.length())
            } else {
                rng.random_range(0.0..path.length() / 3.0)
            };
            state = perturbed_start(path, s0, cfg.perturbation.draw(rng));
            hint = None;
            episode_step = 0;
        }
        let fix = locate(path, state.position(), hint);
        hint = Some(fix.index);
        let obs = Observation {
            time: k as f64 * control_dt,
            state,
            path,
            fix,
        };
        let u: Command = controller
            .command(&obs)
            .map_err(|e| Error::Controller {
                step: k,
                source: Box::new(e),
            })?
            .command;
        out.push(Sample {
            e: tracking_error(path, &state, &fix, cfg.preview_time),
            u,
            source,
            traj_id: traj.id.clone(),
            t: obs.time,
        });
        for _ in 0..substeps {
            state = step(&state, &u, plant_dt, p)?;
        }
        episode_step += 1;
        if !path.is_closed() && path.length() - fix.s < tail(path.sample_at(fix.s).v) {
            episode_step = per_episode;
        }
    }
    Ok(out)
}
