use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ControllerKind, ScenarioConfig, SensorMode};
use crate::control::{
    error_state, locate, tracking_error, ControlOutput, ErrorState, MpcController, Observation,
    TrackingController,
};
use crate::dynamics::{step, Command, VehicleState};
use crate::error::{Error, Result};
use crate::estimator::{ekf_predict, ekf_update_heading, ekf_update_position, EkfState, UpdateDiagnostics};
use crate::imitation::{load_model, perturbed_start, Dataset, Model};
use crate::paths::ReferencePath;

pub const TRACE_HEADER: [&str; 17] = [
    "t", "x", "y", "theta", "v", "xe", "ye", "thetae", "ve_est", "e1", "e2", "e3", "e4",
    "steering", "throttle", "ct_err", "ref_idx",
];

/// Estimator columns written after [`TRACE_HEADER`].
pub const TRACE_DIAGNOSTIC_HEADER: [&str; 4] = ["cov_trace", "innov_x", "innov_y", "innov_theta"];

/// One control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub truth: VehicleState,
    pub estimate: VehicleState,
    /// Error of the estimate against its projection onto the path.
    pub error: ErrorState,
    pub command: Command,
    /// Distance from the true position to the path polyline.
    pub ct_err: f64,
    /// Sample nearest to the true position.
    pub ref_idx: usize,
    pub cov_trace: f64,
    /// Latest position and heading innovations.
    pub innovation: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunOutcome {
    Completed,
    /// Cross-track error passed the bail-out distance at this record.
    BailedOut { step: usize, distance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub controller: String,
    pub repetition: usize,
    pub records: Vec<TraceRecord>,
    pub outcome: RunOutcome,
}

impl RunTrace {
    pub fn completed(&self) -> bool {
        self.outcome == RunOutcome::Completed
    }

    pub fn mean_ct_err(&self) -> f64 {
        self.records.iter().map(|r| r.ct_err).sum::<f64>() / self.records.len().max(1) as f64
    }

    pub fn max_ct_err(&self) -> f64 {
        self.records.iter().map(|r| r.ct_err).fold(0.0, f64::max)
    }

    /// Sum of absolute steering changes between consecutive ticks.
    pub fn steering_total_variation(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| (w[1].command.steering() - w[0].command.steering()).abs())
            .sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Values use shortest round-trip formatting, so identical runs produce
    /// byte-identical files.
    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TRACE_HEADER.iter().chain(TRACE_DIAGNOSTIC_HEADER.iter()))?;
        for r in &self.records {
            let row = [
                r.t,
                r.truth.x,
                r.truth.y,
                r.truth.theta,
                r.truth.v,
                r.estimate.x,
                r.estimate.y,
                r.estimate.theta,
                r.estimate.v,
                r.error.e1,
                r.error.e2,
                r.error.e3,
                r.error.e4,
                r.command.steering(),
                r.command.throttle(),
                r.ct_err,
            ];
            let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            fields.push(r.ref_idx.to_string());
            fields.extend([r.cov_trace, r.innovation[0], r.innovation[1], r.innovation[2]].map(|v| v.to_string()));
            w.write_record(&fields)?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }
}

/// Learned policy fed with the preview error of the estimated state.
#[derive(Debug, Clone)]
pub struct NnController {
    pub model: Model,
    name: String,
}

impl NnController {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            name: "nn".into(),
        }
    }

    pub fn named(model: Model, name: impl Into<String>) -> Self {
        Self {
            model,
            name: name.into(),
        }
    }
}

impl TrackingController for NnController {
    fn name(&self) -> &str {
        &self.name
    }

    fn command(&mut self, obs: &Observation<'_>) -> Result<ControlOutput> {
        let e = tracking_error(obs.path, &obs.state, &obs.fix, self.model.preview_time);
        Ok(self.model.command(&e).into())
    }
}

/// Replays recorded commands open loop, holding each until the next
/// timestamp. After the recording ends it commands a stop.
#[derive(Debug, Clone)]
pub struct PlaybackController {
    commands: Vec<(f64, Command)>,
}

impl PlaybackController {
    pub fn new(mut commands: Vec<(f64, Command)>) -> Result<Self> {
        if commands.is_empty() {
            return Err(Error::Dataset("nothing to play back".into()));
        }
        commands.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { commands })
    }

    /// Commands of one trajectory of a recording, or of all of it, with
    /// times shifted to start at zero.
    pub fn from_dataset(data: &Dataset, trajectory: Option<&str>) -> Result<Self> {
        let picked: Vec<_> = data
            .samples()
            .iter()
            .filter(|s| trajectory.is_none_or(|id| s.traj_id == id))
            .map(|s| (s.t, s.u))
            .collect();
        let t0 = picked.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        Self::new(picked.into_iter().map(|(t, u)| (t - t0, u)).collect())
    }
}

impl TrackingController for PlaybackController {
    fn name(&self) -> &str {
        "playback"
    }

    fn command(&mut self, obs: &Observation<'_>) -> Result<ControlOutput> {
        let last = self.commands.last().map_or(0.0, |c| c.0);
        if obs.time > last + 1e-9 {
            return Ok(Command::new(0.0, 0.0).into());
        }
        let idx = self.commands.partition_point(|c| c.0 <= obs.time + 1e-9);
        Ok(self.commands[idx.saturating_sub(1)].1.into())
    }
}

/// Builds the controller named in the config, loading any files it needs.
pub fn build_controller(cfg: &ScenarioConfig) -> Result<Box<dyn TrackingController>> {
    match cfg.controller.kind {
        ControllerKind::Mpc => Ok(Box::new(MpcController::new(cfg.mpc.clone(), cfg.vehicle)?)),
        ControllerKind::Nn => {
            let file = cfg
                .controller
                .model
                .as_deref()
                .ok_or_else(|| Error::Config("controller.model is required for nn".into()))?;
            Ok(Box::new(NnController::new(load_model(file)?)))
        }
        ControllerKind::Playback => {
            let file = cfg
                .controller
                .recording
                .as_deref()
                .ok_or_else(|| Error::Config("controller.recording is required for playback".into()))?;
            let (data, _) = Dataset::read_csv(file)?;
            Ok(Box::new(PlaybackController::from_dataset(&data, cfg.controller.trajectory.as_deref())?))
        }
    }
}

struct Sensors {
    position: Normal<f64>,
    heading: Normal<f64>,
}

impl Sensors {
    fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let n = &cfg.sensors.noise;
        let normal = |sd: f64| Normal::new(0.0, sd).map_err(|e| Error::InvalidParameter(e.to_string()));
        Ok(Self {
            position: normal(n.position_std)?,
            heading: normal(n.heading_std)?,
        })
    }
}

/// Runs one repetition of the scenario.
///
/// The plant integrates at the plant rate under a zero-order hold. The
/// filter predicts every plant step and fuses heading and position at their
/// own rates. At each control tick the estimate is projected onto the path,
/// the controller is queried and a record is appended. Repetition `k` draws
/// its start jitter and sensor noise from stream `k` of the scenario seed.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    path: &ReferencePath,
    controller: &mut dyn TrackingController,
    repetition: usize,
) -> Result<RunTrace> {
    cfg.validate()?;
    controller.reset();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(repetition as u64);

    let plant_params = cfg.plant.apply(&cfg.vehicle);
    let model_params = cfg.vehicle;
    let noise = cfg.sensors.noise;
    let noisy = cfg.sensors.mode == SensorMode::Noisy;
    let sensors = Sensors::new(cfg)?;

    let off = cfg.initial_offset;
    let jitter = off.jitter;
    let mut draw = |a: f64| if a > 0.0 { rand::Rng::random_range(&mut rng, -a..=a) } else { 0.0 };
    let (jl, jh, js) = (draw(jitter.lateral), draw(jitter.heading), draw(jitter.speed));
    let mut truth = perturbed_start(path, 0.0, (off.lateral + jl, off.heading + jh, off.speed + js));

    let initial_guess = VehicleState {
        v: truth.v * (1.0 + cfg.sensors.initial_speed_error),
        ..truth
    };
    let mut ekf = EkfState::with_std(initial_guess, cfg.sensors.initial_std);

    let substeps = (cfg.plant_rate_hz / cfg.control_rate_hz) as usize;
    let heading_every = (cfg.plant_rate_hz / cfg.sensors.heading_rate_hz) as usize;
    let position_every = (cfg.plant_rate_hz / cfg.sensors.position_rate_hz) as usize;
    let plant_dt = 1.0 / cfg.plant_rate_hz as f64;
    let steps = cfg.steps(path);

    let mut records = Vec::with_capacity(steps);
    let mut outcome = RunOutcome::Completed;
    let mut est_hint = None;
    let mut true_hint = None;
    let mut innovation = [0.0; 3];
    let mut plant_tick = 0usize;

    for k in 0..steps {
        let t = k as f64 * cfg.control_dt();
        let estimate = if noisy {
            ekf.mean
        } else {
            VehicleState { v: ekf.mean.v, ..truth }
        };
        let fix = locate(path, estimate.position(), est_hint);
        est_hint = Some(fix.index);
        let obs = Observation {
            time: t,
            state: estimate,
            path,
            fix,
        };
        let command = controller
            .command(&obs)
            .map_err(|e| Error::Controller {
                step: k,
                source: Box::new(e),
            })?
            .command;

        let true_fix = locate(path, truth.position(), true_hint);
        let (ref_idx, ct_err) = (true_fix.index, true_fix.cross_track);
        true_hint = Some(ref_idx);
        records.push(TraceRecord {
            t,
            truth,
            estimate,
            error: error_state(&estimate, &path.sample_at(fix.s)),
            command,
            ct_err,
            ref_idx,
            cov_trace: ekf.covariance.trace(),
            innovation,
        });
        if ct_err > cfg.bail_out_distance || !truth.is_finite() {
            outcome = RunOutcome::BailedOut {
                step: k,
                distance: ct_err,
            };
            break;
        }

        let applied = Command::new(command.steering() + cfg.plant.steering_bias, command.throttle());
        for _ in 0..substeps {
            truth = step(&truth, &applied, plant_dt, &plant_params)?;
            ekf = ekf_predict(&ekf, &command, plant_dt, &model_params, &noise)?;
            plant_tick += 1;
            if plant_tick.is_multiple_of(heading_every) {
                let z = truth.theta + if noisy { sensors.heading.sample(&mut rng) } else { 0.0 };
                let (next, d): (EkfState, UpdateDiagnostics) = ekf_update_heading(&ekf, z, &noise)?;
                ekf = next;
                innovation[2] = d.innovation[0];
            }
            if plant_tick.is_multiple_of(position_every) {
                let z = if noisy {
                    (truth.x + sensors.position.sample(&mut rng), truth.y + sensors.position.sample(&mut rng))
                } else {
                    (truth.x, truth.y)
                };
                let (next, d) = ekf_update_position(&ekf, z, &noise)?;
                ekf = next;
                innovation[0] = d.innovation[0];
                innovation[1] = d.innovation[1];
            }
        }
    }
    Ok(RunTrace {
        controller: controller.name().to_string(),
        repetition,
        records,
        outcome,
    })
}

/// `cfg.repetitions` independent runs.
pub fn run_repetitions(
    cfg: &ScenarioConfig,
    path: &ReferencePath,
    controller: &mut dyn TrackingController,
) -> Result<Vec<RunTrace>> {
    (0..cfg.repetitions).map(|k| run_scenario(cfg, path, controller, k)).collect()
}
