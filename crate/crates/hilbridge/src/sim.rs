//! The simulation side of the bridge. [`Simulator`] is plain synchronous
//! code: one call to [`Simulator::tick`] advances one fixed tick, so tests
//! can drive it without a clock or a socket.

use std::path::{Path, PathBuf};

use zerotrack::dynamics::step;
use zerotrack::harness::ScenarioConfig;
use zerotrack::imitation::{Sample, Source};
use zerotrack::{Command, VehicleParams, VehicleState};

use crate::error::{Error, Result};
use crate::protocol::{ClientMessage, ControlAction, ServerMessage, StateBroadcast, MAX_REFERENCE_POINTS, PROTOCOL_VERSION};
use crate::session::{finalize_session, live_error, Session, SessionFiles};
use crate::trajectories::Trajectory;

/// Arc length covered by the reference window in each broadcast, meters.
pub const REFERENCE_WINDOW_METERS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub tick_hz: u32,
    pub broadcast_hz: u32,
    pub record_hz: u32,
    pub plant_rate_hz: u32,
    pub dead_man_seconds: f64,
    /// Look-ahead of the recorded error state, seconds. Matches MPC
    /// collection so both kinds of dataset train the same policy input.
    pub preview_time: f64,
    pub vehicle: VehicleParams,
    /// Where finalized sessions go.
    pub out_dir: PathBuf,
}

impl SimConfig {
    pub fn from_scenario(cfg: &ScenarioConfig) -> Self {
        Self {
            tick_hz: cfg.hil.tick_hz,
            broadcast_hz: cfg.hil.broadcast_hz,
            record_hz: cfg.hil.record_hz,
            plant_rate_hz: cfg.plant_rate_hz,
            dead_man_seconds: cfg.hil.dead_man_seconds,
            preview_time: cfg.collect.preview_time,
            vehicle: cfg.vehicle,
            out_dir: cfg.hil.out_dir.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Settings(m));
        if self.tick_hz == 0 || !self.plant_rate_hz.is_multiple_of(self.tick_hz) {
            return bad(format!(
                "plant rate {} Hz must be a positive multiple of the tick rate {} Hz",
                self.plant_rate_hz, self.tick_hz
            ));
        }
        if self.record_hz == 0 || !self.tick_hz.is_multiple_of(self.record_hz) {
            return bad(format!("record rate {} Hz must divide the tick rate {} Hz", self.record_hz, self.tick_hz));
        }
        if self.broadcast_hz == 0 || self.broadcast_hz > self.tick_hz {
            return bad(format!("broadcast rate {} Hz must be in 1..={} Hz", self.broadcast_hz, self.tick_hz));
        }
        if !(self.dead_man_seconds > 0.0 && self.dead_man_seconds.is_finite()) {
            return bad(format!("dead-man timeout must be > 0, got {}", self.dead_man_seconds));
        }
        if !(self.preview_time >= 0.0 && self.preview_time.is_finite()) {
            return bad(format!("preview time must be >= 0, got {}", self.preview_time));
        }
        self.vehicle.validate()?;
        Ok(())
    }

    pub fn tick_dt(&self) -> f64 {
        1.0 / self.tick_hz as f64
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::from_scenario(&ScenarioConfig::default())
    }
}

/// Vehicle, selected trajectory, latest command and the open session.
#[derive(Debug)]
pub struct Simulator {
    cfg: SimConfig,
    trajectories: Vec<Trajectory>,
    selected: usize,
    state: VehicleState,
    ticks: u64,
    /// Latest command from a client, already clamped.
    latest: Command,
    /// Simulation time of the latest command.
    latest_at: Option<f64>,
    applied: Command,
    clients: usize,
    recording: bool,
    broadcast_credit: u32,
    session_prefix: String,
    session_count: u32,
    session: Session,
}

impl Simulator {
    pub fn new(cfg: SimConfig, trajectories: Vec<Trajectory>, session_prefix: impl Into<String>) -> Result<Self> {
        cfg.validate()?;
        if trajectories.is_empty() {
            return Err(Error::Settings("at least one trajectory is required".into()));
        }
        let session_prefix = session_prefix.into();
        let state = at_rest(&trajectories[0]);
        // the first tick broadcasts
        let broadcast_credit = cfg.tick_hz - cfg.broadcast_hz;
        Ok(Self {
            session: Session::new(format!("{session_prefix}-1")),
            cfg,
            trajectories,
            selected: 0,
            state,
            ticks: 0,
            latest: Command::new(0.0, 0.0),
            latest_at: None,
            applied: Command::new(0.0, 0.0),
            clients: 0,
            recording: false,
            broadcast_credit,
            session_prefix,
            session_count: 1,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn selected(&self) -> &Trajectory {
        &self.trajectories[self.selected]
    }

    pub fn state(&self) -> VehicleState {
        self.state
    }

    /// Simulation time, seconds. Frozen while no client is connected.
    pub fn time(&self) -> f64 {
        self.ticks as f64 * self.cfg.tick_dt()
    }

    pub fn is_running(&self) -> bool {
        self.clients > 0
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Command applied over the most recent tick.
    pub fn applied(&self) -> Command {
        self.applied
    }

    pub fn client_connected(&mut self) {
        self.clients += 1;
    }

    /// Pauses the simulation once the last client leaves. The held command
    /// drops to zero throttle so a reconnect does not resume at speed.
    pub fn client_disconnected(&mut self) {
        self.clients = self.clients.saturating_sub(1);
        if self.clients == 0 {
            self.latest = Command::new(self.latest.steering(), 0.0);
            self.latest_at = None;
        }
    }

    /// Applies one client message. Control actions produce an ack.
    pub fn handle(&mut self, msg: ClientMessage) -> Option<ServerMessage> {
        match msg {
            ClientMessage::Cmd { steering, throttle, .. } => {
                self.set_command(steering, throttle);
                None
            }
            ClientMessage::Ctl { action, .. } => {
                let outcome = self.control(&action);
                Some(match outcome {
                    Ok(detail) => ServerMessage::ack(&action, true, detail),
                    Err(e) => ServerMessage::ack(&action, false, Some(e.to_string())),
                })
            }
        }
    }

    /// Latest command wins. Values are clamped, and non-finite ones count as 0.
    pub fn set_command(&mut self, steering: f64, throttle: f64) {
        let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
        self.latest = Command::new(finite(steering), finite(throttle));
        self.latest_at = Some(self.time());
    }

    /// Runs a control action; a finalize reports the dataset path.
    pub fn control(&mut self, action: &ControlAction) -> Result<Option<String>> {
        match action {
            ControlAction::StartRecording => self.recording = true,
            ControlAction::StopRecording => self.recording = false,
            ControlAction::Reset => self.reset(),
            ControlAction::SelectTrajectory { id } => {
                self.selected = self
                    .trajectories
                    .iter()
                    .position(|t| &t.info.id == id)
                    .ok_or_else(|| Error::UnknownTrajectory(id.clone()))?;
                self.reset();
            }
            ControlAction::Finalize => {
                let dir = self.cfg.out_dir.clone();
                let files = self.finalize(&dir)?;
                return Ok(Some(files.dataset.display().to_string()));
            }
        }
        Ok(None)
    }

    /// Back to the start of the selected trajectory, at rest. The recording
    /// flag and the session are left alone.
    pub fn reset(&mut self) {
        self.state = at_rest(self.selected());
        self.latest = Command::new(0.0, 0.0);
        self.latest_at = None;
    }

    /// Writes the session and opens a fresh one. An empty session is an
    /// error and stays open.
    pub fn finalize(&mut self, dir: &Path) -> Result<SessionFiles> {
        let files = finalize_session(&self.session, dir)?;
        self.session_count += 1;
        self.session = Session::new(format!("{}-{}", self.session_prefix, self.session_count));
        Ok(files)
    }

    /// Advances one tick and returns a broadcast when one is due. While no
    /// client is connected time stands still but broadcasts continue.
    pub fn tick(&mut self) -> Result<Option<StateBroadcast>> {
        if self.is_running() {
            self.advance()?;
        } else {
            self.applied = Command::new(self.latest.steering(), 0.0);
        }
        // each tick earns broadcast_hz credits and a broadcast costs tick_hz,
        // which spreads broadcast_hz messages evenly over tick_hz ticks
        self.broadcast_credit += self.cfg.broadcast_hz;
        if self.broadcast_credit >= self.cfg.tick_hz {
            self.broadcast_credit -= self.cfg.tick_hz;
            return Ok(Some(self.snapshot()));
        }
        Ok(None)
    }

    fn advance(&mut self) -> Result<()> {
        let t = self.time();
        let stale = self.latest_at.is_none_or(|at| t - at > self.cfg.dead_man_seconds);
        self.applied = if stale { Command::new(self.latest.steering(), 0.0) } else { self.latest };
        let per_record = (self.cfg.tick_hz / self.cfg.record_hz) as u64;
        if self.recording && self.ticks.is_multiple_of(per_record) {
            let traj = &self.trajectories[self.selected];
            let sample = Sample {
                e: live_error(traj, &self.state, self.cfg.preview_time),
                u: self.applied,
                source: Source::Hil,
                traj_id: traj.info.id.clone(),
                t,
            };
            self.session.push(sample, &self.state);
        }
        let substeps = self.cfg.plant_rate_hz / self.cfg.tick_hz;
        let dt = 1.0 / self.cfg.plant_rate_hz as f64;
        for _ in 0..substeps {
            self.state = step(&self.state, &self.applied, dt, &self.cfg.vehicle)?;
        }
        self.ticks += 1;
        Ok(())
    }

    /// The broadcast for the current instant.
    pub fn snapshot(&self) -> StateBroadcast {
        let traj = self.selected();
        let path = &traj.path;
        let fix = zerotrack::control::locate(path, self.state.position(), None);
        let e = live_error(traj, &self.state, self.cfg.preview_time);
        let spacing = REFERENCE_WINDOW_METERS / MAX_REFERENCE_POINTS as f64;
        let reference = (0..MAX_REFERENCE_POINTS)
            .map(|k| fix.s + k as f64 * spacing)
            .take_while(|&s| path.is_closed() || s <= path.length())
            .map(|s| {
                let r = path.sample_at(s);
                [r.x, r.y]
            })
            .collect();
        StateBroadcast {
            v: PROTOCOL_VERSION,
            session: self.session.id.clone(),
            t: self.time(),
            x: self.state.x,
            y: self.state.y,
            theta: self.state.theta,
            vel: self.state.v.max(0.0),
            e: e.to_array(),
            reference,
            v_ref: path.sample_at(fix.s).v,
            ct_err: fix.cross_track,
            recording: self.recording,
            samples: self.session.len(),
            progress: (fix.s / path.length()).clamp(0.0, 1.0),
            trajectory: traj.info.id.clone(),
            steering: self.applied.steering(),
            throttle: self.applied.throttle(),
            running: self.is_running(),
        }
    }
}

fn at_rest(traj: &Trajectory) -> VehicleState {
    VehicleState { v: 0.0, ..traj.path.start_state() }
}
