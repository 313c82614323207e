use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::MpcConfig;
use crate::dynamics::VehicleParams;
use crate::error::{Error, Result};
use crate::estimator::NoiseConfig;
use crate::imitation::{CollectConfig, Perturbation, TrainConfig};
use crate::paths::{
    evaluation_course, make_circle, make_line, training_family, CourseOptions, Direction,
    FamilySpeed, ReferencePath, SpeedProfile, DEFAULT_SPACING,
};

/// Everything one experiment needs, loadable from a single TOML file.
/// Every block and field is optional and falls back to its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub repetitions: usize,
    /// Simulated seconds per run; one lap at the reference speed when absent.
    pub duration: Option<f64>,
    pub control_rate_hz: u32,
    pub plant_rate_hz: u32,
    /// A run stops early once the cross-track error exceeds this, meters.
    pub bail_out_distance: f64,
    pub vehicle: VehicleParams,
    pub plant: PlantPerturbation,
    pub path: PathSpec,
    pub controller: ControllerSpec,
    pub mpc: MpcConfig,
    pub sensors: SensorConfig,
    pub initial_offset: InitialOffset,
    pub collect: CollectConfig,
    pub train: TrainConfig,
    pub hil: HilSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            repetitions: 5,
            duration: None,
            control_rate_hz: 10,
            plant_rate_hz: 100,
            bail_out_distance: 10.0,
            vehicle: VehicleParams::default(),
            plant: PlantPerturbation::default(),
            path: PathSpec::default(),
            controller: ControllerSpec::default(),
            mpc: MpcConfig::default(),
            sensors: SensorConfig::default(),
            initial_offset: InitialOffset::default(),
            collect: CollectConfig::default(),
            train: TrainConfig::default(),
            hil: HilSettings::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if self.control_rate_hz == 0 || !self.plant_rate_hz.is_multiple_of(self.control_rate_hz) {
            return Err(Error::Config(format!(
                "plant rate {} Hz must be a positive multiple of control rate {} Hz",
                self.plant_rate_hz, self.control_rate_hz
            )));
        }
        for (name, rate) in [("heading", self.sensors.heading_rate_hz), ("position", self.sensors.position_rate_hz)] {
            if rate == 0 || !self.plant_rate_hz.is_multiple_of(rate) {
                return Err(Error::Config(format!(
                    "{name} sensor rate {rate} Hz must divide the plant rate {} Hz",
                    self.plant_rate_hz
                )));
            }
        }
        if let Some(d) = self.duration {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Config(format!("duration must be > 0, got {d}")));
            }
        }
        if !(self.bail_out_distance > 0.0) {
            return Err(Error::Config("bail_out_distance must be > 0".into()));
        }
        self.vehicle.validate()?;
        self.plant.apply(&self.vehicle).validate()?;
        self.mpc.validate()?;
        self.sensors.noise.validate()?;
        self.collect.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_rate_hz as f64
    }

    /// Control steps in one run on `path`.
    pub fn steps(&self, path: &ReferencePath) -> usize {
        let duration = self.duration.unwrap_or_else(|| lap_time(path));
        (duration * self.control_rate_hz as f64).round().max(1.0) as usize
    }
}

/// Time to traverse `path` once at its reference speeds.
pub fn lap_time(path: &ReferencePath) -> f64 {
    let s = path.samples();
    let n = s.len();
    let segments = if path.is_closed() { n } else { n - 1 };
    (0..segments)
        .map(|i| {
            let (a, b) = (s[i], s[(i + 1) % n]);
            let ds = a.distance_to(b.x, b.y);
            let v = 0.5 * (a.v + b.v);
            if v > 1e-9 {
                ds / v
            } else {
                0.0
            }
        })
        .sum()
}

/// Model mismatch between the controller's vehicle model and the plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantPerturbation {
    pub wheelbase_scale: f64,
    pub torque_scale: f64,
    /// Added to every steering command before it reaches the plant.
    pub steering_bias: f64,
}

impl Default for PlantPerturbation {
    fn default() -> Self {
        Self {
            wheelbase_scale: 1.0,
            torque_scale: 1.0,
            steering_bias: 0.0,
        }
    }
}

impl PlantPerturbation {
    pub fn apply(&self, p: &VehicleParams) -> VehicleParams {
        VehicleParams {
            wheelbase: p.wheelbase * self.wheelbase_scale,
            torque_stall: p.torque_stall * self.torque_scale,
            ..*p
        }
    }
}

/// Which reference path to drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    /// The waypoint evaluation loop.
    Course {
        #[serde(default = "default_course_profile")]
        profile: SpeedProfile,
        #[serde(default)]
        options: CourseOptions,
    },
    Circle {
        radius: f64,
        #[serde(default = "default_direction")]
        direction: Direction,
        #[serde(default = "default_course_profile")]
        profile: SpeedProfile,
        #[serde(default = "default_spacing")]
        spacing: f64,
    },
    Line {
        length: f64,
        #[serde(default = "default_course_profile")]
        profile: SpeedProfile,
        #[serde(default = "default_spacing")]
        spacing: f64,
    },
    /// One of the seven training trajectories by id.
    Family {
        id: String,
        #[serde(default)]
        speed: FamilySpeed,
    },
    /// A path previously written with `ReferencePath::write_csv`.
    Csv { file: PathBuf },
}

fn default_course_profile() -> SpeedProfile {
    SpeedProfile::constant(1.0)
}

fn default_direction() -> Direction {
    Direction::Ccw
}

fn default_spacing() -> f64 {
    DEFAULT_SPACING
}

impl Default for PathSpec {
    fn default() -> Self {
        PathSpec::Course {
            profile: default_course_profile(),
            options: CourseOptions::default(),
        }
    }
}

impl PathSpec {
    /// Corner speed 1 m/s, straights 2 m/s.
    pub fn multi_speed_course() -> Self {
        PathSpec::Course {
            profile: SpeedProfile::Corners {
                corner: 1.0,
                straight: 2.0,
                ramp: 4.0,
            },
            options: CourseOptions::default(),
        }
    }

    pub fn build(&self) -> Result<ReferencePath> {
        match self {
            PathSpec::Course { profile, options } => evaluation_course(profile, options),
            PathSpec::Circle {
                radius,
                direction,
                profile,
                spacing,
            } => make_circle(*radius, *direction, profile, *spacing),
            PathSpec::Line { length, profile, spacing } => make_line(*length, profile, *spacing),
            PathSpec::Family { id, speed } => training_family(*speed, DEFAULT_SPACING)?
                .into_iter()
                .find(|p| &p.id == id)
                .map(|p| p.path)
                .ok_or_else(|| Error::Config(format!("unknown training trajectory {id:?}"))),
            PathSpec::Csv { file } => ReferencePath::read_csv(file),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    #[default]
    Mpc,
    Nn,
    Playback,
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mpc" => Ok(ControllerKind::Mpc),
            "nn" => Ok(ControllerKind::Nn),
            "playback" => Ok(ControllerKind::Playback),
            other => Err(Error::Config(format!("unknown controller {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    /// Policy file for `nn`.
    pub model: Option<PathBuf>,
    /// Recorded dataset for `playback`.
    pub recording: Option<PathBuf>,
    /// Restricts playback to one trajectory id of the recording.
    pub trajectory: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorMode {
    /// Position and heading read exactly; the filter only supplies speed.
    #[default]
    Truth,
    /// Noisy measurements; the controller sees the full filter estimate.
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub mode: SensorMode,
    pub noise: NoiseConfig,
    pub position_rate_hz: u32,
    pub heading_rate_hz: u32,
    /// Prior standard deviations for `[x, y, theta, v]`.
    pub initial_std: [f64; 4],
    /// Relative error of the initial speed estimate.
    pub initial_speed_error: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            mode: SensorMode::Truth,
            noise: NoiseConfig::default(),
            position_rate_hz: 10,
            heading_rate_hz: 100,
            initial_std: [0.02, 0.02, 0.01, 0.5],
            initial_speed_error: 0.0,
        }
    }
}

/// Start offset from the first path sample: a fixed part plus a seeded
/// uniform jitter that differs between repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialOffset {
    /// Positive to the left of the path, meters.
    pub lateral: f64,
    pub heading: f64,
    pub speed: f64,
    pub jitter: Perturbation,
}

impl Default for InitialOffset {
    fn default() -> Self {
        Self {
            lateral: 0.0,
            heading: 0.0,
            speed: 0.0,
            jitter: Perturbation {
                lateral: 0.1,
                heading: 0.05,
                speed: 0.0,
            },
        }
    }
}

/// Settings of the human-in-the-loop server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HilSettings {
    pub bind: String,
    pub tick_hz: u32,
    pub broadcast_hz: u32,
    pub record_hz: u32,
    /// Throttle drops to zero when no command arrived for this long.
    pub dead_man_seconds: f64,
    /// Simulated seconds per wall-clock second.
    pub time_scale: f64,
    pub trajectories: FamilySpeed,
    /// Directory for finished session datasets.
    pub out_dir: PathBuf,
}

impl Default for HilSettings {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8765".into(),
            tick_hz: 50,
            broadcast_hz: 20,
            record_hz: 10,
            dead_man_seconds: 0.5,
            time_scale: 1.0,
            trajectories: FamilySpeed::default(),
            out_dir: PathBuf::from("sessions"),
        }
    }
}
