//! Recorded sessions and their files.
//!
//! A finished session is two CSV files: the dataset itself, in the format
//! `zerotrack::imitation::Dataset` reads, and a companion `_states` file
//! holding the true vehicle state at every recorded sample. The companion
//! lets the error states be recomputed offline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zerotrack::control::{locate, tracking_error, ErrorState};
use zerotrack::imitation::{Dataset, Sample};
use zerotrack::VehicleState;

use crate::error::{Error, Result};
use crate::trajectories::Trajectory;

/// One row of the companion states file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRow {
    pub t: f64,
    pub traj_id: String,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

impl StateRow {
    pub fn state(&self) -> VehicleState {
        VehicleState::new(self.x, self.y, self.theta, self.v)
    }
}

/// Samples recorded since the last finalize.
#[derive(Debug, Clone, Default)]
pub struct Session {
    pub id: String,
    pub samples: Vec<Sample>,
    pub states: Vec<StateRow>,
}

impl Session {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into(), ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, sample: Sample, state: &VehicleState) {
        self.states.push(StateRow {
            t: sample.t,
            traj_id: sample.traj_id.clone(),
            x: state.x,
            y: state.y,
            theta: state.theta,
            v: state.v,
        });
        self.samples.push(sample);
    }
}

/// Paths of a finalized session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionFiles {
    pub dataset: PathBuf,
    pub states: PathBuf,
}

/// Writes `<dir>/<id>.csv` and `<dir>/<id>_states.csv`, creating `dir`.
pub fn finalize_session(session: &Session, dir: &Path) -> Result<SessionFiles> {
    if session.is_empty() {
        return Err(Error::EmptySession(session.id.clone()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = SessionFiles {
        dataset: dir.join(format!("{}.csv", session.id)),
        states: dir.join(format!("{}_states.csv", session.id)),
    };
    let file = std::fs::File::create(&files.dataset).map_err(|e| Error::io(&files.dataset, e))?;
    Dataset::new(session.samples.clone())
        .write_csv_to(std::io::BufWriter::new(file))
        .map_err(|e| match e {
            zerotrack::Error::Io { source, .. } => Error::io(&files.dataset, source),
            other => other.into(),
        })?;
    let mut w = csv::Writer::from_path(&files.states).map_err(|e| Error::csv(&files.states, e))?;
    for row in &session.states {
        w.serialize(row).map_err(|e| Error::csv(&files.states, e))?;
    }
    w.flush().map_err(|e| Error::io(&files.states, e))?;
    Ok(files)
}

pub fn read_states(path: &Path) -> Result<Vec<StateRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::csv(path, e))).collect()
}

/// The error state of each row, computed from scratch against its
/// trajectory the same way the live recorder does.
pub fn recompute_error_states(
    rows: &[StateRow],
    trajectories: &[Trajectory],
    preview_time: f64,
) -> Result<Vec<ErrorState>> {
    rows.iter()
        .map(|row| {
            let traj = trajectories
                .iter()
                .find(|t| t.info.id == row.traj_id)
                .ok_or_else(|| Error::UnknownTrajectory(row.traj_id.clone()))?;
            Ok(live_error(traj, &row.state(), preview_time))
        })
        .collect()
}

/// Exhaustive nearest-point search, so the result depends only on the state.
pub(crate) fn live_error(traj: &Trajectory, q: &VehicleState, preview_time: f64) -> ErrorState {
    let fix = locate(&traj.path, q.position(), None);
    tracking_error(&traj.path, q, &fix, preview_time)
}
