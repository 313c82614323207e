use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::control::ErrorState;
use crate::dynamics::Command;
use crate::error::{Error, Result};

pub const DATASET_HEADER: [&str; 9] = [
    "e1", "e2", "e3", "e4", "steering", "throttle", "source", "traj_id", "t",
];

/// Where a sample's command came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Mpc,
    Hil,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Mpc => "mpc",
            Source::Hil => "hil",
        })
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mpc" => Ok(Source::Mpc),
            "hil" => Ok(Source::Hil),
            other => Err(format!("unknown source tag {other:?}")),
        }
    }
}

/// One (error state, command) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub e: ErrorState,
    pub u: Command,
    pub source: Source,
    pub traj_id: String,
    pub t: f64,
}

/// Per-input mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            mean: [0.0; 4],
            std: [1.0; 4],
        }
    }
}

impl Normalization {
    /// Population statistics; columns without spread get unit scale.
    pub fn from_samples(samples: &[Sample]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let n = samples.len() as f64;
        let mut mean = [0.0; 4];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(s.e.to_array()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; 4];
        for s in samples {
            for ((acc, v), m) in var.iter_mut().zip(s.e.to_array()).zip(mean) {
                *acc += (v - m).powi(2);
            }
        }
        let std = var.map(|v| {
            let sd = (v / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        });
        Self { mean, std }
    }

    pub fn apply(&self, e: &ErrorState) -> [f64; 4] {
        let raw = e.to_array();
        std::array::from_fn(|i| (raw[i] - self.mean[i]) / self.std[i])
    }

    pub fn is_valid(&self) -> bool {
        self.mean.iter().all(|m| m.is_finite())
            && self.std.iter().all(|s| s.is_finite() && *s > 0.0)
    }
}

/// Samples plus the input statistics derived from them.
///
/// The statistics are recomputed on every mutation, so they always describe
/// the current samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    samples: Vec<Sample>,
    normalization: Normalization,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        let normalization = Normalization::from_samples(&samples);
        Self {
            samples,
            normalization,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn extend(&mut self, more: impl IntoIterator<Item = Sample>) {
        self.samples.extend(more);
        self.normalization = Normalization::from_samples(&self.samples);
    }

    pub fn merge(mut self, other: Dataset) -> Self {
        self.extend(other.samples);
        self
    }

    /// The samples plus their left-right mirror images.
    ///
    /// The vehicle model is symmetric under reflection about its heading, so
    /// negating the lateral and heading errors together with the steering
    /// command yields another valid expert sample.
    pub fn with_mirrored(&self) -> Self {
        let mirrored = self.samples.iter().map(|s| Sample {
            e: ErrorState::new(s.e.e1, -s.e.e2, -s.e.e3, s.e.e4),
            u: Command::new(-s.u.steering(), s.u.throttle()),
            ..s.clone()
        });
        Self::new(self.samples.iter().cloned().chain(mirrored).collect())
    }

    /// Distinct trajectory ids in first-seen order.
    pub fn trajectory_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = Vec::new();
        for s in &self.samples {
            if !ids.contains(&s.traj_id.as_str()) {
                ids.push(&s.traj_id);
            }
        }
        ids
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(file))
    }

    /// Floats use Rust's shortest round-trip formatting, so reading the file
    /// back reproduces every value exactly.
    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(DATASET_HEADER)?;
        for s in &self.samples {
            w.write_record([
                s.e.e1.to_string(),
                s.e.e2.to_string(),
                s.e.e3.to_string(),
                s.e.e4.to_string(),
                s.u.steering().to_string(),
                s.u.throttle().to_string(),
                s.source.to_string(),
                s.traj_id.clone(),
                s.t.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<dataset>", e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<(Self, IngestReport)> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(file)
    }

    /// Parses a dataset, keeping each row's source tag. Commands outside
    /// their ranges are clamped and counted.
    pub fn read_csv_from<R: Read>(reader: R) -> Result<(Self, IngestReport)> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut records = r.records();
        let header = match records.next() {
            None => return Err(Error::Dataset("empty file".into())),
            Some(h) => h?,
        };
        if header.iter().map(str::trim).ne(DATASET_HEADER) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {}", DATASET_HEADER.join(",")),
            });
        }
        let mut report = IngestReport::default();
        let mut samples = Vec::new();
        for (i, rec) in records.enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            samples.push(parse_row(&rec, line, &mut report)?);
        }
        if samples.is_empty() {
            return Err(Error::Dataset("no samples after the header".into()));
        }
        Ok((Self::new(samples), report))
    }
}

/// Non-fatal findings while reading a dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestReport {
    /// Rows whose steering or throttle had to be clamped.
    pub clamped: usize,
}

fn parse_row(rec: &csv::StringRecord, line: usize, report: &mut IngestReport) -> Result<Sample> {
    if rec.len() != DATASET_HEADER.len() {
        return Err(Error::Parse {
            line,
            message: format!("expected {} fields, found {}", DATASET_HEADER.len(), rec.len()),
        });
    }
    let num = |k: usize| -> Result<f64> {
        let field = rec[k].trim();
        let v: f64 = field.parse().map_err(|_| Error::Parse {
            line,
            message: format!("{}: cannot parse {field:?}", DATASET_HEADER[k]),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("{}: non-finite value", DATASET_HEADER[k]),
            });
        }
        Ok(v)
    };
    let e = ErrorState::new(num(0)?, num(1)?, num(2)?, num(3)?);
    let (steering, throttle) = (num(4)?, num(5)?);
    if !Command::in_range(steering, throttle) {
        report.clamped += 1;
    }
    let source = rec[6].trim().parse().map_err(|message| Error::Parse { line, message })?;
    Ok(Sample {
        e,
        u: Command::new(steering, throttle),
        source,
        traj_id: rec[7].trim().to_string(),
        t: num(8)?,
    })
}

/// Reads a human-driving recording. Every sample is tagged as HIL data
/// regardless of the tag in the file.
pub fn ingest_hil_recording(path: &Path) -> Result<(Dataset, IngestReport)> {
    let (data, report) = Dataset::read_csv(path)?;
    if report.clamped > 0 {
        log::warn!("{}: clamped {} out-of-range commands", path.display(), report.clamped);
    }
    let samples = data
        .samples
        .into_iter()
        .map(|s| Sample {
            source: Source::Hil,
            ..s
        })
        .collect();
    Ok((Dataset::new(samples), report))
}
