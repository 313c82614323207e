use crate::error::{Error, Result};
use crate::paths::ReferencePath;

use super::run::RunTrace;

/// Speeds measured while the vehicle was nearest to a run of samples that
/// share one reference speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSpeed {
    /// First and last sample index of the run, inclusive.
    pub first: usize,
    pub last: usize,
    pub target: f64,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Cross-track error binned by reference index over all repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    /// Mean error per path sample; NaN where no record landed.
    pub per_index_mean: Vec<f64>,
    pub per_index_count: Vec<usize>,
    /// Mean and max over every record of every trace.
    pub mean: f64,
    pub max: f64,
    pub segments: Vec<SegmentSpeed>,
}

/// Aggregates the distances already stored in each record. Traces are
/// assumed to come from runs on `path`.
pub fn evaluate(traces: &[RunTrace], path: &ReferencePath) -> Result<ErrorSummary> {
    let total: usize = traces.iter().map(|t| t.records.len()).sum();
    if total == 0 {
        return Err(Error::InvalidParameter("no trace records to evaluate".into()));
    }
    let n = path.len();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    let (mut all, mut max) = (0.0, 0.0f64);
    for r in traces.iter().flat_map(|t| &t.records) {
        if r.ref_idx >= n {
            return Err(Error::InvalidParameter(format!(
                "record references sample {} of a {n}-sample path",
                r.ref_idx
            )));
        }
        sums[r.ref_idx] += r.ct_err;
        counts[r.ref_idx] += 1;
        all += r.ct_err;
        max = max.max(r.ct_err);
    }
    let per_index_mean = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect();
    Ok(ErrorSummary {
        per_index_mean,
        per_index_count: counts,
        mean: all / total as f64,
        max,
        segments: segment_speeds(traces, path),
    })
}

/// Maximal runs of at least two consecutive samples with the same reference
/// speed. Ramps, where the speed changes every sample, are skipped.
pub fn constant_speed_runs(path: &ReferencePath) -> Vec<(usize, usize, f64)> {
    let s = path.samples();
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=s.len() {
        if i == s.len() || s[i].v != s[start].v {
            if i - start >= 2 {
                runs.push((start, i - 1, s[start].v));
            }
            start = i;
        }
    }
    runs
}

fn segment_speeds(traces: &[RunTrace], path: &ReferencePath) -> Vec<SegmentSpeed> {
    constant_speed_runs(path)
        .into_iter()
        .map(|(first, last, target)| {
            let speeds: Vec<f64> = traces
                .iter()
                .flat_map(|t| &t.records)
                .filter(|r| (first..=last).contains(&r.ref_idx))
                .map(|r| r.truth.v)
                .collect();
            let count = speeds.len();
            SegmentSpeed {
                first,
                last,
                target,
                count,
                mean: if count > 0 { speeds.iter().sum::<f64>() / count as f64 } else { f64::NAN },
                min: speeds.iter().copied().fold(f64::NAN, f64::min),
                max: speeds.iter().copied().fold(f64::NAN, f64::max),
            }
        })
        .collect()
}
