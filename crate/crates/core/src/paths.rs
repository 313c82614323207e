//! Reference trajectories: training circles and lines, the waypoint course,
//! closest-point queries and CSV persistence.
//!
//! Every path is built from analytic pieces (segments, circular arcs,
//! sine-modulated segments) and resampled at uniform arc-length spacing, so
//! sample positions lie exactly on the underlying curve.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::angle::{angle_diff, wrap_angle};
use crate::error::{Error, Result};

pub const DEFAULT_SPACING: f64 = 0.1;

/// Half-width of the warm-start search window, in samples.
pub const WARM_START_WINDOW: usize = 50;

/// One point of a reference trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceSample {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    /// Cumulative arc length from the first sample, meters.
    pub s: f64,
    /// Signed curvature, 1/m, positive when turning left.
    pub curvature: f64,
}

impl ReferenceSample {
    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

/// Ordered samples along a path, optionally closed into a loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    samples: Vec<ReferenceSample>,
    closed: bool,
    length: f64,
    corners: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Ccw,
    Cw,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Ccw => 1.0,
            Direction::Cw => -1.0,
        }
    }
}

/// Target speed along a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedProfile {
    Constant { speed: f64 },
    /// First half of the path at `first`, second half at `second`. The change
    /// ramps linearly over `ramp` meters starting at the boundary; closed
    /// paths ramp back to `first` after s = 0.
    Halves { first: f64, second: f64, ramp: f64 },
    /// `corner` speed on the tagged corners of a course and `straight`
    /// elsewhere, blending linearly over `ramp` meters on either side.
    Corners { corner: f64, straight: f64, ramp: f64 },
    /// Explicit arc-length intervals that must tile [0, length]; each interval
    /// ramps in from the previous speed over `ramp` meters.
    Segments { segments: Vec<SpeedSegment>, ramp: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSegment {
    pub start: f64,
    pub end: f64,
    pub speed: f64,
}

impl SpeedProfile {
    pub fn constant(speed: f64) -> Self {
        SpeedProfile::Constant { speed }
    }

    fn speeds(&self) -> Vec<f64> {
        match self {
            SpeedProfile::Constant { speed } => vec![*speed],
            SpeedProfile::Halves { first, second, .. } => vec![*first, *second],
            SpeedProfile::Corners { corner, straight, .. } => vec![*corner, *straight],
            SpeedProfile::Segments { segments, .. } => segments.iter().map(|s| s.speed).collect(),
        }
    }

    fn validate(&self, length: f64) -> Result<()> {
        for v in self.speeds() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("speed must be >= 0, got {v}")));
            }
        }
        let ramp = match self {
            SpeedProfile::Constant { .. } => 0.0,
            SpeedProfile::Halves { ramp, .. }
            | SpeedProfile::Corners { ramp, .. }
            | SpeedProfile::Segments { ramp, .. } => *ramp,
        };
        if !(ramp.is_finite() && ramp >= 0.0) {
            return Err(Error::InvalidParameter(format!("ramp must be >= 0, got {ramp}")));
        }
        if let SpeedProfile::Segments { segments, .. } = self {
            let tol = 1e-6 * length.max(1.0);
            let mut cursor = 0.0;
            for seg in segments {
                if (seg.start - cursor).abs() > tol || seg.end <= seg.start {
                    return Err(Error::InvalidParameter(format!(
                        "speed segments must tile [0, {length}] without gaps or overlap (at s = {})",
                        seg.start
                    )));
                }
                cursor = seg.end;
            }
            if (cursor - length).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "speed segments end at {cursor}, path length is {length}"
                )));
            }
        }
        Ok(())
    }

    /// Speed at arc length `s` on a path of `length`.
    fn speed_at(&self, s: f64, length: f64, closed: bool, corners: &[(f64, f64)]) -> f64 {
        match self {
            SpeedProfile::Constant { speed } => *speed,
            SpeedProfile::Halves { first, second, ramp } => {
                let half = 0.5 * length;
                let segs = [
                    SpeedSegment { start: 0.0, end: half, speed: *first },
                    SpeedSegment { start: half, end: length, speed: *second },
                ];
                segment_speed(&segs, *ramp, s, closed)
            }
            SpeedProfile::Segments { segments, ramp } => segment_speed(segments, *ramp, s, closed),
            SpeedProfile::Corners { corner, straight, ramp } => {
                let gap = corners
                    .iter()
                    .map(|&(a, b)| distance_to_span(s, a, b, length, closed))
                    .fold(f64::INFINITY, f64::min);
                if gap <= 0.0 {
                    *corner
                } else if *ramp <= 0.0 || gap >= *ramp {
                    *straight
                } else {
                    corner + (straight - corner) * gap / ramp
                }
            }
        }
    }
}

fn segment_speed(segments: &[SpeedSegment], ramp: f64, s: f64, closed: bool) -> f64 {
    let idx = segments
        .iter()
        .position(|seg| s < seg.end)
        .unwrap_or(segments.len() - 1);
    let current = segments[idx].speed;
    let previous = if idx > 0 {
        segments[idx - 1].speed
    } else if closed {
        segments[segments.len() - 1].speed
    } else {
        current
    };
    let into = s - segments[idx].start;
    if ramp > 0.0 && into < ramp {
        previous + (current - previous) * (into / ramp).max(0.0)
    } else {
        current
    }
}

fn distance_to_span(s: f64, a: f64, b: f64, length: f64, closed: bool) -> f64 {
    if s >= a && s <= b {
        return 0.0;
    }
    let before = a - s;
    let after = s - b;
    if closed {
        let d1 = before.rem_euclid(length);
        let d2 = after.rem_euclid(length);
        d1.min(d2)
    } else if s < a {
        before
    } else {
        after
    }
}

/// Shape applied to a course segment between two waypoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentShape {
    #[default]
    Straight,
    /// Lateral sine wave under a half-sine envelope, tangent to the chord at
    /// both ends.
    Sinusoid,
    /// Circular arc bulging to the outside of the loop.
    Arc,
}

/// Geometry knobs for [`make_course`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CourseOptions {
    /// Fillet radius applied at every waypoint that still turns, meters.
    pub corner_radius: f64,
    pub sinusoid_amplitude: f64,
    pub sinusoid_periods: f64,
    /// Half of the arc's central angle, radians.
    pub arc_half_angle: f64,
    pub spacing: f64,
}

impl Default for CourseOptions {
    fn default() -> Self {
        Self {
            corner_radius: 5.0,
            sinusoid_amplitude: 2.0,
            sinusoid_periods: 2.0,
            arc_half_angle: PI / 6.0,
            spacing: DEFAULT_SPACING,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Line {
        start: (f64, f64),
        heading: f64,
        length: f64,
    },
    Arc {
        center: (f64, f64),
        radius: f64,
        /// Polar angle of the start point around the center.
        start_angle: f64,
        /// Signed swept angle, positive counter-clockwise.
        sweep: f64,
    },
    Sinusoid {
        start: (f64, f64),
        heading: f64,
        length: f64,
        amplitude: f64,
        periods: f64,
    },
}

struct PieceSample {
    x: f64,
    y: f64,
    theta: f64,
    curvature: f64,
}

impl Piece {
    fn eval(&self, u: f64) -> PieceSample {
        match *self {
            Piece::Line { start, heading, length } => PieceSample {
                x: start.0 + u * length * heading.cos(),
                y: start.1 + u * length * heading.sin(),
                theta: heading,
                curvature: 0.0,
            },
            Piece::Arc { center, radius, start_angle, sweep } => {
                let phi = start_angle + u * sweep;
                PieceSample {
                    x: center.0 + radius * phi.cos(),
                    y: center.1 + radius * phi.sin(),
                    theta: phi + sweep.signum() * PI / 2.0,
                    curvature: sweep.signum() / radius,
                }
            }
            Piece::Sinusoid { start, heading, length, amplitude, periods } => {
                let w = TAU * periods;
                let (sw, cw) = (w * u).sin_cos();
                let (se, ce) = (PI * u).sin_cos();
                let off = amplitude * sw * se;
                let d_off = amplitude * (w * cw * se + PI * sw * ce);
                let dd_off = amplitude * (-(w * w + PI * PI) * sw * se + 2.0 * w * PI * cw * ce);
                let (dx, dy) = (heading.cos(), heading.sin());
                let (nx, ny) = (-dy, dx);
                // local frame derivatives w.r.t. u
                let (tx, ty) = (length, d_off);
                let speed = tx.hypot(ty);
                let curvature = (tx * dd_off) / speed.powi(3);
                PieceSample {
                    x: start.0 + u * length * dx + off * nx,
                    y: start.1 + u * length * dy + off * ny,
                    theta: heading + ty.atan2(tx),
                    curvature,
                }
            }
        }
    }

    /// Arc-length table over the unit parameter, `(u, s)` pairs.
    fn length_table(&self) -> Vec<(f64, f64)> {
        match *self {
            Piece::Line { length, .. } => vec![(0.0, 0.0), (1.0, length)],
            Piece::Arc { radius, sweep, .. } => vec![(0.0, 0.0), (1.0, radius * sweep.abs())],
            Piece::Sinusoid { length, .. } => {
                let n = ((length / 0.01).ceil() as usize).max(64);
                let mut table = Vec::with_capacity(n + 1);
                let mut s = 0.0;
                let mut prev = self.eval(0.0);
                table.push((0.0, 0.0));
                for i in 1..=n {
                    let u = i as f64 / n as f64;
                    let cur = self.eval(u);
                    s += (cur.x - prev.x).hypot(cur.y - prev.y);
                    table.push((u, s));
                    prev = cur;
                }
                table
            }
        }
    }
}

fn param_at(table: &[(f64, f64)], s: f64) -> f64 {
    let i = table.partition_point(|&(_, ts)| ts < s).clamp(1, table.len() - 1);
    let (u0, s0) = table[i - 1];
    let (u1, s1) = table[i];
    if s1 <= s0 {
        u0
    } else {
        u0 + (u1 - u0) * ((s - s0) / (s1 - s0)).clamp(0.0, 1.0)
    }
}

struct Geometry {
    samples: Vec<ReferenceSample>,
    length: f64,
    corners: Vec<(f64, f64)>,
}

/// Resamples a chain of pieces at uniform spacing `<= spacing`.
fn sample_pieces(pieces: &[(Piece, bool)], spacing: f64, closed: bool) -> Geometry {
    let tables: Vec<_> = pieces.iter().map(|(p, _)| p.length_table()).collect();
    let lengths: Vec<f64> = tables.iter().map(|t| t.last().unwrap().1).collect();
    let length: f64 = lengths.iter().sum();
    let segments = ((length / spacing) - 1e-9).ceil().max(1.0) as usize;
    let ds = length / segments as f64;
    let count = if closed { segments } else { segments + 1 };

    let mut corners = Vec::new();
    let mut offset = 0.0;
    for ((_, is_corner), len) in pieces.iter().zip(&lengths) {
        if *is_corner {
            corners.push((offset, offset + len));
        }
        offset += len;
    }

    let mut samples = Vec::with_capacity(count);
    let mut piece = 0;
    let mut piece_start = 0.0;
    for i in 0..count {
        let s = i as f64 * ds;
        while piece + 1 < pieces.len() && s >= piece_start + lengths[piece] {
            piece_start += lengths[piece];
            piece += 1;
        }
        let local = (s - piece_start).clamp(0.0, lengths[piece]);
        let u = param_at(&tables[piece], local);
        let ps = pieces[piece].0.eval(u);
        samples.push(ReferenceSample {
            x: ps.x,
            y: ps.y,
            theta: wrap_angle(ps.theta),
            v: 0.0,
            s,
            curvature: ps.curvature,
        });
    }
    Geometry { samples, length, corners }
}

impl ReferencePath {
    fn from_geometry(geometry: Geometry, closed: bool, profile: &SpeedProfile) -> Result<Self> {
        profile.validate(geometry.length)?;
        let mut path = ReferencePath {
            samples: geometry.samples,
            closed,
            length: geometry.length,
            corners: geometry.corners,
        };
        path.apply_profile(profile);
        path.validate()?;
        Ok(path)
    }

    /// Builds a path from explicit samples; `s` is recomputed from positions.
    pub fn from_samples(mut samples: Vec<ReferenceSample>, closed: bool) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidPath(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        let mut s = 0.0;
        samples[0].s = 0.0;
        for i in 1..samples.len() {
            s += (samples[i].x - samples[i - 1].x).hypot(samples[i].y - samples[i - 1].y);
            samples[i].s = s;
        }
        let length = if closed {
            let (first, last) = (samples[0], samples[samples.len() - 1]);
            s + (first.x - last.x).hypot(first.y - last.y)
        } else {
            s
        };
        let mut path = ReferencePath {
            samples,
            closed,
            length,
            corners: Vec::new(),
        };
        path.estimate_curvature();
        path.validate()?;
        Ok(path)
    }

    fn estimate_curvature(&mut self) {
        let n = self.samples.len();
        let mut kappa = vec![0.0; n];
        for (i, k) in kappa.iter_mut().enumerate() {
            let (a, b) = match (i, self.closed) {
                (0, false) => (0, 1.min(n - 1)),
                (i, false) if i == n - 1 => (n - 2, n - 1),
                (i, _) => ((i + n - 1) % n, (i + 1) % n),
            };
            let dtheta = angle_diff(self.samples[b].theta, self.samples[a].theta);
            let ds = self.arc_between(a, b);
            *k = if ds > 0.0 { dtheta / ds } else { 0.0 };
        }
        for (sample, k) in self.samples.iter_mut().zip(kappa) {
            sample.curvature = k;
        }
    }

    fn arc_between(&self, a: usize, b: usize) -> f64 {
        let d = self.samples[b].s - self.samples[a].s;
        if d < 0.0 {
            d + self.length
        } else {
            d
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::InvalidPath("need at least 2 samples".into()));
        }
        for w in self.samples.windows(2) {
            if w[1].s <= w[0].s {
                return Err(Error::InvalidPath(format!(
                    "arc length not strictly increasing at s = {}",
                    w[1].s
                )));
            }
        }
        if self.samples.iter().any(|p| {
            !(p.x.is_finite() && p.y.is_finite() && p.theta.is_finite() && p.v.is_finite())
        }) {
            return Err(Error::NonFinite("path sample".into()));
        }
        Ok(())
    }

    /// Re-assigns target speeds from a profile.
    pub fn apply_profile(&mut self, profile: &SpeedProfile) {
        let (length, closed) = (self.length, self.closed);
        for i in 0..self.samples.len() {
            let s = self.samples[i].s;
            self.samples[i].v = profile.speed_at(s, length, closed, &self.corners);
        }
    }

    pub fn with_profile(mut self, profile: &SpeedProfile) -> Result<Self> {
        profile.validate(self.length)?;
        self.apply_profile(profile);
        Ok(self)
    }

    pub fn samples(&self) -> &[ReferenceSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Total arc length; for closed paths this includes the closing span.
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Arc-length spans `(start, end)` of tagged corners.
    pub fn corners(&self) -> &[(f64, f64)] {
        &self.corners
    }

    pub fn start_state(&self) -> crate::dynamics::VehicleState {
        let p = self.samples[0];
        crate::dynamics::VehicleState::new(p.x, p.y, p.theta, p.v)
    }

    /// Interpolated sample at arc length `s`, wrapping on closed paths and
    /// clamping on open ones.
    pub fn sample_at(&self, s: f64) -> ReferenceSample {
        let n = self.samples.len();
        let s = if self.closed {
            s.rem_euclid(self.length)
        } else {
            s.clamp(0.0, self.samples[n - 1].s)
        };
        let i = self.samples.partition_point(|p| p.s <= s).max(1) - 1;
        let a = self.samples[i];
        let (b, span) = if i + 1 < n {
            (self.samples[i + 1], self.samples[i + 1].s - a.s)
        } else if self.closed {
            (self.samples[0], self.length - a.s)
        } else {
            return a;
        };
        let t = if span > 0.0 { ((s - a.s) / span).clamp(0.0, 1.0) } else { 0.0 };
        ReferenceSample {
            x: a.x + t * (b.x - a.x),
            y: a.y + t * (b.y - a.y),
            theta: wrap_angle(a.theta + t * angle_diff(b.theta, a.theta)),
            v: a.v + t * (b.v - a.v),
            s,
            curvature: a.curvature + t * (b.curvature - a.curvature),
        }
    }

    /// Arc-length distance travelled going forward from `from` to `to`.
    pub fn forward_distance(&self, from: f64, to: f64) -> f64 {
        if self.closed {
            (to - from).rem_euclid(self.length)
        } else {
            to - from
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y", "theta", "v", "s"])?;
        for p in &self.samples {
            w.write_record([
                p.x.to_string(),
                p.y.to_string(),
                p.theta.to_string(),
                p.v.to_string(),
                p.s.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads the `x,y,theta,v,s` format. A path whose last sample sits within
    /// 1.5 spacings of its first is treated as closed.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(file)
    }

    pub fn read_csv_from<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["x", "y", "theta", "v", "s"] {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header x,y,theta,v,s, got {}", header.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut samples = Vec::new();
        for (i, record) in r.records().enumerate() {
            let record = record?;
            let line = i + 2;
            let field = |k: usize| -> Result<f64> {
                record
                    .get(k)
                    .ok_or_else(|| Error::Parse { line, message: "missing column".into() })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse { line, message: e.to_string() })
            };
            samples.push(ReferenceSample {
                x: field(0)?,
                y: field(1)?,
                theta: wrap_angle(field(2)?),
                v: field(3)?,
                s: field(4)?,
                curvature: 0.0,
            });
        }
        if samples.len() < 2 {
            return Err(Error::InvalidPath("need at least 2 samples".into()));
        }
        let max_gap = samples
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
            .fold(0.0, f64::max);
        let (first, last) = (samples[0], samples[samples.len() - 1]);
        let closed = samples.len() >= 3 && (first.x - last.x).hypot(first.y - last.y) <= 1.5 * max_gap;
        let s_values: Vec<f64> = samples.iter().map(|p| p.s).collect();
        let mut path = Self::from_samples(samples, closed)?;
        // keep the stored arc length when it is consistent with the geometry
        if s_values.windows(2).all(|w| w[1] > w[0]) {
            for (p, s) in path.samples.iter_mut().zip(s_values) {
                p.s = s;
            }
        }
        Ok(path)
    }

    /// Index of the first pair of non-adjacent segments that cross, if any.
    pub fn find_self_intersection(&self) -> Option<(usize, usize)> {
        let pts: Vec<(f64, f64)> = self.samples.iter().map(|p| (p.x, p.y)).collect();
        let n = pts.len();
        let seg_count = if self.closed { n } else { n - 1 };
        let seg = |i: usize| (pts[i], pts[(i + 1) % n]);
        for i in 0..seg_count {
            let (a, b) = seg(i);
            let (minx, maxx) = (a.0.min(b.0), a.0.max(b.0));
            let (miny, maxy) = (a.1.min(b.1), a.1.max(b.1));
            for j in (i + 2)..seg_count {
                if self.closed && i == 0 && j == seg_count - 1 {
                    continue;
                }
                let (c, d) = seg(j);
                if c.0.max(d.0) < minx || c.0.min(d.0) > maxx || c.1.max(d.1) < miny || c.1.min(d.1) > maxy {
                    continue;
                }
                if segments_cross(a, b, c, d) {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

fn check_spacing(spacing: f64, max: f64) -> Result<()> {
    if spacing.is_finite() && spacing > 0.0 && spacing <= max {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "spacing {spacing} must lie in (0, {max}]"
        )))
    }
}

/// Closed circle starting at the origin heading +x.
pub fn make_circle(
    radius: f64,
    direction: Direction,
    profile: &SpeedProfile,
    spacing: f64,
) -> Result<ReferencePath> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be > 0, got {radius}")));
    }
    check_spacing(spacing, radius / 4.0)?;
    let sign = direction.sign();
    let piece = Piece::Arc {
        center: (0.0, sign * radius),
        radius,
        start_angle: -sign * PI / 2.0,
        sweep: sign * TAU,
    };
    let mut geometry = sample_pieces(&[(piece, false)], spacing, true);
    // cos(-pi/2) is not exactly zero
    geometry.samples[0].x = 0.0;
    geometry.samples[0].y = 0.0;
    ReferencePath::from_geometry(geometry, true, profile)
}

/// Open straight line along +x from the origin.
pub fn make_line(length: f64, profile: &SpeedProfile, spacing: f64) -> Result<ReferencePath> {
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::InvalidParameter(format!("length must be > 0, got {length}")));
    }
    if !(spacing.is_finite() && spacing > 0.0 && spacing < length) {
        return Err(Error::InvalidParameter(format!(
            "spacing {spacing} must lie in (0, {length})"
        )));
    }
    let piece = Piece::Line {
        start: (0.0, 0.0),
        heading: 0.0,
        length,
    };
    ReferencePath::from_geometry(sample_pieces(&[(piece, false)], spacing, false), false, profile)
}

/// Closed course through `waypoints`, one shape tag per segment
/// (segment `i` runs from waypoint `i` to waypoint `i + 1`, wrapping).
///
/// Waypoints must go around counter-clockwise for arcs to bulge outward; a
/// clockwise loop bulges them inward. Every waypoint that still turns after
/// arc end tangents are accounted for is rounded with `corner_radius`.
pub fn make_course(
    waypoints: &[(f64, f64)],
    shapes: &[SegmentShape],
    profile: &SpeedProfile,
    options: &CourseOptions,
) -> Result<ReferencePath> {
    let n = waypoints.len();
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "a closed course needs at least 3 waypoints, got {n}"
        )));
    }
    if shapes.len() != n {
        return Err(Error::InvalidParameter(format!(
            "expected {n} segment shapes, got {}",
            shapes.len()
        )));
    }
    if !(options.spacing.is_finite() && options.spacing > 0.0) {
        return Err(Error::InvalidParameter("spacing must be > 0".into()));
    }

    let chord: Vec<((f64, f64), f64, f64)> = (0..n)
        .map(|i| {
            let a = waypoints[i];
            let b = waypoints[(i + 1) % n];
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            (a, dy.atan2(dx), dx.hypot(dy))
        })
        .collect();
    if let Some(i) = chord.iter().position(|c| c.2 <= 0.0) {
        return Err(Error::InvalidParameter(format!("waypoints {i} and {} coincide", (i + 1) % n)));
    }

    // Loop orientation decides which side is "outside" for arcs.
    let area: f64 = (0..n)
        .map(|i| {
            let (a, b) = (waypoints[i], waypoints[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    let orient = if area >= 0.0 { 1.0 } else { -1.0 };
    let psi = options.arc_half_angle;
    let (start_tan, end_tan): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|i| match shapes[i] {
            SegmentShape::Arc => (chord[i].1 - orient * psi, chord[i].1 + orient * psi),
            _ => (chord[i].1, chord[i].1),
        })
        .unzip();
    if shapes.contains(&SegmentShape::Arc) && !(psi > 0.0 && psi < PI / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "arc half angle must lie in (0, pi/2), got {psi}"
        )));
    }

    // Turn at waypoint i: from the end tangent of segment i-1 to the start
    // tangent of segment i.
    let turn: Vec<f64> = (0..n)
        .map(|i| angle_diff(start_tan[i], end_tan[(i + n - 1) % n]))
        .collect();
    let rc = options.corner_radius;
    let mut setback = vec![0.0; n];
    for i in 0..n {
        if turn[i].abs() > 1e-9 {
            if !(rc.is_finite() && rc > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "waypoint {i} turns by {:.3} rad but the corner radius is {rc}; zero-radius corners are degenerate",
                    turn[i]
                )));
            }
            if turn[i].abs() >= PI - 1e-6 {
                return Err(Error::InvalidParameter(format!("waypoint {i} reverses direction")));
            }
            setback[i] = rc * (turn[i].abs() / 2.0).tan();
        }
    }

    let mut pieces: Vec<(Piece, bool)> = Vec::new();
    for i in 0..n {
        let (p, chord_heading, len) = chord[i];
        let q = waypoints[(i + 1) % n];
        let j = (i + 1) % n;
        let a = (
            p.0 + setback[i] * start_tan[i].cos(),
            p.1 + setback[i] * start_tan[i].sin(),
        );
        let b = (
            q.0 - setback[j] * end_tan[i].cos(),
            q.1 - setback[j] * end_tan[i].sin(),
        );
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let span = dx.hypot(dy);
        if span <= 1e-6 || setback[i] + setback[j] >= len {
            return Err(Error::InvalidParameter(format!(
                "corner radius {rc} leaves no room on segment {i}"
            )));
        }
        let piece = match shapes[i] {
            SegmentShape::Straight => Piece::Line { start: a, heading: chord_heading, length: span },
            SegmentShape::Sinusoid => Piece::Sinusoid {
                start: a,
                heading: chord_heading,
                length: span,
                amplitude: options.sinusoid_amplitude,
                periods: options.sinusoid_periods,
            },
            SegmentShape::Arc => arc_from_tangent(a, start_tan[i], b),
        };
        pieces.push((piece, false));

        // fillet at the end waypoint
        let t = turn[j];
        if t.abs() > 1e-9 {
            let h = end_tan[i];
            let side = t.signum();
            let center = (b.0 - side * rc * h.sin(), b.1 + side * rc * h.cos());
            let start_angle = (b.1 - center.1).atan2(b.0 - center.0);
            pieces.push((
                Piece::Arc {
                    center,
                    radius: rc,
                    start_angle,
                    sweep: t,
                },
                true,
            ));
        }
    }

    let geometry = sample_pieces(&pieces, options.spacing, true);
    let path = ReferencePath::from_geometry(geometry, true, profile)?;
    if let Some((first, second)) = path.find_self_intersection() {
        return Err(Error::SelfIntersection { first, second });
    }
    Ok(path)
}

/// Circular arc leaving `a` with heading `heading` and passing through `b`.
fn arc_from_tangent(a: (f64, f64), heading: f64, b: (f64, f64)) -> Piece {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let (tx, ty) = (heading.cos(), heading.sin());
    let (nx, ny) = (-ty, tx);
    let along = dx * tx + dy * ty;
    let lateral = dx * nx + dy * ny;
    if lateral.abs() < 1e-12 {
        return Piece::Line {
            start: a,
            heading,
            length: along,
        };
    }
    // signed radius, positive when the center is to the left
    let radius = (dx * dx + dy * dy) / (2.0 * lateral);
    let center = (a.0 + radius * nx, a.1 + radius * ny);
    let start_angle = (a.1 - center.1).atan2(a.0 - center.0);
    let end_angle = (b.1 - center.1).atan2(b.0 - center.0);
    let mut sweep = end_angle - start_angle;
    if radius > 0.0 {
        sweep = sweep.rem_euclid(TAU);
    } else {
        sweep = -(-sweep).rem_euclid(TAU);
    }
    Piece::Arc {
        center,
        radius: radius.abs(),
        start_angle,
        sweep,
    }
}

/// Exhaustive nearest-sample search. Ties go to the smallest index.
pub fn closest_point(path: &ReferencePath, position: (f64, f64)) -> (usize, ReferenceSample, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, p) in path.samples.iter().enumerate() {
        let d = p.distance_to(position.0, position.1);
        if beats(d, i, best) {
            best = (i, d);
        }
    }
    (best.0, path.samples[best.0], best.1)
}

/// Distances within this relative band count as ties, so round-off in the
/// sample coordinates does not decide between equidistant samples.
const TIE_TOLERANCE: f64 = 1e-12;

fn beats(d: f64, index: usize, best: (usize, f64)) -> bool {
    if !best.1.is_finite() {
        return d.is_finite() || best.1.is_nan();
    }
    let band = TIE_TOLERANCE * best.1.max(1.0);
    d < best.1 - band || (d <= best.1 + band && index < best.0)
}

/// Nearest-sample search restricted to `hint ± window` (wrapping on closed
/// paths). Falls back to the exhaustive search when the path is small.
pub fn closest_point_near(
    path: &ReferencePath,
    position: (f64, f64),
    hint: usize,
    window: usize,
) -> (usize, ReferenceSample, f64) {
    let n = path.samples.len();
    if 2 * window + 1 >= n {
        return closest_point(path, position);
    }
    let mut best = (hint % n, f64::INFINITY);
    for k in 0..=2 * window {
        let offset = k as isize - window as isize;
        let idx = if path.closed {
            (hint as isize + offset).rem_euclid(n as isize) as usize
        } else {
            let i = hint as isize + offset;
            if i < 0 || i >= n as isize {
                continue;
            }
            i as usize
        };
        let d = path.samples[idx].distance_to(position.0, position.1);
        if beats(d, idx, best) {
            best = (idx, d);
        }
    }
    (best.0, path.samples[best.0], best.1)
}

/// `horizon` references starting at `start_index`, advancing by `v_r * dt`
/// of arc length per step.
pub fn reference_window(
    path: &ReferencePath,
    start_index: usize,
    horizon: usize,
    dt: f64,
) -> Vec<ReferenceSample> {
    let start = path.samples[start_index.min(path.samples.len() - 1)];
    window_from(path, start, horizon, dt)
}

/// Same as [`reference_window`] but starting from an interpolated sample.
pub fn window_from(
    path: &ReferencePath,
    start: ReferenceSample,
    horizon: usize,
    dt: f64,
) -> Vec<ReferenceSample> {
    let mut out = Vec::with_capacity(horizon);
    let mut current = start;
    let mut s = start.s;
    for k in 0..horizon {
        if k > 0 {
            s += current.v * dt;
            current = path.sample_at(s);
        }
        out.push(current);
    }
    out
}

/// Identifier and geometry of one of the seven training trajectories.
#[derive(Debug, Clone)]
pub struct NamedPath {
    pub id: String,
    pub path: ReferencePath,
}

/// Speed regime for the training family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilySpeed {
    Constant { speed: f64 },
    /// Half of each trajectory at `low`, the other half at `high`.
    TwoSpeed { low: f64, high: f64, ramp: f64 },
}

impl Default for FamilySpeed {
    fn default() -> Self {
        FamilySpeed::Constant { speed: 1.0 }
    }
}

impl FamilySpeed {
    pub fn multi_speed() -> Self {
        FamilySpeed::TwoSpeed { low: 1.0, high: 2.0, ramp: 2.0 }
    }

    fn profile(&self) -> SpeedProfile {
        match *self {
            FamilySpeed::Constant { speed } => SpeedProfile::constant(speed),
            FamilySpeed::TwoSpeed { low, high, ramp } => SpeedProfile::Halves {
                first: low,
                second: high,
                ramp,
            },
        }
    }
}

pub const TRAINING_RADII: [f64; 3] = [2.0, 5.0, 25.0];
pub const TRAINING_LINE_LENGTH: f64 = 30.0;

/// Circles of radius 2, 5 and 25 m in both directions plus a 30 m line.
pub fn training_family(speed: FamilySpeed, spacing: f64) -> Result<Vec<NamedPath>> {
    let profile = speed.profile();
    let mut out = Vec::with_capacity(7);
    for r in TRAINING_RADII {
        for (dir, tag) in [(Direction::Ccw, "ccw"), (Direction::Cw, "cw")] {
            out.push(NamedPath {
                id: format!("circle_r{r}_{tag}"),
                path: make_circle(r, dir, &profile, spacing)?,
            });
        }
    }
    out.push(NamedPath {
        id: format!("line_{TRAINING_LINE_LENGTH}"),
        path: make_line(TRAINING_LINE_LENGTH, &profile, spacing)?,
    });
    Ok(out)
}

/// Waypoints and shapes of the evaluation loop: a 68 x 34 m rectangle whose
/// east width bows out into an arc and whose west width carries the sinusoid,
/// giving an overall footprint of about 72 x 34 m.
pub fn evaluation_course_layout() -> (Vec<(f64, f64)>, Vec<SegmentShape>) {
    (
        vec![(0.0, 0.0), (68.0, 0.0), (68.0, 34.0), (0.0, 34.0)],
        vec![
            SegmentShape::Straight,
            SegmentShape::Arc,
            SegmentShape::Straight,
            SegmentShape::Sinusoid,
        ],
    )
}

pub fn evaluation_course(profile: &SpeedProfile, options: &CourseOptions) -> Result<ReferencePath> {
    let (waypoints, shapes) = evaluation_course_layout();
    make_course(&waypoints, &shapes, profile, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn one() -> SpeedProfile {
        SpeedProfile::constant(1.0)
    }

    #[test]
    fn circle_radius_two_ccw() {
        let path = make_circle(2.0, Direction::Ccw, &one(), 0.1).unwrap();
        assert!(path.is_closed());
        for p in path.samples() {
            assert!(((p.x).hypot(p.y - 2.0) - 2.0).abs() < 1e-9);
            assert_relative_eq!(p.curvature, 0.5, epsilon = 1e-12);
        }
        let first = path.samples()[0];
        assert_eq!((first.x, first.y, first.theta), (0.0, 0.0, 0.0));
        let last = path.samples()[path.len() - 1];
        assert!(last.distance_to(first.x, first.y) <= 0.1);
    }

    #[test]
    fn circle_cw_heading_turns_minus_two_pi() {
        let path = make_circle(25.0, Direction::Cw, &one(), 0.1).unwrap();
        let s = path.samples();
        let mut total = 0.0;
        for i in 0..s.len() {
            total += angle_diff(s[(i + 1) % s.len()].theta, s[i].theta);
        }
        assert_relative_eq!(total, -TAU, epsilon = 1e-9);
    }

    #[test]
    fn circle_constant_profile() {
        let path = make_circle(5.0, Direction::Ccw, &one(), 0.1).unwrap();
        assert!(path.samples().iter().all(|p| p.v == 1.0));
        assert!(make_circle(5.0, Direction::Ccw, &one(), 2.0).is_err());
        assert!(make_circle(0.0, Direction::Ccw, &one(), 0.1).is_err());
    }

    #[test]
    fn line_thirty_meters() {
        let path = make_line(30.0, &one(), 0.1).unwrap();
        assert_eq!(path.len(), 301);
        assert!(path.samples().iter().all(|p| p.theta == 0.0 && p.y == 0.0));
        assert_relative_eq!(path.samples()[300].x, 30.0, epsilon = 1e-12);
        assert!(make_line(30.0, &one(), 30.0).is_err());
        assert!(make_line(5.0, &one(), 5.0).is_err());
    }

    #[test]
    fn line_two_speed_profile() {
        let profile = SpeedProfile::Halves { first: 1.0, second: 2.0, ramp: 2.0 };
        let path = make_line(30.0, &profile, 0.1).unwrap();
        let mut prev = 0.0;
        for p in path.samples() {
            if p.s < 15.0 - 1e-9 {
                assert_eq!(p.v, 1.0);
            } else if p.s >= 17.0 {
                assert_eq!(p.v, 2.0);
            }
            assert!(p.v >= prev);
            prev = p.v;
        }
    }

    #[test]
    fn segments_profile_must_tile() {
        let bad = SpeedProfile::Segments {
            segments: vec![SpeedSegment { start: 0.0, end: 10.0, speed: 1.0 }],
            ramp: 0.0,
        };
        assert!(make_line(30.0, &bad, 0.1).is_err());
        let good = SpeedProfile::Segments {
            segments: vec![
                SpeedSegment { start: 0.0, end: 10.0, speed: 1.0 },
                SpeedSegment { start: 10.0, end: 30.0, speed: 1.5 },
            ],
            ramp: 1.0,
        };
        let path = make_line(30.0, &good, 0.1).unwrap();
        assert_eq!(path.sample_at(5.0).v, 1.0);
        assert_relative_eq!(path.sample_at(10.5).v, 1.25, epsilon = 1e-9);
        assert_eq!(path.sample_at(20.0).v, 1.5);
    }

    #[test]
    fn rectangle_course_perimeter() {
        let waypoints = [(0.0, 0.0), (72.0, 0.0), (72.0, 34.0), (0.0, 34.0)];
        let options = CourseOptions { corner_radius: 3.0, ..Default::default() };
        let path = make_course(&waypoints, &[SegmentShape::Straight; 4], &one(), &options).unwrap();
        // each quarter-circle fillet saves (2 - pi/2) * r of the 212 m perimeter
        let expected = 212.0 - 4.0 * (2.0 - PI / 2.0) * 3.0;
        assert_relative_eq!(path.length(), expected, epsilon = 1e-9);
        assert_eq!(path.corners().len(), 4);
    }

    #[test]
    fn evaluation_course_topology() {
        let path = evaluation_course(&one(), &CourseOptions::default()).unwrap();
        let xs = path.samples().iter().map(|p| p.x);
        let ys = path.samples().iter().map(|p| p.y);
        let (xmin, xmax) = xs.fold((f64::MAX, f64::MIN), |a, x| (a.0.min(x), a.1.max(x)));
        let (ymin, ymax) = ys.fold((f64::MAX, f64::MIN), |a, y| (a.0.min(y), a.1.max(y)));
        assert!(xmax - xmin > 70.0 && xmax - xmin < 76.0, "{xmin}..{xmax}");
        assert!((ymax - ymin - 34.0).abs() < 1e-6);
        // four filleted corners; arc and sinusoid widths
        assert_eq!(path.corners().len(), 4);
        assert!(path.find_self_intersection().is_none());
        // curvature never exceeds what the default vehicle can steer
        let kmax = crate::dynamics::VehicleParams::default().max_curvature();
        assert!(path.samples().iter().all(|p| p.curvature.abs() < kmax));
        // sinusoid pushes x below zero on the west width
        assert!(xmin < -1.0);
    }

    #[test]
    fn zero_corner_radius_is_rejected() {
        let square = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)];
        let options = CourseOptions { corner_radius: 0.0, ..Default::default() };
        assert!(make_course(&square, &[SegmentShape::Straight; 4], &one(), &options).is_err());
    }

    #[test]
    fn self_intersection_reported() {
        // bow-tie
        let waypoints = [(0.0, 0.0), (20.0, 20.0), (20.0, 0.0), (0.0, 20.0)];
        let options = CourseOptions { corner_radius: 1.0, ..Default::default() };
        let err = make_course(&waypoints, &[SegmentShape::Straight; 4], &one(), &options).unwrap_err();
        assert!(matches!(err, Error::SelfIntersection { .. }), "{err}");
    }

    #[test]
    fn tangency_on_default_spacing() {
        let course = evaluation_course(&one(), &CourseOptions::default()).unwrap();
        let mut paths = vec![course];
        paths.extend(training_family(FamilySpeed::default(), 0.1).unwrap().into_iter().map(|n| n.path));
        for path in paths {
            let s = path.samples();
            for i in 0..s.len() - 1 {
                let chord = (s[i + 1].y - s[i].y).atan2(s[i + 1].x - s[i].x);
                assert!(angle_diff(s[i].theta, chord).abs() < 0.05);
            }
        }
    }

    #[test]
    fn closest_point_cases() {
        let path = make_circle(5.0, Direction::Ccw, &one(), 0.1).unwrap();
        let (i, sample, d) = closest_point(&path, (path.samples()[17].x, path.samples()[17].y));
        assert_eq!((i, d), (17, 0.0));
        assert_eq!(sample, path.samples()[17]);
        // the center is equidistant from every sample
        let (i, _, d) = closest_point(&path, (0.0, 5.0));
        assert_eq!(i, 0);
        assert_relative_eq!(d, 5.0, epsilon = 1e-9);
    }

    #[test]
    fn warm_start_matches_exhaustive_near_path() {
        let path = evaluation_course(&one(), &CourseOptions::default()).unwrap();
        for k in (0..path.len()).step_by(37) {
            let p = path.samples()[k];
            let pos = (p.x + 0.3 * p.theta.sin(), p.y - 0.3 * p.theta.cos());
            let a = closest_point(&path, pos);
            let b = closest_point_near(&path, pos, (k + 5) % path.len(), WARM_START_WINDOW);
            assert_eq!(a.0, b.0);
        }
    }

    #[test]
    fn window_uniform_advance() {
        let path = make_line(30.0, &one(), 0.1).unwrap();
        let w = reference_window(&path, 0, 10, 0.1);
        assert_eq!(w.len(), 10);
        for (k, r) in w.iter().enumerate() {
            assert_relative_eq!(r.s, 0.1 * k as f64, epsilon = 1e-9);
        }
        // end clamp
        let w = reference_window(&path, 298, 10, 0.1);
        assert_relative_eq!(w[9].x, 30.0, epsilon = 1e-9);
        assert_eq!(w[8], w[9]);
    }

    #[test]
    fn window_wraps_on_closed_path() {
        let path = make_circle(2.0, Direction::Ccw, &one(), 0.1).unwrap();
        let n = path.len();
        let w = reference_window(&path, n - 3, 10, 0.1);
        assert!(w[9].s < 1.0, "{}", w[9].s);
        assert!(w.iter().all(|r| (r.x.hypot(r.y - 2.0) - 2.0).abs() < 1e-3));
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let path = make_circle(5.0, Direction::Cw, &one(), 0.1).unwrap();
        let mut buf = Vec::new();
        path.write_csv_to(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x,y,theta,v,s\n"));
        let back = ReferencePath::read_csv_from(buf.as_slice()).unwrap();
        assert!(back.is_closed());
        assert_eq!(back.len(), path.len());
        for (a, b) in back.samples().iter().zip(path.samples()) {
            assert_eq!((a.x, a.y, a.theta, a.v, a.s), (b.x, b.y, b.theta, b.v, b.s));
            assert!((a.curvature - b.curvature).abs() < 1e-3);
        }
        assert!(ReferencePath::read_csv_from("a,b\n1,2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn closest_point_matches_brute_force(x in -10.0..80.0f64, y in -10.0..45.0f64) {
            let path = evaluation_course(&one(), &CourseOptions::default()).unwrap();
            let (i, _, d) = closest_point(&path, (x, y));
            for (j, p) in path.samples().iter().enumerate() {
                let dj = p.distance_to(x, y);
                prop_assert!(d <= dj);
                if dj == d {
                    prop_assert!(i <= j);
                }
            }
        }

        #[test]
        fn arc_length_strictly_increasing(r in 1.0..30.0f64, ccw in proptest::bool::ANY) {
            let dir = if ccw { Direction::Ccw } else { Direction::Cw };
            let path = make_circle(r, dir, &one(), 0.1).unwrap();
            prop_assert!(path.samples().windows(2).all(|w| w[1].s > w[0].s));
            let (first, last) = (path.samples()[0], path.samples()[path.len() - 1]);
            prop_assert!(last.distance_to(first.x, first.y) <= 0.1 + 1e-12);
        }
    }
}
