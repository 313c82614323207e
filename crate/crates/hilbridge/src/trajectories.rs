//! The selectable reference trajectories and their listing.

use serde::{Deserialize, Serialize};
use zerotrack::paths::{
    training_family, Direction, FamilySpeed, DEFAULT_SPACING, TRAINING_LINE_LENGTH, TRAINING_RADII,
};
use zerotrack::ReferencePath;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Line,
}

/// One entry of the `/trajectories` listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryInfo {
    pub id: String,
    pub name: String,
    pub shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    /// Meters.
    pub length: f64,
    pub speed: FamilySpeed,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub info: TrajectoryInfo,
    pub path: ReferencePath,
}

/// The seven training trajectories at the given speed regime, in the order
/// the driving UI lists them.
pub fn trajectory_set(speed: FamilySpeed) -> Result<Vec<Trajectory>> {
    let family = training_family(speed, DEFAULT_SPACING)?;
    let mut shapes = Vec::with_capacity(family.len());
    for r in TRAINING_RADII {
        for dir in [Direction::Ccw, Direction::Cw] {
            shapes.push((Shape::Circle, Some(r), Some(dir)));
        }
    }
    shapes.push((Shape::Line, None, None));
    if shapes.len() != family.len() {
        return Err(Error::Settings("training family changed shape".into()));
    }
    Ok(family
        .into_iter()
        .zip(shapes)
        .map(|(named, (shape, radius, direction))| {
            let name = match (radius, direction) {
                (Some(r), Some(Direction::Ccw)) => format!("Circle r={r} m, counter-clockwise"),
                (Some(r), Some(Direction::Cw)) => format!("Circle r={r} m, clockwise"),
                _ => format!("Straight line, {TRAINING_LINE_LENGTH} m"),
            };
            Trajectory {
                info: TrajectoryInfo {
                    id: named.id,
                    name,
                    shape,
                    radius,
                    direction,
                    length: named.path.length(),
                    speed,
                },
                path: named.path,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_distinct_trajectories() {
        let set = trajectory_set(FamilySpeed::default()).unwrap();
        assert_eq!(set.len(), 7);
        let mut ids: Vec<_> = set.iter().map(|t| t.info.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 7);
        for t in &set {
            match t.info.shape {
                Shape::Circle => {
                    let r = t.info.radius.unwrap();
                    assert!((t.info.length - 2.0 * std::f64::consts::PI * r).abs() < 0.01 * r);
                }
                Shape::Line => assert!((t.info.length - TRAINING_LINE_LENGTH).abs() < 1e-9),
            }
        }
    }
}
