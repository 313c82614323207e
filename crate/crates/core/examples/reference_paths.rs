//! Build the seven training trajectories and the evaluation course, print
//! their geometry and optionally write them as CSV.
//!
//! ```text
//! cargo run --release --example reference_paths -- [out_dir]
//! ```

use std::path::PathBuf;

use zerotrack::control::locate;
use zerotrack::harness::PathSpec;
use zerotrack::paths::{training_family, FamilySpeed, DEFAULT_SPACING};
use zerotrack::ReferencePath;

fn describe(name: &str, path: &ReferencePath) {
    let kappa = path.samples().iter().map(|s| s.curvature.abs()).fold(0.0, f64::max);
    let (lo, hi) = path
        .samples()
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(s.v), hi.max(s.v)));
    println!(
        "{name:<18} {:>5} samples {:>7.2} m  {}  max |curvature| {kappa:.3}  speed {lo:.1}..{hi:.1} m/s",
        path.len(),
        path.length(),
        if path.is_closed() { "closed" } else { "open  " },
    );
}

fn main() -> zerotrack::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let family = training_family(FamilySpeed::default(), DEFAULT_SPACING)?;
    for t in &family {
        describe(&t.id, &t.path);
    }
    let course = PathSpec::default().build()?;
    describe("course", &course);
    let multi = PathSpec::multi_speed_course().build()?;
    describe("course_multi", &multi);

    // projection of a point beside the course
    let s = course.samples()[course.len() / 3];
    let offset = (s.x - 0.4 * s.theta.sin(), s.y + 0.4 * s.theta.cos());
    let fix = locate(&course, offset, None);
    println!(
        "point 0.4 m left of s={:.2}: nearest sample {} at s={:.2}, cross-track {:.4} m",
        s.s, fix.index, fix.s, fix.cross_track
    );

    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).expect("create output directory");
        for t in &family {
            t.path.write_csv(&dir.join(format!("{}.csv", t.id)))?;
        }
        course.write_csv(&dir.join("course.csv"))?;
        multi.write_csv(&dir.join("course_multi.csv"))?;
        println!("wrote {} files to {}", family.len() + 2, dir.display());
    }
    Ok(())
}
