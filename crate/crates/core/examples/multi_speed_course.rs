//! Train on the two-speed family and drive the course with 1 m/s corners
//! and 2 m/s straights, reporting the speed held on each stretch.
//!
//! ```text
//! cargo run --release --example multi_speed_course
//! ```

use zerotrack::harness::{evaluate, run_repetitions, NnController, PathSpec, ScenarioConfig};
use zerotrack::imitation::{collect_mpc_dataset, train};
use zerotrack::paths::{training_family, FamilySpeed, DEFAULT_SPACING};

fn main() -> zerotrack::Result<()> {
    let cfg = ScenarioConfig {
        path: PathSpec::multi_speed_course(),
        ..Default::default()
    };
    let family = training_family(FamilySpeed::multi_speed(), DEFAULT_SPACING)?;
    let data = collect_mpc_dataset(&family, &cfg.vehicle, &cfg.mpc, &cfg.collect)?;
    let (model, _) = train(&data, &cfg.train)?;

    let course = cfg.path.build()?;
    let traces = run_repetitions(&cfg, &course, &mut NnController::new(model))?;
    let summary = evaluate(&traces, &course)?;
    println!(
        "{} laps: mean cross-track {:.4} m, max {:.4} m",
        traces.len(),
        summary.mean,
        summary.max
    );
    println!("stretch (samples)   target   measured mean [min, max]");
    for s in &summary.segments {
        println!(
            "{:>6}..{:<6}      {:.1} m/s  {:.3} [{:.3}, {:.3}]",
            s.first, s.last, s.target, s.mean, s.min, s.max
        );
    }
    Ok(())
}
