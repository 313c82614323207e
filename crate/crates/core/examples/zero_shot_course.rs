//! Train on the seven training trajectories, then drive the unseen course.
//!
//! Collects an MPC dataset on the circles and the line, fits the policy, and
//! compares it with the MPC itself on the waypoint course at 1 m/s.
//!
//! ```text
//! cargo run --release --example zero_shot_course
//! ```

use std::time::Instant;

use zerotrack::control::MpcController;
use zerotrack::harness::{evaluate, run_repetitions, NnController, PathSpec, ScenarioConfig};
use zerotrack::imitation::{collect_mpc_dataset, train};
use zerotrack::paths::{training_family, FamilySpeed, DEFAULT_SPACING};

fn main() -> zerotrack::Result<()> {
    let start = Instant::now();
    let cfg = ScenarioConfig {
        path: PathSpec::default(),
        ..Default::default()
    };

    let family = training_family(FamilySpeed::Constant { speed: 1.0 }, DEFAULT_SPACING)?;
    let data = collect_mpc_dataset(&family, &cfg.vehicle, &cfg.mpc, &cfg.collect)?;
    println!("collected {} samples from {} trajectories", data.len(), family.len());

    let (model, history) = train(&data, &cfg.train)?;
    let last = history.last().expect("at least one epoch");
    println!(
        "trained {} epochs: train loss {:.2e}, validation loss {:.2e}",
        history.len(),
        last.train,
        last.validation
    );

    let course = cfg.path.build()?;
    println!("course: {} samples, {:.1} m", course.len(), course.length());

    let mut mpc = MpcController::new(cfg.mpc.clone(), cfg.vehicle)?;
    let mut nn = NnController::new(model);
    for (name, traces) in [
        ("mpc", run_repetitions(&cfg, &course, &mut mpc)?),
        ("nn", run_repetitions(&cfg, &course, &mut nn)?),
    ] {
        let summary = evaluate(&traces, &course)?;
        let tv: f64 = traces.iter().map(|t| t.steering_total_variation()).sum::<f64>() / traces.len() as f64;
        let done = traces.iter().filter(|t| t.completed()).count();
        println!(
            "{name:>4}: mean cross-track {:.4} m, max {:.4} m, steering TV {tv:.2}, {done}/{} laps completed",
            summary.mean,
            summary.max,
            traces.len()
        );
    }
    println!("elapsed {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
