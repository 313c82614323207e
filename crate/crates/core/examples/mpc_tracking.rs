//! Start half a meter off a 5 m circle and watch the MPC pull the vehicle
//! back onto it.
//!
//! ```text
//! cargo run --release --example mpc_tracking
//! ```

use zerotrack::control::MpcController;
use zerotrack::harness::{run_scenario, PathSpec, ScenarioConfig};
use zerotrack::imitation::Perturbation;
use zerotrack::paths::{Direction, SpeedProfile, DEFAULT_SPACING};

fn main() -> zerotrack::Result<()> {
    let mut cfg = ScenarioConfig {
        path: PathSpec::Circle {
            radius: 5.0,
            direction: Direction::Ccw,
            profile: SpeedProfile::constant(1.0),
            spacing: DEFAULT_SPACING,
        },
        duration: Some(20.0),
        ..Default::default()
    };
    cfg.initial_offset.lateral = 0.5;
    cfg.initial_offset.jitter = Perturbation::none();
    let path = cfg.path.build()?;
    let mut mpc = MpcController::new(cfg.mpc.clone(), cfg.vehicle)?;
    let trace = run_scenario(&cfg, &path, &mut mpc, 0)?;

    println!("    t   cross-track   e1       e2       e3       e4     steering throttle");
    for r in trace.records.iter().step_by(10) {
        let e = r.error.to_array();
        println!(
            "{:>5.1} {:>10.4}  {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.3} {:>8.3}",
            r.t,
            r.ct_err,
            e[0],
            e[1],
            e[2],
            e[3],
            r.command.steering(),
            r.command.throttle()
        );
    }
    let settled = trace
        .records
        .iter()
        .position(|r| r.ct_err < 0.05)
        .map(|k| trace.records[k].t);
    println!("inside 5 cm after {settled:?} s, final error {:.5} m", trace.records.last().unwrap().ct_err);
    Ok(())
}
