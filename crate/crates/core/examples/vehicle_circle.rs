//! Hold a constant command and compare the driven circle with the model's
//! steady-state turning radius.
//!
//! ```text
//! cargo run --release --example vehicle_circle
//! ```

use std::f64::consts::PI;

use zerotrack::dynamics::{integrate, step};
use zerotrack::{Command, VehicleParams, VehicleState};

fn main() -> zerotrack::Result<()> {
    let p = VehicleParams::default();
    let dt = 0.01;
    println!("steering  speed  radius   driven distance from center   lap closure");
    for steering in [0.25, 0.5, 1.0] {
        for speed in [0.5, 1.0, 2.0] {
            // throttle that holds this speed, starting already at speed
            let u = Command::new(steering, p.cruise_throttle(speed));
            let start = VehicleState::new(0.0, 0.0, 0.0, speed);
            let r = p.turning_radius(steering);
            let lap = 2.0 * PI * r / speed;
            let steps = (lap / dt).round() as usize;

            // the center lies to the left of the start heading
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            let mut q = start;
            for _ in 0..steps {
                q = step(&q, &u, dt, &p)?;
                let d = q.x.hypot(q.y - r);
                lo = lo.min(d);
                hi = hi.max(d);
            }
            let end = integrate(&start, &u, steps as f64 * dt, dt, &p)?;
            println!(
                "{steering:>8.2} {speed:>6.2} {r:>7.3}   [{lo:.6}, {hi:.6}]   {:.2e} m",
                end.x.hypot(end.y)
            );
        }
    }
    Ok(())
}
