//! Recover speed from noisy position and heading alone.
//!
//! Drives open loop under a constant command while position arrives at
//! 10 Hz and heading at 100 Hz, and prints the filter's speed estimate
//! against the truth.
//!
//! ```text
//! cargo run --release --example ekf_velocity -- [seed]
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use zerotrack::dynamics::step;
use zerotrack::estimator::{ekf_predict, ekf_update_heading, ekf_update_position, EkfState, NoiseConfig};
use zerotrack::{Command, VehicleParams, VehicleState};

fn main() -> zerotrack::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = VehicleParams::default();
    let noise = NoiseConfig::default();
    let position = Normal::new(0.0, noise.position_std).expect("valid std");
    let heading = Normal::new(0.0, noise.heading_std).expect("valid std");

    let u = Command::new(0.25, 0.5);
    let dt = 0.01;
    let mut truth = VehicleState::new(0.0, 0.0, 0.0, 0.0);
    // the filter starts half a meter per second wrong
    let mut filter = EkfState::with_std(VehicleState { v: -0.5, ..truth }, [0.02, 0.02, 0.01, 0.5]);

    println!("    t   true v   est v    error   1-sigma");
    for k in 1..=3000 {
        truth = step(&truth, &u, dt, &p)?;
        filter = ekf_predict(&filter, &u, dt, &p, &noise)?;
        filter = ekf_update_heading(&filter, truth.theta + heading.sample(&mut rng), &noise)?.0;
        if k % 10 == 0 {
            let z = (truth.x + position.sample(&mut rng), truth.y + position.sample(&mut rng));
            filter = ekf_update_position(&filter, z, &noise)?.0;
        }
        if k % 100 == 0 {
            let err = filter.mean.v - truth.v;
            println!(
                "{:>5.1} {:>8.4} {:>8.4} {:>+8.4} {:>8.4}",
                k as f64 * dt,
                truth.v,
                filter.mean.v,
                err,
                filter.covariance[(3, 3)].sqrt()
            );
        }
    }
    Ok(())
}
