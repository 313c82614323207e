//! Regenerate the recorded-driver fixtures in `fixtures/`.
//!
//! The fixtures stand in for human sessions on the HIL bridge. A
//! [`PursuitDriver`] drives every training trajectory under the same
//! episode and perturbation schedule used for MPC collection, and its
//! commands are written in the recording format, tagged `hil`.
//!
//! ```text
//! cargo run --release --example make_hil_fixture [out_dir]
//! ```

use std::path::PathBuf;

use zerotrack::harness::{PursuitConfig, PursuitDriver, ScenarioConfig};
use zerotrack::imitation::{collect_dataset, Source};
use zerotrack::paths::{training_family, FamilySpeed, DEFAULT_SPACING};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    std::fs::create_dir_all(&out)?;
    let cfg = ScenarioConfig::default();

    for (file, speed) in [
        ("hil_constant_speed.csv", FamilySpeed::Constant { speed: 1.0 }),
        ("hil_multi_speed.csv", FamilySpeed::multi_speed()),
    ] {
        let family = training_family(speed, DEFAULT_SPACING)?;
        let mut driver = PursuitDriver::new(cfg.vehicle, PursuitConfig::default())?;
        let data = collect_dataset(&family, &cfg.vehicle, &mut driver, Source::Hil, &cfg.collect)?;
        let path = out.join(file);
        data.write_csv(&path)?;
        println!("{}: {} samples", path.display(), data.len());
    }
    Ok(())
}
