//! Serve the driving socket until ctrl-c, then write the session.
//!
//! Connect a client to `ws://127.0.0.1:8765/drive`; the trajectory list is
//! at `http://127.0.0.1:8765/trajectories`. Settings come from the `[hil]`
//! block of an optional scenario file.
//!
//! ```text
//! cargo run --release -p zerotrack-hilbridge --example hil_server -- [scenario.toml]
//! ```

use zerotrack::harness::ScenarioConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(file) => ScenarioConfig::load(file.as_ref())?,
        None => ScenarioConfig::default(),
    };
    println!("listening on ws://{}/drive, ctrl-c to stop", cfg.hil.bind);
    match zerotrack_hilbridge::run(&cfg)? {
        Some(files) => println!("session written to {}", files.dataset.display()),
        None => println!("nothing recorded"),
    }
    Ok(())
}
