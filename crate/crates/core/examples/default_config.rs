//! Print the complete default scenario file.
//!
//! ```text
//! cargo run --release --example default_config > scenario.toml
//! ```

fn main() -> zerotrack::Result<()> {
    print!("{}", zerotrack::harness::ScenarioConfig::default().to_toml()?);
    Ok(())
}
