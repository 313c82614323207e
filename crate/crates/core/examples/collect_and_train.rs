//! Collect an MPC dataset on the training trajectories, fit the policy,
//! save it and check that the saved file reproduces the same commands.
//!
//! ```text
//! cargo run --release --example collect_and_train -- [out_dir]
//! ```

use std::path::PathBuf;

use zerotrack::harness::ScenarioConfig;
use zerotrack::imitation::{collect_mpc_dataset, load_model, save_model, train};
use zerotrack::paths::{training_family, FamilySpeed, DEFAULT_SPACING};

fn main() -> zerotrack::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("zerotrack"));
    std::fs::create_dir_all(&out).expect("create output directory");
    let cfg = ScenarioConfig::default();

    let family = training_family(FamilySpeed::default(), DEFAULT_SPACING)?;
    let data = collect_mpc_dataset(&family, &cfg.vehicle, &cfg.mpc, &cfg.collect)?;
    for id in data.trajectory_ids() {
        let n = data.samples().iter().filter(|s| s.traj_id == id).count();
        println!("{id:<16} {n} samples");
    }
    let norm = data.normalization();
    println!("input mean {:?}\ninput std  {:?}", norm.mean, norm.std);
    data.write_csv(&out.join("dataset.csv"))?;

    let (model, history) = train(&data, &cfg.train)?;
    for (k, h) in history.iter().enumerate().filter(|(k, _)| k % 25 == 0 || *k + 1 == history.len()) {
        println!("epoch {:>3}: train {:.3e}  validation {:.3e}", k + 1, h.train, h.validation);
    }
    let file = out.join("model.txt");
    save_model(&model, &file)?;
    let loaded = load_model(&file)?;
    let identical = data.samples().iter().all(|s| loaded.command(&s.e) == model.command(&s.e));
    println!("saved {} ({} parameters); reload identical: {identical}", file.display(), model.params.parameter_count());
    Ok(())
}
