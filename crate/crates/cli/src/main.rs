use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use zerotrack::harness::{
    build_controller, evaluate, export_plots, run_repetitions, run_scenario, ControllerKind, ErrorSummary,
    PlotInput, PlotKind, RunTrace, ScenarioConfig,
};
use zerotrack::imitation::{collect_mpc_dataset, save_model, train, Dataset};
use zerotrack::paths::{training_family, FamilySpeed, DEFAULT_SPACING};

#[derive(Parser)]
#[command(name = "zerotrack", version, about = "Train tracking policies in simulation and test them on an unseen course")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Scenario file (TOML); defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario, collection and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: out]. For `hil`, where sessions are
    /// written [default: the config's hil.out_dir].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    controller: Option<ControllerArg>,
    /// Policy file: written by `train`, read by the `nn` controller.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Mpc,
    Nn,
    Playback,
}

impl From<ControllerArg> for ControllerKind {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::Mpc => ControllerKind::Mpc,
            ControllerArg::Nn => ControllerKind::Nn,
            ControllerArg::Playback => ControllerKind::Playback,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    /// Every trajectory at 1 m/s.
    Constant,
    /// Half of each trajectory at 1 m/s and half at 2 m/s.
    MultiSpeed,
}

#[derive(Subcommand)]
enum Command {
    /// Drive the training trajectories with the MPC and write the dataset.
    Collect {
        #[arg(long, value_enum, default_value = "constant")]
        family: Family,
    },
    /// Fit the policy to one or more dataset files.
    Train {
        /// Dataset files; defaults to <out>/dataset.csv.
        #[arg(long = "data")]
        data: Vec<PathBuf>,
    },
    /// One run of the scenario; writes the trace.
    Run(RunArgs),
    /// All repetitions of the scenario; writes traces and the error summary.
    Eval(RunArgs),
    /// Start the human-in-the-loop driving server.
    Hil,
    /// Run the scenario and write plot tables and SVGs.
    Export {
        #[command(flatten)]
        run: RunArgs,
        /// Only this plot; all of them by default.
        #[arg(long)]
        kind: Option<PlotKind>,
        /// Skip the SVG renderings.
        #[arg(long)]
        no_svg: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Recorded dataset for the `playback` controller.
    #[arg(long)]
    recording: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

impl Global {
    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let out = g.out_dir();
    let mut cfg = match &g.config {
        Some(file) => ScenarioConfig::load(file)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
        cfg.collect.seed = seed;
        cfg.train.seed = seed;
    }
    match cli.command {
        Command::Collect { family } => collect(&cfg, family, &out),
        Command::Train { data } => fit(&cfg, data, g),
        Command::Run(args) => {
            configure_controller(&mut cfg, g, &args)?;
            run_once(&cfg, &out)
        }
        Command::Eval(args) => {
            configure_controller(&mut cfg, g, &args)?;
            eval(&cfg, &out)
        }
        Command::Hil => {
            if let Some(dir) = &g.out {
                cfg.hil.out_dir = dir.clone();
            }
            match zerotrack_hilbridge::run(&cfg)? {
                Some(files) => println!("session written to {}", files.dataset.display()),
                None => println!("no samples recorded"),
            }
            Ok(())
        }
        Command::Export { run, kind, no_svg } => {
            configure_controller(&mut cfg, g, &run)?;
            export(&cfg, &out, kind, !no_svg)
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn collect(cfg: &ScenarioConfig, family: Family, out: &Path) -> Result<()> {
    let speed = match family {
        Family::Constant => FamilySpeed::default(),
        Family::MultiSpeed => FamilySpeed::multi_speed(),
    };
    let trajectories = training_family(speed, DEFAULT_SPACING)?;
    let data = collect_mpc_dataset(&trajectories, &cfg.vehicle, &cfg.mpc, &cfg.collect)?;
    create_dir(out)?;
    let file = out.join("dataset.csv");
    data.write_csv(&file)?;
    println!("{} samples from {} trajectories -> {}", data.len(), trajectories.len(), file.display());
    Ok(())
}

fn fit(cfg: &ScenarioConfig, files: Vec<PathBuf>, g: &Global) -> Result<()> {
    let files = if files.is_empty() { vec![g.out_dir().join("dataset.csv")] } else { files };
    let mut data: Option<Dataset> = None;
    for file in &files {
        let (part, report) = Dataset::read_csv(file)?;
        if report.clamped > 0 {
            log::warn!("{}: clamped {} commands", file.display(), report.clamped);
        }
        data = Some(match data {
            Some(d) => d.merge(part),
            None => part,
        });
    }
    let data = data.expect("at least one dataset file");
    let (model, history) = train(&data, &cfg.train)?;
    let out = g.out_dir();
    create_dir(&out)?;
    let model_file = g.model.clone().unwrap_or_else(|| out.join("model.txt"));
    save_model(&model, &model_file)?;
    let loss_file = out.join("loss.csv");
    let mut w = fs::File::create(&loss_file).with_context(|| format!("creating {}", loss_file.display()))?;
    writeln!(w, "epoch,train,validation")?;
    for (k, h) in history.iter().enumerate() {
        writeln!(w, "{},{},{}", k + 1, h.train, h.validation)?;
    }
    let last = history.last().expect("training runs at least one epoch");
    println!(
        "{} samples, {} epochs, validation loss {:.3e} -> {}",
        data.len(),
        history.len(),
        last.validation,
        model_file.display()
    );
    Ok(())
}

/// Applies `--controller`, `--model` and `--recording`. An `nn` run with no
/// model anywhere falls back to `<out>/model.txt`, where `train` puts it.
fn configure_controller(cfg: &mut ScenarioConfig, g: &Global, args: &RunArgs) -> Result<()> {
    if let Some(kind) = g.controller {
        cfg.controller.kind = kind.into();
    }
    if let Some(model) = &g.model {
        cfg.controller.model = Some(model.clone());
    }
    if let Some(recording) = &args.recording {
        cfg.controller.recording = Some(recording.clone());
    }
    match cfg.controller.kind {
        ControllerKind::Nn if cfg.controller.model.is_none() => {
            cfg.controller.model = Some(g.out_dir().join("model.txt"));
        }
        ControllerKind::Playback if cfg.controller.recording.is_none() => {
            bail!("the playback controller needs --recording <dataset.csv>");
        }
        _ => {}
    }
    Ok(())
}

fn report(traces: &[RunTrace], summary: &ErrorSummary) {
    let tv = traces.iter().map(RunTrace::steering_total_variation).sum::<f64>() / traces.len() as f64;
    let done = traces.iter().filter(|t| t.completed()).count();
    println!(
        "mean cross-track {:.4} m, max {:.4} m, steering total variation {tv:.2}, {done}/{} runs completed",
        summary.mean,
        summary.max,
        traces.len()
    );
    for s in &summary.segments {
        println!(
            "  samples {:>4}..{:<4} target {:.2} m/s: measured {:.3} [{:.3}, {:.3}] over {} records",
            s.first, s.last, s.target, s.mean, s.min, s.max, s.count
        );
    }
}

fn run_once(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    let path = cfg.path.build()?;
    let mut controller = build_controller(cfg)?;
    let trace = run_scenario(cfg, &path, controller.as_mut(), 0)?;
    create_dir(out)?;
    let file = out.join("trace.csv");
    trace.write_csv(&file)?;
    let summary = evaluate(std::slice::from_ref(&trace), &path)?;
    report(std::slice::from_ref(&trace), &summary);
    println!("trace -> {}", file.display());
    Ok(())
}

fn eval(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    let path = cfg.path.build()?;
    let mut controller = build_controller(cfg)?;
    let traces = run_repetitions(cfg, &path, controller.as_mut())?;
    create_dir(out)?;
    for t in &traces {
        t.write_csv(&out.join(format!("trace_{}.csv", t.repetition)))?;
    }
    let summary = evaluate(&traces, &path)?;
    let file = out.join("error_by_index.csv");
    let mut w = fs::File::create(&file).with_context(|| format!("creating {}", file.display()))?;
    writeln!(w, "index,s,mean_ct_err,count")?;
    for (i, (sample, (mean, count))) in path
        .samples()
        .iter()
        .zip(summary.per_index_mean.iter().zip(&summary.per_index_count))
        .enumerate()
    {
        if *count > 0 {
            writeln!(w, "{i},{},{mean},{count}", sample.s)?;
        }
    }
    report(&traces, &summary);
    println!("{} traces and {} -> {}", traces.len(), file.display(), out.display());
    Ok(())
}

fn export(cfg: &ScenarioConfig, out: &Path, kind: Option<PlotKind>, svg: bool) -> Result<()> {
    let path = cfg.path.build()?;
    let mut controller = build_controller(cfg)?;
    let traces = run_repetitions(cfg, &path, controller.as_mut())?;
    let summary = evaluate(&traces, &path)?;
    let input = PlotInput { path: &path, trace: traces.first(), summary: Some(&summary) };
    let dir = out.join("plots");
    let kinds = kind.map(|k| vec![k]).unwrap_or_else(|| PlotKind::ALL.to_vec());
    for k in kinds {
        for file in export_plots(k, &input, &dir, svg)? {
            println!("{}", file.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn global_flags_parse_after_the_subcommand() {
        let cli = Cli::try_parse_from(["zerotrack", "run", "--controller", "nn", "--model", "m.txt", "--seed", "3"]).unwrap();
        assert!(matches!(cli.global.controller, Some(ControllerArg::Nn)));
        assert_eq!(cli.global.model.as_deref(), Some(Path::new("m.txt")));
        assert_eq!(cli.global.seed, Some(3));
        assert!(Cli::try_parse_from(["zerotrack", "run", "--controller", "pid"]).is_err());
        let cli = Cli::try_parse_from(["zerotrack", "export", "--kind", "speed_heatmap"]).unwrap();
        assert!(matches!(cli.command, Command::Export { kind: Some(PlotKind::SpeedHeatmap), .. }));
    }
}
