//! Closed-loop experiments: scenario configuration, the simulation loop,
//! error summaries and plot tables.

mod config;
mod driver;
mod evaluate;
mod plots;
mod run;

pub use config::{
    lap_time, ControllerKind, ControllerSpec, HilSettings, InitialOffset, PathSpec,
    PlantPerturbation, ScenarioConfig, SensorConfig, SensorMode,
};
pub use driver::{PursuitConfig, PursuitDriver};
pub use evaluate::{constant_speed_runs, evaluate, ErrorSummary, SegmentSpeed};
pub use plots::{export_plots, plot_table, PlotInput, PlotKind, PlotTable};
pub use run::{
    build_controller, run_repetitions, run_scenario, NnController, PlaybackController, RunOutcome,
    RunTrace, TraceRecord, TRACE_DIAGNOSTIC_HEADER, TRACE_HEADER,
};
