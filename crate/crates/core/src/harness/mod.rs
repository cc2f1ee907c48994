//! Experiment drivers: configuration, sweeps and plots.

pub mod config;
pub mod plot;
pub mod sweep;

pub use config::KvConfig;
pub use plot::{emit_plots, render_plot, Plot, PlotKind};
pub use sweep::{compare_pruned_unpruned, parse_link, read_records, run_sweep, Arm, GridPoint, ResultRecord, SweepSpec};
