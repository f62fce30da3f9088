//! Parameter sweeps, evaluation metrics and the paired statistics used to
//! compare discount factors.

mod metrics;
mod report;
mod stats;
mod sweep;

pub use metrics::{abandon_rate, effective_slate_size, mean_effective_slate_size, play_rate};
pub use report::{delta_csv, delta_report, DeltaRow, MetricDelta, DELTA_HEADER};
pub use stats::{bootstrap_mean_ci, mean, sign_test};
pub use sweep::{
    episode_dump_name, report_errors, run_cell, run_sweep, Cell, SweepConfig, SweepOptions, SweepResult, SweepRow,
    RESULTS_HEADER,
};
