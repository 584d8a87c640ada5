//! Run reports, trace export and the canned experiments.

pub mod presets;
pub mod report;

pub use presets::{run_preset, Assertion, Check, PresetError, PresetOutcome, PresetRun, Table, PRESETS};
pub use report::{jobspec_hash, percentile, percentile_sorted, write_trace_csv, RunReport, StatsError, TRACE_HEADER};
