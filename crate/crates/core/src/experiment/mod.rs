//! Manifest-driven campaigns: grid runs, cross-validation and plot data.

pub mod manifest;
pub mod plotdata;
pub mod runner;
pub mod xval;

pub use manifest::{parse_level, Axis, GridPoint, Manifest, Param, Variant};
pub use plotdata::{emit_plotdata, figure, write_plotdata, PlotRow};
pub use runner::{read_results, run_manifest, ResultRow, RunOptions, RunSummary, COLUMNS, SCHEMA_VERSION};
pub use xval::{crossvalidate, XvalReport};
