//! End-to-end walks along a factorization progression: build, train,
//! checkpoint, calibrate, quantize, analyse, report.

pub mod config;
pub mod report;
pub mod run;

pub use config::{DataConfig, DataSource, ExperimentConfig, QuantConfig};
pub use report::{emit_report, read_summary_csv, write_summary_csv, ReportFormat, SUMMARY_COLUMNS};
pub use run::{calibration_inputs, config_hash, derive_seed, quantized_predictions, run_config, run_sweep, ConfigOutcome, SweepReport, SweepRow};
