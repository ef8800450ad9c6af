//! Config-driven experiments: parsing, orchestration, ledger and reports.

pub mod config;
pub mod expr;
pub mod ledger;
pub mod report;
pub mod run;

pub use config::{parse_config, parse_config_str, ExperimentConfig, LoadedConfig};
pub use ledger::{read_rows, LedgerRow, RowStatus, RunLedger};
pub use report::{emit_report, ReportSummary};
pub use run::{run_experiment, RunOptions};
