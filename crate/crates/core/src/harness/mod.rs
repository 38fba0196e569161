//! Twin-experiment orchestration: truth and observations, cycled
//! assimilation, and run archives on disk.

mod archive;
mod config;
mod cycle;
mod truth;

pub use archive::{read_kv, runs_root, RunArchive, WindowRecord, COST_FIELDS, RUNS_DIR_ENV};
pub use config::{CycleMode, ExperimentConfig};
pub use cycle::{background_covariance, run_cycle, run_cycle_with};
pub use truth::{generate_truth_and_obs, TwinData};
