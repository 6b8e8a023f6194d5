//! Monte Carlo evaluation: NMSE metrics, sweep configuration and execution,
//! oracle validation and operation-count scaling.

pub mod complexity;
pub mod config;
pub mod metrics;
pub mod oracle;
pub mod sweep;

pub use metrics::{nmse, nmse_paths, psnr_to_pilot_energy, to_db, PathResponses};
pub use config::{EstimatorKind, NoisePath, PointSettings, SweepAxis, SweepConfig};
pub use sweep::{read_sweep_csv, run_sweep, run_sweep_with_threads, write_sweep_csv, SweepRecord};
pub use complexity::{measure_complexity, measure_scaling, ComplexityReport};
pub use oracle::{oracle_mismatch, run_oracle_validation, OracleReport};
