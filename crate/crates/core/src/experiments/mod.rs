//! Seeded, resumable experiment runs that write one CSV row per replica.

mod calibrate;
mod checks;
mod config;
mod fit;
mod row;
mod runner;
mod seed;

pub use calibrate::{calibrate, law_check, CHI_SQUARE_P_MIN, CODEC_SAMPLES};
pub use checks::{consistency_ratio, evaluate, Check, EXPONENT_TOL, RATIO_WINDOW};
pub use config::ExperimentConfig;
pub use fit::{fit_exponent, fit_exponent_by, group_means};
pub use row::{ExperimentKind, ResultRow, RowKey, CSV_HEADER};
pub use runner::{read_csv, run, write_csv_atomic, RunSummary};
pub use seed::replica_seed;
