//! File formats, reports and experiment runs for post-hoc calibration with
//! class-wise loss scaling. The numerical work lives in `lossscale_core`.

pub mod calfile;
pub mod error;
pub mod harness;
pub mod io;
pub mod report;

pub use calfile::{decode_calibrator, encode_calibrator, read_calibrator, write_calibrator};
pub use error::{Error, FormatError, Result};
pub use harness::{
    calibrate, default_optim, run_calibrate, run_evaluate, run_sweep, run_toy_analysis, sweep,
    toy_analysis, CellSpec, Method, OptimOverrides, Outcome, RunConfig, SweepConfig, SweepResult,
};
pub use io::{read_dataset, write_dataset, Format};
pub use lossscale_core as core;
