//! Post-hoc calibration of classifier logits with class-wise loss scaling.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, reports and the
//! command-line harness live in the `lossscale` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod calibrators;
pub mod dataset;
pub mod error;
pub mod losses;
pub mod math;
pub mod matrix;
pub mod metrics;
pub mod optim;
pub mod scaling;
pub mod train;

pub use calibrators::{probabilities, Calibrator, CalibratorKind, PtsArch};
pub use dataset::{
    generate_synthetic, make_lt_split, split, LogitDataset, LtSpec, Rounding, Split, SyntheticSpec,
};
pub use error::{Error, Result};
pub use losses::{
    class_losses, select_top_k_classes, subset_loss, ClassLossVector, LossKind, LossSpec,
};
pub use matrix::Matrix;
pub use metrics::{
    class_loss_std, correlation, evaluate, EvalReport, ReliabilityBins, DEFAULT_BINS,
};
pub use optim::{minimize, minimize_bounded_2d, Method, Minimizer, OptimSpec, Schedule};
pub use scaling::{
    fit_alpha_beta, normalize, prepare_scaling, sigmoid_weight, std_objective, total_loss,
    Normalization, Refresh, ScalingConfig, ScalingState,
};
pub use train::{
    fit, fit_observed, loss_gradient, EpochRecord, FitConfig, FitTrace, TrainingObjective,
};
