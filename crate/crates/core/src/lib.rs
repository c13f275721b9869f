//! Structured-prediction training objectives for heatmap landmark detection.
//!
//! The crate contrasts three ways of training a heatmap scorer:
//!
//! * heatmap regression against Gaussian targets ([`losses::heatmap_mse_loss`]),
//! * squared error of the soft-argmax coordinate ([`losses::soft_argmax_l2_loss`]),
//! * a relaxed loss-augmented inference objective ([`losses::structured_loss`]),
//!   optionally averaged over targets drawn from an image-aware label
//!   distribution ([`smoothing`]).
//!
//! Every loss returns an analytic gradient with respect to the heatmap
//! scores. [`toy`] runs the one-dimensional gradient-descent experiment,
//! [`synth`] trains a linear scorer on a synthetic ellipse task, and
//! [`metrics`] scores predictions by NME, failure rate and CED/AUC.

pub mod error;
pub mod heatmap;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod rng;
pub mod smoothing;
pub mod synth;
pub mod toy;

pub use error::{Error, Result};
pub use heatmap::{make_gaussian_target, Argmax, GridCoord, Heatmap, LandmarkSet, Point};
pub use losses::{
    heatmap_mse_loss, margin, mean_structured_loss, smoothed_structured_loss, soft_argmax_l2_loss, structured_loss,
    LossGrad, MarginKind, MarginSpec, StructuredLossConfig,
};
pub use metrics::{auc_ced, evaluate, failure_rate, nme, EvalConfig, EvalReport};
pub use smoothing::{
    build_edge_heatmap, crop_patch, fit_gaussian_label, refine_edge_heatmap, sample_label, BoundaryDef, GaussianLabel,
    SmoothingConfig,
};
pub use synth::{
    compare_convergence, generate_dataset, run_bench, train, BenchConfig, BenchReport, BenchRun, Convergence,
    DatasetParams, LinearScorer, Objective, SynthImage, SynthSample, TrainConfig,
};
pub use toy::{run_toy, ToyConfig, ToyObjective, ToyTrace};
