//! Kernel two-sample and independence tests for samples whose elements are
//! finite sets of points, such as irregularly sampled time series.
//!
//! Each set is summarized by the mean of random Fourier features over its
//! points; a Gaussian kernel on those embeddings drives a weighted MMD
//! (`rmmd2`) or HSIC (`rhsic`) statistic, calibrated by permutation.

pub mod baselines;
pub mod data;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod permutation;
pub mod pipeline;
pub mod rff;
pub mod stats;
pub mod synthetic;
pub mod tuning;
mod util;

pub use data::{ObservationSet, PairedSample, Sample, Weighting};
pub use error::{Error, Result};
pub use kernel::{gram, gaussian_k, GramMatrix, SecondLevel};
pub use permutation::{p_value, SelectedParams, TestResult};
pub use pipeline::{run_independence, run_two_sample, Outcome, TestConfig};
pub use rff::{EmbeddedSample, RffBasis};
pub use stats::{rhsic, rmmd2, StatisticValue};
pub use tuning::{ParamGrid, TuningReport};
pub use util::{derive_seed, derive_seed_indexed};
