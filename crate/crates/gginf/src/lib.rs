//! Monte Carlo laboratory for the busy-server process of a G/G/infinity
//! queue with regularly varying service tails.
//!
//! The crate simulates queue trajectories driven by a renewal arrival walk
//! with paired heavy-tailed service times, forms centered and normalized
//! functionals of the busy-server count on a time grid, and checks their
//! empirical law against the limiting Gaussian process with covariance
//! `u^{1-beta} - (u-s)^{1-beta}`. The limit process itself can be sampled
//! two independent ways (Cholesky factorization and a discretized
//! white-noise integral over the plane), which cross-validates both.

pub mod error;
pub mod limitproc;
pub mod mc;
pub mod models;
pub mod pathgen;
pub mod statistics;

pub use error::{Error, Result};
pub use limitproc::{sample_cholesky, sample_sheet, CovKernel, SheetDiscretization};
pub use mc::{
    compare_dependence, covariance_report, renewal_clt_diagnostic, run_experiment,
    CovarianceReport, ExperimentConfig, MarginalReport,
};
pub use models::{DependenceSpec, InterarrivalSpec, ModelConfig, ServiceTailSpec};
pub use pathgen::{evaluate_counts, generate_path, renewal_count, QueuePath};
pub use statistics::{compute_statistic, increment_moment, NormalizerMode, StatisticKind};
