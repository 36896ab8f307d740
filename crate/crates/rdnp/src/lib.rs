//! Bayesian nonparametric inference for regression discontinuity (RD) designs.
//!
//! The model clusters subjects into contiguous blocks of the assignment
//! variable by sampling order-constrained partitions from a restricted
//! Dirichlet process regression posterior. The block containing the subject
//! nearest the cutoff is a posterior-random set of locally-randomized
//! subjects; two-group comparisons of outcomes inside that block, averaged
//! over the posterior, yield credible-interval estimates of the treatment
//! effect. Sharp and fuzzy (imperfect-compliance) designs are supported.
//!
//! The pieces, bottom up:
//!
//! * [`special`] — log-gamma, incomplete beta, t/F/KS tails, quantiles.
//! * [`dataset`] — validated, r-sorted subject data.
//! * [`confounder`] — multivariate confounder scores via a ridge fit.
//! * [`partition`] — the ordered-partition prior and the conjugate
//!   per-block marginal likelihood (the posterior kernel).
//! * [`sampler`] — split/merge Metropolis–Hastings over partitions.
//! * [`local`] — cluster extraction, two-group statistics, posterior
//!   summaries.
//! * [`oracle`] — exact enumeration of the posterior for small n, used as
//!   ground truth in tests.
//! * [`synth`] — synthetic data generation with known ground truth.

pub mod confounder;
pub mod dataset;
pub mod local;
pub mod oracle;
pub mod partition;
pub mod sampler;
pub mod special;
pub mod synth;

pub use dataset::{validate_and_sort, DataError, RDDataset, Subject};
pub use local::{
    anchor_index, compare_groups, extract_cluster, fuzzy_scale, summarize, ComparisonDraw,
    LocalCluster, Mode, PosteriorReport, StatSummary,
};
pub use partition::{
    block_log_marginal, log_posterior_kernel, log_prior, BlockCache, BlockId, Hyperparameters,
    ModelError, OrderedPartition, PriorVariant,
};
pub use sampler::{
    batch_means_mcse, mh_step, propose, run_chain, run_chain_with, BatchMeans, ChainConfig,
    ChainState, Diagnostics, MoveKind, SamplerError,
};
