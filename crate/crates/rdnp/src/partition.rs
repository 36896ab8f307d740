//! Prior over order-constrained partitions and the conjugate per-block
//! marginal likelihood, combined into the log posterior kernel.
//!
//! A partition of n subjects (in assignment order) with non-decreasing
//! cluster labels is the same object as a composition (n₁, …, n_k) of n
//! into contiguous blocks. The prior over compositions is
//!
//! ```text
//! π(ρ) = α^k / α^[n] · n!/k! · Π_j 1/n_j,    α^[n] = α(α+1)⋯(α+n−1),
//! ```
//!
//! which sums to one over all 2^{n−1} compositions. Each block contributes
//! the marginal density of its x values under a normal linear regression on
//! (1, r) with the coefficients and variance integrated out against a
//! normal–inverse-gamma base measure:
//!
//! ```text
//! m(x_j) = (2π)^{−n_j/2} √(|C|/|C + R'R|) · bᵃ Γ(a + n_j/2) / (Γ(a) (b + V_j²/2)^{a + n_j/2})
//! V_j²   = e'e − u'(C + R'R)⁻¹u,    e = x − R β₀,    u = R'e.
//! ```
//!
//! V_j² is evaluated through the 2×2 solve above (the Woodbury form of
//! (x − Rβ₀)'(I + R C⁻¹R')⁻¹(x − Rβ₀)), so a block costs O(n_j) and no
//! n_j×n_j matrix is ever materialized. All probability computations are
//! in log space.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::RDDataset;
use crate::special::lgamma;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid partition: {0}")]
    InvalidPartition(&'static str),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(&'static str),
    #[error("empty block")]
    EmptyBlock,
    #[error("length mismatch: {0}")]
    LengthMismatch(&'static str),
    #[error("numerical breakdown in block marginal: {0}")]
    NumericalBreakdown(String),
}

/// A contiguous block of subjects, identified by position in r-sorted
/// order. Block identity is positional, so cached values stay valid for a
/// fixed dataset and hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockId {
    pub start: usize,
    pub len: usize,
}

/// An order-constrained partition: non-decreasing labels s₁ ≤ … ≤ sₙ,
/// stored as the equivalent composition of n into k contiguous block
/// sizes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OrderedPartition {
    sizes: Vec<usize>,
    n: usize,
}

impl OrderedPartition {
    pub fn from_block_sizes(sizes: Vec<usize>) -> Result<Self, ModelError> {
        if sizes.is_empty() {
            return Err(ModelError::InvalidPartition("no blocks"));
        }
        if sizes.contains(&0) {
            return Err(ModelError::InvalidPartition("zero-size block"));
        }
        let n = sizes.iter().sum();
        Ok(OrderedPartition { sizes, n })
    }

    /// From 1-based labels s₁ ≤ … ≤ sₙ that are surjective onto {1..k}.
    pub fn from_labels(labels: &[usize]) -> Result<Self, ModelError> {
        if labels.is_empty() {
            return Err(ModelError::InvalidPartition("no labels"));
        }
        if labels[0] != 1 {
            return Err(ModelError::InvalidPartition("labels must start at 1"));
        }
        let mut sizes = vec![1usize];
        for w in labels.windows(2) {
            if w[1] == w[0] {
                *sizes.last_mut().expect("nonempty") += 1;
            } else if w[1] == w[0] + 1 {
                sizes.push(1);
            } else {
                return Err(ModelError::InvalidPartition(
                    "labels must be non-decreasing with unit steps",
                ));
            }
        }
        Self::from_block_sizes(sizes)
    }

    /// Single block containing everything.
    pub fn one_block(n: usize) -> Self {
        Self::from_block_sizes(vec![n]).expect("n >= 1")
    }

    /// All-singleton partition.
    pub fn singletons(n: usize) -> Self {
        Self::from_block_sizes(vec![1; n]).expect("n >= 1")
    }

    /// k contiguous blocks with sizes differing by at most one (larger
    /// blocks first).
    pub fn equal_blocks(n: usize, k: usize) -> Self {
        assert!(k >= 1 && k <= n, "need 1 <= k <= n");
        let base = n / k;
        let extra = n % k;
        let sizes = (0..k).map(|j| base + usize::from(j < extra)).collect();
        Self::from_block_sizes(sizes).expect("positive sizes")
    }

    pub(crate) fn from_sizes_unchecked(sizes: Vec<usize>) -> Self {
        debug_assert!(!sizes.is_empty() && sizes.iter().all(|&s| s > 0));
        let n = sizes.iter().sum();
        OrderedPartition { sizes, n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// 1-based labels for each subject in r-sorted order.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n);
        for (j, &s) in self.sizes.iter().enumerate() {
            out.extend(std::iter::repeat_n(j + 1, s));
        }
        out
    }

    /// Iterate blocks as positional ranges.
    pub fn blocks(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.sizes.iter().scan(0usize, |start, &len| {
            let b = BlockId {
                start: *start,
                len,
            };
            *start += len;
            Some(b)
        })
    }

    /// The block containing subject i.
    pub fn block_containing(&self, i: usize) -> BlockId {
        assert!(i < self.n, "subject index out of range");
        let mut start = 0;
        for &len in &self.sizes {
            if i < start + len {
                return BlockId { start, len };
            }
            start += len;
        }
        unreachable!("sizes sum to n")
    }
}

/// Which prior factor the posterior kernel uses for the number of
/// clusters. `AlphaPowK` is the model prior α^{k}; `AlphaTimesK` is the
/// literal α·k reading of the posterior display, kept for forensic
/// comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriorVariant {
    #[default]
    AlphaPowK,
    AlphaTimesK,
}

/// rDP precision α and the normal–inverse-gamma base measure (β₀, C, a, b)
/// for the per-block regression of x on (1, r).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub alpha: f64,
    pub beta0: [f64; 2],
    /// Coefficient precision scaling: β | σ² ~ N(β₀, σ² C⁻¹).
    pub c: [[f64; 2]; 2],
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub prior_variant: PriorVariant,
}

impl Default for Hyperparameters {
    /// Vague settings: β₀ = 0, C = diag(10³, 10), α = a = b = 1.
    fn default() -> Self {
        Hyperparameters {
            alpha: 1.0,
            beta0: [0.0, 0.0],
            c: [[1000.0, 0.0], [0.0, 10.0]],
            a: 1.0,
            b: 1.0,
            prior_variant: PriorVariant::AlphaPowK,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), ModelError> {
        let finite = self.alpha.is_finite()
            && self.a.is_finite()
            && self.b.is_finite()
            && self.beta0.iter().all(|v| v.is_finite())
            && self.c.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(ModelError::InvalidHyperparameters("non-finite value"));
        }
        if self.alpha <= 0.0 || self.a <= 0.0 || self.b <= 0.0 {
            return Err(ModelError::InvalidHyperparameters(
                "alpha, a, b must be positive",
            ));
        }
        if self.c[0][1] != self.c[1][0] {
            return Err(ModelError::InvalidHyperparameters("C must be symmetric"));
        }
        if self.c[0][0] <= 0.0 || self.det_c() <= 0.0 {
            return Err(ModelError::InvalidHyperparameters(
                "C must be positive definite",
            ));
        }
        Ok(())
    }

    fn det_c(&self) -> f64 {
        self.c[0][0] * self.c[1][1] - self.c[0][1] * self.c[1][0]
    }
}

/// Log prior of an ordered partition:
/// log[ α^k / α^[n] · n!/k! · Π_j 1/n_j ], via log-gamma throughout.
pub fn log_prior(partition: &OrderedPartition, alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha.is_finite(), "alpha must be positive");
    let n = partition.n() as f64;
    let k = partition.k() as f64;
    let log_rising = lgamma(alpha + n) - lgamma(alpha);
    let mut lp = k * alpha.ln() - log_rising + lgamma(n + 1.0) - lgamma(k + 1.0);
    for &nj in partition.block_sizes() {
        lp -= (nj as f64).ln();
    }
    lp
}

// Prior contribution to the kernel under the chosen variant. The
// AlphaTimesK branch is unnormalized (constants dropped).
fn log_prior_term(partition: &OrderedPartition, alpha: f64, variant: PriorVariant) -> f64 {
    match variant {
        PriorVariant::AlphaPowK => log_prior(partition, alpha),
        PriorVariant::AlphaTimesK => {
            let k = partition.k() as f64;
            let mut lp = (alpha * k).ln() - lgamma(k + 1.0);
            for &nj in partition.block_sizes() {
                lp -= (nj as f64).ln();
            }
            lp
        }
    }
}

/// Log marginal density of a block's x values given its r values, with
/// regression coefficients and variance integrated out.
pub fn block_log_marginal(
    x_block: &[f64],
    r_block: &[f64],
    hyper: &Hyperparameters,
) -> Result<f64, ModelError> {
    if x_block.len() != r_block.len() {
        return Err(ModelError::LengthMismatch("x and r blocks differ in length"));
    }
    block_log_marginal_iter(
        x_block.iter().copied().zip(r_block.iter().copied()),
        hyper,
    )
}

/// Same marginal for a positional block of a dataset.
pub fn block_log_marginal_range(
    data: &RDDataset,
    block: BlockId,
    hyper: &Hyperparameters,
) -> Result<f64, ModelError> {
    let end = block.start + block.len;
    assert!(end <= data.n(), "block out of range");
    block_log_marginal_iter(
        (block.start..end).map(|i| (data.x(i), data.r(i))),
        hyper,
    )
}

fn block_log_marginal_iter(
    pairs: impl Iterator<Item = (f64, f64)>,
    hyper: &Hyperparameters,
) -> Result<f64, ModelError> {
    let [b0, b1] = hyper.beta0;
    let mut m = 0usize;
    let (mut sum_r, mut sum_rr) = (0.0f64, 0.0f64);
    // e = x − β₀'(1, r); accumulate e'e and u = R'e directly for accuracy.
    let (mut ee, mut u0, mut u1) = (0.0f64, 0.0f64, 0.0f64);
    for (x, r) in pairs {
        let e = x - b0 - b1 * r;
        m += 1;
        sum_r += r;
        sum_rr += r * r;
        ee += e * e;
        u0 += e;
        u1 += r * e;
    }
    if m == 0 {
        return Err(ModelError::EmptyBlock);
    }
    let mf = m as f64;

    // M = C + R'R, a 2×2 SPD system.
    let m00 = hyper.c[0][0] + mf;
    let m01 = hyper.c[0][1] + sum_r;
    let m11 = hyper.c[1][1] + sum_rr;
    let det_m = m00 * m11 - m01 * m01;
    if !det_m.is_finite() || det_m <= 0.0 {
        return Err(ModelError::NumericalBreakdown(format!(
            "C + R'R not positive definite (det = {det_m})"
        )));
    }
    // u'M⁻¹u via the adjugate.
    let quad = (m11 * u0 * u0 - 2.0 * m01 * u0 * u1 + m00 * u1 * u1) / det_m;
    let mut v2 = ee - quad;
    if v2 < -1e-10 {
        return Err(ModelError::NumericalBreakdown(format!(
            "negative quadratic form V^2 = {v2}"
        )));
    }
    if v2 < 0.0 {
        v2 = 0.0;
    }

    let det_c = hyper.c[0][0] * hyper.c[1][1] - hyper.c[0][1] * hyper.c[1][0];
    let (a, b) = (hyper.a, hyper.b);
    Ok(-0.5 * mf * (2.0 * std::f64::consts::PI).ln()
        + 0.5 * (det_c.ln() - det_m.ln())
        + a * b.ln()
        + lgamma(a + 0.5 * mf)
        - lgamma(a)
        - (a + 0.5 * mf) * (b + 0.5 * v2).ln())
}

/// Memo of per-block log marginals, keyed by positional block identity.
/// Entries never invalidate: use one cache per (dataset, hyperparameters)
/// pair and never share it across chains.
#[derive(Debug, Default)]
pub struct BlockCache {
    map: HashMap<BlockId, f64>,
}

impl BlockCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get_or_compute(
        &mut self,
        data: &RDDataset,
        hyper: &Hyperparameters,
        block: BlockId,
    ) -> Result<f64, ModelError> {
        if let Some(&v) = self.map.get(&block) {
            return Ok(v);
        }
        let v = block_log_marginal_range(data, block, hyper)?;
        self.map.insert(block, v);
        Ok(v)
    }
}

/// Unnormalized log posterior over partitions: prior term plus the sum of
/// per-block log marginals, with block values served from the cache.
pub fn log_posterior_kernel(
    partition: &OrderedPartition,
    data: &RDDataset,
    hyper: &Hyperparameters,
    cache: &mut BlockCache,
) -> Result<f64, ModelError> {
    if partition.n() != data.n() {
        return Err(ModelError::LengthMismatch(
            "partition and dataset sizes differ",
        ));
    }
    let mut lk = log_prior_term(partition, hyper.alpha, hyper.prior_variant);
    for block in partition.blocks() {
        lk += cache.get_or_compute(data, hyper, block)?;
    }
    Ok(lk)
}

/// Cache-free kernel evaluation, used for consistency checks.
pub fn log_posterior_kernel_uncached(
    partition: &OrderedPartition,
    data: &RDDataset,
    hyper: &Hyperparameters,
) -> Result<f64, ModelError> {
    if partition.n() != data.n() {
        return Err(ModelError::LengthMismatch(
            "partition and dataset sizes differ",
        ));
    }
    let mut lk = log_prior_term(partition, hyper.alpha, hyper.prior_variant);
    for block in partition.blocks() {
        lk += block_log_marginal_range(data, block, hyper)?;
    }
    Ok(lk)
}
