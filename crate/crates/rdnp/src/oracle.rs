//! Exact brute-force posterior over all ordered partitions for small n.
//!
//! An order-constrained partition is a composition of n, so the support
//! has exactly 2^{n−1} elements, enumerable through (n−1)-bit masks over
//! the gap positions. This module is the ground truth for prior
//! normalization, posterior kernels, the sampler, and posterior
//! functionals; it obviously cannot run at real-data scale.

use std::collections::HashMap;
use std::io::Write;

use thiserror::Error;

use crate::dataset::RDDataset;
use crate::partition::{
    log_posterior_kernel, BlockCache, Hyperparameters, ModelError, OrderedPartition,
};

/// Hard cap on the enumerable size: 2^19 compositions.
pub const MAX_EXACT_N: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("n = {n} too large for exact enumeration (max {max})")]
    TooLarge { n: usize, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// All compositions of n, ordered by gap mask: bit i of the mask set means
/// a block boundary between positions i and i+1.
pub fn enumerate_compositions(n: usize) -> Result<Vec<Vec<usize>>, OracleError> {
    if n == 0 || n > MAX_EXACT_N {
        return Err(OracleError::TooLarge { n, max: MAX_EXACT_N });
    }
    let count = 1usize << (n - 1);
    let mut out = Vec::with_capacity(count);
    for mask in 0..count {
        let mut sizes = Vec::new();
        let mut run = 1usize;
        for gap in 0..n - 1 {
            if mask & (1 << gap) != 0 {
                sizes.push(run);
                run = 1;
            } else {
                run += 1;
            }
        }
        sizes.push(run);
        out.push(sizes);
    }
    Ok(out)
}

/// Exact normalized distribution over all compositions of n.
#[derive(Debug, Clone)]
pub struct ExactPosterior {
    entries: Vec<(OrderedPartition, f64)>,
    index: HashMap<Vec<usize>, usize>,
    log_normalizer: f64,
    n: usize,
}

impl ExactPosterior {
    fn from_log_kernels(partitions: Vec<OrderedPartition>, log_kernels: Vec<f64>) -> Self {
        let n = partitions[0].n();
        let max = log_kernels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = log_kernels.iter().map(|&lk| (lk - max).exp()).sum();
        let log_normalizer = max + sum.ln();
        let entries: Vec<(OrderedPartition, f64)> = partitions
            .into_iter()
            .zip(&log_kernels)
            .map(|(p, &lk)| {
                let prob = (lk - log_normalizer).exp();
                (p, prob)
            })
            .collect();
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (p, _))| (p.block_sizes().to_vec(), i))
            .collect();
        ExactPosterior {
            entries,
            index,
            log_normalizer,
            n,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// (partition, probability) pairs in gap-mask order.
    pub fn entries(&self) -> &[(OrderedPartition, f64)] {
        &self.entries
    }

    pub fn probability(&self, block_sizes: &[usize]) -> Option<f64> {
        self.index.get(block_sizes).map(|&i| self.entries[i].1)
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// Exact expectation of a partition functional.
    pub fn expectation(&self, f: impl Fn(&OrderedPartition) -> f64) -> f64 {
        self.entries.iter().map(|(p, prob)| f(p) * prob).sum()
    }

    /// Exact P(sᵢ = sⱼ) for a pair of subjects.
    pub fn co_clustering(&self, i: usize, j: usize) -> f64 {
        self.expectation(|p| {
            let bi = p.block_containing(i);
            f64::from(j >= bi.start && j < bi.start + bi.len)
        })
    }

    /// Text table of the distribution: `composition<TAB>probability`.
    pub fn dump(&self, mut w: impl Write) -> std::io::Result<()> {
        for (p, prob) in &self.entries {
            let comp: Vec<String> = p.block_sizes().iter().map(|s| s.to_string()).collect();
            writeln!(w, "{}\t{:.17e}", comp.join(","), prob)?;
        }
        Ok(())
    }
}

/// Exact posterior over partitions of the dataset, normalizing the same
/// kernel the sampler uses.
pub fn exact_posterior(
    data: &RDDataset,
    hyper: &Hyperparameters,
) -> Result<ExactPosterior, OracleError> {
    hyper.validate()?;
    let n = data.n();
    let comps = enumerate_compositions(n)?;
    let mut cache = BlockCache::new();
    let mut partitions = Vec::with_capacity(comps.len());
    let mut kernels = Vec::with_capacity(comps.len());
    for sizes in comps {
        let p = OrderedPartition::from_block_sizes(sizes)?;
        kernels.push(log_posterior_kernel(&p, data, hyper, &mut cache)?);
        partitions.push(p);
    }
    Ok(ExactPosterior::from_log_kernels(partitions, kernels))
}

/// Exact prior distribution (likelihood terms deleted).
pub fn exact_prior(n: usize, alpha: f64) -> Result<ExactPosterior, OracleError> {
    let comps = enumerate_compositions(n)?;
    let mut partitions = Vec::with_capacity(comps.len());
    let mut kernels = Vec::with_capacity(comps.len());
    for sizes in comps {
        let p = OrderedPartition::from_block_sizes(sizes)?;
        kernels.push(crate::partition::log_prior(&p, alpha));
        partitions.push(p);
    }
    Ok(ExactPosterior::from_log_kernels(partitions, kernels))
}

/// Exact posterior expectation of a draw-level functional.
pub fn exact_functional(
    data: &RDDataset,
    hyper: &Hyperparameters,
    f: impl Fn(&OrderedPartition) -> f64,
) -> Result<f64, OracleError> {
    Ok(exact_posterior(data, hyper)?.expectation(f))
}
