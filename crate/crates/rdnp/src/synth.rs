//! Synthetic RD datasets with known ground truth, for end-to-end
//! validation. The confounder layer follows the model: within each true
//! block, x ~ Normal(β₀ⱼ + β₁ⱼ·r, σⱼ²). The outcome layer is scaffolding
//! for recovery tests only: y = g(r) + Δ·t + noise, with piecewise-linear
//! g and jump Δ at the cutoff.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{validate_and_sort, DataError, RDDataset, Subject};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Per-block confounder model: x = intercept + slope·r + N(0, sigma2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockModel {
    pub intercept: f64,
    pub slope: f64,
    pub sigma2: f64,
}

/// Outcome model: y = intercept + slope·r + slope_change·max(r − r₀, 0)
/// + jump·t + N(0, noise_sd²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub intercept: f64,
    pub slope: f64,
    #[serde(default)]
    pub slope_change: f64,
    pub jump: f64,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub cutoff: f64,
    /// Assignment values: uniform grid over this range plus jitter, then
    /// sorted.
    pub r_range: (f64, f64),
    /// Jitter amplitude as a fraction of the grid spacing.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// True composition of blocks (must sum to n).
    pub composition: Vec<usize>,
    /// One confounder model per block.
    pub blocks: Vec<BlockModel>,
    pub outcome: OutcomeModel,
    /// Probability of receiving treatment on (r ≥ r₀, r < r₀); sharp
    /// designs use (1, 0).
    pub compliance: (f64, f64),
    pub seed: u64,
}

fn default_jitter() -> f64 {
    0.5
}

// Variance floor applied to block sigma2 so that a configured zero still
// yields a proper density.
const SIGMA2_FLOOR: f64 = 1e-12;

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n < 2 {
            return Err(SynthError::InvalidConfig("n must be at least 2"));
        }
        if !(self.r_range.0 < self.cutoff && self.cutoff < self.r_range.1) {
            return Err(SynthError::InvalidConfig(
                "cutoff must lie strictly inside r_range",
            ));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(SynthError::InvalidConfig("jitter must lie in [0, 1]"));
        }
        if self.composition.iter().sum::<usize>() != self.n {
            return Err(SynthError::InvalidConfig("composition must sum to n"));
        }
        if self.composition.contains(&0) {
            return Err(SynthError::InvalidConfig("composition blocks must be positive"));
        }
        if self.blocks.len() != self.composition.len() {
            return Err(SynthError::InvalidConfig(
                "one block model per composition entry",
            ));
        }
        if self.blocks.iter().any(|b| b.sigma2 < 0.0) {
            return Err(SynthError::InvalidConfig("sigma2 must be non-negative"));
        }
        if self.outcome.noise_sd < 0.0 {
            return Err(SynthError::InvalidConfig("noise_sd must be non-negative"));
        }
        let (p1, p0) = self.compliance;
        if !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p0) {
            return Err(SynthError::InvalidConfig("compliance must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Generated dataset plus the echoed ground truth.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub data: RDDataset,
    pub truth: SynthConfig,
}

/// Deterministic generation given the seed.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n;
    let (lo, hi) = config.r_range;
    let spacing = (hi - lo) / n as f64;

    let mut r: Vec<f64> = (0..n)
        .map(|i| {
            let center = lo + (i as f64 + 0.5) * spacing;
            center + config.jitter * spacing * (rng.gen::<f64>() - 0.5)
        })
        .collect();
    r.sort_by(f64::total_cmp);

    // Block labels follow the composition over the sorted order.
    let mut block_of = Vec::with_capacity(n);
    for (j, &size) in config.composition.iter().enumerate() {
        block_of.extend(std::iter::repeat_n(j, size));
    }

    let mut subjects = Vec::with_capacity(n);
    for i in 0..n {
        let block = &config.blocks[block_of[i]];
        let z: f64 = StandardNormal.sample(&mut rng);
        let x = block.intercept + block.slope * r[i] + block.sigma2.max(SIGMA2_FLOOR).sqrt() * z;

        let assigned = r[i] >= config.cutoff;
        let p = if assigned {
            config.compliance.0
        } else {
            config.compliance.1
        };
        let t = rng.gen::<f64>() < p;

        let om = &config.outcome;
        let noise: f64 = StandardNormal.sample(&mut rng);
        let y = om.intercept
            + om.slope * r[i]
            + om.slope_change * (r[i] - config.cutoff).max(0.0)
            + om.jump * f64::from(t)
            + om.noise_sd * noise;

        subjects.push(Subject {
            id: format!("s{i:04}"),
            r: r[i],
            x,
            y,
            t,
        });
    }

    let data = validate_and_sort(subjects, config.cutoff)?;
    Ok(SynthOutput {
        data,
        truth: config.clone(),
    })
}
