//! Metropolis–Hastings over ordered partitions via split and merge moves.
//!
//! With the within-block regression parameters marginalized out the state
//! space is the discrete set of compositions, so the move is plain MH: no
//! trans-dimensional Jacobian exists. At each step a move type is chosen
//! with equal probability among the available ones (split impossible for
//! all-singleton states, merge impossible for k = 1), then the proposal
//! picks uniformly among blocks and interior cut points. The Hastings
//! correction accounts for all of that asymmetry, including the forced-move
//! edge masses.
//!
//! An optional boundary-shift move (move one subject across an adjacent
//! block boundary) can be enabled to help mixing; it is off by default.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::RDDataset;
use crate::partition::{
    log_posterior_kernel, log_posterior_kernel_uncached, BlockCache, Hyperparameters, ModelError,
    OrderedPartition,
};

/// Name of the chain RNG, recorded in reports for reproducibility.
pub const RNG_ALGORITHM: &str = "chacha8";

/// The RNG driving a chain; seeded from `ChainConfig::seed`.
pub type ChainRng = ChaCha8Rng;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("invalid chain config: {0}")]
    InvalidConfig(&'static str),
    #[error("trace too short for batch means: {len} < {min}")]
    TraceTooShort { len: usize, min: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub initial_blocks: usize,
    pub enable_shift_move: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 200_000,
            burn_in: 20_000,
            thin: 1,
            seed: 0,
            initial_blocks: 10,
            enable_shift_move: false,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self, n: usize) -> Result<(), SamplerError> {
        if self.iterations == 0 {
            return Err(SamplerError::InvalidConfig("iterations must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(SamplerError::InvalidConfig(
                "burn_in must be smaller than iterations",
            ));
        }
        if self.thin == 0 {
            return Err(SamplerError::InvalidConfig("thin must be positive"));
        }
        if self.initial_blocks == 0 || self.initial_blocks > n {
            return Err(SamplerError::InvalidConfig(
                "initial_blocks must be in 1..=n",
            ));
        }
        Ok(())
    }

    /// Number of retained draws.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Split,
    Merge,
    Shift,
}

impl MoveKind {
    pub const ALL: [MoveKind; 3] = [MoveKind::Split, MoveKind::Merge, MoveKind::Shift];

    pub fn name(self) -> &'static str {
        match self {
            MoveKind::Split => "split",
            MoveKind::Merge => "merge",
            MoveKind::Shift => "shift",
        }
    }
}

/// A proposed transition with its Hastings log-ratio
/// log q(ρ|ρ′) − log q(ρ′|ρ).
#[derive(Debug, Clone)]
pub struct Proposal {
    pub candidate: OrderedPartition,
    pub log_proposal_ratio: f64,
    pub kind: MoveKind,
}

// Move-type availability. A split needs some block of size ≥ 2 (k < n), a
// merge needs k ≥ 2, a shift needs both.
fn available(p: &OrderedPartition, enable_shift: bool) -> (bool, bool, bool) {
    let k = p.k();
    let n = p.n();
    let can_split = k < n;
    let can_merge = k > 1;
    let can_shift = enable_shift && can_split && can_merge;
    (can_split, can_merge, can_shift)
}

// Probability of selecting `kind` from state `p` (uniform over available
// types); 0 if the kind is unavailable.
fn type_prob(p: &OrderedPartition, enable_shift: bool, kind: MoveKind) -> f64 {
    let (s, m, h) = available(p, enable_shift);
    let avail = usize::from(s) + usize::from(m) + usize::from(h);
    let ok = match kind {
        MoveKind::Split => s,
        MoveKind::Merge => m,
        MoveKind::Shift => h,
    };
    if ok {
        1.0 / avail as f64
    } else {
        0.0
    }
}

fn splittable_count(sizes: &[usize]) -> usize {
    sizes.iter().filter(|&&s| s >= 2).count()
}

// Number of valid directed boundary shifts: at each of the k−1 boundaries,
// the donor block must keep at least one subject.
fn shift_count(sizes: &[usize]) -> usize {
    sizes
        .windows(2)
        .map(|w| usize::from(w[0] >= 2) + usize::from(w[1] >= 2))
        .sum()
}

/// Draws a candidate move. Returns `None` only for n = 1, where no move
/// exists.
pub fn propose<R: Rng>(
    current: &OrderedPartition,
    enable_shift: bool,
    rng: &mut R,
) -> Option<Proposal> {
    let (can_split, can_merge, can_shift) = available(current, enable_shift);
    let mut kinds = Vec::with_capacity(3);
    if can_split {
        kinds.push(MoveKind::Split);
    }
    if can_merge {
        kinds.push(MoveKind::Merge);
    }
    if can_shift {
        kinds.push(MoveKind::Shift);
    }
    if kinds.is_empty() {
        return None;
    }
    let kind = kinds[rng.gen_range(0..kinds.len())];
    let p_type = 1.0 / kinds.len() as f64;
    let sizes = current.block_sizes();

    match kind {
        MoveKind::Split => {
            let splittable: Vec<usize> = (0..sizes.len()).filter(|&j| sizes[j] >= 2).collect();
            let j = splittable[rng.gen_range(0..splittable.len())];
            let cut = rng.gen_range(1..sizes[j]); // left part size
            let mut cand = Vec::with_capacity(sizes.len() + 1);
            cand.extend_from_slice(&sizes[..j]);
            cand.push(cut);
            cand.push(sizes[j] - cut);
            cand.extend_from_slice(&sizes[j + 1..]);
            let candidate = OrderedPartition::from_sizes_unchecked(cand);
            let log_fwd =
                p_type.ln() - (splittable.len() as f64).ln() - ((sizes[j] - 1) as f64).ln();
            // Reverse: merge the produced pair among the k new adjacent pairs.
            let p_rev_type = type_prob(&candidate, enable_shift, MoveKind::Merge);
            let log_rev = p_rev_type.ln() - (current.k() as f64).ln();
            Some(Proposal {
                candidate,
                log_proposal_ratio: log_rev - log_fwd,
                kind,
            })
        }
        MoveKind::Merge => {
            let j = rng.gen_range(0..sizes.len() - 1);
            let merged = sizes[j] + sizes[j + 1];
            let mut cand = Vec::with_capacity(sizes.len() - 1);
            cand.extend_from_slice(&sizes[..j]);
            cand.push(merged);
            cand.extend_from_slice(&sizes[j + 2..]);
            let candidate = OrderedPartition::from_sizes_unchecked(cand);
            let log_fwd = p_type.ln() - ((sizes.len() - 1) as f64).ln();
            // Reverse: split the merged block at the original cut.
            let p_rev_type = type_prob(&candidate, enable_shift, MoveKind::Split);
            let log_rev = p_rev_type.ln()
                - (splittable_count(candidate.block_sizes()) as f64).ln()
                - ((merged - 1) as f64).ln();
            Some(Proposal {
                candidate,
                log_proposal_ratio: log_rev - log_fwd,
                kind,
            })
        }
        MoveKind::Shift => {
            // Directed shifts: (boundary b, direction). Right moves the last
            // subject of block b into block b+1; left moves the first subject
            // of block b+1 into block b.
            let total = shift_count(sizes);
            debug_assert!(total > 0);
            let mut pick = rng.gen_range(0..total);
            let mut chosen = None;
            'outer: for b in 0..sizes.len() - 1 {
                for right in [true, false] {
                    let valid = if right { sizes[b] >= 2 } else { sizes[b + 1] >= 2 };
                    if valid {
                        if pick == 0 {
                            chosen = Some((b, right));
                            break 'outer;
                        }
                        pick -= 1;
                    }
                }
            }
            let (b, right) = chosen.expect("pick < total");
            let mut cand = sizes.to_vec();
            if right {
                cand[b] -= 1;
                cand[b + 1] += 1;
            } else {
                cand[b] += 1;
                cand[b + 1] -= 1;
            }
            let candidate = OrderedPartition::from_sizes_unchecked(cand);
            let log_fwd = p_type.ln() - (total as f64).ln();
            let p_rev_type = type_prob(&candidate, enable_shift, MoveKind::Shift);
            let log_rev = p_rev_type.ln() - (shift_count(candidate.block_sizes()) as f64).ln();
            Some(Proposal {
                candidate,
                log_proposal_ratio: log_rev - log_fwd,
                kind,
            })
        }
    }
}

/// Full proposal distribution from a state: every reachable candidate with
/// its probability. Enumeration counterpart of [`propose`], used to verify
/// the kernel sums to one and the Hastings ratios.
pub fn proposal_distribution(
    current: &OrderedPartition,
    enable_shift: bool,
) -> Vec<(OrderedPartition, f64)> {
    let sizes = current.block_sizes();
    let mut out = Vec::new();
    let p_split = type_prob(current, enable_shift, MoveKind::Split);
    let p_merge = type_prob(current, enable_shift, MoveKind::Merge);
    let p_shift = type_prob(current, enable_shift, MoveKind::Shift);

    if p_split > 0.0 {
        let s = splittable_count(sizes) as f64;
        for j in 0..sizes.len() {
            if sizes[j] < 2 {
                continue;
            }
            for cut in 1..sizes[j] {
                let mut cand = Vec::with_capacity(sizes.len() + 1);
                cand.extend_from_slice(&sizes[..j]);
                cand.push(cut);
                cand.push(sizes[j] - cut);
                cand.extend_from_slice(&sizes[j + 1..]);
                out.push((
                    OrderedPartition::from_sizes_unchecked(cand),
                    p_split / s / (sizes[j] - 1) as f64,
                ));
            }
        }
    }
    if p_merge > 0.0 {
        let pairs = (sizes.len() - 1) as f64;
        for j in 0..sizes.len() - 1 {
            let mut cand = Vec::with_capacity(sizes.len() - 1);
            cand.extend_from_slice(&sizes[..j]);
            cand.push(sizes[j] + sizes[j + 1]);
            cand.extend_from_slice(&sizes[j + 2..]);
            out.push((OrderedPartition::from_sizes_unchecked(cand), p_merge / pairs));
        }
    }
    if p_shift > 0.0 {
        let total = shift_count(sizes) as f64;
        for b in 0..sizes.len() - 1 {
            for right in [true, false] {
                let valid = if right { sizes[b] >= 2 } else { sizes[b + 1] >= 2 };
                if !valid {
                    continue;
                }
                let mut cand = sizes.to_vec();
                if right {
                    cand[b] -= 1;
                    cand[b + 1] += 1;
                } else {
                    cand[b] += 1;
                    cand[b + 1] -= 1;
                }
                out.push((OrderedPartition::from_sizes_unchecked(cand), p_shift / total));
            }
        }
    }
    out
}

/// Proposed/accepted counts for one move type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStat {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveStat {
    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounters {
    pub split: MoveStat,
    pub merge: MoveStat,
    pub shift: MoveStat,
}

impl MoveCounters {
    pub fn stat(&self, kind: MoveKind) -> MoveStat {
        match kind {
            MoveKind::Split => self.split,
            MoveKind::Merge => self.merge,
            MoveKind::Shift => self.shift,
        }
    }

    fn stat_mut(&mut self, kind: MoveKind) -> &mut MoveStat {
        match kind {
            MoveKind::Split => &mut self.split,
            MoveKind::Merge => &mut self.merge,
            MoveKind::Shift => &mut self.shift,
        }
    }
}

/// Current partition plus its cached log kernel and move counters.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub partition: OrderedPartition,
    pub log_kernel: f64,
    pub moves: MoveCounters,
    enable_shift: bool,
}

impl ChainState {
    pub fn new(partition: OrderedPartition, log_kernel: f64, enable_shift: bool) -> Self {
        ChainState {
            partition,
            log_kernel,
            moves: MoveCounters::default(),
            enable_shift,
        }
    }

    pub fn shift_enabled(&self) -> bool {
        self.enable_shift
    }
}

/// One MH step. Returns whether the proposal was accepted; the state's
/// log kernel is kept consistent using only the affected blocks' cache
/// entries.
pub fn mh_step<R: Rng>(
    state: &mut ChainState,
    data: &RDDataset,
    hyper: &Hyperparameters,
    cache: &mut BlockCache,
    rng: &mut R,
) -> Result<bool, SamplerError> {
    let Some(prop) = propose(&state.partition, state.enable_shift, rng) else {
        return Ok(false); // n = 1: nothing to do
    };
    state.moves.stat_mut(prop.kind).proposed += 1;
    let cand_kernel = log_posterior_kernel(&prop.candidate, data, hyper, cache)?;
    let log_accept = (cand_kernel - state.log_kernel) + prop.log_proposal_ratio;
    let accept = log_accept >= 0.0 || rng.gen::<f64>().ln() < log_accept;
    if accept {
        state.partition = prop.candidate;
        state.log_kernel = cand_kernel;
        state.moves.stat_mut(prop.kind).accepted += 1;
    }
    Ok(accept)
}

/// Chain-level diagnostics: per-move acceptance counts and the trace of
/// the number of clusters over retained draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub moves: MoveCounters,
    pub k_trace: Vec<usize>,
}

impl Diagnostics {
    pub fn k_mean(&self) -> Option<f64> {
        (!self.k_trace.is_empty())
            .then(|| self.k_trace.iter().sum::<usize>() as f64 / self.k_trace.len() as f64)
    }

    pub fn k_batch_means(&self) -> Option<BatchMeans> {
        let trace: Vec<f64> = self.k_trace.iter().map(|&k| k as f64).collect();
        batch_means_mcse(&trace).ok()
    }

    pub fn k_ess_proxy(&self) -> Option<f64> {
        let trace: Vec<f64> = self.k_trace.iter().map(|&k| k as f64).collect();
        ess_proxy(&trace).ok()
    }
}

/// Runs a chain, invoking `on_draw(draw_index, state)` for every retained
/// (post-burn-in, thinned) draw. Deterministic given the seed.
pub fn run_chain_with(
    data: &RDDataset,
    hyper: &Hyperparameters,
    config: &ChainConfig,
    mut on_draw: impl FnMut(usize, &ChainState),
) -> Result<Diagnostics, SamplerError> {
    hyper.validate()?;
    config.validate(data.n())?;
    let mut rng = ChainRng::seed_from_u64(config.seed);
    let mut cache = BlockCache::new();
    let initial = OrderedPartition::equal_blocks(data.n(), config.initial_blocks);
    let log_kernel = log_posterior_kernel(&initial, data, hyper, &mut cache)?;
    let mut state = ChainState::new(initial, log_kernel, config.enable_shift_move);
    let mut k_trace = Vec::with_capacity(config.retained());
    let mut draw_idx = 0usize;

    for step in 0..config.iterations {
        mh_step(&mut state, data, hyper, &mut cache, &mut rng)?;

        #[cfg(debug_assertions)]
        if (step + 1).is_multiple_of(1000) {
            let fresh = log_posterior_kernel_uncached(&state.partition, data, hyper)?;
            debug_assert!(
                (fresh - state.log_kernel).abs() <= 1e-8,
                "incremental kernel drifted: {} vs {}",
                state.log_kernel,
                fresh
            );
        }

        if step >= config.burn_in && (step - config.burn_in).is_multiple_of(config.thin) {
            k_trace.push(state.partition.k());
            on_draw(draw_idx, &state);
            draw_idx += 1;
        }
    }
    Ok(Diagnostics {
        moves: state.moves,
        k_trace,
    })
}

/// The retained draws plus diagnostics.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub draws: Vec<OrderedPartition>,
    pub diagnostics: Diagnostics,
}

/// Runs a chain and collects the retained partitions.
pub fn run_chain(
    data: &RDDataset,
    hyper: &Hyperparameters,
    config: &ChainConfig,
) -> Result<ChainRun, SamplerError> {
    let mut draws = Vec::with_capacity(config.retained());
    let diagnostics = run_chain_with(data, hyper, config, |_, state| {
        draws.push(state.partition.clone());
    })?;
    Ok(ChainRun { draws, diagnostics })
}

/// Batch-means Monte Carlo standard error with ⌊√N⌋ batches and the 95%
/// half-width 1.96·mcse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMeans {
    pub mcse: f64,
    pub half_width: f64,
}

/// Minimum trace length accepted by [`batch_means_mcse`].
pub const MIN_TRACE_LEN: usize = 100;

pub fn batch_means_mcse(trace: &[f64]) -> Result<BatchMeans, SamplerError> {
    let n = trace.len();
    if n < MIN_TRACE_LEN {
        return Err(SamplerError::TraceTooShort {
            len: n,
            min: MIN_TRACE_LEN,
        });
    }
    // ⌊√N⌋ batches of equal size; any tail remainder is dropped.
    let n_batches = (n as f64).sqrt().floor() as usize;
    let batch = n / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|i| trace[i * batch..(i + 1) * batch].iter().sum::<f64>() / batch as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / n_batches as f64;
    let s2 = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    let mcse = (s2 / n_batches as f64).sqrt();
    Ok(BatchMeans {
        mcse,
        half_width: 1.96 * mcse,
    })
}

/// Effective-sample-size proxy: sample variance over squared MCSE. For a
/// constant trace (both zero) the full length is returned.
pub fn ess_proxy(trace: &[f64]) -> Result<f64, SamplerError> {
    let bm = batch_means_mcse(trace)?;
    let n = trace.len() as f64;
    let mean = trace.iter().sum::<f64>() / n;
    let var = trace.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if bm.mcse == 0.0 {
        return Ok(n);
    }
    Ok((var / (bm.mcse * bm.mcse)).min(n))
}
