//! Local-randomization inference: extract the posterior-random cluster
//! around the cutoff from each partition draw, compute the two-group
//! comparison battery inside it, and aggregate draws into a posterior
//! report.
//!
//! Every statistic carries a computable flag (`Option`): draws where a
//! statistic's minimum group sizes are not met contribute nothing to that
//! statistic's summary, and nothing is ever filled in with sentinel
//! numbers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::RDDataset;
use crate::partition::{Hyperparameters, OrderedPartition};
use crate::sampler::{batch_means_mcse, ChainConfig};
use crate::special::{ks_exact_p, ks_two_sample, sample_quantile, t_p_two_sided};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LocalError {
    #[error("no draws to summarize")]
    NoDraws,
    #[error("credible level must lie strictly between 0 and 1")]
    InvalidLevel,
}

/// Sharp designs take treatment as assigned; fuzzy designs additionally
/// scale the mean difference by the compliance contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sharp,
    Fuzzy,
}

/// Index of the subject whose assignment variable is nearest the cutoff.
/// Distance ties prefer the treated side (r ≥ r₀), then the smallest
/// index.
pub fn anchor_index(data: &RDDataset, r0: f64) -> usize {
    let mut best = 0usize;
    let mut best_dist = f64::INFINITY;
    let mut best_treated = false;
    for i in 0..data.n() {
        let dist = (data.r(i) - r0).abs();
        let treated = data.r(i) >= r0;
        if dist < best_dist || (dist == best_dist && treated && !best_treated) {
            best = i;
            best_dist = dist;
            best_treated = treated;
        }
    }
    best
}

/// The block of a partition containing the anchor subject, split into the
/// control side (r < r₀) and treated side (r ≥ r₀). Members are contiguous
/// in r-sorted order; the treated side is a suffix. Either side may be
/// empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LocalCluster {
    start: usize,
    end: usize,
    treated_from: usize,
}

impl LocalCluster {
    pub fn members(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn control(&self) -> std::ops::Range<usize> {
        self.start..self.treated_from
    }

    pub fn treated(&self) -> std::ops::Range<usize> {
        self.treated_from..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn control_len(&self) -> usize {
        self.treated_from - self.start
    }

    pub fn treated_len(&self) -> usize {
        self.end - self.treated_from
    }
}

/// Members of the block containing the anchor subject i₀.
pub fn extract_cluster(
    partition: &OrderedPartition,
    i0: usize,
    data: &RDDataset,
) -> LocalCluster {
    assert_eq!(partition.n(), data.n(), "partition and dataset sizes differ");
    let block = partition.block_containing(i0);
    let start = block.start;
    let end = block.start + block.len;
    // r is sorted, so the treated side (r ≥ r₀) is a suffix of the block.
    let treated_from = (start..end)
        .find(|&i| data.treated_side(i))
        .unwrap_or(end);
    LocalCluster {
        start,
        end,
        treated_from,
    }
}

/// Per-group summary statistics; `None` marks a statistic whose minimum
/// group size (or nonzero-variance requirement) is not met.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub size: usize,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub iqr: Option<f64>,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
    /// Quantiles at 1, 10, 25, 50, 75, 90, 99 percent.
    pub quantiles: [Option<f64>; 7],
}

pub const QUANTILE_PROBS: [f64; 7] = [0.01, 0.10, 0.25, 0.50, 0.75, 0.90, 0.99];

fn summarize_group(y: &[f64]) -> GroupSummary {
    let m = y.len();
    let mean = (m >= 1).then(|| y.iter().sum::<f64>() / m as f64);
    let mut variance = None;
    let mut iqr = None;
    let mut skewness = None;
    let mut kurtosis = None;
    let mut quantiles = [None; 7];
    if m >= 2 {
        let mu = mean.expect("m >= 1");
        variance = Some(y.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (m - 1) as f64);
        let mut sorted = y.to_vec();
        sorted.sort_by(f64::total_cmp);
        for (slot, p) in quantiles.iter_mut().zip(QUANTILE_PROBS) {
            *slot = Some(sample_quantile(&sorted, p).expect("nonempty sorted"));
        }
        let q25 = sample_quantile(&sorted, 0.25).expect("nonempty");
        let q75 = sample_quantile(&sorted, 0.75).expect("nonempty");
        iqr = Some(q75 - q25);
        // Central moments with 1/m weights; kurtosis is non-excess.
        let m2 = y.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / m as f64;
        if m2 > 0.0 {
            let m3 = y.iter().map(|v| (v - mu).powi(3)).sum::<f64>() / m as f64;
            let m4 = y.iter().map(|v| (v - mu).powi(4)).sum::<f64>() / m as f64;
            skewness = Some(m3 / m2.powf(1.5));
            kurtosis = Some(m4 / (m2 * m2));
        }
    }
    GroupSummary {
        size: m,
        mean,
        variance,
        iqr,
        skewness,
        kurtosis,
        quantiles,
    }
}

/// All two-group statistics computed inside one posterior cluster.
///
/// The t statistic is Welch's, oriented control − treatment; F is
/// s²_control / s²_treatment with a two-sided p-value; the exceedance
/// probabilities count ties on both sides, so pr_ge + pr_le − tie_mass = 1
/// holds exactly at the level of pair counts. `mean_diff` is oriented
/// treatment − control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonDraw {
    pub treatment: GroupSummary,
    pub control: GroupSummary,
    pub t_stat: Option<f64>,
    pub t_pvalue: Option<f64>,
    pub f_stat: Option<f64>,
    pub f_pvalue: Option<f64>,
    pub ks_stat: Option<f64>,
    pub ks_pvalue: Option<f64>,
    pub pr_ge: Option<f64>,
    pub pr_le: Option<f64>,
    pub tie_mass: Option<f64>,
    pub mean_diff: Option<f64>,
    pub fuzzy_mean_diff: Option<f64>,
    pub tbar_treated_side: Option<f64>,
    pub tbar_control_side: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub mode: Mode,
    /// Replace the asymptotic KS p-value with the exact permutation one
    /// when both sides are small enough.
    pub exact_ks: bool,
    /// Largest per-side size for the exact KS permutation p-value.
    pub exact_ks_max_side: usize,
    /// Weak-instrument guard for the fuzzy divided difference.
    pub weak_instrument_tol: f64,
}

impl CompareOptions {
    pub fn new(mode: Mode) -> Self {
        CompareOptions {
            mode,
            exact_ks: false,
            exact_ks_max_side: 10,
            weak_instrument_tol: 0.05,
        }
    }
}

/// Two-group comparison with default options for the mode.
pub fn compare_groups(
    y_treat: &[f64],
    y_control: &[f64],
    t_treat: &[bool],
    t_control: &[bool],
    mode: Mode,
) -> ComparisonDraw {
    compare_groups_with(y_treat, y_control, t_treat, t_control, &CompareOptions::new(mode))
}

pub fn compare_groups_with(
    y_treat: &[f64],
    y_control: &[f64],
    t_treat: &[bool],
    t_control: &[bool],
    opts: &CompareOptions,
) -> ComparisonDraw {
    assert_eq!(y_treat.len(), t_treat.len(), "treated y/t lengths differ");
    assert_eq!(y_control.len(), t_control.len(), "control y/t lengths differ");
    let treatment = summarize_group(y_treat);
    let control = summarize_group(y_control);
    let mt = y_treat.len();
    let mc = y_control.len();

    // Welch t, oriented control − treatment, with two-sided p-value.
    let mut t_stat = None;
    let mut t_pvalue = None;
    let mut f_stat = None;
    let mut f_pvalue = None;
    if mt >= 2 && mc >= 2 {
        let (s2t, s2c) = (
            treatment.variance.expect("mt >= 2"),
            control.variance.expect("mc >= 2"),
        );
        let se2 = s2c / mc as f64 + s2t / mt as f64;
        if se2 > 0.0 {
            let t = (control.mean.expect("mc >= 1") - treatment.mean.expect("mt >= 1"))
                / se2.sqrt();
            let df = se2 * se2
                / ((s2c / mc as f64).powi(2) / (mc as f64 - 1.0)
                    + (s2t / mt as f64).powi(2) / (mt as f64 - 1.0));
            t_stat = Some(t);
            t_pvalue = t_p_two_sided(t, df).ok();
        }
        if s2t > 0.0 && s2c > 0.0 {
            let f = s2c / s2t;
            f_stat = Some(f);
            f_pvalue =
                crate::special::f_p_two_sided(f, mc as f64 - 1.0, mt as f64 - 1.0).ok();
        }
    }

    // Two-sample KS.
    let mut ks_stat = None;
    let mut ks_pvalue = None;
    if mt >= 2 && mc >= 2 {
        if let Ok(ks) = ks_two_sample(y_treat, y_control) {
            ks_stat = Some(ks.d);
            ks_pvalue = if opts.exact_ks
                && mt <= opts.exact_ks_max_side
                && mc <= opts.exact_ks_max_side
            {
                ks_exact_p(y_treat, y_control).ok()
            } else {
                ks.p
            };
        }
    }

    // Exceedance probabilities from exact pair counts; ties count in both.
    let mut pr_ge = None;
    let mut pr_le = None;
    let mut tie_mass = None;
    if mt >= 1 && mc >= 1 {
        let (mut ge, mut le, mut eq) = (0u64, 0u64, 0u64);
        for &yt in y_treat {
            for &yc in y_control {
                if yt >= yc {
                    ge += 1;
                }
                if yt <= yc {
                    le += 1;
                }
                if yt == yc {
                    eq += 1;
                }
            }
        }
        let total = (mt * mc) as f64;
        pr_ge = Some(ge as f64 / total);
        pr_le = Some(le as f64 / total);
        tie_mass = Some(eq as f64 / total);
    }

    let mean_diff = match (treatment.mean, control.mean) {
        (Some(t), Some(c)) => Some(t - c),
        _ => None,
    };
    let tbar_treated_side =
        (mt >= 1).then(|| t_treat.iter().filter(|&&t| t).count() as f64 / mt as f64);
    let tbar_control_side =
        (mc >= 1).then(|| t_control.iter().filter(|&&t| t).count() as f64 / mc as f64);

    let fuzzy_mean_diff = match (opts.mode, mean_diff, tbar_treated_side, tbar_control_side) {
        (Mode::Fuzzy, Some(md), Some(tr), Some(tl)) => {
            fuzzy_scale(md, tr, tl, opts.weak_instrument_tol)
        }
        _ => None,
    };

    ComparisonDraw {
        treatment,
        control,
        t_stat,
        t_pvalue,
        f_stat,
        f_pvalue,
        ks_stat,
        ks_pvalue,
        pr_ge,
        pr_le,
        tie_mass,
        mean_diff,
        fuzzy_mean_diff,
        tbar_treated_side,
        tbar_control_side,
    }
}

/// Instrumental-variables divided difference: mean_diff divided by the
/// compliance contrast. Returns `None` (the weak-instrument flag) when the
/// contrast is smaller than `tol` in magnitude.
pub fn fuzzy_scale(mean_diff: f64, tbar_right: f64, tbar_left: f64, tol: f64) -> Option<f64> {
    let denom = tbar_right - tbar_left;
    (denom.abs() >= tol).then(|| mean_diff / denom)
}

/// Computes the per-draw statistics for the cluster of one partition draw.
pub fn compare_cluster(
    cluster: &LocalCluster,
    data: &RDDataset,
    opts: &CompareOptions,
) -> ComparisonDraw {
    let y_treat: Vec<f64> = cluster.treated().map(|i| data.y(i)).collect();
    let y_control: Vec<f64> = cluster.control().map(|i| data.y(i)).collect();
    let t_treat: Vec<bool> = cluster.treated().map(|i| data.t(i)).collect();
    let t_control: Vec<bool> = cluster.control().map(|i| data.t(i)).collect();
    compare_groups_with(&y_treat, &y_control, &t_treat, &t_control, opts)
}

// ---------------------------------------------------------------------------
// Posterior aggregation.

/// Identity of one reported scalar: a per-group statistic or a cross-group
/// one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatKey {
    Group(GroupStat, Group),
    Cross(CrossStat),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    NonTreatment,
    Treatment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupStat {
    SampleSize,
    Mean,
    Variance,
    Iqr,
    Skewness,
    Kurtosis,
    Q01,
    Q10,
    Q25,
    Q50,
    Q75,
    Q90,
    Q99,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossStat {
    TStat,
    TPvalue,
    FStat,
    FPvalue,
    PrGe,
    PrLe,
    KsStat,
    KsPvalue,
    TieMass,
    MeanDiff,
    FuzzyMeanDiff,
    TbarTreatedSide,
    TbarControlSide,
}

const GROUP_STATS: [GroupStat; 13] = [
    GroupStat::SampleSize,
    GroupStat::Mean,
    GroupStat::Variance,
    GroupStat::Iqr,
    GroupStat::Skewness,
    GroupStat::Kurtosis,
    GroupStat::Q01,
    GroupStat::Q10,
    GroupStat::Q25,
    GroupStat::Q50,
    GroupStat::Q75,
    GroupStat::Q90,
    GroupStat::Q99,
];

const CROSS_STATS: [CrossStat; 13] = [
    CrossStat::TStat,
    CrossStat::TPvalue,
    CrossStat::FStat,
    CrossStat::FPvalue,
    CrossStat::PrGe,
    CrossStat::PrLe,
    CrossStat::KsStat,
    CrossStat::KsPvalue,
    CrossStat::TieMass,
    CrossStat::MeanDiff,
    CrossStat::FuzzyMeanDiff,
    CrossStat::TbarTreatedSide,
    CrossStat::TbarControlSide,
];

impl GroupStat {
    fn name(self) -> &'static str {
        match self {
            GroupStat::SampleSize => "sample_size",
            GroupStat::Mean => "mean",
            GroupStat::Variance => "variance",
            GroupStat::Iqr => "iqr",
            GroupStat::Skewness => "skewness",
            GroupStat::Kurtosis => "kurtosis",
            GroupStat::Q01 => "q01",
            GroupStat::Q10 => "q10",
            GroupStat::Q25 => "q25",
            GroupStat::Q50 => "q50",
            GroupStat::Q75 => "q75",
            GroupStat::Q90 => "q90",
            GroupStat::Q99 => "q99",
        }
    }

    fn extract(self, g: &GroupSummary) -> Option<f64> {
        match self {
            GroupStat::SampleSize => Some(g.size as f64),
            GroupStat::Mean => g.mean,
            GroupStat::Variance => g.variance,
            GroupStat::Iqr => g.iqr,
            GroupStat::Skewness => g.skewness,
            GroupStat::Kurtosis => g.kurtosis,
            GroupStat::Q01 => g.quantiles[0],
            GroupStat::Q10 => g.quantiles[1],
            GroupStat::Q25 => g.quantiles[2],
            GroupStat::Q50 => g.quantiles[3],
            GroupStat::Q75 => g.quantiles[4],
            GroupStat::Q90 => g.quantiles[5],
            GroupStat::Q99 => g.quantiles[6],
        }
    }
}

impl CrossStat {
    fn name(self) -> &'static str {
        match self {
            CrossStat::TStat => "t_stat",
            CrossStat::TPvalue => "t_pvalue",
            CrossStat::FStat => "f_stat",
            CrossStat::FPvalue => "f_pvalue",
            CrossStat::PrGe => "pr_y1_ge_y0",
            CrossStat::PrLe => "pr_y1_le_y0",
            CrossStat::KsStat => "ks_stat",
            CrossStat::KsPvalue => "ks_pvalue",
            CrossStat::TieMass => "tie_mass",
            CrossStat::MeanDiff => "mean_diff",
            CrossStat::FuzzyMeanDiff => "fuzzy_mean_diff",
            CrossStat::TbarTreatedSide => "tbar_treated_side",
            CrossStat::TbarControlSide => "tbar_control_side",
        }
    }

    fn extract(self, d: &ComparisonDraw) -> Option<f64> {
        match self {
            CrossStat::TStat => d.t_stat,
            CrossStat::TPvalue => d.t_pvalue,
            CrossStat::FStat => d.f_stat,
            CrossStat::FPvalue => d.f_pvalue,
            CrossStat::PrGe => d.pr_ge,
            CrossStat::PrLe => d.pr_le,
            CrossStat::KsStat => d.ks_stat,
            CrossStat::KsPvalue => d.ks_pvalue,
            CrossStat::TieMass => d.tie_mass,
            CrossStat::MeanDiff => d.mean_diff,
            CrossStat::FuzzyMeanDiff => d.fuzzy_mean_diff,
            CrossStat::TbarTreatedSide => d.tbar_treated_side,
            CrossStat::TbarControlSide => d.tbar_control_side,
        }
    }
}

impl StatKey {
    /// The reporting order: per-group statistics first (non-treatment then
    /// treatment columns), then the cross-group tests, then extensions.
    pub fn all() -> Vec<StatKey> {
        let mut out = Vec::with_capacity(GROUP_STATS.len() * 2 + CROSS_STATS.len());
        for gs in GROUP_STATS {
            out.push(StatKey::Group(gs, Group::NonTreatment));
            out.push(StatKey::Group(gs, Group::Treatment));
        }
        for cs in CROSS_STATS {
            out.push(StatKey::Cross(cs));
        }
        out
    }

    pub fn name(&self) -> String {
        match self {
            StatKey::Group(gs, Group::NonTreatment) => format!("non_treatment.{}", gs.name()),
            StatKey::Group(gs, Group::Treatment) => format!("treatment.{}", gs.name()),
            StatKey::Cross(cs) => cs.name().to_string(),
        }
    }

    pub fn extract(&self, draw: &ComparisonDraw) -> Option<f64> {
        match self {
            StatKey::Group(gs, Group::NonTreatment) => gs.extract(&draw.control),
            StatKey::Group(gs, Group::Treatment) => gs.extract(&draw.treatment),
            StatKey::Cross(cs) => cs.extract(draw),
        }
    }
}

/// Posterior summary of one statistic over the computable draws: mean,
/// equal-tail credible interval, the fraction of draws where computable,
/// and the batch-means MC half-width. Null fields mark a statistic that
/// was computable in no draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub statistic: String,
    pub mean: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub computable_fraction: f64,
    pub mc_half_width: Option<f64>,
}

/// Summarizes a draw sequence into the per-statistic table at the given
/// equal-tail credible level.
pub fn summarize(draws: &[ComparisonDraw], level: f64) -> Result<Vec<StatSummary>, LocalError> {
    let refs: Vec<&ComparisonDraw> = draws.iter().collect();
    summarize_refs(&refs, level)
}

/// Same as [`summarize`] over borrowed draws; lets callers keep one
/// deduplicated draw per distinct cluster.
pub fn summarize_refs(
    draws: &[&ComparisonDraw],
    level: f64,
) -> Result<Vec<StatSummary>, LocalError> {
    if draws.is_empty() {
        return Err(LocalError::NoDraws);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(LocalError::InvalidLevel);
    }
    let tail = 0.5 * (1.0 - level);
    let n_draws = draws.len() as f64;
    let mut out = Vec::new();
    for key in StatKey::all() {
        // Time-ordered computable values for this statistic.
        let values: Vec<f64> = draws.iter().filter_map(|d| key.extract(d)).collect();
        if values.is_empty() {
            out.push(StatSummary {
                statistic: key.name(),
                mean: None,
                lo: None,
                hi: None,
                computable_fraction: 0.0,
                mc_half_width: None,
            });
            continue;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let lo = sample_quantile(&sorted, tail).expect("nonempty");
        let hi = sample_quantile(&sorted, 1.0 - tail).expect("nonempty");
        let mc_half_width = batch_means_mcse(&values).ok().map(|bm| bm.half_width);
        out.push(StatSummary {
            statistic: key.name(),
            mean: Some(mean),
            lo: Some(lo),
            hi: Some(hi),
            computable_fraction: values.len() as f64 / n_draws,
            mc_half_width,
        });
    }
    Ok(out)
}

/// Acceptance summary for one move type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveRate {
    pub kind: String,
    pub proposed: u64,
    pub accepted: u64,
    pub rate: Option<f64>,
}

/// Chain diagnostics block of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDiagnostics {
    pub total_draws: usize,
    pub kept_draws: usize,
    pub moves: Vec<MoveRate>,
    pub k_mean: Option<f64>,
    pub k_mcse: Option<f64>,
    pub k_half_width: Option<f64>,
    pub k_ess_proxy: Option<f64>,
}

/// Run provenance: everything needed to reproduce the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub version: String,
    pub mode: Mode,
    pub cutoff: f64,
    pub n_subjects: usize,
    pub seed: u64,
    pub rng_algorithm: String,
    pub min_side: usize,
    pub credible_level: f64,
    pub hyperparameters: Hyperparameters,
    pub chain: ChainConfig,
    pub confounder_source: String,
    pub dropped_covariates: Vec<String>,
    pub data_digest: String,
    pub config_digest: String,
    /// Full resolved run configuration, echoed verbatim.
    pub config_echo: String,
}

/// The Table-1-style posterior report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub statistics: Vec<StatSummary>,
    pub diagnostics: ReportDiagnostics,
    pub metadata: ReportMetadata,
    pub notes: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{validate_and_sort, Subject};
    use approx::assert_abs_diff_eq;

    fn dataset(rs: &[f64], ys: &[f64], cutoff: f64) -> RDDataset {
        let raw: Vec<Subject> = rs
            .iter()
            .zip(ys)
            .enumerate()
            .map(|(i, (&r, &y))| Subject {
                id: format!("s{i}"),
                r,
                x: 0.0,
                y,
                t: r >= cutoff,
            })
            .collect();
        validate_and_sort(raw, cutoff).unwrap()
    }

    #[test]
    fn anchor_nearest_with_tie_rules() {
        let ds = dataset(&[-2.0, -0.5, 0.3, 1.0], &[0.0; 4], 0.0);
        assert_eq!(anchor_index(&ds, 0.0), 2); // |0.3| < |−0.5|

        let ds = dataset(&[-1.0, 1.0], &[0.0; 2], 0.0);
        assert_eq!(anchor_index(&ds, 0.0), 1); // tie broken toward treated

        let ds = dataset(&[-1.0, 0.0, 2.0], &[0.0; 3], 0.0);
        assert_eq!(anchor_index(&ds, 0.0), 1); // exact hit
    }

    #[test]
    fn cluster_extraction() {
        let ds = dataset(&[-2.0, -1.0, -0.5, 0.3, 1.0], &[0.0; 5], 0.0);
        let p = OrderedPartition::from_labels(&[1, 1, 2, 2, 3]).unwrap();
        let i0 = anchor_index(&ds, 0.0);
        assert_eq!(i0, 3);
        let cluster = extract_cluster(&p, i0, &ds);
        assert_eq!(cluster.members(), 2..4);
        assert_eq!(cluster.control(), 2..3);
        assert_eq!(cluster.treated(), 3..4);

        // k = 1: the cluster is everything.
        let p1 = OrderedPartition::one_block(5);
        let c1 = extract_cluster(&p1, i0, &ds);
        assert_eq!(c1.members(), 0..5);
        assert_eq!(c1.control_len(), 3);
        assert_eq!(c1.treated_len(), 2);

        // Anchor on the control side with the block ending before the
        // cutoff: treated side empty.
        let ds2 = dataset(&[-2.0, -0.1, 3.0, 4.0], &[0.0; 4], 0.0);
        let p2 = OrderedPartition::from_labels(&[1, 1, 2, 2]).unwrap();
        let c2 = extract_cluster(&p2, 1, &ds2);
        assert_eq!(c2.treated_len(), 0);
        assert_eq!(c2.control_len(), 2);
    }

    #[test]
    fn identical_groups_comparison() {
        let y = [1.0, 2.0, 3.0];
        let t = [true; 3];
        let c = [false; 3];
        let d = compare_groups(&y, &y, &t, &c, Mode::Sharp);
        assert_eq!(d.t_stat, Some(0.0));
        assert_eq!(d.ks_stat, Some(0.0));
        assert_abs_diff_eq!(d.pr_ge.unwrap(), 6.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.pr_le.unwrap(), 6.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.tie_mass.unwrap(), 3.0 / 9.0, epsilon = 1e-15);
        assert_eq!(d.mean_diff, Some(0.0));
        assert_eq!(d.f_stat, Some(1.0));
    }

    #[test]
    fn exceedance_pair_counts() {
        let d = compare_groups(&[2.0, 3.0], &[1.0, 2.0], &[true; 2], &[false; 2], Mode::Sharp);
        assert_eq!(d.pr_ge, Some(1.0));
        assert_eq!(d.pr_le, Some(0.25));
        assert_eq!(d.tie_mass, Some(0.25));
    }

    #[test]
    fn disjoint_supports_ks() {
        let d = compare_groups(&[10.0, 11.0], &[0.0, 1.0], &[true; 2], &[false; 2], Mode::Sharp);
        assert_eq!(d.ks_stat, Some(1.0));
    }

    #[test]
    fn single_treated_subject_flags() {
        let d = compare_groups(
            &[5.0],
            &[1.0, 2.0, 3.0],
            &[true],
            &[false; 3],
            Mode::Sharp,
        );
        assert_eq!(d.treatment.mean, Some(5.0));
        assert_eq!(d.treatment.variance, None);
        assert_eq!(d.t_stat, None);
        assert_eq!(d.f_stat, None);
        assert_eq!(d.ks_stat, None);
        assert_eq!(d.ks_pvalue, None);
        // Exceedance only needs one per side.
        assert_eq!(d.pr_ge, Some(1.0));
        assert_eq!(d.mean_diff, Some(3.0));
    }

    #[test]
    fn welch_orientation_control_minus_treatment() {
        // Treatment mean larger => negative t.
        let d = compare_groups(
            &[2.0, 3.0, 4.0],
            &[0.0, 1.0, 2.0],
            &[true; 3],
            &[false; 3],
            Mode::Sharp,
        );
        assert!(d.t_stat.unwrap() < 0.0);
        assert!(d.mean_diff.unwrap() > 0.0);
    }

    #[test]
    fn fuzzy_scaling() {
        assert_abs_diff_eq!(
            fuzzy_scale(1.0, 0.8, 0.1, 0.05).unwrap(),
            1.0 / 0.7,
            epsilon = 1e-12
        );
        // Sharp compliance: denominator is exactly 1, value unchanged.
        assert_eq!(fuzzy_scale(0.37, 1.0, 0.0, 0.05), Some(0.37));
        // Weak instrument.
        assert_eq!(fuzzy_scale(1.0, 0.52, 0.50, 0.05), None);
    }

    #[test]
    fn fuzzy_mode_on_sharp_data_equals_unscaled() {
        let y_t = [1.5, 2.5, 2.0];
        let y_c = [0.5, 1.0];
        let d = compare_groups(&y_t, &y_c, &[true; 3], &[false; 2], Mode::Fuzzy);
        assert_eq!(d.fuzzy_mean_diff, d.mean_diff);
        // Sharp mode leaves the fuzzy entry absent.
        let d = compare_groups(&y_t, &y_c, &[true; 3], &[false; 2], Mode::Sharp);
        assert_eq!(d.fuzzy_mean_diff, None);
    }

    #[test]
    fn invariance_properties() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let mt = rng.gen_range(2..12);
            let mc = rng.gen_range(2..12);
            let y_t: Vec<f64> = (0..mt).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y_c: Vec<f64> = (0..mc).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let tt = vec![true; mt];
            let tc = vec![false; mc];
            let base = compare_groups(&y_t, &y_c, &tt, &tc, Mode::Sharp);

            // Shift invariance.
            let c = rng.gen_range(-5.0..5.0);
            let y_ts: Vec<f64> = y_t.iter().map(|v| v + c).collect();
            let y_cs: Vec<f64> = y_c.iter().map(|v| v + c).collect();
            let shifted = compare_groups(&y_ts, &y_cs, &tt, &tc, Mode::Sharp);
            assert_abs_diff_eq!(
                shifted.treatment.mean.unwrap(),
                base.treatment.mean.unwrap() + c,
                epsilon = 1e-9
            );
            assert_abs_diff_eq!(
                shifted.treatment.variance.unwrap(),
                base.treatment.variance.unwrap(),
                epsilon = 1e-9
            );
            assert_abs_diff_eq!(
                shifted.control.iqr.unwrap(),
                base.control.iqr.unwrap(),
                epsilon = 1e-9
            );
            assert_abs_diff_eq!(
                shifted.t_stat.unwrap(),
                base.t_stat.unwrap(),
                epsilon = 1e-7
            );
            assert_eq!(shifted.ks_stat, base.ks_stat);
            assert_abs_diff_eq!(shifted.pr_ge.unwrap(), base.pr_ge.unwrap(), epsilon = 1e-15);

            // Scale invariance of tests; variance scales by λ².
            let lambda = rng.gen_range(0.1..4.0);
            let y_tl: Vec<f64> = y_t.iter().map(|v| v * lambda).collect();
            let y_cl: Vec<f64> = y_c.iter().map(|v| v * lambda).collect();
            let scaled = compare_groups(&y_tl, &y_cl, &tt, &tc, Mode::Sharp);
            assert_abs_diff_eq!(
                scaled.t_stat.unwrap(),
                base.t_stat.unwrap(),
                epsilon = 1e-7
            );
            assert_abs_diff_eq!(
                scaled.f_stat.unwrap(),
                base.f_stat.unwrap(),
                epsilon = 1e-7
            );
            assert_eq!(scaled.ks_stat, base.ks_stat);
            assert_abs_diff_eq!(
                scaled.treatment.variance.unwrap(),
                base.treatment.variance.unwrap() * lambda * lambda,
                epsilon = 1e-7 * lambda * lambda
            );

            // Antisymmetry: swapping groups negates t, inverts F, swaps the
            // exceedance probabilities, keeps KS.
            let swapped = compare_groups(&y_c, &y_t, &tc, &tt, Mode::Sharp);
            assert_abs_diff_eq!(
                swapped.t_stat.unwrap(),
                -base.t_stat.unwrap(),
                epsilon = 1e-9
            );
            assert_abs_diff_eq!(
                swapped.f_stat.unwrap(),
                1.0 / base.f_stat.unwrap(),
                epsilon = 1e-9 / base.f_stat.unwrap()
            );
            assert_abs_diff_eq!(swapped.pr_ge.unwrap(), base.pr_le.unwrap(), epsilon = 1e-15);
            assert_abs_diff_eq!(swapped.pr_le.unwrap(), base.pr_ge.unwrap(), epsilon = 1e-15);
            assert_eq!(swapped.ks_stat, base.ks_stat);

            // Exceedance identity at the pair-count level.
            let total = (mt * mc) as f64;
            let ge = (base.pr_ge.unwrap() * total).round() as i64;
            let le = (base.pr_le.unwrap() * total).round() as i64;
            let eq = (base.tie_mass.unwrap() * total).round() as i64;
            assert_eq!(ge + le - eq, (mt * mc) as i64);
        }
    }

    #[test]
    fn summarize_constant_and_ramp() {
        let y_t = [2.0, 3.0];
        let y_c = [1.0, 1.5];
        let d = compare_groups(&y_t, &y_c, &[true; 2], &[false; 2], Mode::Sharp);
        let draws = vec![d; 50];
        let table = summarize(&draws, 0.95).unwrap();
        let md = table.iter().find(|s| s.statistic == "mean_diff").unwrap();
        assert_eq!(md.mean, Some(1.25));
        assert_eq!(md.lo, Some(1.25));
        assert_eq!(md.hi, Some(1.25));
        assert_eq!(md.computable_fraction, 1.0);
        // Too short for batch means.
        assert_eq!(md.mc_half_width, None);

        // A ramp of 1000 values: interval ≈ (0.025975, 0.975025) under the
        // interpolation rule.
        let mut draws = Vec::new();
        for i in 1..=1000 {
            let mut d = draws_template();
            d.mean_diff = Some(i as f64 / 1000.0);
            draws.push(d);
        }
        let table = summarize(&draws, 0.95).unwrap();
        let md = table.iter().find(|s| s.statistic == "mean_diff").unwrap();
        assert_abs_diff_eq!(md.lo.unwrap(), 0.025975, epsilon = 1e-12);
        assert_abs_diff_eq!(md.hi.unwrap(), 0.975025, epsilon = 1e-12);
        assert!(md.mc_half_width.is_some());

        // Sharp draws never produce the fuzzy effect: absent, fraction 0.
        let fz = table
            .iter()
            .find(|s| s.statistic == "fuzzy_mean_diff")
            .unwrap();
        assert_eq!(fz.mean, None);
        assert_eq!(fz.computable_fraction, 0.0);

        assert_eq!(summarize(&[], 0.95), Err(LocalError::NoDraws));
        assert_eq!(summarize(&draws, 1.0), Err(LocalError::InvalidLevel));
    }

    fn draws_template() -> ComparisonDraw {
        compare_groups(
            &[2.0, 3.0],
            &[1.0, 1.5],
            &[true; 2],
            &[false; 2],
            Mode::Sharp,
        )
    }

    #[test]
    fn report_order_is_fixed() {
        let keys = StatKey::all();
        assert_eq!(keys.len(), 39);
        assert_eq!(keys[0].name(), "non_treatment.sample_size");
        assert_eq!(keys[1].name(), "treatment.sample_size");
        assert_eq!(keys[2].name(), "non_treatment.mean");
        assert_eq!(keys[26].name(), "t_stat");
        assert_eq!(keys[38].name(), "tbar_control_side");
    }
}
