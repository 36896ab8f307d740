//! The end-to-end run: CSV → (optional confounder scoring) → validated
//! dataset → partition chain → per-draw cluster comparisons → posterior
//! report written to disk.
//!
//! Per-draw comparisons are memoized by the anchor block's positional
//! identity: for a fixed dataset the cluster statistics are a pure
//! function of (start, end), and chains revisit few distinct blocks.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;

use rdnp::confounder::score_covariates;
use rdnp::dataset::{validate_and_sort, RDDataset, Subject};
use rdnp::local::{
    anchor_index, compare_cluster, extract_cluster, summarize_refs, CompareOptions,
    ComparisonDraw, Mode, MoveRate, PosteriorReport, ReportDiagnostics, ReportMetadata,
};
use rdnp::sampler::{run_chain_with, MoveKind, RNG_ALGORITHM};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::csvio::CsvTable;
use crate::error::CliError;
use crate::report::write_report;

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads the CSV and assembles the validated dataset plus provenance
/// strings (data digest, confounder source, dropped covariates).
pub fn load_dataset(config: &RunConfig) -> Result<LoadedData, CliError> {
    let bytes = std::fs::read(&config.input.path)
        .map_err(|e| CliError::Data(format!("{}: {e}", config.input.path.display())))?;
    let data_digest = hex_digest(&bytes);
    let table = CsvTable::read(&config.input.path)?;
    if table.n_rows() == 0 {
        return Err(CliError::Data("empty input".into()));
    }

    let r0 = config.input.cutoff;
    let r = match &config.input.assignment {
        Some(asg) => {
            // r = (min over listed columns − offset) / scale.
            let cols: Vec<Vec<f64>> = asg
                .columns
                .iter()
                .map(|name| table.column_f64(name))
                .collect::<Result<_, _>>()?;
            (0..table.n_rows())
                .map(|i| {
                    let min = cols.iter().map(|c| c[i]).fold(f64::INFINITY, f64::min);
                    (min - asg.offset) / asg.scale
                })
                .collect()
        }
        None => table.column_f64(&config.input.r_column)?,
    };
    let y = table.column_f64(&config.input.y_column)?;

    let ids = {
        let id_col = match &config.input.id_column {
            Some(name) => Some(name.clone()),
            None => table.has_column("id").then(|| "id".to_string()),
        };
        match id_col {
            Some(name) => {
                let ids = table.column_string(&name)?;
                let mut seen = HashMap::new();
                for (row, id) in ids.iter().enumerate() {
                    if let Some(first) = seen.insert(id.clone(), row) {
                        return Err(CliError::Data(format!(
                            "duplicate id `{id}` on lines {} and {}",
                            first + 2,
                            row + 2
                        )));
                    }
                }
                ids
            }
            None => (0..table.n_rows()).map(|i| format!("row{i}")).collect(),
        }
    };

    // Confounder: either a column or the multivariate confounder score.
    let (x, confounder_source, dropped_covariates) = match (
        &config.confounder.column,
        &config.confounder.score,
    ) {
        (Some(name), None) => (
            table.column_f64(name)?,
            format!("column:{name}"),
            Vec::new(),
        ),
        (None, Some(score)) => {
            let covariates: Vec<Vec<f64>> = {
                let cols: Vec<Vec<f64>> = score
                    .columns
                    .iter()
                    .map(|name| table.column_f64(name))
                    .collect::<Result<_, _>>()?;
                (0..table.n_rows())
                    .map(|i| cols.iter().map(|c| c[i]).collect())
                    .collect()
            };
            let result = score_covariates(&covariates, &y, &r, r0, &score.basis, score.v)?;
            let dropped: Vec<String> = result
                .standardizer
                .dropped()
                .into_iter()
                .map(|j| score.columns[j].clone())
                .collect();
            let source = format!(
                "score(v={}, basis={:?}, columns={})",
                score.v,
                score.basis,
                score.columns.len()
            );
            (result.scores, source, dropped)
        }
        _ => unreachable!("validated: exactly one confounder source"),
    };

    // Treatment: sharp designs synthesize t = 1(r ≥ r₀) and reject a
    // contradicting column; fuzzy designs require the column.
    let t: Vec<bool> = match config.input.mode {
        Mode::Sharp => {
            if table.has_column(&config.input.t_column) {
                let given = table.column_binary(&config.input.t_column)?;
                for (i, &g) in given.iter().enumerate() {
                    if g != (r[i] >= r0) {
                        return Err(CliError::Data(format!(
                            "line {}: treatment column contradicts sharp assignment \
                             1(r >= cutoff); use mode = \"fuzzy\" for non-compliance",
                            i + 2
                        )));
                    }
                }
                given
            } else {
                r.iter().map(|&ri| ri >= r0).collect()
            }
        }
        Mode::Fuzzy => table.column_binary(&config.input.t_column)?,
    };

    let raw: Vec<Subject> = ids
        .into_iter()
        .zip(r.iter())
        .zip(y.iter())
        .zip(x.iter())
        .zip(t.iter())
        .map(|((((id, &r), &y), &x), &t)| Subject { id, r, x, y, t })
        .collect();
    let data = validate_and_sort(raw, r0)?;
    Ok(LoadedData {
        data,
        data_digest,
        confounder_source,
        dropped_covariates,
    })
}

#[derive(Debug)]
pub struct LoadedData {
    pub data: RDDataset,
    pub data_digest: String,
    pub confounder_source: String,
    pub dropped_covariates: Vec<String>,
}

/// Runs the full pipeline and writes the report (and optional trace
/// files). Returns the report and the path it was written to.
pub fn run(config: &RunConfig) -> Result<(PosteriorReport, PathBuf), CliError> {
    config.validate()?;
    let loaded = load_dataset(config)?;
    let report = run_on_dataset(config, &loaded)?;
    let path = write_report(&report, &config.report.path, config.report.format)?;
    Ok((report, path))
}

/// Pipeline after data loading; separated so tests can inject datasets.
pub fn run_on_dataset(
    config: &RunConfig,
    loaded: &LoadedData,
) -> Result<PosteriorReport, CliError> {
    let data = &loaded.data;
    let r0 = config.input.cutoff;
    let i0 = anchor_index(data, r0);
    let opts = CompareOptions {
        mode: config.input.mode,
        exact_ks: config.flags.exact_ks,
        ..CompareOptions::new(config.input.mode)
    };

    // One ComparisonDraw per distinct anchor block; per-draw keys.
    let mut memo: HashMap<(usize, usize), ComparisonDraw> = HashMap::new();
    let mut keys: Vec<(usize, usize)> = Vec::with_capacity(config.chain.retained());
    let mut kept_flags: Vec<bool> = Vec::with_capacity(config.chain.retained());
    let mut side_ok: HashMap<(usize, usize), bool> = HashMap::new();
    let min_side = config.report.min_side;
    let mut trace_k: Vec<usize> = Vec::new();
    let mut trace_kernel: Vec<f64> = Vec::new();
    let collect_traces = config.flags.debug_traces;

    let diagnostics = run_chain_with(data, &config.prior, &config.chain, |_, state| {
        let cluster = extract_cluster(&state.partition, i0, data);
        let key = (cluster.members().start, cluster.members().end);
        memo.entry(key)
            .or_insert_with(|| compare_cluster(&cluster, data, &opts));
        let ok = *side_ok.entry(key).or_insert_with(|| {
            cluster.control_len() >= min_side && cluster.treated_len() >= min_side
        });
        keys.push(key);
        kept_flags.push(ok);
        if collect_traces {
            trace_k.push(state.partition.k());
            trace_kernel.push(state.log_kernel);
        }
    })?;

    if collect_traces {
        let dir = config
            .flags
            .trace_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("traces"));
        std::fs::create_dir_all(&dir)?;
        let mut k_file = std::fs::File::create(dir.join("k.txt"))?;
        for k in &trace_k {
            writeln!(k_file, "{k}")?;
        }
        let mut kernel_file = std::fs::File::create(dir.join("log_kernel.txt"))?;
        for v in &trace_kernel {
            writeln!(kernel_file, "{v:.17e}")?;
        }
    }

    let total_draws = keys.len();
    let kept: Vec<&ComparisonDraw> = keys
        .iter()
        .zip(&kept_flags)
        .filter(|(_, &ok)| ok)
        .map(|(key, _)| &memo[key])
        .collect();
    let kept_draws = kept.len();
    let statistics = summarize_refs(&kept, config.report.level)?;

    let k_bm = diagnostics.k_batch_means();
    let moves = MoveKind::ALL
        .iter()
        .map(|&kind| {
            let stat = diagnostics.moves.stat(kind);
            MoveRate {
                kind: kind.name().to_string(),
                proposed: stat.proposed,
                accepted: stat.accepted,
                rate: stat.rate(),
            }
        })
        .collect();

    let mut notes = Vec::new();
    if config.flags.exact_ks {
        notes.push(
            "KS p-values use the exact permutation distribution for clusters with both \
             sides <= 10 and the asymptotic approximation otherwise."
                .to_string(),
        );
    } else {
        notes.push(
            "KS p-values use the asymptotic effective-sample-size approximation and can \
             be inaccurate for small clusters; set flags.exact_ks = true for an exact \
             permutation p-value on sides <= 10."
                .to_string(),
        );
    }
    if !loaded.dropped_covariates.is_empty() {
        notes.push(format!(
            "constant covariate columns dropped before scoring: {}",
            loaded.dropped_covariates.join(", ")
        ));
    }

    let echo = config.echo();
    let report = PosteriorReport {
        statistics,
        diagnostics: ReportDiagnostics {
            total_draws,
            kept_draws,
            moves,
            k_mean: diagnostics.k_mean(),
            k_mcse: k_bm.map(|b| b.mcse),
            k_half_width: k_bm.map(|b| b.half_width),
            k_ess_proxy: diagnostics.k_ess_proxy(),
        },
        metadata: ReportMetadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            mode: config.input.mode,
            cutoff: r0,
            n_subjects: data.n(),
            seed: config.chain.seed,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            min_side,
            credible_level: config.report.level,
            hyperparameters: config.prior.clone(),
            chain: config.chain.clone(),
            confounder_source: loaded.confounder_source.clone(),
            dropped_covariates: loaded.dropped_covariates.clone(),
            data_digest: loaded.data_digest.clone(),
            config_digest: hex_digest(echo.as_bytes()),
            config_echo: echo,
        },
        notes,
    };
    Ok(report)
}
