//! Integration tests for CSV ingestion, the run pipeline, report
//! serialization, and the binary's exit codes.

use std::path::Path;
use std::process::Command;

use rdnp::local::{Mode, PosteriorReport};
use rdnp_cli::config::{ReportFormat, RunConfig};
use rdnp_cli::csvio::{write_dataset_csv, CsvTable};
use rdnp_cli::pipeline::{load_dataset, run, run_on_dataset};
use rdnp_cli::report::{report_csv_bytes, report_json_bytes};
use rdnp_cli::CliError;
use tempfile::TempDir;

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn config_text(input: &Path, report: &Path, mode: &str, extra: &str) -> String {
    format!(
        r#"
[input]
path = "{}"
cutoff = 0.0
mode = "{mode}"

[confounder]
column = "x"

[chain]
iterations = 2000
burn_in = 200
thin = 1
seed = 11
initial_blocks = 5
enable_shift_move = false

[report]
path = "{}"
{extra}
"#,
        input.display(),
        report.display()
    )
}

fn synth_csv(dir: &Path, seed: u64, compliance: (f64, f64)) -> std::path::PathBuf {
    use rdnp::synth::{generate, BlockModel, OutcomeModel, SynthConfig};
    let cfg = SynthConfig {
        n: 60,
        cutoff: 0.0,
        r_range: (-2.0, 2.0),
        jitter: 0.5,
        composition: vec![30, 30],
        blocks: vec![
            BlockModel { intercept: 0.0, slope: 0.0, sigma2: 0.1 },
            BlockModel { intercept: 1.0, slope: 0.0, sigma2: 0.1 },
        ],
        outcome: OutcomeModel {
            intercept: 0.0,
            slope: 0.0,
            slope_change: 0.0,
            jump: 1.0,
            noise_sd: 0.5,
        },
        compliance,
        seed,
    };
    let out = generate(&cfg).unwrap();
    let path = dir.join(format!("synth{seed}.csv"));
    write_dataset_csv(&path, &out.data).unwrap();
    path
}

#[test]
fn load_csv_basics() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("data.csv");
    write(&csv, "id,r,y,x\na,-1.0,0.5,0.1\nb,0.5,1.5,0.9\nc,2.0,2.0,1.1\n");
    let cfg = RunConfig::from_toml_str(&config_text(&csv, &dir.path().join("r.json"), "sharp", ""))
        .unwrap();
    let loaded = load_dataset(&cfg).unwrap();
    assert_eq!(loaded.data.n(), 3);
    // t synthesized in sharp mode.
    assert!(!loaded.data.t(0));
    assert!(loaded.data.t(1));
    assert!(loaded.data.t(2));
    assert_eq!(loaded.data.subject(0).id, "a");
    assert_eq!(loaded.confounder_source, "column:x");
    assert_eq!(loaded.data_digest.len(), 64);
}

#[test]
fn load_csv_missing_column() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("data.csv");
    write(&csv, "id,r,x\na,-1.0,0.1\nb,0.5,0.9\n");
    let cfg = RunConfig::from_toml_str(&config_text(&csv, &dir.path().join("r.json"), "sharp", ""))
        .unwrap();
    let err = load_dataset(&cfg).unwrap_err();
    assert!(matches!(err, CliError::Data(_)));
    assert!(err.to_string().contains("missing column `y`"));
}

#[test]
fn load_csv_parse_error_reports_line() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("data.csv");
    write(&csv, "id,r,y,x\na,-1.0,0.5,0.1\nb,oops,1.5,0.9\n");
    let cfg = RunConfig::from_toml_str(&config_text(&csv, &dir.path().join("r.json"), "sharp", ""))
        .unwrap();
    let err = load_dataset(&cfg).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("line 3"), "{msg}");
    assert!(msg.contains("`r`"), "{msg}");
}

#[test]
fn load_csv_duplicate_id() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("data.csv");
    write(&csv, "id,r,y,x\na,-1.0,0.5,0.1\na,0.5,1.5,0.9\n");
    let cfg = RunConfig::from_toml_str(&config_text(&csv, &dir.path().join("r.json"), "sharp", ""))
        .unwrap();
    let err = load_dataset(&cfg).unwrap_err();
    assert!(err.to_string().contains("duplicate id `a`"));
}

#[test]
fn sharp_mode_rejects_contradicting_t_column() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("data.csv");
    write(&csv, "id,r,y,x,t\na,-1.0,0.5,0.1,0\nb,0.5,1.5,0.9,0\n");
    let cfg = RunConfig::from_toml_str(&config_text(&csv, &dir.path().join("r.json"), "sharp", ""))
        .unwrap();
    let err = load_dataset(&cfg).unwrap_err();
    assert!(err.to_string().contains("contradicts sharp assignment"));
}

#[test]
fn fuzzy_mode_requires_t_column() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("data.csv");
    write(&csv, "id,r,y,x\na,-1.0,0.5,0.1\nb,0.5,1.5,0.9\n");
    let cfg = RunConfig::from_toml_str(&config_text(&csv, &dir.path().join("r.json"), "fuzzy", ""))
        .unwrap();
    assert!(load_dataset(&cfg).is_err());
}

#[test]
fn assignment_reduction_minimum_rule() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("data.csv");
    write(
        &csv,
        "id,read,lang,y,x\na,250,260,0.5,0.1\nb,235,250,1.5,0.9\n",
    );
    let mut text = config_text(&csv, &dir.path().join("r.json"), "sharp", "");
    text.push_str("\n[input.assignment]\ncolumns = [\"read\", \"lang\"]\noffset = 240.0\nscale = 10.0\n");
    let cfg = RunConfig::from_toml_str(&text).unwrap();
    let loaded = load_dataset(&cfg).unwrap();
    // r = (min(read, lang) − 240)/10: a → 1.0, b → −0.5 (sorted first).
    assert_eq!(loaded.data.r(0), -0.5);
    assert_eq!(loaded.data.r(1), 1.0);
    assert!(loaded.data.t(1));
    assert!(!loaded.data.t(0));
}

#[test]
fn run_is_deterministic_and_report_roundtrips() {
    let dir = TempDir::new().unwrap();
    let csv = synth_csv(dir.path(), 3, (1.0, 0.0));
    let report_path = dir.path().join("report.json");
    let cfg =
        RunConfig::from_toml_str(&config_text(&csv, &report_path, "sharp", "")).unwrap();

    let (report1, path1) = run(&cfg).unwrap();
    let bytes1 = std::fs::read(&path1).unwrap();
    let (report2, path2) = run(&cfg).unwrap();
    let bytes2 = std::fs::read(&path2).unwrap();
    assert_eq!(report1, report2);
    assert_eq!(bytes1, bytes2, "reports must be byte-identical");

    // JSON round-trip recovers the report exactly.
    let parsed: PosteriorReport = serde_json::from_slice(&bytes1).unwrap();
    assert_eq!(parsed, report1);

    // Statistic set and order are fixed.
    let names: Vec<&str> = report1
        .statistics
        .iter()
        .map(|s| s.statistic.as_str())
        .collect();
    assert_eq!(names[0], "non_treatment.sample_size");
    assert_eq!(names[1], "treatment.sample_size");
    assert!(names.contains(&"t_stat"));
    assert!(names.contains(&"ks_pvalue"));
    assert!(names.contains(&"pr_y1_ge_y0"));
    assert!(names.contains(&"fuzzy_mean_diff"));
    assert_eq!(report1.metadata.rng_algorithm, "chacha8");
    assert_eq!(report1.metadata.seed, 11);
    assert!(!report1.metadata.config_echo.is_empty());
}

#[test]
fn fuzzy_mode_on_sharp_data_matches_unscaled() {
    let dir = TempDir::new().unwrap();
    let csv = synth_csv(dir.path(), 5, (1.0, 0.0));
    let report_path = dir.path().join("report.json");
    let cfg =
        RunConfig::from_toml_str(&config_text(&csv, &report_path, "fuzzy", "")).unwrap();
    let (report, _) = run(&cfg).unwrap();
    let get = |name: &str| {
        report
            .statistics
            .iter()
            .find(|s| s.statistic == name)
            .unwrap()
            .clone()
    };
    let md = get("mean_diff");
    let fz = get("fuzzy_mean_diff");
    // Compliance contrast is exactly 1 on sharp data, draw by draw.
    assert_eq!(md.mean, fz.mean);
    assert_eq!(md.lo, fz.lo);
    assert_eq!(md.hi, fz.hi);
    assert_eq!(md.computable_fraction, fz.computable_fraction);
}

#[test]
fn csv_report_layout() {
    let dir = TempDir::new().unwrap();
    let csv = synth_csv(dir.path(), 7, (1.0, 0.0));
    let report_path = dir.path().join("report.csv");
    let mut cfg =
        RunConfig::from_toml_str(&config_text(&csv, &report_path, "sharp", "")).unwrap();
    cfg.report.format = ReportFormat::Csv;
    let (report, path) = run(&cfg).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "statistic,non_treatment,treatment,cross_group,computable_fraction"
    );
    assert!(lines[1].starts_with("sample_size,"));
    assert!(lines[2].starts_with("mean,"));
    // 13 paired group rows, then 13 cross rows.
    assert_eq!(lines.len(), 1 + 13 + 13);
    assert!(lines[14].starts_with("t_stat,"));
    assert!(lines.last().unwrap().starts_with("tbar_control_side,"));

    // The CSV cells are 2-decimal "mean (lo, hi)" strings.
    assert!(lines[2].contains('('));

    // The same report serializes to both formats.
    let json = report_json_bytes(&report);
    assert!(!json.is_empty());
    let csv_bytes = report_csv_bytes(&report);
    assert_eq!(text.as_bytes(), csv_bytes);
}

#[test]
fn min_side_filters_draws() {
    let dir = TempDir::new().unwrap();
    let csv = synth_csv(dir.path(), 9, (1.0, 0.0));
    let report_path = dir.path().join("report.json");
    let base =
        RunConfig::from_toml_str(&config_text(&csv, &report_path, "sharp", "")).unwrap();
    let loaded = load_dataset(&base).unwrap();
    let keep_all = {
        let mut cfg = base.clone();
        cfg.report.min_side = 0;
        run_on_dataset(&cfg, &loaded).unwrap()
    };
    let filtered = {
        let mut cfg = base.clone();
        cfg.report.min_side = 2;
        run_on_dataset(&cfg, &loaded).unwrap()
    };
    assert_eq!(keep_all.diagnostics.kept_draws, keep_all.diagnostics.total_draws);
    assert!(filtered.diagnostics.kept_draws < filtered.diagnostics.total_draws);
    assert_eq!(filtered.metadata.min_side, 2);
}

#[test]
fn score_confounder_pipeline() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("data.csv");
    // Covariates c1 (informative), c2 (constant: dropped).
    let mut text = String::from("id,r,y,c1,c2\n");
    let mut state = 1u64;
    for i in 0..40 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let u = (state >> 11) as f64 / (1u64 << 53) as f64;
        let r = -2.0 + 4.0 * i as f64 / 39.0;
        let c1 = u * 2.0 - 1.0;
        let y = 0.5 * c1 + f64::from(r >= 0.0) + 0.1 * u;
        text.push_str(&format!("s{i},{r},{y},{c1},7.5\n"));
    }
    write(&csv, &text);
    let mut cfg_text = config_text(&csv, &dir.path().join("r.json"), "sharp", "");
    cfg_text = cfg_text.replace("[confounder]\ncolumn = \"x\"", "[confounder.score]\ncolumns = [\"c1\", \"c2\"]\nv = 1000.0");
    let cfg = RunConfig::from_toml_str(&cfg_text).unwrap();
    let loaded = load_dataset(&cfg).unwrap();
    assert_eq!(loaded.dropped_covariates, vec!["c2".to_string()]);
    assert!(loaded.confounder_source.starts_with("score(v=1000"));
    let report = run_on_dataset(&cfg, &loaded).unwrap();
    assert!(report
        .notes
        .iter()
        .any(|n| n.contains("constant covariate columns dropped")));
}

#[test]
fn debug_traces_written() {
    let dir = TempDir::new().unwrap();
    let csv = synth_csv(dir.path(), 13, (1.0, 0.0));
    let report_path = dir.path().join("report.json");
    let trace_dir = dir.path().join("traces");
    let extra = format!(
        "\n[flags]\ndebug_traces = true\ntrace_dir = \"{}\"\n",
        trace_dir.display()
    );
    let mut text = config_text(&csv, &report_path, "sharp", "");
    text.push_str(&extra);
    let cfg = RunConfig::from_toml_str(&text).unwrap();
    let (report, _) = run(&cfg).unwrap();
    let k_lines = std::fs::read_to_string(trace_dir.join("k.txt")).unwrap();
    let kernel_lines = std::fs::read_to_string(trace_dir.join("log_kernel.txt")).unwrap();
    assert_eq!(k_lines.lines().count(), report.diagnostics.total_draws);
    assert_eq!(kernel_lines.lines().count(), report.diagnostics.total_draws);
    // One scalar per line.
    assert!(k_lines.lines().all(|l| l.parse::<usize>().is_ok()));
    assert!(kernel_lines.lines().all(|l| l.parse::<f64>().is_ok()));
}

#[test]
fn binary_exit_codes_and_env_override() {
    let dir = TempDir::new().unwrap();
    let bin = env!("CARGO_BIN_EXE_rdnp");

    // Config error: missing confounder source.
    let bad_config = dir.path().join("bad.toml");
    write(
        &bad_config,
        "[input]\npath = \"x.csv\"\ncutoff = 0.0\nmode = \"sharp\"\n\n[confounder]\n",
    );
    let status = Command::new(bin)
        .args(["run", "--config"])
        .arg(&bad_config)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Data error: one-sided design.
    let csv = dir.path().join("oneside.csv");
    write(&csv, "id,r,y,x\na,1.0,0.5,0.1\nb,2.0,1.5,0.9\n");
    let report_path = dir.path().join("r.json");
    let cfg_path = dir.path().join("run.toml");
    write(&cfg_path, &config_text(&csv, &report_path, "sharp", ""));
    let status = Command::new(bin)
        .args(["run", "--config"])
        .arg(&cfg_path)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));

    // Successful synth → run, with the report-dir override.
    let data_path = dir.path().join("demo.csv");
    let status = Command::new(bin)
        .args(["synth", "--n", "60", "--seed", "4", "--out"])
        .arg(&data_path)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let cfg_path = dir.path().join("run2.toml");
    write(
        &cfg_path,
        &config_text(&data_path, Path::new("report.json"), "sharp", ""),
    );
    let override_dir = dir.path().join("elsewhere");
    std::fs::create_dir_all(&override_dir).unwrap();
    let status = Command::new(bin)
        .args(["run", "--config"])
        .arg(&cfg_path)
        .env("RDNP_REPORT_DIR", &override_dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(override_dir.join("report.json").exists());

    // Oracle subcommand on a small file.
    let small = dir.path().join("small.csv");
    write(&small, "id,r,x\na,-1.0,0.0\nb,-0.2,0.1\nc,0.4,1.2\nd,1.3,0.9\n");
    let dump = dir.path().join("oracle.tsv");
    let output = Command::new(bin)
        .args(["oracle", "--cutoff", "0", "--input"])
        .arg(&small)
        .arg("--dump")
        .arg(&dump)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let table = std::fs::read_to_string(&dump).unwrap();
    assert_eq!(table.lines().count(), 8); // 2^{4-1} compositions
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("posterior mean clusters"));
}

#[test]
fn csv_table_binary_column_validation() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("t.csv");
    write(&csv, "r,t\n1.0,0\n2.0,0.5\n");
    let table = CsvTable::read(&csv).unwrap();
    let err = table.column_binary("t").unwrap_err();
    assert!(err.to_string().contains("must be 0 or 1"));
}
