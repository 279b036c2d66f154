//! Experiment harness: TOML configs, method × seed grids, CSV traces,
//! summaries, plots, checkpoints and resume markers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    build_asymmetric_circular, build_asymmetric_pairmap, build_symmetric, corrupt_labels, generate_synthetic,
    load_cifar10_binary, ImageDataset, NoiseKind, TransitionMatrix, CIFAR10_PAIR_MAP,
};
use crate::error::{Error, Result};
use crate::eval::{last_k_summary_by, mean_and_std, MetricsRow};
use crate::plot::{emit_svg_plot, PlotSeries};
use crate::train::{run_training, TrainConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synthetic,
    Cifar10,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub source: DataSource,
    /// CIFAR-10 binary batch files for training (`cifar10` only).
    pub train_paths: Vec<PathBuf>,
    /// CIFAR-10 binary batch files for testing (`cifar10` only).
    pub test_paths: Vec<PathBuf>,
    pub num_classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub side: usize,
    /// Seeds both synthetic generation and label corruption.
    pub data_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            source: DataSource::Synthetic,
            train_paths: Vec::new(),
            test_paths: Vec::new(),
            num_classes: 10,
            n_train: 5000,
            n_test: 1000,
            side: 16,
            data_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub rate: f64,
    /// Source → target class pairs for `asymmetric_pairmap`.
    pub pairs: Vec<(usize, usize)>,
    /// Symmetric noise may also "flip" to the true class.
    pub include_true_class: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { kind: NoiseKind::Symmetric, rate: 0.2, pairs: CIFAR10_PAIR_MAP.to_vec(), include_true_class: false }
    }
}

impl NoiseConfig {
    pub fn transition_matrix(&self, num_classes: usize) -> Result<TransitionMatrix> {
        match self.kind {
            NoiseKind::Symmetric => build_symmetric(num_classes, self.rate, self.include_true_class),
            NoiseKind::AsymmetricPairmap => build_asymmetric_pairmap(num_classes, self.rate, &self.pairs),
            NoiseKind::AsymmetricCircular => build_asymmetric_circular(num_classes, self.rate),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Epochs averaged by the summary.
    pub last_k: usize,
    pub save_checkpoints: bool,
    pub dataset: DatasetConfig,
    pub noise: NoiseConfig,
    pub methods: Vec<TrainConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: PathBuf::from("colearn-output"),
            seeds: Vec::new(),
            last_k: 10,
            save_checkpoints: true,
            dataset: DatasetConfig::default(),
            noise: NoiseConfig::default(),
            methods: Vec::new(),
        }
    }
}

/// Key tree of a fully populated config, used to reject unknown keys.
fn schema() -> toml::Table {
    let full = ExperimentConfig { seeds: vec![0], methods: vec![TrainConfig::default()], ..ExperimentConfig::default() };
    match toml::Value::try_from(full).expect("config serializes") {
        toml::Value::Table(t) => t,
        _ => unreachable!("config is a table"),
    }
}

fn suggestion(key: &str, known: &toml::Table) -> String {
    let best = known
        .keys()
        .map(|k| (strsim::levenshtein(key, k), k))
        .min()
        .filter(|(d, k)| *d <= (k.len() / 3).max(2));
    match best {
        Some((_, k)) => format!("unknown key `{key}`; did you mean `{k}`?"),
        None => format!("unknown key `{key}`"),
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn check_keys(actual: &toml::Table, schema: &toml::Table, prefix: &str) -> Result<()> {
    for (key, value) in actual {
        let path = join(prefix, key);
        let Some(expected) = schema.get(key) else {
            return Err(Error::config(path, suggestion(key, schema)));
        };
        match (value, expected) {
            (toml::Value::Table(a), toml::Value::Table(s)) => check_keys(a, s, &path)?,
            (toml::Value::Array(items), toml::Value::Array(proto)) => {
                if let Some(toml::Value::Table(s)) = proto.first() {
                    for (i, item) in items.iter().enumerate() {
                        if let toml::Value::Table(a) = item {
                            check_keys(a, s, &format!("{path}[{i}]"))?;
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn section<T: for<'de> Deserialize<'de> + Default>(table: &toml::Table, key: &str) -> Result<T> {
    match table.get(key) {
        None => Ok(T::default()),
        Some(v) => v.clone().try_into().map_err(|e: toml::de::Error| Error::config(key, e.message().trim())),
    }
}

fn with_prefix(e: Error, prefix: &str) -> Error {
    match e {
        Error::Config { path, message } => Error::config(join(prefix, &path), message),
        other => Error::config(prefix, other.to_string()),
    }
}

/// Parses and validates an experiment config, filling documented defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config("<document>", e.message().trim()))?;
    check_keys(&table, &schema(), "")?;

    let mut cfg = ExperimentConfig {
        dataset: section(&table, "dataset")?,
        noise: section(&table, "noise")?,
        ..ExperimentConfig::default()
    };
    if let Some(v) = table.get("output_dir") {
        cfg.output_dir = v.clone().try_into().map_err(|e: toml::de::Error| Error::config("output_dir", e.message().trim()))?;
    }
    if let Some(v) = table.get("last_k") {
        cfg.last_k = v.clone().try_into().map_err(|e: toml::de::Error| Error::config("last_k", e.message().trim()))?;
    }
    if let Some(v) = table.get("save_checkpoints") {
        cfg.save_checkpoints =
            v.clone().try_into().map_err(|e: toml::de::Error| Error::config("save_checkpoints", e.message().trim()))?;
    }
    cfg.seeds = match table.get("seeds") {
        None => return Err(Error::config("seeds", "missing required key")),
        Some(v) => v.clone().try_into().map_err(|e: toml::de::Error| Error::config("seeds", e.message().trim()))?,
    };
    let methods = match table.get("methods") {
        Some(toml::Value::Array(items)) => items,
        Some(_) => return Err(Error::config("methods", "expected an array of tables ([[methods]])")),
        None => return Err(Error::config("methods", "missing required key")),
    };
    for (i, item) in methods.iter().enumerate() {
        let path = format!("methods[{i}]");
        let toml::Value::Table(t) = item else {
            return Err(Error::config(path, "expected a table"));
        };
        if !t.contains_key("method") {
            return Err(Error::config(join(&path, "method"), "missing required key"));
        }
        let m: TrainConfig = item.clone().try_into().map_err(|e: toml::de::Error| Error::config(&path, e.message().trim()))?;
        cfg.methods.push(m);
    }
    validate(&cfg)?;
    Ok(cfg)
}

pub fn validate(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.seeds.is_empty() {
        return Err(Error::config("seeds", "needs at least one seed"));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(s) = cfg.seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(Error::config("seeds", format!("seed {s} listed twice")));
    }
    if cfg.methods.is_empty() {
        return Err(Error::config("methods", "needs at least one method"));
    }
    if cfg.last_k == 0 {
        return Err(Error::config("last_k", "must be >= 1"));
    }
    let n = &cfg.noise;
    if !(0.0..=1.0).contains(&n.rate) {
        return Err(Error::config("noise.rate", format!("must lie in [0, 1], got {}", n.rate)));
    }
    let d = &cfg.dataset;
    match d.source {
        DataSource::Synthetic => {
            if d.n_train < 2 || d.n_test < 1 {
                return Err(Error::config("dataset.n_train", "needs n_train >= 2 and n_test >= 1"));
            }
            if !(2..=crate::data::MAX_SYNTHETIC_CLASSES).contains(&d.num_classes) {
                return Err(Error::config("dataset.num_classes", format!("must lie in 2..={}", crate::data::MAX_SYNTHETIC_CLASSES)));
            }
            if d.side < crate::data::MIN_SYNTHETIC_SIDE {
                return Err(Error::config("dataset.side", format!("must be >= {}", crate::data::MIN_SYNTHETIC_SIDE)));
            }
        }
        DataSource::Cifar10 => {
            if d.train_paths.is_empty() || d.test_paths.is_empty() {
                return Err(Error::config("dataset.train_paths", "cifar10 needs train_paths and test_paths"));
            }
        }
    }
    let classes = if d.source == DataSource::Cifar10 { 10 } else { d.num_classes };
    n.transition_matrix(classes).map_err(|e| Error::config("noise", e.to_string()))?;
    let mut labels = std::collections::HashSet::new();
    for (i, m) in cfg.methods.iter().enumerate() {
        m.validate().map_err(|e| with_prefix(e, &format!("methods[{i}]")))?;
        if !labels.insert(m.label().to_string()) {
            return Err(Error::config(
                format!("methods[{i}].name"),
                format!("`{}` is used by an earlier method; give each arm a distinct name", m.label()),
            ));
        }
        if m.label().is_empty() || m.label().contains(['/', '\\']) {
            return Err(Error::config(format!("methods[{i}].name"), "must be a plain file-name component"));
        }
    }
    Ok(())
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Clean train/test splits for the configured source.
pub fn load_clean_data(cfg: &DatasetConfig) -> Result<(ImageDataset, ImageDataset)> {
    match cfg.source {
        DataSource::Synthetic => generate_synthetic(cfg.num_classes, cfg.n_train, cfg.n_test, cfg.side, cfg.data_seed),
        DataSource::Cifar10 => Ok((load_cifar10_binary(&cfg.train_paths)?, load_cifar10_binary(&cfg.test_paths)?)),
    }
}

/// `(noisy train, clean test)` as shared by every cell of a grid.
pub fn build_datasets(cfg: &ExperimentConfig) -> Result<(ImageDataset, ImageDataset)> {
    let (train, test) = load_clean_data(&cfg.dataset)?;
    let q = cfg.noise.transition_matrix(train.num_classes())?;
    Ok((corrupt_labels(&train, &q, cfg.dataset.data_seed)?, test))
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

pub const TRACE_HEADER: &str = "epoch,l_sup,l_int,l_str,l_total,test_acc,clean_train_acc,memorization";
pub const SUMMARY_HEADER: &str =
    "method,seeds,last_k,test_acc_mean,test_acc_std,final_memorization_mean,final_memorization_std";

/// `x` rounded to 6 significant digits, without trailing zeros.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { format!("{x}") };
    }
    let s = format!("{x:.5e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..15).contains(&exp) {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{m}e{exp}");
    }
    let rounded: f64 = s.parse().expect("round trip");
    let decimals = (5 - exp).max(0) as usize;
    let fixed = format!("{rounded:.decimals$}");
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

pub fn trace_to_csv(trace: &[MetricsRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        let vals = [r.l_sup, r.l_int, r.l_str, r.l_total, r.test_accuracy, r.clean_subset_train_acc, r.noisy_subset_memorization];
        let _ = write!(out, "{}", r.epoch);
        for v in vals {
            let _ = write!(out, ",{}", fmt_sig6(v));
        }
        out.push('\n');
    }
    out
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(Error::Format("trace CSV header mismatch".into()));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let bad = || Error::Format(format!("trace CSV line {}: `{line}`", n + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        rows.push(MetricsRow {
            epoch: f[0].parse().map_err(|_| bad())?,
            l_sup: num(1)?,
            l_int: num(2)?,
            l_str: num(3)?,
            l_total: num(4)?,
            test_accuracy: num(5)?,
            clean_subset_train_acc: num(6)?,
            noisy_subset_memorization: num(7)?,
        });
    }
    Ok(rows)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    parse_trace_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

// ---------------------------------------------------------------------------
// Running a grid
// ---------------------------------------------------------------------------

/// Per-method summary over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub label: String,
    pub seeds: usize,
    pub test_acc_mean: f64,
    pub test_acc_std: f64,
    pub final_memorization_mean: f64,
    pub final_memorization_std: f64,
}

/// Paths written by a run, plus the summaries they contain.
#[derive(Clone, Debug, Default)]
pub struct RunArtifacts {
    pub traces: Vec<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub markers: Vec<PathBuf>,
    pub summary: PathBuf,
    pub plots: Vec<PathBuf>,
    pub summaries: Vec<MethodSummary>,
    /// Cells skipped because a finished marker was present.
    pub resumed: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub resume: bool,
    /// Parallel cells; 0 or 1 runs them one after another.
    pub jobs: usize,
    pub output_dir: Option<PathBuf>,
    /// Progress lines on stderr.
    pub verbose: bool,
}

#[derive(Clone, Debug)]
struct Cell {
    method: usize,
    seed: u64,
    id: String,
}

/// Metrics plotted, as `(file stem, title, column)`.
const PLOTTED: [(&str, &str, fn(&MetricsRow) -> f64); 7] = [
    ("l_sup", "Supervised loss", |r| r.l_sup),
    ("l_int", "Intrinsic similarity loss", |r| r.l_int),
    ("l_str", "Structural similarity loss", |r| r.l_str),
    ("l_total", "Total loss", |r| r.l_total),
    ("test_acc", "Test accuracy", |r| r.test_accuracy),
    ("clean_train_acc", "Clean-subset train accuracy", |r| r.clean_subset_train_acc),
    ("memorization", "Noisy-subset memorization", |r| r.noisy_subset_memorization),
];

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn ensure_writable(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".colearn-write-test");
    write_file(&probe, b"")?;
    std::fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

/// Runs every (method, seed) cell on one shared corrupted dataset and
/// writes traces, checkpoints, markers, the summary and the plots.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunArtifacts> {
    validate(cfg)?;
    let dir = opts.output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    ensure_writable(&dir)?;
    let (train, test) = build_datasets(cfg)?;

    let cells: Vec<Cell> = cfg
        .methods
        .iter()
        .enumerate()
        .flat_map(|(m, tc)| cfg.seeds.iter().map(move |&s| Cell { method: m, seed: s, id: format!("{}_s{s}", tc.label()) }))
        .collect();
    let marker = |c: &Cell| dir.join(format!("{}.done", c.id));
    let csv = |c: &Cell| dir.join(format!("{}.csv", c.id));
    let ckpt = |c: &Cell| dir.join(format!("{}.clmp", c.id));

    let mut resumed = Vec::new();
    let mut pending = Vec::new();
    for c in &cells {
        if opts.resume && marker(c).exists() && csv(c).exists() {
            resumed.push(c.id.clone());
        } else {
            let _ = std::fs::remove_file(marker(c));
            pending.push(c.clone());
        }
    }

    let run_cell = |c: &Cell| -> Result<()> {
        let tc = TrainConfig { seed: c.seed, ..cfg.methods[c.method].clone() };
        if opts.verbose {
            eprintln!("[{}] start", c.id);
        }
        let outcome = run_training(&train, &test, &tc).map_err(|e| match e {
            Error::Training(msg) => Error::Training(format!("{}: {msg}", c.id)),
            other => other,
        })?;
        write_file(&csv(c), trace_to_csv(&outcome.trace).as_bytes())?;
        if cfg.save_checkpoints {
            outcome.params.save(&ckpt(c))?;
        }
        write_file(&marker(c), b"")?;
        if opts.verbose {
            let last = outcome.trace.last().expect("epochs >= 1");
            eprintln!("[{}] done: test_acc {:.4}, memorization {:.4}", c.id, last.test_accuracy, last.noisy_subset_memorization);
        }
        Ok(())
    };
    let results: Vec<Result<()>> = if opts.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::Training(format!("thread pool: {e}")))?;
        pool.install(|| pending.par_iter().map(run_cell).collect())
    } else {
        pending.iter().map(run_cell).collect()
    };
    results.into_iter().collect::<Result<Vec<()>>>()?;

    // Everything below reads the traces back from disk, so the summary and
    // the plots always agree with the CSV files.
    let mut by_method: Vec<Vec<Vec<MetricsRow>>> = vec![Vec::new(); cfg.methods.len()];
    for c in &cells {
        by_method[c.method].push(read_trace_csv(&csv(c))?);
    }
    let mut summaries = Vec::new();
    let mut summary_csv = String::from(SUMMARY_HEADER);
    summary_csv.push('\n');
    for (m, traces) in by_method.iter().enumerate() {
        let k = cfg.last_k.min(traces.iter().map(Vec::len).min().unwrap_or(0)).max(1);
        let (acc_mean, acc_std) = last_k_summary_by(traces, k, |r| r.test_accuracy)?;
        let finals: Vec<f64> = traces.iter().map(|t| t.last().map_or(f64::NAN, |r| r.noisy_subset_memorization)).collect();
        let (mem_mean, mem_std) = mean_and_std(&finals);
        let label = cfg.methods[m].label().to_string();
        let _ = writeln!(
            summary_csv,
            "{label},{},{k},{},{},{},{}",
            traces.len(),
            fmt_sig6(acc_mean),
            fmt_sig6(acc_std),
            fmt_sig6(mem_mean),
            fmt_sig6(mem_std)
        );
        summaries.push(MethodSummary {
            label,
            seeds: traces.len(),
            test_acc_mean: acc_mean,
            test_acc_std: acc_std,
            final_memorization_mean: mem_mean,
            final_memorization_std: mem_std,
        });
    }
    let summary = dir.join("summary.csv");
    write_file(&summary, summary_csv.as_bytes())?;

    let mut plots = Vec::new();
    for (stem, title, column) in PLOTTED {
        let series: Vec<PlotSeries> = by_method
            .iter()
            .enumerate()
            .map(|(m, traces)| PlotSeries::from_traces(cfg.methods[m].label(), traces, column))
            .collect::<Result<_>>()?;
        let path = dir.join(format!("{stem}.svg"));
        emit_svg_plot(&series, title, &path)?;
        plots.push(path);
    }

    Ok(RunArtifacts {
        traces: cells.iter().map(csv).collect(),
        checkpoints: if cfg.save_checkpoints { cells.iter().map(ckpt).collect() } else { Vec::new() },
        markers: cells.iter().map(marker).collect(),
        summary,
        plots,
        summaries,
        resumed,
    })
}

/// What `colearn corrupt` writes and reports.
#[derive(Clone, Debug)]
pub struct CorruptReport {
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub noise_fraction: f64,
    pub label_digest: u64,
    /// Realized transition counts `[clean][noisy]`.
    pub counts: BTreeMap<(usize, usize), usize>,
}

/// Builds the corrupted training split and the test split and stores both
/// as CLDS files, without training.
pub fn corrupt_only(cfg: &ExperimentConfig, output_dir: Option<&Path>) -> Result<CorruptReport> {
    validate(cfg)?;
    let dir = output_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    ensure_writable(&dir)?;
    let (train, test) = build_datasets(cfg)?;
    let train_path = dir.join("train.clds");
    let test_path = dir.join("test.clds");
    train.save_clds(&train_path)?;
    test.save_clds(&test_path)?;
    let mut counts = BTreeMap::new();
    for (c, y) in train.clean_labels().iter().zip(train.noisy_labels()) {
        *counts.entry((*c, *y)).or_insert(0) += 1;
    }
    Ok(CorruptReport {
        train_path,
        test_path,
        noise_fraction: train.noise_fraction(),
        label_digest: train.noisy_label_digest(),
        counts,
    })
}
