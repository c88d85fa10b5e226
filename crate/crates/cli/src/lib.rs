//! Subcommand implementations behind the `dmse` binary.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use dmse::checkpoint::{self, CheckpointError};
use dmse::config::{self, ConfigError, Entry};
use dmse::data::{self, DataError, FEATURE_PREFIX, SPECIES_PREFIX};
use dmse::evaluation::{evaluate_with, mean_std, EvalReport};
use dmse::model::{eval_seed, normalize_columns};
use dmse::mvn::{cdf_rectangle, MvnProblem, Rectangle, DEFAULT_MAX_SAMPLES};
use dmse::seed::{self, stream};
use dmse::synth::synth_generate;
use dmse::trainer::{kfold_split, train_with, TrainConfig, TrainError};
use dmse::{ModelError, ModelParams};

/// Most specified entries allowed in one joint pattern.
pub const MAX_PATTERN_SPECIES: usize = 10;

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Exit 2.
    Config(String),
    /// Exit 3: unreadable or inconsistent data, dimension mismatches and
    /// corrupt checkpoints.
    Data(String),
    /// Exit 4.
    Training(String),
    /// Exit 1: anything else, mostly failed writes.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Training(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Training(m) => write!(f, "training error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn config_err(path: &Path, e: ConfigError) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

fn data_err(path: &Path, e: DataError) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn model_err(e: ModelError) -> CliError {
    CliError::Data(e.to_string())
}

fn ckpt_err(path: &Path, e: CheckpointError) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::InvalidConfig(_) | TrainError::InvalidK { .. } => {
            CliError::Config(e.to_string())
        }
        TrainError::EmptyDataset | TrainError::Model(_) => CliError::Data(e.to_string()),
        TrainError::NonFiniteGradient { .. }
        | TrainError::Diverged { .. }
        | TrainError::GradientFailed { .. }
        | TrainError::Aborted { .. } => CliError::Training(e.to_string()),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

pub fn load_data(path: &Path) -> Result<dmse::Dataset, CliError> {
    data::load_csv(path, SPECIES_PREFIX, FEATURE_PREFIX).map_err(|e| data_err(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelParams, CliError> {
    checkpoint::load(path).map_err(|e| ckpt_err(path, e))
}

/// Reads a training config (defaults when `path` is `None`), then applies
/// `overrides` in order. Overrides are `key=value` strings and win over the
/// file.
pub fn load_train_config(
    path: Option<&Path>,
    overrides: &[String],
) -> Result<TrainConfig, CliError> {
    let mut cfg = TrainConfig::default();
    if let Some(p) = path {
        let text =
            fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        for e in config::parse_entries(&text).map_err(|e| config_err(p, e))? {
            config::apply_train_entry(&mut cfg, &e).map_err(|e| config_err(p, e))?;
        }
    }
    for raw in overrides {
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {raw:?} is not key=value")))?;
        let entry = Entry {
            line: 0,
            key: key.trim().to_string(),
            value: value.trim().to_string(),
        };
        config::apply_train_entry(&mut cfg, &entry).map_err(|e| match e {
            ConfigError::UnknownKey { key, .. } => {
                CliError::Config(format!("unknown override key `{key}`"))
            }
            ConfigError::InvalidValue {
                key, value, reason, ..
            } => CliError::Config(format!("invalid override `{value}` for `{key}`: {reason}")),
            other => CliError::Config(other.to_string()),
        })?;
    }
    cfg.validate().map_err(train_err)?;
    Ok(cfg)
}

/// Seed used to initialize parameters for a run seeded by `seed`.
pub fn init_seed(seed: u64) -> u64 {
    seed::derive(seed, stream::INIT)
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub data: PathBuf,
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub out: PathBuf,
    /// Training log; defaults to `<out>.log.jsonl`.
    pub log: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    /// Keep only the most frequently present species.
    pub top_species: Option<usize>,
    /// Overrides the config's `seed`.
    pub seed: Option<u64>,
}

pub fn default_log_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".log.jsonl");
    PathBuf::from(s)
}

pub struct TrainSummary {
    pub params: ModelParams,
    pub steps: usize,
    pub stopped_early: bool,
    pub log: PathBuf,
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainSummary, CliError> {
    let mut cfg = load_train_config(args.config.as_deref(), &args.overrides)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let mut dataset = load_data(&args.data)?;
    if let Some(k) = args.top_species {
        dataset = data::filter_top_species(&dataset, k)
            .map_err(|e| data_err(&args.data, e))?
            .dataset;
    }
    let validation = match &args.validation {
        Some(p) => {
            let v = load_data(p)?;
            let shell = ModelParams::init(
                dataset.species_names().to_vec(),
                dataset.feature_names().to_vec(),
                &dmse::ModelConfig {
                    d1: 1,
                    d2: 1,
                    hidden: vec![],
                },
                0,
            )
            .map_err(model_err)?;
            Some(shell.align_dataset(&v).map_err(model_err)?)
        }
        None => None,
    };
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| default_log_path(&args.out));
    let file = File::create(&log_path).map_err(|e| io_err(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let mut write_failed = None;
    let (params, record) = train_with(
        &dataset,
        validation.as_ref(),
        &cfg,
        init_seed(cfg.seed),
        &mut |r| {
            if write_failed.is_none() {
                if let Err(e) = writeln!(log, "{}", r.to_json_line()) {
                    write_failed = Some(e);
                }
            }
        },
    )
    .map_err(train_err)?;
    if let Some(e) = write_failed {
        return Err(io_err(&log_path, e));
    }
    log.flush().map_err(|e| io_err(&log_path, e))?;
    checkpoint::save(&params, &args.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;
    Ok(TrainSummary {
        params,
        steps: record.records.len(),
        stopped_early: record.stopped_early,
        log: log_path,
    })
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub data: PathBuf,
    pub model: PathBuf,
    pub tol: f64,
    pub max_samples: usize,
    pub seed: u64,
    /// Writes `<out>.txt` and `<out>.csv` when set.
    pub out: Option<PathBuf>,
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport, CliError> {
    if !(args.tol > 0.0) {
        return Err(CliError::Config(format!(
            "--tol must be positive, got {}",
            args.tol
        )));
    }
    let params = load_model(&args.model)?;
    let dataset = load_data(&args.data)?;
    let aligned = params.align_dataset(&dataset).map_err(model_err)?;
    let report = evaluate_with(
        &params,
        &aligned,
        args.tol,
        args.max_samples,
        eval_seed(args.seed),
    )
    .map_err(model_err)?;
    if let Some(out) = &args.out {
        write_file(&with_suffix(out, ".txt"), &report.to_text())?;
        write_file(&with_suffix(out, ".csv"), &report.to_csv())?;
    }
    Ok(report)
}

/// A joint query: `Some(bit)` entries are constrained, `None` is `?`.
pub type Pattern = Vec<Option<bool>>;

pub fn parse_pattern(text: &str, n_species: usize) -> Result<Pattern, CliError> {
    let pattern = text
        .chars()
        .map(|c| match c {
            '0' => Ok(Some(false)),
            '1' => Ok(Some(true)),
            '?' => Ok(None),
            other => Err(CliError::Data(format!(
                "pattern {text:?}: unexpected character {other:?} (use 0, 1 or ?)"
            ))),
        })
        .collect::<Result<Pattern, _>>()?;
    if pattern.len() != n_species {
        return Err(CliError::Data(format!(
            "pattern {text:?} has length {}, model has {n_species} species",
            pattern.len()
        )));
    }
    let given = pattern.iter().filter(|p| p.is_some()).count();
    if given > MAX_PATTERN_SPECIES {
        return Err(CliError::Data(format!(
            "pattern {text:?} constrains {given} species, at most {MAX_PATTERN_SPECIES} allowed"
        )));
    }
    Ok(pattern)
}

/// `Pr(b_j = pattern_j for every constrained j)` under mean `mu`.
pub fn joint_probability(
    mu: &Array1<f64>,
    sigma: &Array2<f64>,
    pattern: &Pattern,
    tol: f64,
    seed: u64,
) -> Result<f64, CliError> {
    let idx: Vec<usize> = (0..pattern.len())
        .filter(|&j| pattern[j].is_some())
        .collect();
    if idx.is_empty() {
        return Ok(1.0);
    }
    let bits: Vec<bool> = idx
        .iter()
        .map(|&j| pattern[j].expect("constrained"))
        .collect();
    let sub_mu: Array1<f64> = idx.iter().map(|&j| mu[j]).collect();
    let sub_sigma = Array2::from_shape_fn((idx.len(), idx.len()), |(a, b)| sigma[[idx[a], idx[b]]]);
    let problem = MvnProblem::new(sub_mu, &sub_sigma).map_err(|e| CliError::Data(e.to_string()))?;
    let est = cdf_rectangle(
        &problem,
        &Rectangle::from_presence(&bits),
        tol,
        DEFAULT_MAX_SAMPLES,
        seed,
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(est.value)
}

/// Feature rows in model column order, read from `env:<name>` columns.
pub fn read_features(path: &Path, params: &ModelParams) -> Result<Vec<Array1<f64>>, CliError> {
    let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let columns = params
        .feature_names
        .iter()
        .map(|name| {
            let want = format!("{FEATURE_PREFIX}{name}");
            header
                .iter()
                .position(|h| *h == want)
                .ok_or_else(|| bad(format!("feature {name:?} missing from data")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let row = columns
            .iter()
            .map(|&c| {
                let raw = record.get(c).unwrap_or("").trim();
                match raw.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(bad(format!(
                        "non-finite feature value {raw:?} at line {}, column {:?}",
                        i + 2,
                        header[c]
                    ))),
                }
            })
            .collect::<Result<Array1<f64>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct PredictArgs {
    pub features: PathBuf,
    pub model: PathBuf,
    pub out: PathBuf,
    pub joint_patterns: Vec<String>,
    pub tol: f64,
    pub seed: u64,
}

/// Writes one row per input row: marginals `p:<species>` then one
/// `joint:<pattern>` column per query.
pub fn cmd_predict(args: &PredictArgs) -> Result<usize, CliError> {
    if !(args.tol > 0.0) {
        return Err(CliError::Config(format!(
            "--tol must be positive, got {}",
            args.tol
        )));
    }
    let params = load_model(&args.model)?;
    let n = params.n_species();
    let patterns = args
        .joint_patterns
        .iter()
        .map(|p| parse_pattern(p, n))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = read_features(&args.features, &params)?;
    let sigma = if patterns.is_empty() {
        None
    } else {
        Some(params.sigma().map_err(model_err)?.into_array())
    };
    let mut wtr = csv::Writer::from_path(&args.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;
    let mut header = vec!["row".to_string()];
    header.extend(params.species_names.iter().map(|s| format!("p:{s}")));
    header.extend(args.joint_patterns.iter().map(|p| format!("joint:{p}")));
    let csv_io = |e: csv::Error| CliError::Io(format!("{}: {e}", args.out.display()));
    wtr.write_record(&header).map_err(csv_io)?;
    let pattern_seed = seed::derive(args.seed, stream::EVAL);
    for (i, l) in rows.iter().enumerate() {
        let mu = params.mu_raw(l.view()).map_err(model_err)?;
        let mut record = vec![i.to_string()];
        record.extend(
            mu.iter()
                .map(|&m| format!("{:?}", dmse::mvn::normal::std_cdf(m))),
        );
        for (q, pattern) in patterns.iter().enumerate() {
            let s = seed::item(seed::item(pattern_seed, i as u64), q as u64);
            let p = joint_probability(
                &mu,
                sigma.as_ref().expect("patterns present"),
                pattern,
                args.tol,
                s,
            )?;
            record.push(format!("{p:?}"));
        }
        wtr.write_record(&record).map_err(csv_io)?;
    }
    wtr.flush().map_err(|e| io_err(&args.out, e))?;
    Ok(rows.len())
}

/// Three-decimal formatting that never prints `-0.000`.
pub fn fmt3(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

/// File names written by [`cmd_export`].
pub mod export_files {
    pub const S_EMBEDDINGS: &str = "s_embeddings.tsv";
    pub const LAMBDA_EMBEDDINGS: &str = "lambda_embeddings.tsv";
    pub const CORRELATION: &str = "correlation.csv";
    pub const CORRELATION_FULL: &str = "correlation_full.csv";
    pub const TOP_PAIRS: &str = "top_pairs.tsv";
}

/// Species pairs `(i, j, ρ)` with `i < j`, by descending `|ρ|`.
pub fn top_pairs(sigma: &Array2<f64>) -> Vec<(usize, usize, f64)> {
    let n = sigma.nrows();
    let mut pairs: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, sigma[[i, j]]))
        .collect();
    pairs.sort_by(|a, b| {
        b.2.abs()
            .total_cmp(&a.2.abs())
            .then((a.0, a.1).cmp(&(b.0, b.1)))
    });
    pairs
}

fn embedding_tsv(names: &[String], columns: &Array2<f64>) -> String {
    let mut s = String::from("species");
    for k in 0..columns.nrows() {
        s.push_str(&format!("\tdim{k}"));
    }
    s.push('\n');
    for (j, name) in names.iter().enumerate() {
        s.push_str(name);
        for v in columns.column(j) {
            s.push_str(&format!("\t{v:?}"));
        }
        s.push('\n');
    }
    s
}

fn correlation_csv(
    names: &[String],
    sigma: &Array2<f64>,
    fmt: impl Fn(f64) -> String,
) -> Result<String, CliError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["species".to_string()];
    header.extend(names.iter().cloned());
    let err = |e: csv::Error| CliError::Io(e.to_string());
    wtr.write_record(&header).map_err(err)?;
    for (i, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend(sigma.row(i).iter().map(|&v| fmt(v)));
        wtr.write_record(&row).map_err(err)?;
    }
    let bytes = wtr.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

/// Reads a correlation CSV written by [`cmd_export`].
pub fn read_correlation_csv(path: &Path) -> Result<(Vec<String>, Array2<f64>), CliError> {
    let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .skip(1)
        .map(str::to_string)
        .collect();
    let n = names.len();
    let mut values = Vec::with_capacity(n * n);
    for record in rdr.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        for v in record.iter().skip(1) {
            values.push(v.parse::<f64>().map_err(|e| bad(e.to_string()))?);
        }
    }
    let sigma = Array2::from_shape_vec((n, n), values).map_err(|e| bad(e.to_string()))?;
    Ok((names, sigma))
}

#[derive(Debug, Clone)]
pub struct ExportArgs {
    pub model: PathBuf,
    pub out_dir: PathBuf,
    /// Rows in the top-pairs table; all pairs when `None`.
    pub top: Option<usize>,
}

pub fn cmd_export(args: &ExportArgs) -> Result<(), CliError> {
    use export_files::*;
    let params = load_model(&args.model)?;
    let names = &params.species_names;
    let (lambda_hat, _) = normalize_columns(&params.lambda_raw).map_err(model_err)?;
    let sigma = params.sigma().map_err(model_err)?.into_array();
    create_dir(&args.out_dir)?;
    let dir = &args.out_dir;
    write_file(&dir.join(S_EMBEDDINGS), &embedding_tsv(names, &params.s))?;
    write_file(
        &dir.join(LAMBDA_EMBEDDINGS),
        &embedding_tsv(names, &lambda_hat),
    )?;
    write_file(
        &dir.join(CORRELATION),
        &correlation_csv(names, &sigma, fmt3)?,
    )?;
    write_file(
        &dir.join(CORRELATION_FULL),
        &correlation_csv(names, &sigma, |v| format!("{v:?}"))?,
    )?;
    let mut table = String::from("species_a\tspecies_b\tcorrelation\n");
    let pairs = top_pairs(&sigma);
    let keep = args.top.unwrap_or(pairs.len());
    for (i, j, rho) in pairs.into_iter().take(keep) {
        table.push_str(&format!("{}\t{}\t{}\n", names[i], names[j], fmt3(rho)));
    }
    write_file(&dir.join(TOP_PAIRS), &table)
}

#[derive(Debug, Clone)]
pub struct CvArgs {
    pub data: PathBuf,
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub k: usize,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

pub struct CvOutcome {
    /// Per fold: the report, or the error that stopped it.
    pub folds: Vec<Result<EvalReport, CliError>>,
    /// `(metric, mean, std, folds used)`.
    pub aggregate: Vec<(String, f64, f64, usize)>,
}

/// Metrics averaged across folds.
pub const CV_METRICS: &[&str] = &[
    "mean_auc",
    "joint_loglik_per_obs",
    "independent_loglik_per_obs",
    "loglik_gap_per_obs",
];

fn metric(report: &EvalReport, name: &str) -> Option<f64> {
    match name {
        "mean_auc" => report.mean_auc,
        "joint_loglik_per_obs" => Some(report.joint_loglik),
        "independent_loglik_per_obs" => Some(report.independent_loglik),
        "loglik_gap_per_obs" => Some(report.joint_loglik - report.independent_loglik),
        _ => None,
    }
}

/// Trains and evaluates on each fold. Fold failures are recorded and the
/// run goes on; it only fails when no fold succeeds.
pub fn cmd_cv(
    args: &CvArgs,
    on_fold: &mut dyn FnMut(usize, &Result<EvalReport, CliError>),
) -> Result<CvOutcome, CliError> {
    let mut cfg = load_train_config(args.config.as_deref(), &args.overrides)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let dataset = load_data(&args.data)?;
    let splits = kfold_split(dataset.len(), args.k, seed::derive(cfg.seed, stream::SPLIT))
        .map_err(train_err)?;
    create_dir(&args.out_dir)?;
    let mut folds = Vec::with_capacity(args.k);
    for (i, (train_idx, val_idx)) in splits.iter().enumerate() {
        let result = (|| {
            let train_set = dataset.subset(train_idx);
            let val_set = dataset.subset(val_idx);
            let (params, _) = train_with(&train_set, None, &cfg, init_seed(cfg.seed), &mut |_| {})
                .map_err(train_err)?;
            let report = evaluate_with(
                &params,
                &val_set,
                cfg.cdf_tol,
                cfg.cdf_max_samples,
                eval_seed(cfg.seed),
            )
            .map_err(model_err)?;
            let base = args.out_dir.join(format!("fold{i}"));
            write_file(&with_suffix(&base, ".txt"), &report.to_text())?;
            write_file(&with_suffix(&base, ".csv"), &report.to_csv())?;
            Ok(report)
        })();
        on_fold(i, &result);
        folds.push(result);
    }
    let ok: Vec<&EvalReport> = folds.iter().filter_map(|f| f.as_ref().ok()).collect();
    if ok.is_empty() {
        let last = folds.last().and_then(|f| f.as_ref().err()).cloned();
        return Err(last.unwrap_or_else(|| CliError::Training("no folds".into())));
    }
    let aggregate: Vec<(String, f64, f64, usize)> = CV_METRICS
        .iter()
        .map(|name| {
            let values: Vec<f64> = ok.iter().filter_map(|r| metric(r, name)).collect();
            let (mean, std) = if values.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                mean_std(&values)
            };
            (name.to_string(), mean, std, values.len())
        })
        .collect();
    let mut text = String::from("metric,mean,std,folds\n");
    for (name, mean, std, count) in &aggregate {
        text.push_str(&format!("{name},{mean},{std},{count}\n"));
    }
    let failed: Vec<String> = folds
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.as_ref().err().map(|e| format!("fold{i}: {e}")))
        .collect();
    write_file(&args.out_dir.join("aggregate.csv"), &text)?;
    if !failed.is_empty() {
        write_file(
            &args.out_dir.join("failures.txt"),
            &(failed.join("\n") + "\n"),
        )?;
    }
    Ok(CvOutcome { folds, aggregate })
}

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub spec_config: PathBuf,
    pub out: PathBuf,
    /// Overrides the spec's `seed`.
    pub seed: Option<u64>,
}

/// Sidecar path for a synthetic dataset written to `out`.
pub fn truth_path(out: &Path) -> PathBuf {
    with_suffix(out, ".truth.json")
}

pub fn cmd_synth(args: &SynthArgs) -> Result<usize, CliError> {
    let p = &args.spec_config;
    let text =
        fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
    let mut spec = config::parse_synth_spec(&text).map_err(|e| config_err(p, e))?;
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let (dataset, truth) =
        synth_generate(&spec).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
    data::save_csv(&dataset, &args.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;
    write_file(&truth_path(&args.out), &truth.to_json())?;
    Ok(dataset.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn patterns() {
        assert_eq!(
            parse_pattern("1?0", 3).unwrap(),
            vec![Some(true), None, Some(false)]
        );
        assert_eq!(parse_pattern("10", 3).unwrap_err().exit_code(), 3);
        assert!(parse_pattern("1x0", 3).is_err());
        assert!(parse_pattern(&"1".repeat(11), 11).is_err());
        assert!(parse_pattern(&format!("{}?", "1".repeat(10)), 11).is_ok());
    }

    #[test]
    fn orthant_closed_form() {
        let sigma = array![[1.0, 0.5], [0.5, 1.0]];
        let mu = array![0.0, 0.0];
        let p = joint_probability(&mu, &sigma, &vec![Some(true), Some(true)], 1e-8, 1).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-7, "{p}");
        let p = joint_probability(&mu, &sigma, &vec![None, Some(false)], 1e-8, 1).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert_eq!(
            joint_probability(&mu, &sigma, &vec![None, None], 1e-8, 1).unwrap(),
            1.0
        );
    }

    #[test]
    fn pair_order_and_formatting() {
        let sigma = array![[1.0, 0.2, -0.9], [0.2, 1.0, 0.2], [-0.9, 0.2, 1.0]];
        let pairs = top_pairs(&sigma);
        assert_eq!((pairs[0].0, pairs[0].1), (0, 2));
        assert_eq!((pairs[1].0, pairs[1].1), (0, 1));
        assert_eq!((pairs[2].0, pairs[2].1), (1, 2));
        assert_eq!(fmt3(-0.0001), "0.000");
        assert_eq!(fmt3(0.5354), "0.535");
        assert_eq!(fmt3(1.0), "1.000");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Io(String::new()).exit_code(), 1);
        assert_eq!(CliError::Config(String::new()).exit_code(), 2);
        assert_eq!(CliError::Data(String::new()).exit_code(), 3);
        assert_eq!(CliError::Training(String::new()).exit_code(), 4);
        assert_eq!(
            train_err(TrainError::Aborted {
                epoch: 0,
                skipped: 3,
                steps: 4
            })
            .exit_code(),
            4
        );
    }

    #[test]
    fn overrides_win() {
        let cfg = load_train_config(None, &["epochs=3".into(), "hidden=none".into()]).unwrap();
        assert_eq!(cfg.epochs, 3);
        assert!(cfg.model.hidden.is_empty());
        assert_eq!(
            load_train_config(None, &["bogus=1".into()])
                .unwrap_err()
                .exit_code(),
            2
        );
        assert_eq!(
            load_train_config(None, &["epochs".into()])
                .unwrap_err()
                .exit_code(),
            2
        );
    }
}
