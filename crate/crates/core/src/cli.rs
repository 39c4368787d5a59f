//! Command line workflows.
//!
//! Each run writes into `<out>/<timestamp>-<config hash>/`. Every result file
//! is a JSON envelope holding the tool version, the resolved configuration,
//! the seed and the SHA-256 of each input file. Nothing time dependent goes
//! into those files, so identical inputs reproduce them byte for byte.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{generate_synthetic, load_csv, CsvSchema, SurvivalDataset, SyntheticSpec};
use crate::error::{NfgError, Result};
use crate::metrics::{evaluate, event_quantiles, MetricReport, QUANTILE_LEVELS};
use crate::model::{checkpoint_load, checkpoint_save};
use crate::model::{NfgModel, Variant};
use crate::objectives::SurvivalBatch;
use crate::reclassification::{
    reclassification_matrix, render_group_diffs, subgroup_brier_diff, CohortFilter, FoldPair, Grouping, RiskBins,
};
use crate::trainer::{cross_validate, train, CvConfig, HyperGrid, HyperParams, TrainConfig};
use crate::verification::likelihood_cost_benchmark;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "nfg", version, about = "Neural Fine-Gray competing-risks survival models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a synthetic competing-risks cohort.
    Generate {
        #[command(flatten)]
        shared: SharedArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        features: Option<usize>,
        #[arg(long)]
        censoring: Option<f64>,
        #[arg(long)]
        nonlinearity: Option<f64>,
    },
    /// Train one model with fixed hyperparameters.
    Train {
        #[command(flatten)]
        shared: SharedArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Score a checkpoint on a dataset.
    Evaluate {
        #[command(flatten)]
        shared: SharedArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma separated evaluation times; defaults to event-time quantiles.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<f64>>,
    },
    /// Cross-validation with a random hyperparameter search in each fold.
    Cv {
        #[command(flatten)]
        shared: SharedArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<f64>>,
    },
    /// Risk-bin reclassification between two checkpoints.
    Reclassify {
        #[command(flatten)]
        shared: SharedArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model_a: Option<PathBuf>,
        #[arg(long)]
        model_b: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        risk: Option<usize>,
        /// Two thresholds, e.g. `0.1,0.2`.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        /// Cohort filter such as `age>=50` or `age<50`.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long)]
        group_column: Option<String>,
        #[arg(long, value_delimiter = ',')]
        group_edges: Option<Vec<f64>>,
    },
    /// Time the exact likelihood against quadrature.
    Benchmark {
        #[command(flatten)]
        shared: SharedArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',')]
        degrees: Option<Vec<usize>>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default, Clone)]
pub struct SharedArgs {
    /// TOML configuration file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parent directory of the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct DataArgs {
    /// CSV cohort; without it a synthetic cohort is simulated.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub time_col: Option<String>,
    #[arg(long)]
    pub event_col: Option<String>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct ModelArgs {
    /// nfg, monofg or cause-specific.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub risks: Option<usize>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct HyperArgs {
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub time_col: String,
    pub event_col: String,
    pub features: Option<Vec<String>>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            time_col: "time".into(),
            event_col: "event".into(),
            features: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub risks: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Nfg,
            risks: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub hyper_params: HyperParams,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hyper_params: HyperParams::default(),
            max_epochs: t.max_epochs,
            patience: t.patience,
            validation_fraction: t.validation_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub folds: usize,
    pub trials: usize,
    pub grid: HyperGrid,
}

impl Default for CvSection {
    fn default() -> Self {
        let c = CvConfig::default();
        Self {
            folds: c.folds,
            trials: c.n_trials,
            grid: c.grid,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReclassifySection {
    pub model_a: Option<PathBuf>,
    pub model_b: Option<PathBuf>,
    /// Defaults to the median event time.
    pub horizon: Option<f64>,
    pub risk: Option<usize>,
    pub thresholds: Option<[f64; 2]>,
    pub filter: Option<String>,
    pub group_column: Option<String>,
    pub group_edges: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub degrees: Vec<usize>,
    pub batch_size: usize,
    pub samples: usize,
    pub checkpoint: Option<PathBuf>,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            degrees: vec![1, 15, 100],
            batch_size: 100,
            samples: 50,
            checkpoint: None,
        }
    }
}

/// Full configuration of a run. Loaded from TOML, then overridden by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    pub data: DataConfig,
    pub model: ModelConfig,
    /// Cohort simulated by `generate`, and by other commands without `--data`.
    pub synthetic: SyntheticSpec,
    pub train: TrainSection,
    pub cv: CvSection,
    pub horizons: Option<Vec<f64>>,
    pub checkpoint: Option<PathBuf>,
    pub reclassify: ReclassifySection,
    pub benchmark: BenchmarkSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2023,
            out: PathBuf::from("runs"),
            jobs: 1,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            synthetic: SyntheticSpec::default(),
            train: TrainSection::default(),
            cv: CvSection::default(),
            horizons: None,
            checkpoint: None,
            reclassify: ReclassifySection::default(),
            benchmark: BenchmarkSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| NfgError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| NfgError::io(path, e))?;
        Self::from_toml(&text)
    }

    fn apply_shared(&mut self, a: &SharedArgs) {
        if let Some(s) = a.seed {
            self.seed = s;
        }
        if let Some(o) = &a.out {
            self.out = o.clone();
        }
        if let Some(j) = a.jobs {
            self.jobs = j;
        }
    }

    fn apply_data(&mut self, a: &DataArgs) {
        if let Some(p) = &a.data {
            self.data.path = Some(p.clone());
        }
        if let Some(c) = &a.time_col {
            self.data.time_col = c.clone();
        }
        if let Some(c) = &a.event_col {
            self.data.event_col = c.clone();
        }
    }

    fn apply_model(&mut self, a: &ModelArgs) -> Result<()> {
        if let Some(v) = &a.variant {
            self.model.variant = Variant::parse(v).map_err(|e| NfgError::Usage(e.to_string()))?;
        }
        if let Some(r) = a.risks {
            self.model.risks = r;
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            validation_fraction: self.train.validation_fraction,
            seed: self.seed,
            variant: self.model.variant,
            risks: self.model.risks,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(NfgError::Config("jobs must be at least 1".into()));
        }
        if self.model.risks == 0 {
            return Err(NfgError::Config("risks must be at least 1".into()));
        }
        self.train_config().validate()?;
        self.cv.grid.validate()?;
        self.synthetic.validate()
    }

    /// First 8 hex digits of the SHA-256 of the resolved configuration.
    pub fn short_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("configuration serializes");
        hex(&Sha256::digest(json.as_bytes()))[..8].to_string()
    }
}

/// Resolves the configuration of a parsed command line: defaults, then the
/// `--config` file, then flags.
pub fn resolve(command: &Command) -> Result<RunConfig> {
    let shared = match command {
        Command::Generate { shared, .. }
        | Command::Train { shared, .. }
        | Command::Evaluate { shared, .. }
        | Command::Cv { shared, .. }
        | Command::Reclassify { shared, .. }
        | Command::Benchmark { shared, .. } => shared,
    };
    let mut cfg = match &shared.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_shared(shared);
    match command {
        Command::Generate {
            n,
            features,
            censoring,
            nonlinearity,
            ..
        } => {
            if let Some(n) = n {
                cfg.synthetic.n = *n;
            }
            if let Some(p) = features {
                let half = p / 2;
                cfg.synthetic.p = *p;
                cfg.synthetic.gammas = vec![
                    (0..*p).map(|j| if j < half { 0.3 } else { 0.0 }).collect(),
                    (0..*p).map(|j| if j >= half { 0.3 } else { 0.0 }).collect(),
                ];
            }
            if let Some(c) = censoring {
                cfg.synthetic.censoring_target = *c;
            }
            if let Some(s) = nonlinearity {
                cfg.synthetic.nonlinearity = *s;
            }
        }
        Command::Train { data, model, hyper, .. } => {
            cfg.apply_data(data);
            cfg.apply_model(model)?;
            let hp = &mut cfg.train.hyper_params;
            if let Some(v) = hyper.learning_rate {
                hp.learning_rate = v;
            }
            if let Some(v) = hyper.batch_size {
                hp.batch_size = v;
            }
            if let Some(v) = hyper.dropout {
                hp.dropout = v;
            }
            if let Some(v) = hyper.layers {
                hp.layers = v;
            }
            if let Some(v) = hyper.nodes {
                hp.nodes = v;
            }
            if let Some(v) = hyper.max_epochs {
                cfg.train.max_epochs = v;
            }
            if let Some(v) = hyper.patience {
                cfg.train.patience = v;
            }
        }
        Command::Evaluate {
            data,
            checkpoint,
            horizons,
            ..
        } => {
            cfg.apply_data(data);
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint.clone();
            }
            if horizons.is_some() {
                cfg.horizons = horizons.clone();
            }
        }
        Command::Cv {
            data,
            model,
            folds,
            trials,
            max_epochs,
            patience,
            horizons,
            ..
        } => {
            cfg.apply_data(data);
            cfg.apply_model(model)?;
            if let Some(v) = folds {
                cfg.cv.folds = *v;
            }
            if let Some(v) = trials {
                cfg.cv.trials = *v;
            }
            if let Some(v) = max_epochs {
                cfg.train.max_epochs = *v;
            }
            if let Some(v) = patience {
                cfg.train.patience = *v;
            }
            if horizons.is_some() {
                cfg.horizons = horizons.clone();
            }
        }
        Command::Reclassify {
            data,
            model_a,
            model_b,
            horizon,
            risk,
            thresholds,
            filter,
            group_column,
            group_edges,
            ..
        } => {
            cfg.apply_data(data);
            let r = &mut cfg.reclassify;
            if model_a.is_some() {
                r.model_a = model_a.clone();
            }
            if model_b.is_some() {
                r.model_b = model_b.clone();
            }
            if horizon.is_some() {
                r.horizon = *horizon;
            }
            if risk.is_some() {
                r.risk = *risk;
            }
            if let Some(t) = thresholds {
                match t.as_slice() {
                    [a, b] => r.thresholds = Some([*a, *b]),
                    _ => return Err(NfgError::Usage("--thresholds takes exactly two values".into())),
                }
            }
            if filter.is_some() {
                r.filter = filter.clone();
            }
            if group_column.is_some() {
                r.group_column = group_column.clone();
            }
            if group_edges.is_some() {
                r.group_edges = group_edges.clone();
            }
        }
        Command::Benchmark {
            data,
            model,
            degrees,
            batch_size,
            samples,
            checkpoint,
            ..
        } => {
            cfg.apply_data(data);
            cfg.apply_model(model)?;
            let b = &mut cfg.benchmark;
            if let Some(d) = degrees {
                b.degrees = d.clone();
            }
            if let Some(v) = batch_size {
                b.batch_size = *v;
            }
            if let Some(v) = samples {
                b.samples = *v;
            }
            if checkpoint.is_some() {
                b.checkpoint = checkpoint.clone();
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// SHA-256 of one input file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<InputHash>,
    pub result: T,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| NfgError::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// What a finished command produced.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// Human-readable table printed to stdout.
    pub text: String,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    command: &'static str,
    dir: PathBuf,
    inputs: Vec<InputHash>,
    files: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    fn start(cfg: &'a RunConfig, command: &'static str) -> Result<Self> {
        let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
        let base = format!("{stamp}-{command}-{}", cfg.short_hash());
        let mut dir = cfg.out.join(&base);
        let mut k = 2;
        while dir.exists() {
            dir = cfg.out.join(format!("{base}-{k}"));
            k += 1;
        }
        fs::create_dir_all(&dir).map_err(|e| NfgError::io(&dir, e))?;
        log::info!("writing results to {}", dir.display());
        Ok(Self {
            cfg,
            command,
            dir,
            inputs: Vec::new(),
            files: Vec::new(),
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputHash {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| NfgError::io(&p, e))
    }

    fn write_result<T: Serialize>(&mut self, name: &str, result: T) -> Result<()> {
        let env = Envelope {
            tool: "nfg".into(),
            version: TOOL_VERSION.into(),
            command: self.command.into(),
            seed: self.cfg.seed,
            config: self.cfg.clone(),
            inputs: self.inputs.clone(),
            result,
        };
        let mut json = serde_json::to_string_pretty(&env).expect("results serialize");
        json.push('\n');
        self.write_text(name, &json)
    }

    fn finish(self, text: String) -> RunSummary {
        RunSummary {
            run_dir: self.dir,
            files: self.files,
            text,
        }
    }
}

/// The cohort named by the configuration: the CSV when given, otherwise a
/// simulation from the synthetic spec with the run seed.
fn load_data(run: &mut Run<'_>) -> Result<SurvivalDataset> {
    let cfg = run.cfg;
    match &cfg.data.path {
        Some(p) => {
            run.input(p)?;
            let schema = CsvSchema {
                time_col: cfg.data.time_col.clone(),
                event_col: cfg.data.event_col.clone(),
                features: cfg.data.features.clone(),
                risks: Some(cfg.model.risks),
            };
            load_csv(p, &schema)
        }
        None => generate_synthetic(&SyntheticSpec {
            seed: cfg.seed,
            ..cfg.synthetic.clone()
        }),
    }
}

fn load_checkpoint(run: &mut Run<'_>, path: &Path, data: &SurvivalDataset) -> Result<NfgModel> {
    run.input(path)?;
    let model = checkpoint_load(path)?;
    if model.n_features != data.n_features() {
        return Err(NfgError::Schema {
            expected: model.n_features,
            got: data.n_features(),
        });
    }
    Ok(model)
}

fn horizons(cfg: &RunConfig, data: &SurvivalDataset) -> Result<Vec<f64>> {
    match &cfg.horizons {
        Some(h) => Ok(h.clone()),
        None => event_quantiles(&data.times, &data.events, &QUANTILE_LEVELS),
    }
}

#[derive(Serialize)]
struct GenerateResult {
    rows: usize,
    features: usize,
    event_counts: Vec<usize>,
    censored_fraction: f64,
    csv: String,
    csv_sha256: String,
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<RunSummary> {
    let mut run = Run::start(cfg, "generate")?;
    let spec = SyntheticSpec {
        seed: cfg.seed,
        ..cfg.synthetic.clone()
    };
    let data = generate_synthetic(&spec)?;
    let csv = run.path("cohort.csv");
    data.write_csv(&csv, &cfg.data.time_col, &cfg.data.event_col)?;
    let counts = data.event_counts();
    let result = GenerateResult {
        rows: data.len(),
        features: data.n_features(),
        censored_fraction: counts[0] as f64 / data.len() as f64,
        event_counts: counts,
        csv: "cohort.csv".into(),
        csv_sha256: sha256_file(&csv)?,
    };
    let text = format!(
        "generated {} rows, {} features, event counts {:?} (censored {:.3})\n",
        result.rows, result.features, result.event_counts, result.censored_fraction
    );
    run.write_result("manifest.json", result)?;
    Ok(run.finish(text))
}

#[derive(Serialize)]
struct TrainResult {
    hyper_params: HyperParams,
    best_epoch: usize,
    epochs_run: usize,
    stopped_early: bool,
    best_validation_nll: f64,
    t_scale: f64,
    parameters: usize,
    checkpoint: String,
    checkpoint_sha256: String,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<RunSummary> {
    let mut run = Run::start(cfg, "train")?;
    let data = load_data(&mut run)?;
    let rows: Vec<usize> = (0..data.len()).collect();
    let outcome = train(&data, &rows, &cfg.train.hyper_params, &cfg.train_config())?;
    let ckpt = run.path("model.nfg");
    checkpoint_save(&outcome.model, &ckpt)?;
    let log_path = run.path("train_log.jsonl");
    outcome.log.write_jsonl(&log_path)?;
    let result = TrainResult {
        hyper_params: outcome.hyper_params,
        best_epoch: outcome.log.best_epoch,
        epochs_run: outcome.log.records.len(),
        stopped_early: outcome.log.stopped_early,
        best_validation_nll: outcome.best_validation_nll(),
        t_scale: outcome.model.t_scale,
        parameters: outcome.model.param_count(),
        checkpoint: "model.nfg".into(),
        checkpoint_sha256: sha256_file(&ckpt)?,
    };
    let text = format!(
        "trained {} epochs (best {}), validation NLL per patient {:.5}\ncheckpoint {}\n",
        result.epochs_run,
        result.best_epoch,
        result.best_validation_nll,
        ckpt.display()
    );
    run.write_result("train.json", result)?;
    Ok(run.finish(text))
}

/// Per-risk rows of one report as an aligned table.
pub fn render_report(report: &MetricReport) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = write!(out, "{:<6}{:<10}", "Risk", "Metric");
    for (q, t) in report.quantile_levels.iter().zip(&report.horizons) {
        let _ = write!(out, "{:>18}", format!("q{:02} (t={t:.3})", (q * 100.0).round()));
    }
    let _ = writeln!(out);
    let fmt = |c: &crate::metrics::MetricCell| c.value.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
    for rm in &report.risks {
        for name in ["C-index", "Brier", "AUC"] {
            let _ = write!(out, "{:<6}{:<10}", rm.risk, name);
            for hm in &rm.horizons {
                let cell = match name {
                    "C-index" => &hm.c_index,
                    "Brier" => &hm.brier,
                    _ => &hm.auc,
                };
                let _ = write!(out, "{:>18}", fmt(cell));
            }
            let _ = writeln!(out);
        }
    }
    out
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<RunSummary> {
    let mut run = Run::start(cfg, "evaluate")?;
    let data = load_data(&mut run)?;
    let path = cfg
        .checkpoint
        .clone()
        .ok_or_else(|| NfgError::Usage("evaluate needs --checkpoint".into()))?;
    let model = load_checkpoint(&mut run, &path, &data)?;
    let rows: Vec<usize> = (0..data.len()).collect();
    let report = evaluate(&model, &data, &rows, &horizons(cfg, &data)?)?;
    let text = render_report(&report);
    run.write_text("metrics.txt", &text)?;
    run.write_result("metrics.json", report)?;
    Ok(run.finish(text))
}

#[derive(Serialize)]
struct CvResult<'a> {
    horizons: &'a [f64],
    folds: &'a [crate::trainer::FoldResult],
    aggregate: &'a crate::metrics::AggregateReport,
    warnings: &'a [String],
    checkpoints: Vec<String>,
}

pub fn cmd_cv(cfg: &RunConfig) -> Result<RunSummary> {
    let mut run = Run::start(cfg, "cv")?;
    let data = load_data(&mut run)?;
    let cv = CvConfig {
        folds: cfg.cv.folds,
        n_trials: cfg.cv.trials,
        grid: cfg.cv.grid.clone(),
        train: cfg.train_config(),
        horizons: cfg.horizons.clone(),
        jobs: cfg.jobs,
    };
    let outcome = cross_validate(&data, &cv)?;
    let mut checkpoints = Vec::new();
    for (k, m) in outcome.models.iter().enumerate() {
        let name = format!("fold{k}.nfg");
        checkpoint_save(m, run.path(&name))?;
        checkpoints.push(name);
    }
    let mut text = outcome.aggregate.render_table();
    for w in &outcome.warnings {
        text.push_str(&format!("warning: {w}\n"));
    }
    run.write_text("table.txt", &text)?;
    run.write_result(
        "cv.json",
        CvResult {
            horizons: &outcome.horizons,
            folds: &outcome.folds,
            aggregate: &outcome.aggregate,
            warnings: &outcome.warnings,
            checkpoints,
        },
    )?;
    Ok(run.finish(text))
}

/// Parses `column>=value` or `column<value`.
pub fn parse_filter(s: &str) -> Result<CohortFilter> {
    let bad = || NfgError::Usage(format!("filter `{s}` is not of the form column>=value or column<value"));
    let (column, threshold, at_least) = if let Some((c, v)) = s.split_once(">=") {
        (c, v, true)
    } else if let Some((c, v)) = s.split_once('<') {
        (c, v, false)
    } else {
        return Err(bad());
    };
    let threshold: f64 = threshold.trim().parse().map_err(|_| bad())?;
    let column = column.trim().to_string();
    if column.is_empty() {
        return Err(bad());
    }
    Ok(if at_least {
        CohortFilter::AtLeast { column, threshold }
    } else {
        CohortFilter::Below { column, threshold }
    })
}

pub fn cmd_reclassify(cfg: &RunConfig) -> Result<RunSummary> {
    let mut run = Run::start(cfg, "reclassify")?;
    let data = load_data(&mut run)?;
    let rc = &cfg.reclassify;
    let (Some(pa), Some(pb)) = (&rc.model_a, &rc.model_b) else {
        return Err(NfgError::Usage("reclassify needs --model-a and --model-b".into()));
    };
    let a = load_checkpoint(&mut run, pa, &data)?;
    let b = load_checkpoint(&mut run, pb, &data)?;
    let horizon = match rc.horizon {
        Some(h) => h,
        None => event_quantiles(&data.times, &data.events, &[0.5])?[0],
    };
    let risk = rc.risk.unwrap_or(1);
    let bins = match rc.thresholds {
        Some([l, u]) => RiskBins::new(l, u)?,
        None => RiskBins::default(),
    };
    let filter = match &rc.filter {
        Some(f) => parse_filter(f)?,
        None => CohortFilter::All,
    };
    let rows: Vec<usize> = (0..data.len()).collect();
    let (free, event) = reclassification_matrix(&a, &b, &data, &rows, horizon, risk, &bins, &filter)?;
    let mut text = format!("risk {risk} at horizon {horizon:.4}; bins {}\n\n", bins.describe());
    text.push_str(&free.render("A", "B"));
    text.push('\n');
    text.push_str(&event.render("A", "B"));
    let groups = match (&rc.group_column, &rc.group_edges) {
        (Some(column), Some(edges)) => {
            let grouping = Grouping {
                column: column.clone(),
                edges: edges.clone(),
            };
            let pair = [FoldPair {
                model_a: &a,
                model_b: &b,
                rows: rows.clone(),
            }];
            let diffs = subgroup_brier_diff(&pair, &data, &grouping, &[horizon], risk)?;
            text.push('\n');
            text.push_str(&render_group_diffs(&diffs));
            Some(diffs)
        }
        (None, None) => None,
        _ => return Err(NfgError::Usage("--group-column and --group-edges go together".into())),
    };
    run.write_text("reclassification.txt", &text)?;
    run.write_result(
        "reclassification.json",
        serde_json::json!({
            "horizon": horizon,
            "risk": risk,
            "event_free": free,
            "event": event,
            "subgroup_brier_difference": groups,
        }),
    )?;
    Ok(run.finish(text))
}

pub fn cmd_benchmark(cfg: &RunConfig) -> Result<RunSummary> {
    let mut run = Run::start(cfg, "benchmark")?;
    let bc = &cfg.benchmark;
    let data = match &cfg.data.path {
        Some(_) => load_data(&mut run)?,
        None => generate_synthetic(&SyntheticSpec {
            n: bc.batch_size,
            seed: cfg.seed,
            ..cfg.synthetic.clone()
        })?,
    };
    let model = match &bc.checkpoint {
        Some(p) => load_checkpoint(&mut run, &p.clone(), &data)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut m = NfgModel::new(
                cfg.model.variant,
                cfg.model.risks,
                data.n_features(),
                HyperParams::default().architecture(),
                &mut rng,
            )?;
            m.set_t_scale(data.max_event_time().max(f64::MIN_POSITIVE))?;
            m
        }
    };
    let rows: Vec<usize> = (0..data.len().min(bc.batch_size)).collect();
    let report = likelihood_cost_benchmark(&model, &SurvivalBatch::new(&data, &rows), &bc.degrees, bc.samples)?;
    let text = report.render_table();
    run.write_text("benchmark.txt", &text)?;
    run.write_result("benchmark.json", report)?;
    Ok(run.finish(text))
}

pub fn run_command(command: &Command) -> Result<RunSummary> {
    let cfg = resolve(command)?;
    match command {
        Command::Generate { .. } => cmd_generate(&cfg),
        Command::Train { .. } => cmd_train(&cfg),
        Command::Evaluate { .. } => cmd_evaluate(&cfg),
        Command::Cv { .. } => cmd_cv(&cfg),
        Command::Reclassify { .. } => cmd_reclassify(&cfg),
        Command::Benchmark { .. } => cmd_benchmark(&cfg),
    }
}

/// Single-line JSON error record.
pub fn error_record(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", error_record("usage", first));
            return 1;
        }
    };
    match run_command(&cli.command) {
        Ok(summary) => {
            print!("{}", summary.text);
            println!("results in {}", summary.run_dir.display());
            0
        }
        Err(e) => {
            eprintln!("{}", error_record(e.kind(), &e.to_string()));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "seed = 5\njobs = 2\n[model]\nvariant = \"monofg\"\nrisks = 3\n").unwrap();
        let cli = Cli::try_parse_from([
            "nfg",
            "cv",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "9",
            "--variant",
            "cause-specific",
        ])
        .unwrap();
        let cfg = resolve(&cli.command).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.jobs, 2);
        assert_eq!(cfg.model.variant, Variant::CauseSpecific);
        assert_eq!(cfg.model.risks, 3);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("sede = 1"), Err(NfgError::Config(_))));
    }

    #[test]
    fn filters_parse() {
        assert_eq!(
            parse_filter("age>=50").unwrap(),
            CohortFilter::AtLeast {
                column: "age".into(),
                threshold: 50.0
            }
        );
        assert_eq!(
            parse_filter("bp < 1.5").unwrap(),
            CohortFilter::Below {
                column: "bp".into(),
                threshold: 1.5
            }
        );
        assert!(parse_filter("age=50").is_err());
    }

    #[test]
    fn error_record_is_one_json_line() {
        let line = error_record("schema", "model expects 12 features, data has 3");
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"]["kind"], "schema");
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 1, ..RunConfig::default() };
        assert_eq!(a.short_hash(), RunConfig::default().short_hash());
        assert_ne!(a.short_hash(), b.short_hash());
    }
}
