//! Minibatch Adam with early stopping, random hyperparameter search and
//! k-fold cross-validation.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradient, Tape};
use crate::data::{split_folds, stratified_holdout, Standardization, SurvivalDataset};
use crate::error::{NfgError, Result};
use crate::metrics::{aggregate, evaluate, event_quantiles, AggregateReport, MetricReport, QUANTILE_LEVELS};
use crate::model::{Architecture, NfgModel, Variant};
use crate::objectives::{loss_and_gradient, loss_value, Objective, SurvivalBatch};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub layers: usize,
    pub nodes: usize,
}

impl HyperParams {
    pub fn architecture(&self) -> Architecture {
        Architecture {
            layers: self.layers,
            nodes: self.nodes,
            dropout: self.dropout,
        }
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 100,
            dropout: 0.0,
            layers: 1,
            nodes: 50,
        }
    }
}

/// Values the random search draws from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub dropouts: Vec<f64>,
    pub layers: Vec<usize>,
    pub nodes: Vec<usize>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            learning_rates: vec![1e-3, 1e-4],
            batch_sizes: vec![100, 250],
            dropouts: vec![0.0, 0.25, 0.5, 0.75],
            layers: vec![1, 2, 3, 4],
            nodes: vec![25, 50],
        }
    }
}

impl HyperGrid {
    /// Larger batches for cohorts in the hundreds of thousands.
    pub fn large_data() -> Self {
        Self {
            batch_sizes: vec![1000, 5000],
            ..Self::default()
        }
    }

    /// A grid with exactly one point.
    pub fn single(hp: HyperParams) -> Self {
        Self {
            learning_rates: vec![hp.learning_rate],
            batch_sizes: vec![hp.batch_size],
            dropouts: vec![hp.dropout],
            layers: vec![hp.layers],
            nodes: vec![hp.nodes],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty()
            || self.batch_sizes.is_empty()
            || self.dropouts.is_empty()
            || self.layers.is_empty()
            || self.nodes.is_empty()
        {
            return Err(NfgError::Config("every hyperparameter grid axis needs a value".into()));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HyperParams {
        let mut pick = |n: usize| rng.random_range(0..n);
        HyperParams {
            learning_rate: self.learning_rates[pick(self.learning_rates.len())],
            batch_size: self.batch_sizes[pick(self.batch_sizes.len())],
            dropout: self.dropouts[pick(self.dropouts.len())],
            layers: self.layers[pick(self.layers.len())],
            nodes: self.nodes[pick(self.nodes.len())],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    pub variant: Variant,
    pub risks: usize,
    /// Defaults to the natural objective of the variant.
    pub objective: Option<Objective>,
    pub time_scale: TimeScale,
}

/// How `t_scale` is derived from the fitting rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScale {
    /// Largest event time.
    MaxEvent,
    /// Nearest-rank quantile of the event times.
    EventQuantile(f64),
}

impl TimeScale {
    pub fn resolve(&self, data: &SurvivalDataset, rows: &[usize]) -> Result<f64> {
        let scale = match self {
            TimeScale::MaxEvent => data.subset(rows).max_event_time(),
            TimeScale::EventQuantile(q) => {
                let times: Vec<f64> = rows.iter().map(|&i| data.times[i]).collect();
                let events: Vec<usize> = rows.iter().map(|&i| data.events[i]).collect();
                match event_quantiles(&times, &events, &[*q]) {
                    Ok(v) => v[0],
                    Err(_) => data.subset(rows).max_event_time(),
                }
            }
        };
        if scale > 0.0 && scale.is_finite() {
            Ok(scale)
        } else {
            Ok(1.0)
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 1000,
            patience: 50,
            validation_fraction: 0.1,
            seed: 0,
            variant: Variant::Nfg,
            risks: 2,
            objective: None,
            time_scale: TimeScale::MaxEvent,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(NfgError::Config(format!(
                "validation fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        if self.max_epochs == 0 {
            return Err(NfgError::Config("max_epochs must be positive".into()));
        }
        Ok(())
    }
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) {
    debug_assert_eq!(params.len(), grads.len());
    state.step += 1;
    let c1 = 1.0 - BETA1.powi(state.step as i32);
    let c2 = 1.0 - BETA2.powi(state.step as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
    }
}

/// Losses of one epoch, per patient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub validation_nll: f64,
    pub floored_terms: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == self.best_epoch)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(out, "{}", serde_json::to_string(r).expect("plain record"));
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| NfgError::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| NfgError::io(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: NfgModel,
    pub log: TrainLog,
    pub hyper_params: HyperParams,
}

impl TrainOutcome {
    pub fn best_validation_nll(&self) -> f64 {
        self.log.best().map(|r| r.validation_nll).unwrap_or(f64::INFINITY)
    }
}

fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

/// Builds a model for `rows`, holds out a stratified validation share and
/// trains it. Standardization and the time scale come from the fitting rows.
pub fn train(data: &SurvivalDataset, rows: &[usize], hp: &HyperParams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if rows.len() < 2 {
        return Err(NfgError::Data("training needs at least two rows".into()));
    }
    if data.risks > cfg.risks {
        return Err(NfgError::Config(format!(
            "data has {} risks but the configuration declares {}",
            data.risks, cfg.risks
        )));
    }
    let (fit_rows, val_rows) = stratified_holdout(data, rows, cfg.validation_fraction, cfg.seed);
    let mut model = NfgModel::new(cfg.variant, cfg.risks, data.n_features(), hp.architecture(), &mut stream(cfg.seed, 1))?;
    let stats = Standardization::fit(data, &fit_rows);
    model.set_standardization(stats.means, stats.stds)?;
    model.set_t_scale(cfg.time_scale.resolve(data, &fit_rows)?)?;
    fit(model, data, &fit_rows, &val_rows, hp, cfg)
}

/// Trains an initialised model on `fit_rows`, early-stopping on `val_rows`.
pub fn fit(
    mut model: NfgModel,
    data: &SurvivalDataset,
    fit_rows: &[usize],
    val_rows: &[usize],
    hp: &HyperParams,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if fit_rows.is_empty() || val_rows.is_empty() {
        return Err(NfgError::Data("training and validation rows must be nonempty".into()));
    }
    let objective = cfg.objective.unwrap_or_else(|| Objective::for_model(&model));
    let mut shuffle_rng = stream(cfg.seed, 2);
    let mut dropout_rng = stream(cfg.seed, 3);
    let use_dropout = hp.dropout > 0.0;

    let mut params = model.params();
    let mut adam = AdamState::new(params.len());
    let mut tape = Tape::new();
    let mut grad = Gradient::default();
    let mut order = fit_rows.to_vec();
    let val_batch = SurvivalBatch::new(data, val_rows);

    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut log = TrainLog::default();
    let mut stale = 0;
    let batch_size = hp.batch_size.max(1);

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut train_total = 0.0;
        let mut floored = 0;
        for (b, chunk) in order.chunks(batch_size).enumerate() {
            let batch = SurvivalBatch::new(data, chunk);
            let rng = use_dropout.then_some(&mut dropout_rng);
            let (loss, mut g) = loss_and_gradient(&model, objective, &batch, &mut tape, &mut grad, rng)?;
            if !loss.total.is_finite() || g.iter().any(|v| !v.is_finite()) {
                let param_norm = params.iter().map(|p| p * p).sum::<f64>().sqrt();
                return Err(NfgError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    param_norm,
                });
            }
            train_total += loss.total;
            floored += loss.floored_terms;
            let inv = 1.0 / chunk.len() as f64;
            g.iter_mut().for_each(|v| *v *= inv);
            adam_step(&mut adam, &mut params, &g, hp.learning_rate);
            model.set_params(&params)?;
        }
        let val = loss_value(&model, objective, &val_batch)?;
        let val_nll = val.total / val_rows.len() as f64;
        if !val_nll.is_finite() {
            let param_norm = params.iter().map(|p| p * p).sum::<f64>().sqrt();
            return Err(NfgError::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                param_norm,
            });
        }
        log.records.push(EpochRecord {
            epoch,
            train_nll: train_total / fit_rows.len() as f64,
            validation_nll: val_nll,
            floored_terms: floored + val.floored_terms,
        });
        log::debug!("epoch {epoch}: validation nll {val_nll:.6}");
        if val_nll < best_val {
            best_val = val_nll;
            best_params.clone_from(&params);
            log.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale > cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    model.set_params(&best_params)?;
    Ok(TrainOutcome {
        model,
        log,
        hyper_params: *hp,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub hyper_params: HyperParams,
    pub validation_nll: f64,
    pub epochs: usize,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best_index: usize,
    pub trials: Vec<TrialRecord>,
    /// The winning trial's trained model.
    pub best: TrainOutcome,
}

impl SearchOutcome {
    pub fn best_hyper_params(&self) -> HyperParams {
        self.trials[self.best_index].hyper_params
    }
}

/// Runs `jobs` independent tasks and returns results in index order.
fn parallel_map<T: Send>(n: usize, jobs: usize, task: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(task).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = task(i);
                slots.lock().expect("no poisoned workers")[i] = Some(out);
            });
        }
    });
    results.into_iter().map(|r| r.expect("every task ran")).collect()
}

/// Samples `n_trials` points from `grid` with replacement and keeps the trial
/// with the lowest validation NLL, earliest index on ties. Every trial uses
/// the same split and seed, so only the hyperparameters differ.
pub fn random_search(
    data: &SurvivalDataset,
    rows: &[usize],
    grid: &HyperGrid,
    n_trials: usize,
    cfg: &TrainConfig,
    search_seed: u64,
    jobs: usize,
) -> Result<SearchOutcome> {
    grid.validate()?;
    if n_trials == 0 {
        return Err(NfgError::Config("random search needs at least one trial".into()));
    }
    let mut rng = stream(search_seed, 4);
    let points: Vec<HyperParams> = (0..n_trials).map(|_| grid.sample(&mut rng)).collect();
    let outcomes = parallel_map(n_trials, jobs, |i| train(data, rows, &points[i], cfg));
    let mut trials = Vec::with_capacity(n_trials);
    let mut best: Option<(usize, TrainOutcome)> = None;
    for (index, outcome) in outcomes.into_iter().enumerate() {
        let outcome = match outcome {
            Ok(o) => o,
            Err(NfgError::NonFiniteLoss { epoch, batch, .. }) => {
                log::warn!("trial {index} diverged at epoch {epoch}, batch {batch}");
                trials.push(TrialRecord {
                    index,
                    hyper_params: points[index],
                    validation_nll: f64::INFINITY,
                    epochs: epoch,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let v = outcome.best_validation_nll();
        trials.push(TrialRecord {
            index,
            hyper_params: points[index],
            validation_nll: v,
            epochs: outcome.log.records.len(),
        });
        if best.as_ref().is_none_or(|(_, b)| v < b.best_validation_nll()) {
            best = Some((index, outcome));
        }
    }
    let (best_index, best) = best.ok_or_else(|| NfgError::Data("every search trial diverged".into()))?;
    Ok(SearchOutcome {
        best_index,
        trials,
        best,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub n_trials: usize,
    pub grid: HyperGrid,
    pub train: TrainConfig,
    /// Evaluation times; defaults to the event-time quantiles of the dataset.
    pub horizons: Option<Vec<f64>>,
    pub jobs: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            n_trials: 100,
            grid: HyperGrid::default(),
            train: TrainConfig::default(),
            horizons: None,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub best_trial: usize,
    pub hyper_params: HyperParams,
    pub best_epoch: usize,
    pub report: MetricReport,
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub horizons: Vec<f64>,
    pub folds: Vec<FoldResult>,
    pub aggregate: AggregateReport,
    pub warnings: Vec<String>,
    pub models: Vec<NfgModel>,
    pub fold_labels: Vec<usize>,
}

/// Per fold: tune on the training split (with its own validation share),
/// keep the best model and evaluate it on the held-out fold.
///
/// Retraining the winning configuration would reproduce the winning trial
/// exactly, since training is deterministic, so its model is reused.
pub fn cross_validate(data: &SurvivalDataset, cfg: &CvConfig) -> Result<CvOutcome> {
    let labels = split_folds(data, cfg.folds, cfg.train.seed)?;
    let horizons = match &cfg.horizons {
        Some(h) => h.clone(),
        None => event_quantiles(&data.times, &data.events, &QUANTILE_LEVELS)?,
    };
    let mut warnings = Vec::new();
    for k in 0..cfg.folds {
        let test: Vec<usize> = (0..data.len()).filter(|&i| labels[i] == k).collect();
        for r in 1..=data.risks {
            if !test.iter().any(|&i| data.events[i] == r) {
                let msg = format!("fold {k} has no events of risk {r}; its metrics are unavailable");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    // folds run in parallel; trials inside a fold run sequentially
    let per_fold = parallel_map(cfg.folds, cfg.jobs, |k| -> Result<(FoldResult, NfgModel)> {
        let train_rows: Vec<usize> = (0..data.len()).filter(|&i| labels[i] != k).collect();
        let test_rows: Vec<usize> = (0..data.len()).filter(|&i| labels[i] == k).collect();
        let search = random_search(data, &train_rows, &cfg.grid, cfg.n_trials, &cfg.train, cfg.train.seed.wrapping_add(k as u64), 1)?;
        let report = evaluate(&search.best.model, data, &test_rows, &horizons)?;
        Ok((
            FoldResult {
                fold: k,
                train_size: train_rows.len(),
                test_size: test_rows.len(),
                best_trial: search.best_index,
                hyper_params: search.best_hyper_params(),
                best_epoch: search.best.log.best_epoch,
                report,
            },
            search.best.model,
        ))
    });
    let mut folds = Vec::with_capacity(cfg.folds);
    let mut models = Vec::with_capacity(cfg.folds);
    for r in per_fold {
        let (f, m) = r?;
        folds.push(f);
        models.push(m);
    }
    let reports: Vec<MetricReport> = folds.iter().map(|f| f.report.clone()).collect();
    Ok(CvOutcome {
        aggregate: aggregate(&reports),
        horizons,
        folds,
        warnings,
        models,
        fold_labels: labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut s = AdamState::new(3);
        let mut p = vec![0.5, -1.0, 2.0];
        adam_step(&mut s, &mut p, &[0.0; 3], 1e-3);
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn adam_first_step_has_learning_rate_size() {
        let mut s = AdamState::new(3);
        let mut p = vec![0.0; 3];
        adam_step(&mut s, &mut p, &[1e-3, -5.0, 200.0], 0.01);
        for (v, sign) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((v - sign * 0.01).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn adam_constant_gradient_drifts_monotonically() {
        let mut s = AdamState::new(1);
        let mut p = vec![0.0];
        let mut last = 0.0;
        for _ in 0..100 {
            adam_step(&mut s, &mut p, &[0.3], 1e-2);
            assert!(p[0] < last);
            last = p[0];
        }
    }

    #[test]
    fn grid_sampling_stays_on_grid() {
        let g = HyperGrid::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let hp = g.sample(&mut rng);
            assert!(g.learning_rates.contains(&hp.learning_rate));
            assert!(g.batch_sizes.contains(&hp.batch_size));
            assert!(g.dropouts.contains(&hp.dropout));
            assert!(g.layers.contains(&hp.layers));
            assert!(g.nodes.contains(&hp.nodes));
        }
        assert_eq!(HyperGrid::large_data().batch_sizes, vec![1000, 5000]);
    }

    fn small() -> (SurvivalDataset, HyperParams, TrainConfig) {
        let data = generate_synthetic(&SyntheticSpec {
            n: 300,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let hp = HyperParams {
            learning_rate: 1e-2,
            batch_size: 50,
            dropout: 0.0,
            layers: 1,
            nodes: 6,
        };
        let cfg = TrainConfig {
            max_epochs: 8,
            patience: 3,
            seed: 5,
            ..TrainConfig::default()
        };
        (data, hp, cfg)
    }

    #[test]
    fn training_is_deterministic() {
        let (data, hp, cfg) = small();
        let rows: Vec<usize> = (0..data.len()).collect();
        let a = train(&data, &rows, &hp, &cfg).unwrap();
        let b = train(&data, &rows, &hp, &cfg).unwrap();
        assert_eq!(crate::model::encode_checkpoint(&a.model), crate::model::encode_checkpoint(&b.model));
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn best_epoch_is_restored() {
        let (data, hp, cfg) = small();
        let rows: Vec<usize> = (0..data.len()).collect();
        let out = train(&data, &rows, &hp, &cfg).unwrap();
        let best = out.log.best().unwrap().validation_nll;
        assert!(out.log.records.iter().all(|r| best <= r.validation_nll));
        assert!(best <= out.log.records.last().unwrap().validation_nll);
    }

    #[test]
    fn zero_patience_stops_at_first_non_improvement() {
        let (data, mut hp, mut cfg) = small();
        // a huge step makes the second epoch worse
        hp.learning_rate = 0.5;
        cfg.patience = 0;
        cfg.max_epochs = 50;
        let rows: Vec<usize> = (0..data.len()).collect();
        let out = train(&data, &rows, &hp, &cfg).unwrap();
        let recs = &out.log.records;
        let first_bad = (1..recs.len())
            .find(|&k| recs[k].validation_nll >= recs[..k].iter().map(|r| r.validation_nll).fold(f64::INFINITY, f64::min));
        assert_eq!(Some(recs.len() - 1), first_bad);
        assert!(out.log.stopped_early);
    }

    #[test]
    fn one_point_grid_search() {
        let (data, hp, cfg) = small();
        let rows: Vec<usize> = (0..data.len()).collect();
        let grid = HyperGrid::single(hp);
        let out = random_search(&data, &rows, &grid, 3, &cfg, 1, 2).unwrap();
        assert_eq!(out.best_index, 0);
        assert!(out.trials.windows(2).all(|w| w[0].validation_nll == w[1].validation_nll));
        let single = random_search(&data, &rows, &grid, 1, &cfg, 1, 1).unwrap();
        assert_eq!(single.best_index, 0);
    }

    #[test]
    fn parallel_map_preserves_order() {
        let out = parallel_map(17, 4, |i| i * i);
        assert_eq!(out, (0..17).map(|i| i * i).collect::<Vec<_>>());
    }
}
