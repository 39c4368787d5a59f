//! Censoring-adjusted evaluation metrics.
//!
//! Every IPCW weight is `ω(u) = 1 / Ĝ(u⁻)` where `Ĝ` is the Kaplan-Meier
//! estimate of the censoring distribution fitted on the evaluation cohort.
//! `Ĝ` is clipped at [`WEIGHT_FLOOR`]; a metric is reported unavailable when
//! a needed `Ĝ` is exactly zero or when clipped weights carry more than
//! [`MAX_CLIPPED_MASS`] of the total weight mass.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{NfgError, Result};
use crate::model::NfgModel;

pub const WEIGHT_FLOOR: f64 = 0.05;
pub const MAX_CLIPPED_MASS: f64 = 0.05;
pub const QUANTILE_LEVELS: [f64; 3] = [0.25, 0.5, 0.75];
/// Points of the time grid used by the cumulative metrics.
pub const GRID_POINTS: usize = 100;

/// Why a metric has no value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unavailable {
    NoComparablePairs,
    NoCases,
    NoControls,
    EmptyCohort,
    /// The censoring survival estimate reached zero before a needed time.
    ZeroCensoringSurvival,
    /// Clipped weights exceeded the allowed share of weight mass.
    ExcessiveClipping,
    /// The risk has no events in this cohort.
    RiskAbsent,
}

impl std::fmt::Display for Unavailable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Unavailable::NoComparablePairs => "no comparable pairs",
            Unavailable::NoCases => "no cases",
            Unavailable::NoControls => "no controls",
            Unavailable::EmptyCohort => "empty cohort",
            Unavailable::ZeroCensoringSurvival => "censoring survival is zero",
            Unavailable::ExcessiveClipping => "weight clipping exceeds 5% of mass",
            Unavailable::RiskAbsent => "risk absent",
        };
        f.write_str(s)
    }
}

pub type MetricValue = std::result::Result<f64, Unavailable>;

/// Product-limit estimator as a right-continuous step function.
#[derive(Clone, Debug, PartialEq)]
pub struct KaplanMeier {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

impl KaplanMeier {
    /// `observed[i]` marks whether row `i` is an occurrence of the event whose
    /// survival is being estimated.
    pub fn fit(times: &[f64], observed: &[bool]) -> Result<Self> {
        if times.is_empty() || times.len() != observed.len() {
            return Err(NfgError::Usage(
                "Kaplan-Meier needs a nonempty sample with one indicator per time".into(),
            ));
        }
        if let Some(t) = times.iter().find(|t| !(**t >= 0.0)) {
            return Err(NfgError::NegativeTime(*t));
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let mut km = KaplanMeier {
            times: Vec::new(),
            survival: Vec::new(),
            at_risk: Vec::new(),
            events: Vec::new(),
        };
        let mut s = 1.0;
        let mut remaining = times.len();
        let mut k = 0;
        while k < order.len() {
            let t = times[order[k]];
            let mut end = k;
            let mut d = 0;
            while end < order.len() && times[order[end]] == t {
                d += observed[order[end]] as usize;
                end += 1;
            }
            if d > 0 {
                s *= 1.0 - d as f64 / remaining as f64;
                km.times.push(t);
                km.survival.push(s);
                km.at_risk.push(remaining);
                km.events.push(d);
            }
            remaining -= end - k;
            k = end;
        }
        Ok(km)
    }

    /// `Ŝ(t)`, including steps at `t`.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    /// `Ŝ(t⁻)`, excluding steps at `t`.
    pub fn survival_before(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }
}

/// Observed outcomes of an evaluation cohort with its censoring estimator.
#[derive(Clone, Debug)]
pub struct Cohort {
    pub times: Vec<f64>,
    pub events: Vec<usize>,
    censoring: KaplanMeier,
}

impl Cohort {
    pub fn new(times: Vec<f64>, events: Vec<usize>) -> Result<Self> {
        let censored: Vec<bool> = events.iter().map(|&e| e == 0).collect();
        let censoring = KaplanMeier::fit(&times, &censored)?;
        Ok(Self {
            times,
            events,
            censoring,
        })
    }

    pub fn from_rows(data: &SurvivalDataset, rows: &[usize]) -> Result<Self> {
        Self::new(
            rows.iter().map(|&i| data.times[i]).collect(),
            rows.iter().map(|&i| data.events[i]).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn censoring(&self) -> &KaplanMeier {
        &self.censoring
    }

    fn weights(&self) -> Weights<'_> {
        Weights {
            km: &self.censoring,
            total: 0.0,
            clipped: 0.0,
        }
    }
}

/// Accumulates the weight mass used by one metric to check clipping.
struct Weights<'a> {
    km: &'a KaplanMeier,
    total: f64,
    clipped: f64,
}

impl Weights<'_> {
    fn at(&mut self, u: f64) -> MetricValue {
        let g = self.km.survival_before(u);
        if g <= 0.0 {
            return Err(Unavailable::ZeroCensoringSurvival);
        }
        let w = 1.0 / g.max(WEIGHT_FLOOR);
        self.total += w;
        if g < WEIGHT_FLOOR {
            self.clipped += w;
        }
        Ok(w)
    }

    fn check(&self) -> std::result::Result<(), Unavailable> {
        if self.total > 0.0 && self.clipped > MAX_CLIPPED_MASS * self.total {
            Err(Unavailable::ExcessiveClipping)
        } else {
            Ok(())
        }
    }
}

fn concordance(a: f64, b: f64) -> f64 {
    if a > b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

/// Time-dependent concordance at `horizon`: pairs with `d_i = r`,
/// `t_i < t_j`, `t_i ≤ horizon`, weighted by `ω(t_i)²`.
pub fn c_index_td(cohort: &Cohort, predictions: &[f64], risk: usize, horizon: f64) -> MetricValue {
    if cohort.is_empty() {
        return Err(Unavailable::EmptyCohort);
    }
    let mut w = cohort.weights();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..cohort.len() {
        let ti = cohort.times[i];
        if cohort.events[i] != risk || ti > horizon {
            continue;
        }
        let mut wi = None;
        for j in 0..cohort.len() {
            if cohort.times[j] <= ti {
                continue;
            }
            let wi = match wi {
                Some(v) => v,
                None => {
                    let v = w.at(ti)?;
                    wi = Some(v);
                    v
                }
            };
            let pair = wi * wi;
            num += pair * concordance(predictions[i], predictions[j]);
            den += pair;
        }
    }
    if den == 0.0 {
        return Err(Unavailable::NoComparablePairs);
    }
    w.check()?;
    Ok(num / den)
}

/// Time-dependent Brier score for risk `r` at `horizon`.
///
/// Patients with any event by the horizon contribute `ω(t_i)(1{d_i=r} − F̂)²`,
/// patients still event-free contribute `ω(horizon) F̂²`, and patients
/// censored before the horizon contribute 0. Counting competing events as
/// `(0 − F̂)²` keeps the score proper for the cumulative incidence.
pub fn brier_td(cohort: &Cohort, predictions: &[f64], risk: usize, horizon: f64) -> MetricValue {
    if cohort.is_empty() {
        return Err(Unavailable::EmptyCohort);
    }
    let mut w = cohort.weights();
    let mut sum = 0.0;
    for i in 0..cohort.len() {
        let (t, d, f) = (cohort.times[i], cohort.events[i], predictions[i]);
        if t <= horizon {
            if d != 0 {
                let target = if d == risk { 1.0 } else { 0.0 };
                sum += w.at(t)? * (target - f) * (target - f);
            }
        } else {
            sum += w.at(horizon)? * f * f;
        }
    }
    w.check()?;
    Ok(sum / cohort.len() as f64)
}

/// Cumulative/dynamic AUC: cases have `d_i = r` and `t_i ≤ horizon`
/// (weight `ω(t_i)`), controls have `t_j > horizon`.
pub fn auc_td(cohort: &Cohort, predictions: &[f64], risk: usize, horizon: f64) -> MetricValue {
    if cohort.is_empty() {
        return Err(Unavailable::EmptyCohort);
    }
    let mut w = cohort.weights();
    let mut cases = Vec::new();
    for i in 0..cohort.len() {
        if cohort.events[i] == risk && cohort.times[i] <= horizon {
            cases.push((i, w.at(cohort.times[i])?));
        }
    }
    let controls: Vec<usize> = (0..cohort.len()).filter(|&j| cohort.times[j] > horizon).collect();
    if cases.is_empty() {
        return Err(Unavailable::NoCases);
    }
    if controls.is_empty() {
        return Err(Unavailable::NoControls);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(i, wi) in &cases {
        for &j in &controls {
            num += wi * concordance(predictions[i], predictions[j]);
            den += wi;
        }
    }
    w.check()?;
    Ok(num / den)
}

/// Nearest-rank quantiles of the uncensored event times.
pub fn event_quantiles(times: &[f64], events: &[usize], levels: &[f64]) -> Result<Vec<f64>> {
    let mut observed: Vec<f64> = times
        .iter()
        .zip(events)
        .filter(|(_, &e)| e > 0)
        .map(|(t, _)| *t)
        .collect();
    if observed.is_empty() {
        return Err(NfgError::Usage("no uncensored events to take quantiles of".into()));
    }
    observed.sort_by(f64::total_cmp);
    let n = observed.len();
    Ok(levels
        .iter()
        .map(|q| {
            let rank = (q * n as f64).ceil().clamp(1.0, n as f64) as usize;
            observed[rank - 1]
        })
        .collect())
}

/// `GRID_POINTS` equally spaced times in `(0, max_time]`.
pub fn time_grid(max_time: f64) -> Vec<f64> {
    (1..=GRID_POINTS)
        .map(|k| max_time * k as f64 / GRID_POINTS as f64)
        .collect()
}

/// Piecewise-linear interpolation of a curve on `grid` with value 0 at time 0,
/// held constant beyond the last grid point.
pub fn interpolate(grid: &[f64], curve: &[f64], t: f64) -> f64 {
    let k = grid.partition_point(|&g| g < t);
    if k == grid.len() {
        return curve[grid.len() - 1];
    }
    let (t0, v0) = if k == 0 { (0.0, 0.0) } else { (grid[k - 1], curve[k - 1]) };
    let (t1, v1) = (grid[k], curve[k]);
    if t1 == t0 {
        v1
    } else {
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CumulativeMetrics {
    /// Trapezoid integral of the Brier curve divided by the integrated span.
    pub integrated_brier: Option<f64>,
    /// End of the grid prefix on which the Brier curve was available.
    pub integrated_until: Option<f64>,
    pub overall_c_index: Option<f64>,
}

/// Integrated Brier score and overall concordance from predictions on a grid.
///
/// `curves[i]` holds patient `i`'s predicted `F̂_r` at each grid time. The
/// integral covers the longest prefix of the grid on which the Brier score is
/// available. The overall concordance compares `F̂_r(t_i | x_i)` with
/// `F̂_r(t_i | x_j)` for every pair with `d_i = r` and `t_i < t_j`.
pub fn cumulative_metrics(cohort: &Cohort, grid: &[f64], curves: &[Vec<f64>], risk: usize) -> CumulativeMetrics {
    let mut values = Vec::new();
    for (g, &t) in grid.iter().enumerate() {
        let preds: Vec<f64> = curves.iter().map(|c| c[g]).collect();
        match brier_td(cohort, &preds, risk, t) {
            Ok(v) => values.push(v),
            Err(_) => break,
        }
    }
    let (integrated_brier, integrated_until) = match values.len() {
        0 => (None, None),
        1 => (Some(values[0]), Some(grid[0])),
        m => {
            let area: f64 = (1..m)
                .map(|k| 0.5 * (values[k] + values[k - 1]) * (grid[k] - grid[k - 1]))
                .sum();
            (Some(area / (grid[m - 1] - grid[0])), Some(grid[m - 1]))
        }
    };
    CumulativeMetrics {
        integrated_brier,
        integrated_until,
        overall_c_index: overall_c_index(cohort, grid, curves, risk).ok(),
    }
}

fn overall_c_index(cohort: &Cohort, grid: &[f64], curves: &[Vec<f64>], risk: usize) -> MetricValue {
    let mut w = cohort.weights();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..cohort.len() {
        if cohort.events[i] != risk {
            continue;
        }
        let ti = cohort.times[i];
        let fi = interpolate(grid, &curves[i], ti);
        let mut wi = None;
        for j in 0..cohort.len() {
            if cohort.times[j] <= ti {
                continue;
            }
            let wi = match wi {
                Some(v) => v,
                None => {
                    let v = w.at(ti)?;
                    wi = Some(v);
                    v
                }
            };
            let pair = wi * wi;
            num += pair * concordance(fi, interpolate(grid, &curves[j], ti));
            den += pair;
        }
    }
    if den == 0.0 {
        return Err(Unavailable::NoComparablePairs);
    }
    w.check()?;
    Ok(num / den)
}

/// A metric value as stored in reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unavailable: Option<Unavailable>,
}

impl From<MetricValue> for MetricCell {
    fn from(v: MetricValue) -> Self {
        match v {
            Ok(value) => MetricCell {
                value: Some(value),
                unavailable: None,
            },
            Err(reason) => MetricCell {
                value: None,
                unavailable: Some(reason),
            },
        }
    }
}

impl MetricCell {
    pub fn unavailable(reason: Unavailable) -> Self {
        Err(reason).into()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub horizon: f64,
    pub c_index: MetricCell,
    pub brier: MetricCell,
    pub auc: MetricCell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskMetrics {
    pub risk: usize,
    pub horizons: Vec<HorizonMetrics>,
    pub cumulative: CumulativeMetrics,
}

/// Metrics of one model on one cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub quantile_levels: Vec<f64>,
    pub horizons: Vec<f64>,
    pub risks: Vec<RiskMetrics>,
    /// Pair weighting used by the concordance metrics.
    pub c_index_weighting: String,
}

/// Predicted risk-`r` curves for `rows` at `times`.
pub fn predict_curves(model: &NfgModel, data: &SurvivalDataset, rows: &[usize], times: &[f64], risk: usize) -> Result<Vec<Vec<f64>>> {
    rows.iter().map(|&i| model.risk_curve(data.row(i), times, risk)).collect()
}

/// Evaluates `model` on `rows` at the given horizons. The censoring estimator
/// is fitted on the same rows.
pub fn evaluate(model: &NfgModel, data: &SurvivalDataset, rows: &[usize], horizons: &[f64]) -> Result<MetricReport> {
    let cohort = Cohort::from_rows(data, rows)?;
    let grid = time_grid(cohort.times.iter().zip(&cohort.events).filter(|(_, &e)| e > 0).map(|(t, _)| *t).fold(0.0, f64::max).max(f64::MIN_POSITIVE));
    let mut times = horizons.to_vec();
    times.extend_from_slice(&grid);
    let mut risks = Vec::new();
    for r in 1..=model.risks {
        let curves = predict_curves(model, data, rows, &times, r)?;
        let present = cohort.events.iter().any(|&e| e == r);
        let horizon_metrics = horizons
            .iter()
            .enumerate()
            .map(|(h, &t)| {
                let preds: Vec<f64> = curves.iter().map(|c| c[h]).collect();
                let cell = |v: MetricValue| -> MetricCell {
                    if present {
                        v.into()
                    } else {
                        MetricCell::unavailable(Unavailable::RiskAbsent)
                    }
                };
                HorizonMetrics {
                    horizon: t,
                    c_index: cell(c_index_td(&cohort, &preds, r, t)),
                    brier: cell(brier_td(&cohort, &preds, r, t)),
                    auc: cell(auc_td(&cohort, &preds, r, t)),
                }
            })
            .collect();
        let grid_curves: Vec<Vec<f64>> = curves.iter().map(|c| c[horizons.len()..].to_vec()).collect();
        risks.push(RiskMetrics {
            risk: r,
            horizons: horizon_metrics,
            cumulative: cumulative_metrics(&cohort, &grid, &grid_curves, r),
        });
    }
    Ok(MetricReport {
        quantile_levels: QUANTILE_LEVELS.to_vec(),
        horizons: horizons.to_vec(),
        risks,
        c_index_weighting: "omega(t_i)^2".into(),
    })
}

/// Mean and sample standard deviation over the folds where a value exists.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub available_folds: usize,
}

impl Summary {
    pub fn of(values: &[Option<f64>]) -> Self {
        let v: Vec<f64> = values.iter().flatten().copied().collect();
        let n = v.len();
        if n == 0 {
            return Summary {
                mean: None,
                sd: None,
                available_folds: 0,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            Some((v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt())
        } else {
            None
        };
        Summary {
            mean: Some(mean),
            sd,
            available_folds: n,
        }
    }

    /// `mean (sd)` with three decimals, or `n/a`.
    pub fn cell(&self) -> String {
        match (self.mean, self.sd) {
            (Some(m), Some(s)) => format!("{m:.3} ({s:.3})"),
            (Some(m), None) => format!("{m:.3}"),
            _ => "n/a".into(),
        }
    }
}

/// Fold-aggregated metrics keyed by `(risk, metric name, horizon index)`;
/// cumulative metrics use the horizon label `integrated`/`overall`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub horizons: Vec<f64>,
    pub quantile_levels: Vec<f64>,
    pub folds: usize,
    pub cells: BTreeMap<String, Summary>,
}

fn key(risk: usize, metric: &str, column: &str) -> String {
    format!("risk{risk}/{metric}/{column}")
}

pub fn aggregate(reports: &[MetricReport]) -> AggregateReport {
    let mut columns: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for report in reports {
        for rm in &report.risks {
            for (h, hm) in rm.horizons.iter().enumerate() {
                let q = quantile_label(report.quantile_levels.get(h).copied(), h);
                columns.entry(key(rm.risk, "c_index", &q)).or_default().push(hm.c_index.value);
                columns.entry(key(rm.risk, "brier", &q)).or_default().push(hm.brier.value);
                columns.entry(key(rm.risk, "auc", &q)).or_default().push(hm.auc.value);
            }
            columns
                .entry(key(rm.risk, "brier", "integrated"))
                .or_default()
                .push(rm.cumulative.integrated_brier);
            columns
                .entry(key(rm.risk, "c_index", "overall"))
                .or_default()
                .push(rm.cumulative.overall_c_index);
        }
    }
    let first = reports.first();
    AggregateReport {
        horizons: first.map(|r| r.horizons.clone()).unwrap_or_default(),
        quantile_levels: first.map(|r| r.quantile_levels.clone()).unwrap_or_default(),
        folds: reports.len(),
        cells: columns.into_iter().map(|(k, v)| (k, Summary::of(&v))).collect(),
    }
}

fn quantile_label(level: Option<f64>, index: usize) -> String {
    match level {
        Some(q) => format!("q{:02}", (q * 100.0).round() as u32),
        None => format!("h{index}"),
    }
}

impl AggregateReport {
    pub fn get(&self, risk: usize, metric: &str, column: &str) -> Option<&Summary> {
        self.cells.get(&key(risk, metric, column))
    }

    /// Aligned text table with one row per risk and metric, `mean (sd)` cells.
    pub fn render_table(&self) -> String {
        let labels: Vec<String> = (0..self.horizons.len())
            .map(|h| quantile_label(self.quantile_levels.get(h).copied(), h))
            .collect();
        let risks: Vec<usize> = {
            let mut r: Vec<usize> = self
                .cells
                .keys()
                .filter_map(|k| k.strip_prefix("risk")?.split('/').next()?.parse().ok())
                .collect();
            r.dedup();
            r
        };
        let mut out = String::new();
        let _ = write!(out, "{:<6}{:<10}", "Risk", "Metric");
        for (l, t) in labels.iter().zip(&self.horizons) {
            let _ = write!(out, "{:>18}", format!("{l} (t={t:.3})"));
        }
        let _ = writeln!(out, "{:>18}", "cumulative");
        for r in risks {
            for (metric, name, cumulative) in [
                ("c_index", "C-index", "overall"),
                ("brier", "Brier", "integrated"),
                ("auc", "AUC", ""),
            ] {
                let _ = write!(out, "{:<6}{:<10}", r, name);
                for l in &labels {
                    let cell = self.get(r, metric, l).map(Summary::cell).unwrap_or_else(|| "n/a".into());
                    let _ = write!(out, "{cell:>18}");
                }
                let cum = if cumulative.is_empty() {
                    String::new()
                } else {
                    self.get(r, metric, cumulative)
                        .map(Summary::cell)
                        .unwrap_or_else(|| "n/a".into())
                };
                let _ = writeln!(out, "{cum:>18}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cohort(times: &[f64], events: &[usize]) -> Cohort {
        Cohort::new(times.to_vec(), events.to_vec()).unwrap()
    }

    #[test]
    fn km_hand_example() {
        let km = KaplanMeier::fit(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
        assert_relative_eq!(km.survival_at(1.0), 2.0 / 3.0);
        assert_relative_eq!(km.survival_at(2.0), 2.0 / 3.0);
        assert_eq!(km.survival_at(3.0), 0.0);
        assert_eq!(km.survival_before(1.0), 1.0);
        assert_relative_eq!(km.survival_before(3.0), 2.0 / 3.0);
    }

    #[test]
    fn km_edge_cases() {
        let km = KaplanMeier::fit(&[1.0, 2.0], &[false, false]).unwrap();
        assert_eq!(km.survival_at(10.0), 1.0);
        let km = KaplanMeier::fit(&[4.0, 1.0, 3.0, 2.0], &[true; 4]).unwrap();
        for (k, t) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
            assert_relative_eq!(km.survival_at(*t), (3 - k) as f64 / 4.0);
        }
        assert!(KaplanMeier::fit(&[], &[]).is_err());
    }

    #[test]
    fn perfect_and_constant_c_index() {
        let c = cohort(&[1.0, 2.0, 3.0, 4.0], &[1, 1, 1, 1]);
        let perfect = [0.9, 0.7, 0.5, 0.1];
        assert_eq!(c_index_td(&c, &perfect, 1, 4.0), Ok(1.0));
        assert_eq!(c_index_td(&c, &[0.3; 4], 1, 4.0), Ok(0.5));
        let all_censored = cohort(&[1.0, 2.0], &[0, 0]);
        assert_eq!(c_index_td(&all_censored, &[0.1, 0.2], 1, 3.0), Err(Unavailable::NoComparablePairs));
    }

    #[test]
    fn brier_examples() {
        let c = cohort(&[1.0, 2.0, 3.0, 4.0], &[1, 1, 0, 0]);
        // no censoring before the horizon, so every weight is 1
        assert_eq!(brier_td(&c, &[1.0, 1.0, 0.0, 0.0], 1, 2.5), Ok(0.0));
        assert_eq!(brier_td(&c, &[0.0; 4], 1, 2.5), Ok(0.5));
    }

    #[test]
    fn brier_hand_instance_with_censoring() {
        // censoring KM: steps at 2 (5/6 at risk 5 of... ) computed by hand below
        let times = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let events = [1, 0, 2, 1, 0, 1];
        let c = cohort(&times, &events);
        let preds = [0.6, 0.2, 0.3, 0.4, 0.1, 0.5];
        let h = 4.5;
        // G jumps at 2: 1 - 1/5 = 0.8; at 5: 0.8·(1 - 1/2) = 0.4
        let g_before = |t: f64| if t <= 2.0 { 1.0 } else { 0.8 };
        let expected = (1.0 / g_before(1.0) * 0.4f64.powi(2)
            + 1.0 / g_before(3.0) * 0.3f64.powi(2)
            + 1.0 / g_before(4.0) * 0.6f64.powi(2)
            + 1.0 / g_before(h) * (0.1f64.powi(2) + 0.5f64.powi(2)))
            / 6.0;
        assert_relative_eq!(brier_td(&c, &preds, 1, h).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn auc_examples() {
        let c = cohort(&[1.0, 2.0, 3.0, 4.0], &[1, 1, 0, 1]);
        assert_eq!(auc_td(&c, &[0.9, 0.8, 0.1, 0.2], 1, 2.5), Ok(1.0));
        assert_eq!(auc_td(&c, &[0.4; 4], 1, 2.5), Ok(0.5));
        assert_eq!(auc_td(&c, &[0.4; 4], 1, 10.0), Err(Unavailable::NoControls));
        assert_eq!(auc_td(&c, &[0.4; 4], 2, 2.0), Err(Unavailable::NoCases));
    }

    #[test]
    fn heavy_clipping_is_unavailable() {
        // forty early censorings push G below the floor before the only event
        let mut times: Vec<f64> = (1..=40).map(f64::from).collect();
        let mut events = vec![0; 40];
        times.extend([41.0, 42.0]);
        events.extend([1, 0]);
        let c = cohort(&times, &events);
        assert!(c.censoring().survival_before(41.0) < WEIGHT_FLOOR);
        let preds = vec![0.1; 42];
        assert_eq!(brier_td(&c, &preds, 1, 41.5), Err(Unavailable::ExcessiveClipping));
        assert_eq!(c_index_td(&c, &preds, 1, 41.5), Err(Unavailable::ExcessiveClipping));
    }

    #[test]
    fn quantiles() {
        let times: Vec<f64> = (1..=100).map(f64::from).collect();
        let events = vec![1; 100];
        assert_eq!(event_quantiles(&times, &events, &QUANTILE_LEVELS).unwrap(), vec![25.0, 50.0, 75.0]);
        assert_eq!(event_quantiles(&[7.0, 9.0], &[1, 0], &QUANTILE_LEVELS).unwrap(), vec![7.0; 3]);
        assert!(event_quantiles(&[1.0], &[0], &QUANTILE_LEVELS).is_err());
    }

    #[test]
    fn integrated_brier_of_constant_curve() {
        let c = cohort(&[1.0, 2.0, 3.0, 4.0], &[1, 2, 1, 2]);
        let grid = time_grid(4.0);
        let zero = vec![vec![0.0; grid.len()]; 4];
        let m = cumulative_metrics(&c, &grid, &zero, 1);
        // with F ≡ 0 only the two risk-1 events score 1 once they occur
        assert!(m.integrated_brier.unwrap() > 0.0);

        let none = cohort(&[1.0, 2.0, 3.0], &[2, 2, 2]);
        let m = cumulative_metrics(&none, &time_grid(3.0), &vec![vec![0.0; GRID_POINTS]; 3], 1);
        assert_eq!(m.integrated_brier, Some(0.0));
    }

    #[test]
    fn interpolation() {
        let grid = [1.0, 2.0];
        let curve = [0.2, 0.6];
        assert_eq!(interpolate(&grid, &curve, 0.0), 0.0);
        assert_relative_eq!(interpolate(&grid, &curve, 0.5), 0.1);
        assert_relative_eq!(interpolate(&grid, &curve, 1.5), 0.4);
        assert_eq!(interpolate(&grid, &curve, 9.0), 0.6);
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[Some(0.8); 5]);
        assert_eq!(s.mean, Some(0.8));
        assert_eq!(s.sd, Some(0.0));
        let s = Summary::of(&[Some(1.0), None, Some(3.0)]);
        assert_eq!(s.mean, Some(2.0));
        assert_relative_eq!(s.sd.unwrap(), 2f64.sqrt());
        assert_eq!(s.available_folds, 2);
    }
}
