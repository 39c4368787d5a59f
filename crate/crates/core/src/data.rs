//! Survival datasets: CSV ingestion, standardization, fold assignment and a
//! synthetic competing-risks generator with closed-form incidence.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{NfgError, Result};

/// Covariates plus `(time, event)` pairs. Event `0` is censoring; `1..=risks`
/// name the competing risks.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalDataset {
    /// Row-major `[n × n_features]`.
    pub covariates: Vec<f64>,
    pub times: Vec<f64>,
    pub events: Vec<usize>,
    pub feature_names: Vec<String>,
    pub risks: usize,
}

impl SurvivalDataset {
    pub fn new(
        covariates: Vec<f64>,
        times: Vec<f64>,
        events: Vec<usize>,
        feature_names: Vec<String>,
        risks: usize,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(NfgError::Data("dataset is empty".into()));
        }
        if events.len() != n || covariates.len() != n * feature_names.len() {
            return Err(NfgError::Data(format!(
                "inconsistent lengths: {n} times, {} events, {} covariate values for {} features",
                events.len(),
                covariates.len(),
                feature_names.len()
            )));
        }
        if let Some(i) = times.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(NfgError::Data(format!("row {i}: time {} is not a finite nonnegative value", times[i])));
        }
        if let Some(i) = events.iter().position(|&e| e > risks) {
            return Err(NfgError::Data(format!("row {i}: event {} exceeds {risks} risks", events[i])));
        }
        Ok(Self {
            covariates,
            times,
            events,
            feature_names,
            risks,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.covariates[i * p..(i + 1) * p]
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut covariates = Vec::with_capacity(rows.len() * self.n_features());
        for &i in rows {
            covariates.extend_from_slice(self.row(i));
        }
        Self {
            covariates,
            times: rows.iter().map(|&i| self.times[i]).collect(),
            events: rows.iter().map(|&i| self.events[i]).collect(),
            feature_names: self.feature_names.clone(),
            risks: self.risks,
        }
    }

    /// Count per label `0..=risks`.
    pub fn event_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.risks + 1];
        for &e in &self.events {
            counts[e] += 1;
        }
        counts
    }

    /// Largest time among uncensored rows, or the largest time overall.
    pub fn max_event_time(&self) -> f64 {
        let ev = self
            .times
            .iter()
            .zip(&self.events)
            .filter(|(_, &e)| e > 0)
            .map(|(t, _)| *t)
            .fold(0.0, f64::max);
        if ev > 0.0 {
            ev
        } else {
            self.times.iter().copied().fold(0.0, f64::max)
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    /// Writes the dataset with the given time and event column names.
    pub fn write_csv(&self, path: impl AsRef<Path>, time_col: &str, event_col: &str) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(time_col);
        header.push(event_col);
        w.write_record(&header).map_err(|e| csv_io(path, e))?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.times[i].to_string());
            rec.push(self.events[i].to_string());
            w.write_record(&rec).map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| NfgError::io(path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> NfgError {
    NfgError::Data(format!("{}: {e}", path.display()))
}

/// Column layout of a CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub time_col: String,
    pub event_col: String,
    /// Feature columns; `None` means every other column.
    pub features: Option<Vec<String>>,
    /// Overrides the number of risks inferred from the largest event label.
    pub risks: Option<usize>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time_col: "time".into(),
            event_col: "event".into(),
            features: None,
            risks: None,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<SurvivalDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_io(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| NfgError::Data(format!("{}: missing column `{name}`", path.display())))
    };
    let time_idx = find(&schema.time_col)?;
    let event_idx = find(&schema.event_col)?;
    let feature_names: Vec<String> = match &schema.features {
        Some(f) => f.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != time_idx && *i != event_idx)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let feature_idx = feature_names
        .iter()
        .map(|f| find(f))
        .collect::<Result<Vec<_>>>()?;

    let mut covariates = Vec::new();
    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut missing_rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        // header is line 1
        let line = r + 2;
        let record = record.map_err(|e| NfgError::Data(format!("{}: line {line}: {e}", path.display())))?;
        let cell = |idx: usize| record.get(idx).map(str::trim).unwrap_or("");
        let all: Vec<usize> = feature_idx.iter().copied().chain([time_idx, event_idx]).collect();
        if all.iter().any(|&i| {
            let c = cell(i);
            c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
        }) {
            missing_rows.push(line);
            continue;
        }
        let parse = |idx: usize| -> Result<f64> {
            cell(idx).parse::<f64>().map_err(|_| {
                NfgError::Data(format!(
                    "{}: line {line}, column `{}`: cannot parse `{}` as a number",
                    path.display(),
                    headers[idx],
                    cell(idx)
                ))
            })
        };
        for &i in &feature_idx {
            covariates.push(parse(i)?);
        }
        let t = parse(time_idx)?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(NfgError::Data(format!(
                "{}: line {line}: time {t} must be finite and nonnegative",
                path.display()
            )));
        }
        times.push(t);
        let e = parse(event_idx)?;
        if e < 0.0 || e.fract() != 0.0 {
            return Err(NfgError::Data(format!(
                "{}: line {line}: event label {e} is not a nonnegative integer",
                path.display()
            )));
        }
        events.push(e as usize);
    }
    if !missing_rows.is_empty() {
        return Err(NfgError::Data(format!(
            "{}: missing values on lines {:?}",
            path.display(),
            missing_rows
        )));
    }
    if times.is_empty() {
        return Err(NfgError::Data(format!("{}: no data rows", path.display())));
    }
    let observed = events.iter().copied().max().unwrap_or(0).max(1);
    let risks = match schema.risks {
        Some(r) if r < observed => {
            return Err(NfgError::Data(format!(
                "{}: event label {observed} exceeds declared {r} risks",
                path.display()
            )))
        }
        Some(r) => r,
        None => observed,
    };
    SurvivalDataset::new(covariates, times, events, feature_names, risks)
}

/// Per-feature z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Features whose standard deviation was zero and was replaced by one.
    pub constant_features: Vec<usize>,
}

impl Standardization {
    /// Fits on `rows` only, so held-out rows never leak into the statistics.
    pub fn fit(data: &SurvivalDataset, rows: &[usize]) -> Self {
        let p = data.n_features();
        let n = rows.len().max(1) as f64;
        let mut means = vec![0.0; p];
        for &i in rows {
            for (m, v) in means.iter_mut().zip(data.row(i)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for &i in rows {
            for ((s, v), m) in var.iter_mut().zip(data.row(i)).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let mut constant_features = Vec::new();
        let stds = var
            .into_iter()
            .enumerate()
            .map(|(j, s)| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    log::warn!("feature {j} is constant on the training rows; using unit scale");
                    constant_features.push(j);
                    1.0
                }
            })
            .collect();
        Self {
            means,
            stds,
            constant_features,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// A stable 64-bit mix of the row content, so fold membership follows the
/// patient rather than the row position.
fn row_key(data: &SurvivalDataset, i: usize, seed: u64) -> u64 {
    let mut h = splitmix(seed ^ 0x9e37_79b9_7f4a_7c15);
    for v in data.row(i).iter().chain(std::iter::once(&data.times[i])) {
        h = splitmix(h ^ v.to_bits());
    }
    splitmix(h ^ data.events[i] as u64)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Rows ordered by stratum (event label), then by a seeded content hash.
fn stratified_order(data: &SurvivalDataset, rows: &[usize], seed: u64) -> Vec<usize> {
    let mut keyed: Vec<(usize, u64, Vec<u64>, usize)> = rows
        .iter()
        .map(|&i| {
            let bits = data
                .row(i)
                .iter()
                .chain(std::iter::once(&data.times[i]))
                .map(|v| v.to_bits())
                .collect();
            (data.events[i], row_key(data, i, seed), bits, i)
        })
        .collect();
    keyed.sort_by(|a, b| (a.0, a.1, &a.2).cmp(&(b.0, b.1, &b.2)));
    keyed.into_iter().map(|k| k.3).collect()
}

/// Stratified fold label in `0..k` for every row.
pub fn split_folds(data: &SurvivalDataset, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > data.len() {
        return Err(NfgError::Usage(format!(
            "cannot split {} rows into {k} folds",
            data.len()
        )));
    }
    let rows: Vec<usize> = (0..data.len()).collect();
    let mut labels = vec![0; data.len()];
    for (pos, i) in stratified_order(data, &rows, seed).into_iter().enumerate() {
        labels[i] = pos % k;
    }
    Ok(labels)
}

/// Stratified holdout: returns `(train, holdout)` with about `fraction` of
/// `rows` in the holdout.
pub fn stratified_holdout(data: &SurvivalDataset, rows: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let ordered = stratified_order(data, rows, seed);
    let period = (1.0 / fraction).round().max(2.0) as usize;
    let mut train = Vec::new();
    let mut hold = Vec::new();
    for (pos, i) in ordered.into_iter().enumerate() {
        if pos % period == period - 1 {
            hold.push(i);
        } else {
            train.push(i);
        }
    }
    train.sort_unstable();
    hold.sort_unstable();
    (train, hold)
}

/// Exponential competing-risks generator.
///
/// Latent time for risk `r` is exponential with rate
/// `λ_r(x) = exp(s · γ_rᵀ (x ⊙ x) / √p)` where `s` is the nonlinearity scale;
/// the observed risk is the argmin, censoring is `Uniform(0, c*)` with `c*`
/// calibrated to a target censoring fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    pub gammas: Vec<Vec<f64>>,
    pub nonlinearity: f64,
    pub censoring_target: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let p = 12;
        let mut g1 = vec![0.0; p];
        let mut g2 = vec![0.0; p];
        g1[..6].iter_mut().for_each(|g| *g = 0.3);
        g2[6..].iter_mut().for_each(|g| *g = 0.3);
        Self {
            n: 30_000,
            p,
            gammas: vec![g1, g2],
            nonlinearity: 3.0,
            censoring_target: 0.5,
            seed: 2023,
        }
    }
}

impl SyntheticSpec {
    pub fn risks(&self) -> usize {
        self.gammas.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.censoring_target > 0.0 && self.censoring_target < 1.0) {
            return Err(NfgError::Usage(format!(
                "censoring target {} outside (0, 1)",
                self.censoring_target
            )));
        }
        if self.n == 0 || self.p == 0 || self.gammas.is_empty() {
            return Err(NfgError::Usage("synthetic spec needs n, p and at least one risk".into()));
        }
        if self.gammas.iter().any(|g| g.len() != self.p) {
            return Err(NfgError::Usage("every coefficient vector needs p entries".into()));
        }
        Ok(())
    }

    /// Event rate of every risk at covariates `x`.
    pub fn rates(&self, x: &[f64]) -> Vec<f64> {
        let norm = (self.p as f64).sqrt();
        self.gammas
            .iter()
            .map(|g| {
                let lin: f64 = g.iter().zip(x).map(|(g, v)| g * v * v).sum();
                (self.nonlinearity * lin / norm).exp()
            })
            .collect()
    }

    /// One draw of the latent event time of every risk at `x`.
    pub fn sample_latent<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        self.rates(x)
            .into_iter()
            .map(|rate| {
                let e: f64 = Exp1.sample(rng);
                e / rate
            })
            .collect()
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SurvivalDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, p) = (spec.n, spec.p);
    let mut covariates = Vec::with_capacity(n * p);
    let mut first_time = Vec::with_capacity(n);
    let mut first_risk = Vec::with_capacity(n);
    let mut unit = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let latent = spec.sample_latent(&x, &mut rng);
        let (r, t) = latent
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (r, &t)| if t < acc.1 { (r, t) } else { acc });
        covariates.extend(x);
        first_time.push(t);
        first_risk.push(r + 1);
        unit.push(rng.random::<f64>());
    }

    // censored iff c* · u < T; the censored fraction decreases in c*
    let censored_fraction = |c: f64| {
        first_time
            .iter()
            .zip(&unit)
            .filter(|(t, u)| c * **u < **t)
            .count() as f64
            / n as f64
    };
    let target = spec.censoring_target;
    let (mut lo, mut hi) = (
        0.0,
        first_time
            .iter()
            .zip(&unit)
            .map(|(t, u)| t / u.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
            * 1.01,
    );
    let tolerance = 0.01;
    let mut c_star = 0.5 * (lo + hi);
    let mut achieved = censored_fraction(c_star);
    let mut steps = 0;
    while (achieved - target).abs() > tolerance / 4.0 && steps < 50 {
        if achieved > target {
            lo = c_star;
        } else {
            hi = c_star;
        }
        c_star = 0.5 * (lo + hi);
        achieved = censored_fraction(c_star);
        steps += 1;
    }
    if (achieved - target).abs() > tolerance {
        return Err(NfgError::Calibration {
            steps,
            achieved,
            target,
        });
    }

    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let c = c_star * unit[i];
        if c < first_time[i] {
            times.push(c);
            events.push(0);
        } else {
            times.push(first_time[i]);
            events.push(first_risk[i]);
        }
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    SurvivalDataset::new(covariates, times, events, names, spec.risks())
}

/// Closed-form cumulative incidence of the generator:
/// `λ_r / Σλ · (1 − exp(−Σλ · t))`.
pub fn analytic_cif(spec: &SyntheticSpec, x: &[f64], t: f64, risk: usize) -> f64 {
    let rates = spec.rates(x);
    let total: f64 = rates.iter().sum();
    rates[risk - 1] / total * -(-total * t).exp_m1()
}

/// Exact negative log-likelihood of `data` under the generator.
pub fn analytic_nll(spec: &SyntheticSpec, data: &SurvivalDataset, rows: &[usize]) -> f64 {
    rows.iter()
        .map(|&i| {
            let rates = spec.rates(data.row(i));
            let total: f64 = rates.iter().sum();
            let t = data.times[i];
            match data.events[i] {
                0 => total * t,
                r => total * t - rates[r - 1].ln(),
            }
        })
        .sum()
}
