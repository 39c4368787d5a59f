//! Risk-bin reclassification between two models and subgroup Brier
//! differences.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{NfgError, Result};
use crate::metrics::{brier_td, Cohort, MetricCell, Summary};
use crate::model::NfgModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskBin {
    Low,
    Intermediate,
    High,
}

impl RiskBin {
    pub const ALL: [RiskBin; 3] = [RiskBin::Low, RiskBin::Intermediate, RiskBin::High];

    pub fn label(&self) -> &'static str {
        match self {
            RiskBin::Low => "low",
            RiskBin::Intermediate => "intermediate",
            RiskBin::High => "high",
        }
    }

    fn index(&self) -> usize {
        *self as usize
    }
}

/// Left-closed bins `[0, lower)`, `[lower, upper)`, `[upper, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskBins {
    pub lower: f64,
    pub upper: f64,
}

impl Default for RiskBins {
    fn default() -> Self {
        Self {
            lower: 0.10,
            upper: 0.20,
        }
    }
}

impl RiskBins {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(0.0 < lower && lower < upper && upper < 1.0) {
            return Err(NfgError::Usage(format!(
                "risk thresholds must satisfy 0 < lower < upper < 1, got {lower} and {upper}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn bin(&self, risk: f64) -> RiskBin {
        if risk < self.lower {
            RiskBin::Low
        } else if risk < self.upper {
            RiskBin::Intermediate
        } else {
            RiskBin::High
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "low [0, {l}), intermediate [{l}, {u}), high [{u}, 1]",
            l = self.lower,
            u = self.upper
        )
    }
}

/// Bin of the model's horizon risk for covariates `x`.
pub fn classify(model: &NfgModel, x: &[f64], horizon: f64, risk: usize, bins: &RiskBins) -> Result<RiskBin> {
    if !(horizon > 0.0) {
        return Err(NfgError::Usage(format!("horizon must be positive, got {horizon}")));
    }
    Ok(bins.bin(model.risk_curve(x, &[horizon], risk)?[0]))
}

/// Patients kept for a matrix, keyed on one covariate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortFilter {
    All,
    AtLeast { column: String, threshold: f64 },
    Below { column: String, threshold: f64 },
}

impl CohortFilter {
    pub fn describe(&self) -> String {
        match self {
            CohortFilter::All => "all patients".into(),
            CohortFilter::AtLeast { column, threshold } => format!("{column} >= {threshold}"),
            CohortFilter::Below { column, threshold } => format!("{column} < {threshold}"),
        }
    }

    pub fn select(&self, data: &SurvivalDataset, rows: &[usize]) -> Result<Vec<usize>> {
        let (column, threshold, at_least) = match self {
            CohortFilter::All => return Ok(rows.to_vec()),
            CohortFilter::AtLeast { column, threshold } => (column, *threshold, true),
            CohortFilter::Below { column, threshold } => (column, *threshold, false),
        };
        let j = data
            .column(column)
            .ok_or_else(|| NfgError::Data(format!("no covariate named `{column}`")))?;
        Ok(rows
            .iter()
            .copied()
            .filter(|&i| (data.row(i)[j] >= threshold) == at_least)
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    /// No event of the focal risk by the horizon; competing events included.
    EventFree,
    /// Focal-risk event at or before the horizon.
    Event,
}

/// Counts with rows indexed by model A's bin and columns by model B's.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskMatrix {
    pub counts: [[usize; 3]; 3],
    pub stratum: Stratum,
    pub filter: String,
    pub bins: String,
}

impl RiskMatrix {
    pub fn row_totals(&self) -> [usize; 3] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn column_totals(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for row in &self.counts {
            for (t, v) in c.iter_mut().zip(row) {
                *t += v;
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.row_totals().iter().sum()
    }

    pub fn render(&self, name_a: &str, name_b: &str) -> String {
        let title = match self.stratum {
            Stratum::EventFree => "Event-free by horizon",
            Stratum::Event => "Event by horizon",
        };
        let mut out = String::new();
        let _ = writeln!(out, "{title} ({}; rows {name_a}, columns {name_b})", self.filter);
        let _ = write!(out, "{:<14}", "");
        for b in RiskBin::ALL {
            let _ = write!(out, "{:>14}", b.label());
        }
        let _ = writeln!(out, "{:>10}", "Total");
        for a in RiskBin::ALL {
            let _ = write!(out, "{:<14}", a.label());
            for v in self.counts[a.index()] {
                let _ = write!(out, "{v:>14}");
            }
            let _ = writeln!(out, "{:>10}", self.row_totals()[a.index()]);
        }
        let _ = write!(out, "{:<14}", "Total");
        for v in self.column_totals() {
            let _ = write!(out, "{v:>14}");
        }
        let _ = writeln!(out, "{:>10}", self.total());
        out
    }
}

/// Rows that take part in a horizon comparison: everyone except patients
/// censored before the horizon.
pub fn evaluable_rows(data: &SurvivalDataset, rows: &[usize], horizon: f64) -> Vec<usize> {
    rows.iter()
        .copied()
        .filter(|&i| !(data.events[i] == 0 && data.times[i] < horizon))
        .collect()
}

/// Event-free and event reclassification matrices between two models.
#[allow(clippy::too_many_arguments)]
pub fn reclassification_matrix(
    model_a: &NfgModel,
    model_b: &NfgModel,
    data: &SurvivalDataset,
    rows: &[usize],
    horizon: f64,
    risk: usize,
    bins: &RiskBins,
    filter: &CohortFilter,
) -> Result<(RiskMatrix, RiskMatrix)> {
    if model_a.n_features != model_b.n_features {
        return Err(NfgError::Schema {
            expected: model_a.n_features,
            got: model_b.n_features,
        });
    }
    let kept = evaluable_rows(data, &filter.select(data, rows)?, horizon);
    if kept.is_empty() {
        return Err(NfgError::Usage(format!(
            "no patients left after filtering ({}) and excluding censoring before the horizon",
            filter.describe()
        )));
    }
    let blank = |stratum| RiskMatrix {
        counts: [[0; 3]; 3],
        stratum,
        filter: filter.describe(),
        bins: bins.describe(),
    };
    let mut free = blank(Stratum::EventFree);
    let mut event = blank(Stratum::Event);
    for i in kept {
        let a = classify(model_a, data.row(i), horizon, risk, bins)?;
        let b = classify(model_b, data.row(i), horizon, risk, bins)?;
        let m = if data.events[i] == risk && data.times[i] <= horizon {
            &mut event
        } else {
            &mut free
        };
        m.counts[a.index()][b.index()] += 1;
    }
    Ok((free, event))
}

/// Groups by bin edges on one covariate: `[e_0, e_1), [e_1, e_2), …`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grouping {
    pub column: String,
    pub edges: Vec<f64>,
}

impl Grouping {
    pub fn labels(&self) -> Vec<String> {
        self.edges
            .windows(2)
            .map(|w| format!("{} in [{}, {})", self.column, w[0], w[1]))
            .collect()
    }

    fn members(&self, data: &SurvivalDataset, rows: &[usize]) -> Result<Vec<Vec<usize>>> {
        if self.edges.len() < 2 || self.edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(NfgError::Usage("group edges must be increasing with at least two values".into()));
        }
        let j = data
            .column(&self.column)
            .ok_or_else(|| NfgError::Data(format!("no covariate named `{}`", self.column)))?;
        Ok(self
            .edges
            .windows(2)
            .map(|w| {
                rows.iter()
                    .copied()
                    .filter(|&i| (w[0]..w[1]).contains(&data.row(i)[j]))
                    .collect()
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupDiff {
    pub group: String,
    pub horizon: f64,
    /// `Brier(A) − Brier(B)` per fold, `None` when unavailable.
    pub per_fold: Vec<MetricCell>,
    pub summary: Summary,
}

/// One fold's pair of models and its held-out rows.
pub struct FoldPair<'a> {
    pub model_a: &'a NfgModel,
    pub model_b: &'a NfgModel,
    pub rows: Vec<usize>,
}

/// Brier differences per group and horizon, aggregated over folds. The
/// censoring estimator is fitted within each group.
pub fn subgroup_brier_diff(
    folds: &[FoldPair<'_>],
    data: &SurvivalDataset,
    grouping: &Grouping,
    horizons: &[f64],
    risk: usize,
) -> Result<Vec<GroupDiff>> {
    let labels = grouping.labels();
    let mut out: Vec<GroupDiff> = labels
        .iter()
        .flat_map(|g| {
            horizons.iter().map(move |&h| GroupDiff {
                group: g.clone(),
                horizon: h,
                per_fold: Vec::new(),
                summary: Summary::of(&[]),
            })
        })
        .collect();
    for fold in folds {
        let groups = grouping.members(data, &fold.rows)?;
        for (g, members) in groups.iter().enumerate() {
            let cohort = if members.is_empty() {
                None
            } else {
                Some(Cohort::from_rows(data, members)?)
            };
            for (h, &t) in horizons.iter().enumerate() {
                let cell = match &cohort {
                    None => MetricCell::unavailable(crate::metrics::Unavailable::EmptyCohort),
                    Some(c) => {
                        let pa = predictions(fold.model_a, data, members, t, risk)?;
                        let pb = predictions(fold.model_b, data, members, t, risk)?;
                        match (brier_td(c, &pa, risk, t), brier_td(c, &pb, risk, t)) {
                            (Ok(a), Ok(b)) => Ok(a - b).into(),
                            (Err(e), _) | (_, Err(e)) => MetricCell::unavailable(e),
                        }
                    }
                };
                out[g * horizons.len() + h].per_fold.push(cell);
            }
        }
    }
    for d in &mut out {
        let values: Vec<Option<f64>> = d.per_fold.iter().map(|c| c.value).collect();
        d.summary = Summary::of(&values);
    }
    Ok(out)
}

fn predictions(model: &NfgModel, data: &SurvivalDataset, rows: &[usize], t: f64, risk: usize) -> Result<Vec<f64>> {
    rows.iter()
        .map(|&i| Ok(model.risk_curve(data.row(i), &[t], risk)?[0]))
        .collect()
}

pub fn render_group_diffs(diffs: &[GroupDiff]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<28}{:>12}{:>20}", "Group", "Horizon", "Brier A - B");
    for d in diffs {
        let _ = writeln!(out, "{:<28}{:>12.4}{:>20}", d.group, d.horizon, d.summary.cell());
    }
    out
}
