//! Independent oracles used to check the engine: Gauss-Legendre quadrature,
//! finite differences, brute-force metric transcriptions and the
//! exact-versus-quadrature likelihood cost benchmark.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Backend, Channel, Gradient, Tape};
use crate::error::{NfgError, Result};
use crate::model::{NfgModel, NoDropout, Variant};
use crate::objectives::{competing_nll, SurvivalBatch, LOG_FLOOR};

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[−1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Roots of `P_n` by Newton iteration from the Chebyshev guesses.
    pub fn gauss_legendre(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(NfgError::Usage("quadrature degree must be at least 1".into()));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn degree(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights mapped to `[0, t]`.
    pub fn on_interval(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * t;
        (
            self.nodes.iter().map(|x| half * (x + 1.0)).collect(),
            self.weights.iter().map(|w| half * w).collect(),
        )
    }

    /// `∫₀ᵗ f` by this rule.
    pub fn integrate(&self, t: f64, f: impl Fn(f64) -> f64) -> f64 {
        let (nodes, weights) = self.on_interval(t);
        nodes.iter().zip(&weights).map(|(u, w)| w * f(*u)).sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `F_r(t | x)` for every risk reconstructed as `∫₀ᵗ ∂F_r/∂u du`.
pub fn quadrature_cif(model: &NfgModel, x: &[f64], t: f64, n: usize) -> Result<Vec<f64>> {
    let rule = QuadratureRule::gauss_legendre(n)?;
    if t < 0.0 {
        return Err(NfgError::NegativeTime(t));
    }
    let (nodes, weights) = rule.on_interval(t);
    let curve = model.cif_curve(x, &nodes)?;
    let mut out = vec![0.0; model.risks];
    for (eval, w) in curve.iter().zip(&weights) {
        let density = eval.density.as_ref().expect("curves carry densities");
        for (o, d) in out.iter_mut().zip(density) {
            *o += w * d;
        }
    }
    Ok(out)
}

/// Largest `|quadrature − F_r(t)|` over risks for each degree.
pub fn quadrature_sweep(model: &NfgModel, x: &[f64], t: f64, degrees: &[usize]) -> Result<Vec<(usize, f64)>> {
    let exact = model.cif(x, t)?.cif;
    degrees
        .iter()
        .map(|&n| {
            let q = quadrature_cif(model, x, t, n)?;
            let err = q.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok((n, err))
        })
        .collect()
}

pub const FD_STEP: f64 = 1e-5;
/// Lower bound on the denominator of the relative error, so coordinates whose
/// true derivative is essentially zero are judged on an absolute scale.
pub const FD_SCALE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    /// Largest `|fd − g| / max(|fd|, |g|, FD_SCALE_FLOOR)` over coordinates.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_coordinate: Option<usize>,
    /// Coordinates with a derivative above the floor.
    pub significant: usize,
    pub coordinates: usize,
}

impl FdReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares `gradient` with central differences of `f` at `params`.
pub fn finite_diff_check(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], gradient: &[f64]) -> FdReport {
    let mut p = params.to_vec();
    let mut report = FdReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_coordinate: None,
        significant: 0,
        coordinates: p.len(),
    };
    for k in 0..p.len() {
        let orig = p[k];
        // a step relative to the coordinate keeps the rounding error bounded
        let h = FD_STEP * orig.abs().max(1.0);
        p[k] = orig + h;
        let up = f(&p);
        p[k] = orig - h;
        let down = f(&p);
        p[k] = orig;
        let fd = (up - down) / (2.0 * h);
        let abs = (fd - gradient[k]).abs();
        let scale = fd.abs().max(gradient[k].abs());
        if scale > FD_SCALE_FLOOR {
            report.significant += 1;
        }
        report.max_abs_error = report.max_abs_error.max(abs);
        let rel = abs / scale.max(FD_SCALE_FLOOR);
        if rel > report.max_rel_error || (rel.is_nan() && !report.max_rel_error.is_nan()) {
            report.max_rel_error = rel;
            report.worst_coordinate = Some(k);
        }
    }
    report
}

/// Finite-difference check of the competing likelihood over every parameter.
pub fn check_competing_gradient(model: &NfgModel, batch: &SurvivalBatch<'_>) -> Result<FdReport> {
    let mut tape = Tape::new();
    let mut grad = Gradient::default();
    let (_, g) = crate::objectives::loss_and_gradient::<NoDropout>(
        model,
        crate::objectives::Objective::Competing,
        batch,
        &mut tape,
        &mut grad,
        None,
    )?;
    let mut probe = model.clone();
    let f = |p: &[f64]| {
        probe.set_params(p).expect("same shape");
        crate::objectives::loss_value(&probe, crate::objectives::Objective::Competing, batch)
            .map(|l| l.total)
            .unwrap_or(f64::NAN)
    };
    Ok(finite_diff_check(f, &model.params(), &g))
}

/// Metric values computed by direct transcription of the definitions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BruteForce {
    pub c_index: std::result::Result<f64, &'static str>,
    pub brier: std::result::Result<f64, &'static str>,
    pub auc: std::result::Result<f64, &'static str>,
}

/// Exhaustive-loop versions of the concordance, Brier and AUC definitions for
/// cohorts of at most 12 patients. Shares no code with the metrics module.
pub fn brute_force_metrics(predictions: &[f64], times: &[f64], events: &[usize], risk: usize, horizon: f64) -> BruteForce {
    assert!(times.len() <= 12, "brute force is for tiny cohorts");
    let n = times.len();

    // censoring survival just before u, by the product-limit definition
    let g_before = |u: f64| -> f64 {
        let mut distinct: Vec<f64> = (0..n).filter(|&i| events[i] == 0 && times[i] < u).map(|i| times[i]).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let mut g = 1.0;
        for s in distinct {
            let at_risk = (0..n).filter(|&i| times[i] >= s).count() as f64;
            let censored = (0..n).filter(|&i| times[i] == s && events[i] == 0).count() as f64;
            g *= 1.0 - censored / at_risk;
        }
        g
    };
    struct Mass {
        total: f64,
        clipped: f64,
    }
    let weight = |u: f64, m: &mut Mass| -> std::result::Result<f64, &'static str> {
        let g = g_before(u);
        if g <= 0.0 {
            return Err("censoring survival is zero");
        }
        let w = 1.0 / g.max(0.05);
        m.total += w;
        if g < 0.05 {
            m.clipped += w;
        }
        Ok(w)
    };
    let clip_ok = |m: &Mass| m.total == 0.0 || m.clipped <= 0.05 * m.total;
    let score = |a: f64, b: f64| {
        if a > b {
            1.0
        } else if a == b {
            0.5
        } else {
            0.0
        }
    };

    let c_index = (|| {
        let mut m = Mass { total: 0.0, clipped: 0.0 };
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            if !(events[i] == risk && times[i] <= horizon) {
                continue;
            }
            let partners: Vec<usize> = (0..n).filter(|&j| times[i] < times[j]).collect();
            if partners.is_empty() {
                continue;
            }
            let w = weight(times[i], &mut m)?;
            for j in partners {
                num += w * w * score(predictions[i], predictions[j]);
                den += w * w;
            }
        }
        if den == 0.0 {
            return Err("no comparable pairs");
        }
        if !clip_ok(&m) {
            return Err("clipping");
        }
        Ok(num / den)
    })();

    let brier = (|| {
        let mut m = Mass { total: 0.0, clipped: 0.0 };
        let mut total = 0.0;
        for i in 0..n {
            let f = predictions[i];
            if times[i] <= horizon && events[i] == risk {
                total += weight(times[i], &mut m)? * (1.0 - f).powi(2);
            } else if times[i] <= horizon && events[i] != 0 {
                total += weight(times[i], &mut m)? * f.powi(2);
            } else if times[i] > horizon {
                total += weight(horizon, &mut m)? * f.powi(2);
            }
        }
        if !clip_ok(&m) {
            return Err("clipping");
        }
        Ok(total / n as f64)
    })();

    let auc = (|| {
        let mut m = Mass { total: 0.0, clipped: 0.0 };
        let mut cases = Vec::new();
        for i in 0..n {
            if events[i] == risk && times[i] <= horizon {
                cases.push((i, weight(times[i], &mut m)?));
            }
        }
        let controls: Vec<usize> = (0..n).filter(|&j| times[j] > horizon).collect();
        if cases.is_empty() {
            return Err("no cases");
        }
        if controls.is_empty() {
            return Err("no controls");
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (i, w) in cases {
            for &j in &controls {
                num += w * score(predictions[i], predictions[j]);
                den += w;
            }
        }
        if !clip_ok(&m) {
            return Err("clipping");
        }
        Ok(num / den)
    })();

    BruteForce { c_index, brier, auc }
}

/// Timing of one likelihood method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    /// `exact` or `quadrature-n`.
    pub method: String,
    pub degree: Option<usize>,
    /// Median seconds per forward and backward likelihood evaluation.
    pub seconds_per_eval: f64,
    pub evaluations: usize,
    pub samples: usize,
    /// Iterations to convergence, when a training comparison was run.
    pub iterations: Option<usize>,
    /// Time relative to the exact method.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub batch_size: usize,
    pub censored: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn ratio(&self, degree: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.degree == Some(degree)).map(|r| r.ratio)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16}{:>12}{:>16}{:>14}{:>10}",
            "Method", "Iterations", "Time/eval (ms)", "Evaluations", "Ratio"
        );
        for r in &self.rows {
            let it = r.iterations.map(|i| i.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<16}{:>12}{:>16.4}{:>14}{:>10.2}",
                r.method,
                it,
                r.seconds_per_eval * 1e3,
                r.evaluations,
                r.ratio
            );
        }
        out
    }
}

/// Competing likelihood in which each censored survival `1 − Σ_r F_r(t)` is
/// rebuilt from `n` density evaluations, the cost profile of integration
/// based models. Events use the exact density as in the closed form.
pub fn quadrature_nll<B: Backend>(
    b: &B,
    model: &NfgModel,
    bound: &crate::model::BoundModel<B::S>,
    batch: &SurvivalBatch<'_>,
    rule: &QuadratureRule,
) -> Result<B::S> {
    if model.variant == Variant::CauseSpecific {
        return Err(NfgError::Usage("quadrature likelihood needs a competing variant".into()));
    }
    let inv_scale = 1.0 / model.t_scale;
    let floored = |b: &B, v: B::S| -> Result<B::S> {
        if b.value(v) < LOG_FLOOR {
            Ok(b.constant(LOG_FLOOR.ln()))
        } else {
            b.ln(v)
        }
    };
    let mut terms = Vec::with_capacity(batch.len());
    for &i in batch.rows.iter() {
        let data = batch.data;
        let emb = model.embed::<_, NoDropout>(b, bound, data.row(i), None)?;
        let balance = model.balance(b, bound, &emb)?;
        let t = data.times[i];
        match data.events[i] {
            0 => {
                let (nodes, weights) = rule.on_interval(t);
                let mut mass = Vec::with_capacity(nodes.len() * model.risks);
                for (u, w) in nodes.iter().zip(&weights) {
                    let f = model.head(b, bound, &emb, &balance, *u)?;
                    for cif in &f.cif {
                        mass.push(b.scale(b.tangent_of(*cif), w * inv_scale));
                    }
                }
                let one = b.constant(1.0);
                let s = b.sub(one, b.sum(&mass));
                terms.push(b.neg(floored(b, s)?));
            }
            r => {
                let f = model.head(b, bound, &emb, &balance, t)?;
                let density = b.scale(b.tangent_of(f.cif[r - 1]), inv_scale);
                terms.push(b.neg(floored(b, density)?));
            }
        }
    }
    Ok(b.sum(&terms))
}

/// Minimum number of timing samples per method.
pub const MIN_SAMPLES: usize = 50;

/// Median seconds per call of `f`, with repetitions doubled until one sample
/// lasts at least a millisecond.
fn time_median(mut f: impl FnMut() -> Result<()>, samples: usize) -> Result<(f64, usize)> {
    let mut reps = 1usize;
    loop {
        let start = Instant::now();
        for _ in 0..reps {
            f()?;
        }
        if start.elapsed().as_secs_f64() >= 1e-3 || reps >= 1 << 20 {
            break;
        }
        reps *= 2;
    }
    let mut times = Vec::with_capacity(samples);
    for _ in 0..samples.max(MIN_SAMPLES) {
        let start = Instant::now();
        for _ in 0..reps {
            f()?;
        }
        times.push(start.elapsed().as_secs_f64() / reps as f64);
    }
    times.sort_by(f64::total_cmp);
    Ok((times[times.len() / 2], reps * times.len()))
}

/// Times forward plus backward passes of the exact likelihood and of the
/// quadrature likelihood at each degree, on one thread.
pub fn likelihood_cost_benchmark(model: &NfgModel, batch: &SurvivalBatch<'_>, degrees: &[usize], samples: usize) -> Result<BenchReport> {
    if batch.is_empty() {
        return Err(NfgError::Usage("benchmark batch is empty".into()));
    }
    let mut tape = Tape::new();
    let mut grad = Gradient::default();
    let (exact, exact_evals) = time_median(
        || {
            tape.reset();
            let t: &Tape = &tape;
            let (bound, _) = model.bind_tape(t);
            let loss = competing_nll::<_, NoDropout>(&t, model, &bound, batch, None)?;
            t.backward_into(loss.total, Channel::Value, &mut grad)
        },
        samples,
    )?;
    let mut rows = vec![BenchRow {
        method: "exact".into(),
        degree: None,
        seconds_per_eval: exact,
        evaluations: exact_evals,
        samples: samples.max(MIN_SAMPLES),
        iterations: None,
        ratio: 1.0,
    }];
    for &n in degrees {
        let rule = QuadratureRule::gauss_legendre(n)?;
        let (secs, evals) = time_median(
            || {
                tape.reset();
                let t: &Tape = &tape;
                let (bound, _) = model.bind_tape(t);
                let loss = quadrature_nll(&t, model, &bound, batch, &rule)?;
                t.backward_into(loss, Channel::Value, &mut grad)
            },
            samples,
        )?;
        rows.push(BenchRow {
            method: format!("quadrature-{n}"),
            degree: Some(n),
            seconds_per_eval: secs,
            evaluations: evals,
            samples: samples.max(MIN_SAMPLES),
            iterations: None,
            ratio: secs / exact,
        });
    }
    Ok(BenchReport {
        batch_size: batch.len(),
        censored: batch.rows.iter().filter(|&&i| batch.data.events[i] == 0).count(),
        rows,
    })
}
