//! Negative log-likelihoods.
//!
//! All three objectives are generic over [`Backend`], so the same code yields
//! a plain value under [`DualBackend`] and a differentiable tape scalar under
//! `&Tape`. Losses are summed over the batch, never averaged.

use std::borrow::Cow;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Backend, DualBackend, Gradient, Channel, Tape};
use crate::data::SurvivalDataset;
use crate::error::{NfgError, Result};
use crate::model::{BoundModel, NfgModel, NoDropout, Variant};

/// Arguments below this are replaced by it inside `ln`, and the term stops
/// contributing gradient.
pub const LOG_FLOOR: f64 = 1e-10;

/// A view of some rows of a dataset.
#[derive(Clone, Debug)]
pub struct SurvivalBatch<'a> {
    pub data: &'a SurvivalDataset,
    pub rows: Cow<'a, [usize]>,
}

impl<'a> SurvivalBatch<'a> {
    pub fn new(data: &'a SurvivalDataset, rows: &'a [usize]) -> Self {
        Self {
            data,
            rows: Cow::Borrowed(rows),
        }
    }

    pub fn all(data: &'a SurvivalDataset) -> Self {
        Self {
            data,
            rows: Cow::Owned((0..data.len()).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown<S> {
    pub total: S,
    /// `−Σ log density` over observed events.
    pub event_term: S,
    /// `−Σ log survival` over censored patients.
    pub censor_term: S,
    pub count_events: usize,
    pub count_censored: usize,
    /// Terms whose `ln` argument fell below [`LOG_FLOOR`].
    pub floored_terms: usize,
}

impl<S: Copy> LossBreakdown<S> {
    pub fn values<B: Backend<S = S>>(&self, b: &B) -> LossBreakdown<f64> {
        LossBreakdown {
            total: b.value(self.total),
            event_term: b.value(self.event_term),
            censor_term: b.value(self.censor_term),
            count_events: self.count_events,
            count_censored: self.count_censored,
            floored_terms: self.floored_terms,
        }
    }
}

/// Which likelihood a model is trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Competing,
    SingleRisk,
    CauseSpecific,
}

impl Objective {
    /// The natural objective of a variant.
    pub fn for_model(model: &NfgModel) -> Self {
        match model.variant {
            Variant::CauseSpecific => Objective::CauseSpecific,
            _ => Objective::Competing,
        }
    }

    pub fn nll<B: Backend, R: Rng + ?Sized>(
        &self,
        b: &B,
        model: &NfgModel,
        bound: &BoundModel<B::S>,
        batch: &SurvivalBatch<'_>,
        rng: Option<&mut R>,
    ) -> Result<LossBreakdown<B::S>> {
        match self {
            Objective::Competing => competing_nll(b, model, bound, batch, rng),
            Objective::SingleRisk => single_risk_nll(b, model, bound, batch, rng),
            Objective::CauseSpecific => cause_specific_nll(b, model, bound, batch, rng),
        }
    }
}

struct Accumulator<S> {
    events: Vec<S>,
    censored: Vec<S>,
    count_events: usize,
    count_censored: usize,
    floored: usize,
}

impl<S: Copy> Accumulator<S> {
    fn new(capacity: usize) -> Self {
        Self {
            events: Vec::with_capacity(capacity),
            censored: Vec::with_capacity(capacity),
            count_events: 0,
            count_censored: 0,
            floored: 0,
        }
    }

    fn ln<B: Backend<S = S>>(&mut self, b: &B, x: S) -> Result<S> {
        if b.value(x) < LOG_FLOOR {
            self.floored += 1;
            Ok(b.constant(LOG_FLOOR.ln()))
        } else {
            b.ln(x)
        }
    }

    fn finish<B: Backend<S = S>>(self, b: &B) -> LossBreakdown<S> {
        let event_term = b.sum(&self.events);
        let censor_term = b.sum(&self.censored);
        LossBreakdown {
            total: b.add(event_term, censor_term),
            event_term,
            censor_term,
            count_events: self.count_events,
            count_censored: self.count_censored,
            floored_terms: self.floored,
        }
    }
}

fn check_batch(model: &NfgModel, batch: &SurvivalBatch<'_>) -> Result<()> {
    if batch.data.n_features() != model.n_features {
        return Err(NfgError::Schema {
            expected: model.n_features,
            got: batch.data.n_features(),
        });
    }
    if batch.data.risks > model.risks {
        return Err(NfgError::Usage(format!(
            "data has {} risks but the model has {}",
            batch.data.risks, model.risks
        )));
    }
    Ok(())
}

/// `−Σ_{d_i=r} log ∂F_r(t_i)/∂t − Σ_{d_i=0} log(1 − Σ_r F_r(t_i))`.
pub fn competing_nll<B: Backend, R: Rng + ?Sized>(
    b: &B,
    model: &NfgModel,
    bound: &BoundModel<B::S>,
    batch: &SurvivalBatch<'_>,
    mut rng: Option<&mut R>,
) -> Result<LossBreakdown<B::S>> {
    if model.variant == Variant::CauseSpecific {
        return Err(NfgError::Usage(
            "the competing likelihood needs the nfg or monofg variant".into(),
        ));
    }
    check_batch(model, batch)?;
    let inv_scale = 1.0 / model.t_scale;
    let mut acc = Accumulator::new(batch.len());
    for &i in batch.rows.iter() {
        let data = batch.data;
        let f = model.forward(b, bound, data.row(i), data.times[i], rng.as_deref_mut())?;
        match data.events[i] {
            0 => {
                let s = f.survival.expect("competing variants report survival");
                let term = acc.ln(b, s)?;
                acc.censored.push(b.neg(term));
                acc.count_censored += 1;
            }
            r => {
                let density = b.scale(b.tangent_of(f.cif[r - 1]), inv_scale);
                let term = acc.ln(b, density)?;
                acc.events.push(b.neg(term));
                acc.count_events += 1;
            }
        }
    }
    Ok(acc.finish(b))
}

/// `−Σ_{d_i≠0} log λ(t_i) + Σ_i Λ(t_i)` for a one-output model; any nonzero
/// event label counts as the event.
pub fn single_risk_nll<B: Backend, R: Rng + ?Sized>(
    b: &B,
    model: &NfgModel,
    bound: &BoundModel<B::S>,
    batch: &SurvivalBatch<'_>,
    mut rng: Option<&mut R>,
) -> Result<LossBreakdown<B::S>> {
    if model.risks != 1 {
        return Err(NfgError::Usage(format!(
            "the single-risk likelihood needs a one-risk model, got {} risks",
            model.risks
        )));
    }
    if batch.data.n_features() != model.n_features {
        return Err(NfgError::Schema {
            expected: model.n_features,
            got: batch.data.n_features(),
        });
    }
    let inv_scale = 1.0 / model.t_scale;
    let mut acc = Accumulator::new(batch.len());
    for &i in batch.rows.iter() {
        let data = batch.data;
        let emb = model.embed(b, bound, data.row(i), rng.as_deref_mut())?;
        let f = model.head(b, bound, &emb, &[], data.times[i])?;
        let cum = f.cumulative[0];
        if data.events[i] == 0 {
            acc.censored.push(cum);
            acc.count_censored += 1;
        } else {
            let hazard = b.scale(b.tangent_of(cum), inv_scale);
            let term = acc.ln(b, hazard)?;
            acc.events.push(b.sub(cum, term));
            acc.count_events += 1;
        }
    }
    Ok(acc.finish(b))
}

/// Sum over risks of single-risk likelihoods in which every other outcome is
/// treated as censoring; all risks share one embedding per patient.
pub fn cause_specific_nll<B: Backend, R: Rng + ?Sized>(
    b: &B,
    model: &NfgModel,
    bound: &BoundModel<B::S>,
    batch: &SurvivalBatch<'_>,
    mut rng: Option<&mut R>,
) -> Result<LossBreakdown<B::S>> {
    if model.variant != Variant::CauseSpecific {
        return Err(NfgError::Usage(format!(
            "the cause-specific likelihood needs the cause-specific variant, model is {}",
            model.variant.as_str()
        )));
    }
    check_batch(model, batch)?;
    let inv_scale = 1.0 / model.t_scale;
    let mut acc = Accumulator::new(batch.len());
    for &i in batch.rows.iter() {
        let data = batch.data;
        let emb = model.embed(b, bound, data.row(i), rng.as_deref_mut())?;
        let f = model.head(b, bound, &emb, &[], data.times[i])?;
        let total = b.sum(&f.cumulative);
        match data.events[i] {
            0 => {
                acc.censored.push(total);
                acc.count_censored += 1;
            }
            r => {
                let hazard = b.scale(b.tangent_of(f.cumulative[r - 1]), inv_scale);
                let term = acc.ln(b, hazard)?;
                acc.events.push(b.sub(total, term));
                acc.count_events += 1;
            }
        }
    }
    Ok(acc.finish(b))
}

/// Loss value without recording a tape (no dropout).
pub fn loss_value(model: &NfgModel, objective: Objective, batch: &SurvivalBatch<'_>) -> Result<LossBreakdown<f64>> {
    let b = DualBackend;
    let bound = model.bind_constants(&b);
    let loss = objective.nll::<_, NoDropout>(&b, model, &bound, batch, None)?;
    Ok(loss.values(&b))
}

/// Loss and its gradient with respect to [`NfgModel::params`], recorded on a
/// caller-owned tape that is reset first.
pub fn loss_and_gradient<R: Rng + ?Sized>(
    model: &NfgModel,
    objective: Objective,
    batch: &SurvivalBatch<'_>,
    tape: &mut Tape,
    grad: &mut Gradient,
    rng: Option<&mut R>,
) -> Result<(LossBreakdown<f64>, Vec<f64>)> {
    tape.reset();
    let tape: &Tape = tape;
    let (bound, leaves) = model.bind_tape(tape);
    let loss = objective.nll(&tape, model, &bound, batch, rng)?;
    tape.backward_into(loss.total, Channel::Value, grad)?;
    Ok((loss.values(&tape), grad.gather(&leaves)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::layers::Layer;
    use crate::model::Architecture;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inverse_softplus(y: f64) -> f64 {
        y + (-(-y).exp_m1()).ln()
    }

    /// One-risk model whose monotonic network outputs the constant `c`.
    fn constant_hazard_model(variant: Variant, c: f64, t_scale: f64) -> NfgModel {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let arch = Architecture {
            layers: 1,
            nodes: 3,
            dropout: 0.0,
        };
        let mut m = NfgModel::new(variant, 1, 2, arch, &mut rng).unwrap();
        m.set_t_scale(t_scale).unwrap();
        let net = &mut m.monotonic[0];
        let last = net.layers.len() - 1;
        for (k, layer) in net.layers.iter_mut().enumerate() {
            if let Layer::Positive(l) = layer {
                l.raw_weights.iter_mut().for_each(|w| *w = 0.0);
                if k == last {
                    l.biases = vec![inverse_softplus(c)];
                }
            }
        }
        m
    }

    fn toy(times: Vec<f64>, events: Vec<usize>, risks: usize) -> SurvivalDataset {
        let n = times.len();
        let covariates = (0..2 * n).map(|k| ((k * 7 % 5) as f64 - 2.0) * 0.4).collect();
        SurvivalDataset::new(covariates, times, events, vec!["a".into(), "b".into()], risks).unwrap()
    }

    fn small_model(variant: Variant, risks: usize, p: usize, seed: u64) -> NfgModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = Architecture {
            layers: 1,
            nodes: 4,
            dropout: 0.0,
        };
        let mut m = NfgModel::new(variant, risks, p, arch, &mut rng).unwrap();
        m.set_t_scale(3.0).unwrap();
        m
    }

    #[test]
    fn censored_at_zero_contributes_nothing() {
        let m = small_model(Variant::Nfg, 2, 2, 1);
        let d = toy(vec![0.0], vec![0], 2);
        let l = loss_value(&m, Objective::Competing, &SurvivalBatch::all(&d)).unwrap();
        assert_eq!(l.total, 0.0);
        assert_eq!(l.count_censored, 1);
    }

    #[test]
    fn constant_hazard_event_closed_form() {
        let (c, ts, t) = (0.7, 2.0, 1.3);
        let m = constant_hazard_model(Variant::Nfg, c, ts);
        let d = toy(vec![t], vec![1], 1);
        let l = loss_value(&m, Objective::Competing, &SurvivalBatch::all(&d)).unwrap();
        let th = t / ts;
        let expected = -(c * (-th * c).exp() / ts).ln();
        assert_relative_eq!(l.total, expected, max_relative = 1e-12);
        assert_eq!(l.floored_terms, 0);
    }

    #[test]
    fn exponential_likelihood() {
        // with t_scale 1 the network constant is the hazard itself
        let c = 0.5;
        let m = constant_hazard_model(Variant::CauseSpecific, c, 1.0);
        let times = vec![0.3, 1.1, 2.5, 0.9];
        let d = toy(times.clone(), vec![1; 4], 1);
        let l = loss_value(&m, Objective::SingleRisk, &SurvivalBatch::all(&d)).unwrap();
        let expected = -4.0 * c.ln() + c * times.iter().sum::<f64>();
        assert_relative_eq!(l.total, expected, max_relative = 1e-12);

        let censored = toy(vec![1.0, 2.0], vec![0, 0], 1);
        let zero = constant_hazard_model(Variant::CauseSpecific, 1e-300, 1.0);
        let l = loss_value(&zero, Objective::SingleRisk, &SurvivalBatch::all(&censored)).unwrap();
        assert!(l.total.abs() < 1e-250);
    }

    #[test]
    fn single_risk_matches_competing_at_one_risk() {
        let m = small_model(Variant::Nfg, 1, 2, 4);
        let d = toy(vec![0.4, 1.7, 2.2, 0.1, 3.0], vec![1, 0, 1, 0, 1], 1);
        let batch = SurvivalBatch::all(&d);
        let a = loss_value(&m, Objective::Competing, &batch).unwrap();
        let b = loss_value(&m, Objective::SingleRisk, &batch).unwrap();
        assert!((a.total - b.total).abs() < 1e-10, "{} vs {}", a.total, b.total);
    }

    #[test]
    fn cause_specific_single_risk_equals_single_risk() {
        let m = small_model(Variant::CauseSpecific, 1, 2, 5);
        let d = toy(vec![0.4, 1.7, 2.2], vec![1, 0, 1], 1);
        let batch = SurvivalBatch::all(&d);
        let a = loss_value(&m, Objective::CauseSpecific, &batch).unwrap();
        let b = loss_value(&m, Objective::SingleRisk, &batch).unwrap();
        assert_eq!(a.total, b.total);
    }

    #[test]
    fn other_risk_events_act_as_censoring() {
        let m = small_model(Variant::CauseSpecific, 2, 2, 6);
        let d = toy(vec![1.2], vec![2], 2);
        let l = loss_value(&m, Objective::CauseSpecific, &SurvivalBatch::all(&d)).unwrap();
        let cs = m.cause_specific_eval(d.row(0), 1.2).unwrap();
        let expected = cs[0].cumulative_hazard + cs[1].cumulative_hazard - cs[1].hazard.ln();
        assert_relative_eq!(l.total, expected, max_relative = 1e-12);
    }

    #[test]
    fn breakdown_adds_up_and_batches_add() {
        let m = small_model(Variant::Nfg, 2, 2, 7);
        let d = toy(vec![0.5, 1.5, 2.5, 0.2, 1.0, 2.0], vec![1, 2, 0, 1, 0, 2], 2);
        let whole = loss_value(&m, Objective::Competing, &SurvivalBatch::all(&d)).unwrap();
        assert_relative_eq!(whole.total, whole.event_term + whole.censor_term, max_relative = 1e-15);
        let (a, b) = ([0usize, 1, 2], [3usize, 4, 5]);
        let la = loss_value(&m, Objective::Competing, &SurvivalBatch::new(&d, &a)).unwrap();
        let lb = loss_value(&m, Objective::Competing, &SurvivalBatch::new(&d, &b)).unwrap();
        assert!((whole.total - la.total - lb.total).abs() < 1e-10);
        let rev = [5usize, 4, 3, 2, 1, 0];
        let lr = loss_value(&m, Objective::Competing, &SurvivalBatch::new(&d, &rev)).unwrap();
        assert!((whole.total - lr.total).abs() < 1e-12);
    }

    fn fd_check(model: &NfgModel, objective: Objective, data: &SurvivalDataset) -> f64 {
        let batch = SurvivalBatch::all(data);
        let mut tape = Tape::new();
        let mut g = Gradient::default();
        let (_, grad) = loss_and_gradient::<NoDropout>(model, objective, &batch, &mut tape, &mut g, None).unwrap();
        let params = model.params();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut probe = model.clone();
        for k in 0..params.len() {
            let mut p = params.clone();
            p[k] += h;
            probe.set_params(&p).unwrap();
            let up = loss_value(&probe, objective, &batch).unwrap().total;
            p[k] -= 2.0 * h;
            probe.set_params(&p).unwrap();
            let down = loss_value(&probe, objective, &batch).unwrap().total;
            let fd = (up - down) / (2.0 * h);
            let err = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-7 / 1e-4);
            worst = worst.max(err);
        }
        worst
    }

    #[test]
    fn competing_gradient_matches_finite_differences() {
        let m = small_model(Variant::Nfg, 2, 2, 8);
        let d = toy(vec![0.5, 1.5, 2.5, 0.8], vec![1, 2, 0, 1], 2);
        assert!(fd_check(&m, Objective::Competing, &d) < 1e-4);
        let mono = small_model(Variant::MonoFg, 2, 2, 9);
        assert!(fd_check(&mono, Objective::Competing, &d) < 1e-4);
    }

    #[test]
    fn cause_specific_gradient_matches_finite_differences() {
        let m = small_model(Variant::CauseSpecific, 2, 2, 10);
        let d = toy(vec![0.5, 1.5, 2.5, 0.8], vec![1, 2, 0, 1], 2);
        assert!(fd_check(&m, Objective::CauseSpecific, &d) < 1e-4);
    }

    #[test]
    fn variant_guards() {
        let nfg = small_model(Variant::Nfg, 2, 2, 11);
        let cs = small_model(Variant::CauseSpecific, 2, 2, 11);
        let d = toy(vec![1.0], vec![1], 2);
        let batch = SurvivalBatch::all(&d);
        assert!(loss_value(&cs, Objective::Competing, &batch).is_err());
        assert!(loss_value(&nfg, Objective::CauseSpecific, &batch).is_err());
        assert!(loss_value(&nfg, Objective::SingleRisk, &batch).is_err());
    }

    #[test]
    fn no_floors_on_synthetic_batch() {
        let d = generate_synthetic(&SyntheticSpec {
            n: 200,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let mut m = small_model(Variant::Nfg, 2, 12, 12);
        m.set_t_scale(d.max_event_time()).unwrap();
        let l = loss_value(&m, Objective::Competing, &SurvivalBatch::all(&d)).unwrap();
        assert_eq!(l.floored_terms, 0);
        assert!(l.total.is_finite());
    }
}
