//! The Neural Fine-Gray model.
//!
//! Cumulative incidence for risk `r` is
//!
//! ```text
//! F_r(t | x) = B(E(x))_r · (1 − exp(−t̂ · M_r(t̂, E(x)))),   t̂ = t / t_scale
//! ```
//!
//! where `E` embeds the standardized covariates, each `M_r` is a positive
//! monotonic network taking `(t̂, x̃)`, and `B` is a softmax-headed balancing
//! network. Because `t̂ · M_r` vanishes at `t̂ = 0`, `F_r(0 | x) = 0` exactly,
//! and because the softmax sums to one, `Σ_r F_r ≤ 1`.
//!
//! All evaluation runs the forward pass with `t̂` carrying a unit tangent, so
//! the time-derivative of every output is available without extra passes.

mod checkpoint;

pub use checkpoint::{checkpoint_load, checkpoint_save, decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Backend, DualBackend, Tape, Var};
use crate::error::{NfgError, Result};
use crate::layers::{init_params, mlp_forward, mlp_infer, BoundMlp, FinalActivation, Mlp, MlpSpec};

/// Type parameter for calls that run without dropout.
pub(crate) type NoDropout = rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// One monotonic network per risk plus a balancing network.
    #[serde(rename = "nfg")]
    Nfg,
    /// A single monotonic network with one output per risk.
    #[serde(rename = "monofg", alias = "mono_fg")]
    MonoFg,
    /// Per-risk cumulative hazards without balancing; ignores competition.
    #[serde(rename = "cause-specific", alias = "cause_specific")]
    CauseSpecific,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Nfg => "nfg",
            Variant::MonoFg => "monofg",
            Variant::CauseSpecific => "cause-specific",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "nfg" => Ok(Variant::Nfg),
            "monofg" => Ok(Variant::MonoFg),
            "cause-specific" | "cs" => Ok(Variant::CauseSpecific),
            other => Err(NfgError::Config(format!("unknown variant `{other}`"))),
        }
    }

    pub(crate) fn tag(&self) -> u8 {
        match self {
            Variant::Nfg => 0,
            Variant::MonoFg => 1,
            Variant::CauseSpecific => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Variant::Nfg),
            1 => Some(Variant::MonoFg),
            2 => Some(Variant::CauseSpecific),
            _ => None,
        }
    }

    pub fn monotonic_count(&self, risks: usize) -> usize {
        match self {
            Variant::MonoFg => 1,
            _ => risks,
        }
    }

    pub fn has_balancing(&self) -> bool {
        !matches!(self, Variant::CauseSpecific)
    }
}

/// Width and depth shared by the three sub-networks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub layers: usize,
    pub nodes: usize,
    /// Dropout inside the embedding network only.
    pub dropout: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            layers: 1,
            nodes: 50,
            dropout: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NfgModel {
    pub variant: Variant,
    pub risks: usize,
    pub n_features: usize,
    /// Times are divided by this before entering the monotonic networks.
    pub t_scale: f64,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub embedding: Mlp,
    pub monotonic: Vec<Mlp>,
    pub balancing: Option<Mlp>,
}

/// Probabilities at one `(x, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CifEvaluation {
    pub cif: Vec<f64>,
    /// `∂F_r/∂t`, present when requested.
    pub density: Option<Vec<f64>>,
    pub survival: f64,
}

/// Non-competing quantities for one risk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CauseSpecificEval {
    pub cumulative_hazard: f64,
    pub hazard: f64,
    pub survival: f64,
}

/// Parameters of a model bound to a backend.
pub struct BoundModel<S> {
    pub embedding: BoundMlp<S>,
    pub monotonic: Vec<BoundMlp<S>>,
    pub balancing: Option<BoundMlp<S>>,
}

/// Raw network outputs for one `(x, t)`, time tangent w.r.t. `t̂`.
pub struct Forward<S> {
    /// `t̂ · M_r(t̂, x̃)` per risk.
    pub cumulative: Vec<S>,
    /// `B(x̃)` (empty for the cause-specific variant).
    pub balance: Vec<S>,
    /// `F_r` per risk (empty for the cause-specific variant).
    pub cif: Vec<S>,
    /// `Σ_r B_r · exp(−t̂ M_r)`, algebraically `1 − Σ_r F_r`.
    pub survival: Option<S>,
}

impl NfgModel {
    pub fn new<R: Rng + ?Sized>(
        variant: Variant,
        risks: usize,
        n_features: usize,
        arch: Architecture,
        rng: &mut R,
    ) -> Result<Self> {
        if risks == 0 {
            return Err(NfgError::Usage("a model needs at least one risk".into()));
        }
        if arch.layers == 0 || arch.nodes == 0 {
            return Err(NfgError::Usage("architecture needs layers >= 1 and nodes >= 1".into()));
        }
        let h = arch.nodes;
        let mut emb_widths = vec![n_features];
        emb_widths.extend(std::iter::repeat(h).take(arch.layers));
        let emb_spec = MlpSpec::new(emb_widths, FinalActivation::Tanh).with_dropout(arch.dropout);
        let embedding = init_params(&emb_spec, false, rng)?;

        let mono_out = if variant == Variant::MonoFg { risks } else { 1 };
        let mut mono_widths = vec![h + 1];
        mono_widths.extend(std::iter::repeat(h).take(arch.layers));
        mono_widths.push(mono_out);
        let mono_spec = MlpSpec::new(mono_widths, FinalActivation::Softplus);
        let monotonic = (0..variant.monotonic_count(risks))
            .map(|_| init_params(&mono_spec, true, rng))
            .collect::<Result<Vec<_>>>()?;

        let balancing = if variant.has_balancing() {
            let mut widths = vec![h];
            widths.extend(std::iter::repeat(h).take(arch.layers));
            widths.push(risks);
            Some(init_params(&MlpSpec::new(widths, FinalActivation::Softmax), false, rng)?)
        } else {
            None
        };

        Ok(Self {
            variant,
            risks,
            n_features,
            t_scale: 1.0,
            feature_means: vec![0.0; n_features],
            feature_stds: vec![1.0; n_features],
            embedding,
            monotonic,
            balancing,
        })
    }

    pub fn set_t_scale(&mut self, t_scale: f64) -> Result<()> {
        if !(t_scale > 0.0 && t_scale.is_finite()) {
            return Err(NfgError::Usage(format!("t_scale must be positive, got {t_scale}")));
        }
        self.t_scale = t_scale;
        Ok(())
    }

    pub fn set_standardization(&mut self, means: Vec<f64>, stds: Vec<f64>) -> Result<()> {
        if means.len() != self.n_features || stds.len() != self.n_features {
            return Err(NfgError::Schema {
                expected: self.n_features,
                got: means.len(),
            });
        }
        self.feature_means = means;
        self.feature_stds = stds;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.nets().map(Mlp::param_count).sum()
    }

    fn nets(&self) -> impl Iterator<Item = &Mlp> {
        std::iter::once(&self.embedding)
            .chain(self.monotonic.iter())
            .chain(self.balancing.iter())
    }

    fn nets_mut(&mut self) -> impl Iterator<Item = &mut Mlp> {
        std::iter::once(&mut self.embedding)
            .chain(self.monotonic.iter_mut())
            .chain(self.balancing.iter_mut())
    }

    /// All parameters flattened: embedding, monotonic networks, balancing.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for net in self.nets() {
            net.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(NfgError::Shape {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for net in self.nets_mut() {
            net.read_params(&mut it)?;
        }
        Ok(())
    }

    pub fn bind<B: Backend>(&self, b: &B, leaf: &mut impl FnMut(&B, f64) -> B::S) -> BoundModel<B::S> {
        BoundModel {
            embedding: self.embedding.bind(b, leaf),
            monotonic: self.monotonic.iter().map(|m| m.bind(b, leaf)).collect(),
            balancing: self.balancing.as_ref().map(|m| m.bind(b, leaf)),
        }
    }

    pub fn bind_constants<B: Backend>(&self, b: &B) -> BoundModel<B::S> {
        self.bind(b, &mut |b: &B, v| b.constant(v))
    }

    /// Binds every parameter as a differentiable leaf. The returned leaves are
    /// in [`NfgModel::params`] order.
    pub fn bind_tape<'t>(&self, tape: &'t Tape) -> (BoundModel<Var<'t>>, Vec<Var<'t>>) {
        let mut leaves = Vec::with_capacity(self.param_count());
        let bound = self.bind(&tape, &mut |b: &&'t Tape, v| {
            let x = b.scalar(v, 0.0);
            leaves.push(x);
            x
        });
        (bound, leaves)
    }

    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(NfgError::Schema {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.feature_means.iter().zip(&self.feature_stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    /// Embedding of raw covariates; dropout when `rng` is given.
    pub fn embed<B: Backend, R: Rng + ?Sized>(
        &self,
        b: &B,
        bound: &BoundModel<B::S>,
        x: &[f64],
        rng: Option<&mut R>,
    ) -> Result<Vec<B::S>> {
        let xs: Vec<B::S> = self.standardize(x)?.into_iter().map(|v| b.constant(v)).collect();
        mlp_forward(b, &bound.embedding, &xs, rng)
    }

    /// Balancing weights from an embedding (empty for the cause-specific variant).
    pub fn balance<B: Backend>(&self, b: &B, bound: &BoundModel<B::S>, emb: &[B::S]) -> Result<Vec<B::S>> {
        match &bound.balancing {
            Some(net) => mlp_infer(b, net, emb),
            None => Ok(Vec::new()),
        }
    }

    /// Monotonic heads at time `t` given a precomputed embedding and balance.
    pub fn head<B: Backend>(
        &self,
        b: &B,
        bound: &BoundModel<B::S>,
        emb: &[B::S],
        balance: &[B::S],
        t: f64,
    ) -> Result<Forward<B::S>> {
        check_time(t)?;
        let th = b.time(t / self.t_scale);
        let mut input = Vec::with_capacity(emb.len() + 1);
        input.push(th);
        input.extend_from_slice(emb);
        let outputs: Vec<B::S> = match self.variant {
            Variant::MonoFg => mlp_infer(b, &bound.monotonic[0], &input)?,
            _ => bound
                .monotonic
                .iter()
                .map(|net| mlp_infer(b, net, &input).map(|o| o[0]))
                .collect::<Result<_>>()?,
        };
        let cumulative: Vec<B::S> = outputs.iter().map(|m| b.mul(th, *m)).collect();
        if self.variant == Variant::CauseSpecific {
            return Ok(Forward {
                cumulative,
                balance: Vec::new(),
                cif: Vec::new(),
                survival: None,
            });
        }
        let decay: Vec<B::S> = cumulative.iter().map(|a| b.exp(b.neg(*a))).collect();
        let cif = balance
            .iter()
            .zip(&decay)
            .map(|(w, e)| b.sub(*w, b.mul(*w, *e)))
            .collect();
        let zero = b.constant(0.0);
        let survival = b.linear(balance, &decay, zero);
        Ok(Forward {
            cumulative,
            balance: balance.to_vec(),
            cif,
            survival: Some(survival),
        })
    }

    /// Full forward pass for one patient.
    pub fn forward<B: Backend, R: Rng + ?Sized>(
        &self,
        b: &B,
        bound: &BoundModel<B::S>,
        x: &[f64],
        t: f64,
        rng: Option<&mut R>,
    ) -> Result<Forward<B::S>> {
        check_time(t)?;
        let emb = self.embed(b, bound, x, rng)?;
        let balance = self.balance(b, bound, &emb)?;
        self.head(b, bound, &emb, &balance, t)
    }

    fn require_competing(&self, what: &str) -> Result<()> {
        if self.variant == Variant::CauseSpecific {
            return Err(NfgError::Usage(format!(
                "{what} needs a competing-risks variant (nfg or monofg)"
            )));
        }
        Ok(())
    }

    fn evaluate(&self, x: &[f64], t: f64, with_density: bool) -> Result<CifEvaluation> {
        self.require_competing("cif")?;
        let b = DualBackend;
        let bound = self.bind_constants(&b);
        let f = self.forward::<_, NoDropout>(&b, &bound, x, t, None)?;
        Ok(self.to_evaluation(&f, with_density))
    }

    fn to_evaluation(&self, f: &Forward<crate::autodiff::Dual>, with_density: bool) -> CifEvaluation {
        let cif: Vec<f64> = f.cif.iter().map(|d| d.value).collect();
        let survival = 1.0 - cif.iter().sum::<f64>();
        let density = with_density.then(|| f.cif.iter().map(|d| d.tangent / self.t_scale).collect());
        CifEvaluation {
            cif,
            density,
            survival,
        }
    }

    /// `F_r(t | x)` for every risk and the overall survival `1 − Σ F_r`.
    pub fn cif(&self, x: &[f64], t: f64) -> Result<CifEvaluation> {
        self.evaluate(x, t, false)
    }

    /// Like [`NfgModel::cif`] with the exact densities `∂F_r/∂t` populated.
    pub fn cif_derivative(&self, x: &[f64], t: f64) -> Result<CifEvaluation> {
        self.evaluate(x, t, true)
    }

    /// Evaluations at many times for one patient, sharing the embedding.
    pub fn cif_curve(&self, x: &[f64], times: &[f64]) -> Result<Vec<CifEvaluation>> {
        self.require_competing("cif")?;
        let b = DualBackend;
        let bound = self.bind_constants(&b);
        let emb = self.embed::<_, NoDropout>(&b, &bound, x, None)?;
        let balance = self.balance(&b, &bound, &emb)?;
        times
            .iter()
            .map(|&t| {
                let f = self.head(&b, &bound, &emb, &balance, t)?;
                Ok(self.to_evaluation(&f, true))
            })
            .collect()
    }

    /// Sub-distribution hazards `h_r = (∂F_r/∂t) / (1 − F_r)`.
    pub fn sub_hazard(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let eval = self.cif_derivative(x, t)?;
        let density = eval.density.expect("density requested");
        eval.cif
            .iter()
            .zip(density)
            .enumerate()
            .map(|(r, (&f, d))| {
                if f >= 1.0 - 1e-12 {
                    Err(NfgError::Saturated { risk: r + 1, cif: f })
                } else {
                    Ok(d / (1.0 - f))
                }
            })
            .collect()
    }

    /// Cumulative hazard `Λ_r = t̂ · M_r`, its time-derivative and `exp(−Λ_r)`,
    /// for models trained on the non-competing objective.
    pub fn cause_specific_eval(&self, x: &[f64], t: f64) -> Result<Vec<CauseSpecificEval>> {
        if self.variant != Variant::CauseSpecific {
            return Err(NfgError::Usage(format!(
                "cause-specific evaluation needs the cause-specific variant, model is {}",
                self.variant.as_str()
            )));
        }
        self.cumulative_hazards(x, t)
    }

    /// `Λ_r` and `λ_r` from the monotonic networks regardless of variant.
    pub(crate) fn cumulative_hazards(&self, x: &[f64], t: f64) -> Result<Vec<CauseSpecificEval>> {
        let b = DualBackend;
        let bound = self.bind_constants(&b);
        let emb = self.embed::<_, NoDropout>(&b, &bound, x, None)?;
        let f = self.head(&b, &bound, &emb, &[], t)?;
        Ok(f.cumulative
            .iter()
            .map(|a| CauseSpecificEval {
                cumulative_hazard: a.value,
                hazard: a.tangent / self.t_scale,
                survival: (-a.value).exp(),
            })
            .collect())
    }

    /// Risk-`r` prediction used by the evaluation harness: `F_r` for the
    /// competing variants, `1 − exp(−Λ_r)` for the cause-specific one.
    pub fn risk_curve(&self, x: &[f64], times: &[f64], risk: usize) -> Result<Vec<f64>> {
        if risk == 0 || risk > self.risks {
            return Err(NfgError::Usage(format!("risk {risk} outside 1..={}", self.risks)));
        }
        if self.variant == Variant::CauseSpecific {
            let b = DualBackend;
            let bound = self.bind_constants(&b);
            let emb = self.embed::<_, NoDropout>(&b, &bound, x, None)?;
            return times
                .iter()
                .map(|&t| {
                    let f = self.head(&b, &bound, &emb, &[], t)?;
                    Ok(-(-f.cumulative[risk - 1].value).exp_m1())
                })
                .collect();
        }
        Ok(self
            .cif_curve(x, times)?
            .into_iter()
            .map(|e| e.cif[risk - 1])
            .collect())
    }
}

fn check_time(t: f64) -> Result<()> {
    if t < 0.0 || t.is_nan() {
        return Err(NfgError::NegativeTime(t));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(variant: Variant, risks: usize, seed: u64) -> NfgModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = NfgModel::new(
            variant,
            risks,
            3,
            Architecture {
                layers: 2,
                nodes: 6,
                dropout: 0.0,
            },
            &mut rng,
        )
        .unwrap();
        m.set_t_scale(4.0).unwrap();
        m
    }

    #[test]
    fn zero_time_is_anchored() {
        let m = model(Variant::Nfg, 2, 1);
        let e = m.cif(&[0.3, -1.0, 2.0], 0.0).unwrap();
        assert_eq!(e.cif, vec![0.0, 0.0]);
        assert_eq!(e.survival, 1.0);
    }

    #[test]
    fn density_at_zero_matches_closed_form() {
        let m = model(Variant::Nfg, 2, 2);
        let x = [1.0, 0.5, -0.2];
        let e = m.cif_derivative(&x, 0.0).unwrap();
        let b = DualBackend;
        let bound = m.bind_constants(&b);
        let emb = m.embed::<_, ChaCha8Rng>(&b, &bound, &x, None).unwrap();
        let w = m.balance(&b, &bound, &emb).unwrap();
        let mut input = vec![crate::autodiff::Dual::constant(0.0)];
        input.extend(emb.iter().copied());
        for r in 0..2 {
            let mr = mlp_forward::<_, ChaCha8Rng>(&b, &bound.monotonic[r], &input, None).unwrap()[0].value;
            let expected = w[r].value * mr / m.t_scale;
            assert_relative_eq!(e.density.as_ref().unwrap()[r], expected, max_relative = 1e-14);
        }
    }

    #[test]
    fn large_time_reaches_balance() {
        let m = model(Variant::Nfg, 2, 3);
        let x = [0.1, 0.2, 0.3];
        let e = m.cif(&x, 1e6).unwrap();
        let b = DualBackend;
        let bound = m.bind_constants(&b);
        let emb = m.embed::<_, ChaCha8Rng>(&b, &bound, &x, None).unwrap();
        let w = m.balance(&b, &bound, &emb).unwrap();
        for r in 0..2 {
            assert_relative_eq!(e.cif[r], w[r].value, max_relative = 1e-12);
        }
        assert!(e.survival.abs() < 1e-12);
    }

    #[test]
    fn single_risk_reduces_to_survival_model() {
        let m = model(Variant::Nfg, 1, 4);
        let x = [0.0, 1.0, -1.0];
        let e = m.cif(&x, 2.0).unwrap();
        let cs = m.cumulative_hazards(&x, 2.0).unwrap();
        assert_relative_eq!(e.cif[0], 1.0 - (-cs[0].cumulative_hazard).exp(), max_relative = 1e-14);
    }

    #[test]
    fn negative_time_rejected() {
        let m = model(Variant::Nfg, 2, 5);
        assert!(matches!(m.cif(&[0.0; 3], -1.0), Err(NfgError::NegativeTime(_))));
        assert!(matches!(m.cif_derivative(&[0.0; 3], -0.1), Err(NfgError::NegativeTime(_))));
    }

    #[test]
    fn sub_hazard_at_zero_is_density() {
        let m = model(Variant::MonoFg, 2, 6);
        let x = [0.5, 0.5, 0.5];
        let h = m.sub_hazard(&x, 0.0).unwrap();
        let d = m.cif_derivative(&x, 0.0).unwrap().density.unwrap();
        assert_eq!(h, d);
    }

    #[test]
    fn cause_specific_requires_variant() {
        let m = model(Variant::Nfg, 2, 7);
        assert!(matches!(m.cause_specific_eval(&[0.0; 3], 1.0), Err(NfgError::Usage(_))));
        let cs = model(Variant::CauseSpecific, 2, 7);
        let at_zero = cs.cause_specific_eval(&[0.0; 3], 0.0).unwrap();
        for e in at_zero {
            assert_eq!(e.cumulative_hazard, 0.0);
            assert_eq!(e.survival, 1.0);
        }
        assert!(cs.cif(&[0.0; 3], 1.0).is_err());
    }

    #[test]
    fn params_round_trip() {
        let m = model(Variant::Nfg, 3, 8);
        let p = m.params();
        assert_eq!(p.len(), m.param_count());
        let mut other = model(Variant::Nfg, 3, 9);
        other.set_params(&p).unwrap();
        assert_eq!(other.params(), p);
        assert!(other.set_params(&p[1..]).is_err());
    }

    #[test]
    fn schema_mismatch_names_both_counts() {
        let m = model(Variant::Nfg, 2, 10);
        match m.cif(&[0.0; 5], 1.0) {
            Err(NfgError::Schema { expected: 3, got: 5 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn curve_matches_pointwise() {
        let m = model(Variant::Nfg, 2, 11);
        let x = [0.2, -0.3, 0.9];
        let times = [0.0, 0.5, 1.7, 9.0];
        let curve = m.cif_curve(&x, &times).unwrap();
        for (t, e) in times.iter().zip(curve) {
            assert_eq!(e, m.cif_derivative(&x, *t).unwrap());
        }
    }
}
