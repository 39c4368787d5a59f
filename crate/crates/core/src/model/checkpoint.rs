//! Binary checkpoint format.
//!
//! ```text
//! "NFG1" | u32 version | u8 variant | u32 risks | u32 n_features | f64 t_scale
//! f64 × n_features means | f64 × n_features stds | u32 n_nets
//! per net: u8 positive | u8 activation | u8 final_activation | f64 dropout
//!          u32 n_widths | u32 × n_widths | f64 × param_count
//! ```
//!
//! All integers and floats are little-endian. Nets are stored in the order
//! embedding, monotonic networks, balancing network.

use std::path::Path;

use super::{NfgModel, Variant};
use crate::error::{NfgError, Result};
use crate::layers::{Activation, DenseLayer, FinalActivation, Layer, Mlp, MlpSpec, PositiveDenseLayer};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NFG1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &NfgModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * model.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(model.variant.tag());
    out.extend_from_slice(&(model.risks as u32).to_le_bytes());
    out.extend_from_slice(&(model.n_features as u32).to_le_bytes());
    out.extend_from_slice(&model.t_scale.to_le_bytes());
    for v in model.feature_means.iter().chain(&model.feature_stds) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let nets: Vec<&Mlp> = std::iter::once(&model.embedding)
        .chain(&model.monotonic)
        .chain(&model.balancing)
        .collect();
    out.extend_from_slice(&(nets.len() as u32).to_le_bytes());
    for net in nets {
        out.push(net.is_positive() as u8);
        out.push(match net.spec.activation {
            Activation::Tanh => 0,
        });
        out.push(final_tag(net.spec.final_activation));
        out.extend_from_slice(&net.spec.dropout.to_le_bytes());
        out.extend_from_slice(&(net.spec.widths.len() as u32).to_le_bytes());
        for w in &net.spec.widths {
            out.extend_from_slice(&(*w as u32).to_le_bytes());
        }
        let mut params = Vec::with_capacity(net.param_count());
        net.write_params(&mut params);
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    out
}

fn final_tag(f: FinalActivation) -> u8 {
    match f {
        FinalActivation::None => 0,
        FinalActivation::Tanh => 1,
        FinalActivation::Softplus => 2,
        FinalActivation::Softmax => 3,
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(NfgError::Parse {
            offset: self.offset,
            message: message.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return self.fail(format!("truncated while reading {what}"));
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64(what)).collect()
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<NfgModel> {
    let mut r = Reader { bytes, offset: 0 };
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        r.offset = 0;
        return r.fail("bad magic bytes, not an NFG1 checkpoint");
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(NfgError::UnsupportedVersion(version));
    }
    let tag_at = r.offset;
    let tag = r.u8("variant")?;
    let variant = match Variant::from_tag(tag) {
        Some(v) => v,
        None => {
            r.offset = tag_at;
            return r.fail(format!("unknown variant tag {tag}"));
        }
    };
    let risks = r.u32("risks")? as usize;
    if risks == 0 {
        return r.fail("declared zero risks");
    }
    let n_features = r.u32("n_features")? as usize;
    let t_scale = r.f64("t_scale")?;
    if !(t_scale > 0.0 && t_scale.is_finite()) {
        return r.fail(format!("t_scale {t_scale} is not positive"));
    }
    let feature_means = r.f64s(n_features, "feature means")?;
    let feature_stds = r.f64s(n_features, "feature stds")?;

    let n_nets_at = r.offset;
    let n_nets = r.u32("net count")? as usize;
    let expected_nets = 1 + variant.monotonic_count(risks) + usize::from(variant.has_balancing());
    if n_nets != expected_nets {
        r.offset = n_nets_at;
        return r.fail(format!(
            "{} variant with {risks} risks needs {expected_nets} networks, file stores {n_nets}",
            variant.as_str()
        ));
    }
    let mut nets = Vec::with_capacity(n_nets);
    for i in 0..n_nets {
        nets.push(read_net(&mut r, i)?);
    }
    if r.offset != bytes.len() {
        return r.fail(format!("{} trailing bytes", bytes.len() - r.offset));
    }

    let mut it = nets.into_iter();
    let embedding = it.next().expect("counted");
    let monotonic: Vec<Mlp> = it.by_ref().take(variant.monotonic_count(risks)).collect();
    let balancing = it.next();

    let structural = |msg: String| NfgError::Parse {
        offset: n_nets_at,
        message: msg,
    };
    let h = embedding.spec.output_dim();
    if embedding.spec.input_dim() != n_features {
        return Err(structural(format!(
            "embedding takes {} inputs but {n_features} features are declared",
            embedding.spec.input_dim()
        )));
    }
    let mono_out = if variant == Variant::MonoFg { risks } else { 1 };
    for m in &monotonic {
        if !m.is_positive() || m.spec.input_dim() != h + 1 || m.spec.output_dim() != mono_out {
            return Err(structural(format!(
                "monotonic network shape {:?} inconsistent with {risks} risks",
                m.spec.widths
            )));
        }
    }
    if let Some(bal) = &balancing {
        if bal.spec.input_dim() != h || bal.spec.output_dim() != risks {
            return Err(structural(format!(
                "balancing network shape {:?} inconsistent with {risks} risks",
                bal.spec.widths
            )));
        }
    }

    Ok(NfgModel {
        variant,
        risks,
        n_features,
        t_scale,
        feature_means,
        feature_stds,
        embedding,
        monotonic,
        balancing,
    })
}

fn read_net(r: &mut Reader<'_>, index: usize) -> Result<Mlp> {
    let start = r.offset;
    let positive = match r.u8("positive flag")? {
        0 => false,
        1 => true,
        v => return r.fail(format!("net {index}: bad positive flag {v}")),
    };
    let activation = match r.u8("activation")? {
        0 => Activation::Tanh,
        v => return r.fail(format!("net {index}: unknown activation {v}")),
    };
    let final_activation = match r.u8("final activation")? {
        0 => FinalActivation::None,
        1 => FinalActivation::Tanh,
        2 => FinalActivation::Softplus,
        3 => FinalActivation::Softmax,
        v => return r.fail(format!("net {index}: unknown final activation {v}")),
    };
    let dropout = r.f64("dropout")?;
    let n_widths = r.u32("width count")? as usize;
    if n_widths == 0 || n_widths > 1 << 16 {
        return r.fail(format!("net {index}: implausible width count {n_widths}"));
    }
    let widths = (0..n_widths)
        .map(|_| r.u32("width").map(|w| w as usize))
        .collect::<Result<Vec<_>>>()?;
    let spec = MlpSpec {
        widths,
        activation,
        dropout,
        final_activation,
    };
    if let Err(e) = spec.validate() {
        return r.fail(format!("net {index}: {e}"));
    }
    let n_params = spec.param_count();
    if r.offset + 8 * n_params > r.bytes.len() {
        return r.fail(format!("net {index}: truncated parameters"));
    }
    let params = r.f64s(n_params, "parameters")?;
    let mut it = params.into_iter();
    let layers = spec
        .widths
        .windows(2)
        .map(|w| {
            let (i, o) = (w[0], w[1]);
            let weights: Vec<f64> = it.by_ref().take(i * o).collect();
            let biases: Vec<f64> = it.by_ref().take(o).collect();
            if positive {
                Layer::Positive(PositiveDenseLayer {
                    in_dim: i,
                    out_dim: o,
                    raw_weights: weights,
                    biases,
                })
            } else {
                Layer::Dense(DenseLayer {
                    in_dim: i,
                    out_dim: o,
                    weights,
                    biases,
                })
            }
        })
        .collect();
    Mlp::from_layers(spec, layers).map_err(|e| NfgError::Parse {
        offset: start,
        message: format!("net {index}: {e}"),
    })
}

pub fn checkpoint_save(model: &NfgModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| NfgError::io(path, e))
}

pub fn checkpoint_load(path: impl AsRef<Path>) -> Result<NfgModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| NfgError::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(variant: Variant) -> NfgModel {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut m = NfgModel::new(
            variant,
            2,
            4,
            Architecture {
                layers: 2,
                nodes: 5,
                dropout: 0.25,
            },
            &mut rng,
        )
        .unwrap();
        m.set_t_scale(12.5).unwrap();
        m.set_standardization(vec![0.1, 0.2, -0.3, 1e-300], vec![1.0, 2.0, 0.5, 3.0])
            .unwrap();
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for v in [Variant::Nfg, Variant::MonoFg, Variant::CauseSpecific] {
            let m = sample(v);
            let bytes = encode_checkpoint(&m);
            let back = decode_checkpoint(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(encode_checkpoint(&back), bytes);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.nfg");
        let m = sample(Variant::Nfg);
        checkpoint_save(&m, &path).unwrap();
        let back = checkpoint_load(&path).unwrap();
        checkpoint_save(&back, dir.path().join("m2.nfg")).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(dir.path().join("m2.nfg")).unwrap()
        );
    }

    #[test]
    fn declared_risks_must_match_nets() {
        let m = sample(Variant::Nfg);
        let mut bytes = encode_checkpoint(&m);
        // risks field sits after magic, version and the variant tag
        bytes[9..13].copy_from_slice(&3u32.to_le_bytes());
        match decode_checkpoint(&bytes) {
            Err(NfgError::Parse { offset, .. }) => assert!(offset > 13),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_version() {
        let mut bytes = encode_checkpoint(&sample(Variant::Nfg));
        bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
        assert!(matches!(decode_checkpoint(&bytes), Err(NfgError::UnsupportedVersion(9))));
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        assert!(matches!(
            decode_checkpoint(b"NOPE"),
            Err(NfgError::Parse { offset: 0, .. })
        ));
        let bytes = encode_checkpoint(&sample(Variant::MonoFg));
        let cut = bytes.len() - 3;
        match decode_checkpoint(&bytes[..cut]) {
            Err(NfgError::Parse { offset, .. }) => assert!(offset <= cut),
            other => panic!("expected parse error, got {other:?}"),
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_checkpoint(&extra), Err(NfgError::Parse { .. })));
    }
}
