//! `EVSRW01` checkpoint files.
//!
//! ```text
//! EVSRW01
//! variant: ultralight
//! scale: 2
//! dt_ms: 1
//! layer0: conv in=1 out=8 kernel=5x5 stride=1 padding=2
//! layer1: transposed_conv in=8 out=1 kernel=2x2 stride=2 padding=0
//! neuron0: v_th=30 tau_s=1 tau_r=1 lambda=1 tau_rho=1 rho=10
//! neuron1: v_th=100 tau_s=4 tau_r=4 lambda=1 tau_rho=10 rho=100
//! seed: 7
//! steps: 64
//! <blank line>
//! <f64 LE weights, layer order, [out, in, kh, kw]> <3 x f64 LE log-variances>
//! ```
//!
//! Floats in the header use shortest round-trip formatting, so decoding an
//! encoded checkpoint reproduces it bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::layer::{LayerConfig, LayerKind, LayerWeights};
use super::network::{NetworkSpec, NetworkWeights, Variant};
use crate::error::{Error, Result};
use crate::srm::NeuronConfig;

pub const CHECKPOINT_MAGIC: &str = "EVSRW01";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub weights: NetworkWeights,
    /// Log-variances of the temporal, spatial and polarity loss terms.
    pub log_var: [f64; 3],
    pub seed: u64,
    /// Simulation steps used during training, if recorded.
    pub steps: Option<usize>,
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        self.spec.validate()?;
        self.weights.validate(&self.spec)?;
        let mut head = String::new();
        let _ = writeln!(head, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(head, "variant: {}", self.spec.variant);
        let _ = writeln!(head, "scale: {}", self.spec.scale);
        let _ = writeln!(head, "dt_ms: {}", self.spec.dt_ms);
        for (i, l) in self.spec.layers.iter().enumerate() {
            let _ = writeln!(
                head,
                "layer{i}: {} in={} out={} kernel={}x{} stride={} padding={}",
                l.kind.name(),
                l.in_channels,
                l.out_channels,
                l.kernel_h,
                l.kernel_w,
                l.stride,
                l.padding
            );
        }
        for (i, n) in self.spec.neurons.iter().enumerate() {
            let _ = writeln!(
                head,
                "neuron{i}: v_th={} tau_s={} tau_r={} lambda={} tau_rho={} rho={}",
                n.v_th, n.tau_s, n.tau_r, n.lambda, n.tau_rho, n.rho
            );
        }
        let _ = writeln!(head, "seed: {}", self.seed);
        if let Some(steps) = self.steps {
            let _ = writeln!(head, "steps: {steps}");
        }
        head.push('\n');

        let mut out = head.into_bytes();
        for v in self.weights.layers.iter().flat_map(|l| &l.data).chain(&self.log_var) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| Error::Format("checkpoint header not terminated".to_string()))?;
        let head = std::str::from_utf8(&bytes[..split])
            .map_err(|e| Error::Parse {
                offset: e.valid_up_to() as u64,
                message: "checkpoint header is not UTF-8".to_string(),
            })?;
        let body = &bytes[split + 2..];

        let mut lines = head.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(Error::Parse {
                offset: 0,
                message: format!("missing {CHECKPOINT_MAGIC} magic"),
            });
        }
        let mut fields = BTreeMap::new();
        for line in lines {
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| Error::Format(format!("bad header line '{line}'")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Format(format!("checkpoint header lacks '{k}'")))
        };

        let variant: Variant = get("variant")?.parse()?;
        let scale = parse_num(get("scale")?, "scale")?;
        let dt_ms = parse_num(get("dt_ms")?, "dt_ms")?;
        let layers = (0..2)
            .map(|i| parse_layer(get(&format!("layer{i}"))?))
            .collect::<Result<Vec<_>>>()?;
        let neurons = (0..2)
            .map(|i| parse_neuron(get(&format!("neuron{i}"))?))
            .collect::<Result<Vec<_>>>()?;
        let seed = parse_num(get("seed")?, "seed")?;
        let steps = fields
            .get("steps")
            .map(|s| parse_num(s, "steps"))
            .transpose()?;
        let spec = NetworkSpec {
            variant,
            layers,
            neurons,
            scale,
            dt_ms,
        };
        spec.validate()?;

        let n_weights: usize = spec.layers.iter().map(LayerConfig::weight_count).sum();
        let expected = (n_weights + 3) * 8;
        if body.len() != expected {
            return Err(Error::Parse {
                offset: (split + 2 + body.len().min(expected)) as u64,
                message: format!("expected {expected} payload bytes, found {}", body.len()),
            });
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let weights = NetworkWeights {
            layers: spec
                .layers
                .iter()
                .map(|l| LayerWeights::from_vec(l, values.by_ref().take(l.weight_count()).collect()))
                .collect::<Result<_>>()?,
        };
        let log_var = [
            values.next().expect("length checked"),
            values.next().expect("length checked"),
            values.next().expect("length checked"),
        ];
        weights.validate(&spec)?;
        Ok(Checkpoint {
            spec,
            weights,
            log_var,
            seed,
            steps,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Format(format!("bad {what} value '{s}'")))
}

fn key_values(s: &str) -> BTreeMap<&str, &str> {
    s.split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .collect()
}

fn parse_layer(s: &str) -> Result<LayerConfig> {
    let kind_str = s.split_whitespace().next().unwrap_or("");
    let kind = LayerKind::parse(kind_str)
        .ok_or_else(|| Error::Format(format!("unknown layer kind '{kind_str}'")))?;
    let kv = key_values(s);
    let field = |k: &str| -> Result<&str> {
        kv.get(k)
            .copied()
            .ok_or_else(|| Error::Format(format!("layer line lacks '{k}': {s}")))
    };
    let (kh, kw) = field("kernel")?
        .split_once('x')
        .ok_or_else(|| Error::Format(format!("bad kernel size in '{s}'")))?;
    Ok(LayerConfig {
        kind,
        in_channels: parse_num(field("in")?, "in")?,
        out_channels: parse_num(field("out")?, "out")?,
        kernel_h: parse_num(kh, "kernel height")?,
        kernel_w: parse_num(kw, "kernel width")?,
        stride: parse_num(field("stride")?, "stride")?,
        padding: parse_num(field("padding")?, "padding")?,
    })
}

fn parse_neuron(s: &str) -> Result<NeuronConfig> {
    let kv = key_values(s);
    let field = |k: &str| -> Result<f64> {
        let v = kv
            .get(k)
            .ok_or_else(|| Error::Format(format!("neuron line lacks '{k}': {s}")))?;
        parse_num(v, k)
    };
    Ok(NeuronConfig {
        v_th: field("v_th")?,
        tau_s: field("tau_s")?,
        tau_r: field("tau_r")?,
        lambda: field("lambda")?,
        tau_rho: field("tau_rho")?,
        rho: field("rho")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let spec = NetworkSpec::ultralight();
        let weights = NetworkWeights::init(&spec, 21);
        Checkpoint {
            spec,
            weights,
            log_var: [0.1, -std::f64::consts::LN_2, 1e-300],
            seed: 21,
            steps: Some(64),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.encode().unwrap();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode().unwrap(), bytes);
        assert!(bytes.starts_with(b"EVSRW01\nvariant: ultralight\n"));
    }

    #[test]
    fn payload_length_matches_param_count() {
        let bytes = sample().encode().unwrap();
        let split = bytes.windows(2).position(|w| w == b"\n\n").unwrap();
        assert_eq!(bytes.len() - split - 2, (232 + 3) * 8);
    }

    #[test]
    fn truncated_payload_rejected() {
        let bytes = sample().encode().unwrap();
        assert!(matches!(
            Checkpoint::decode(&bytes[..bytes.len() - 1]),
            Err(Error::Parse { .. })
        ));
        assert!(Checkpoint::decode(b"EVSRW02\n\n").is_err());
    }

    #[test]
    fn tampered_architecture_rejected() {
        let text = String::from_utf8_lossy(&sample().encode().unwrap()).into_owned();
        let bad = text.replacen("stride=2", "stride=3", 1);
        assert!(Checkpoint::decode(bad.as_bytes()).is_err());
    }
}
