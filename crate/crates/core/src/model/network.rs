//! Two-layer super-resolution networks and their execution strategies.
//!
//! Both variants are a 5x5 spiking convolution followed by a 2x2 stride-2
//! spiking transposed convolution. The second layer's drive also receives the
//! first layer's input PSP, bilinearly upsampled to output resolution.
//!
//! * `dual_layer` sees both polarities at once (2 -> 8 -> 2 channels).
//! * `ultralight` is single-channel (1 -> 8 -> 1) and runs once per polarity
//!   with shared weights, either sequentially or on two threads.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bilinear::bilinear_upsample_2x;
use super::layer::{spiking_layer, LayerCache, LayerConfig, LayerKind, LayerWeights};
use crate::error::{Error, Result};
use crate::events::voxel::{merge_polarity, split_polarity, SpikeTensor};
use crate::srm::{NeuronConfig, SpikeFn};
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    DualLayer,
    Ultralight,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::DualLayer => "dual_layer",
            Variant::Ultralight => "ultralight",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual_layer" => Ok(Variant::DualLayer),
            "ultralight" => Ok(Variant::Ultralight),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecMode {
    /// One pass over the polarity-paired input.
    Joint,
    /// ON pass, then OFF pass, on the calling thread.
    DualSequential,
    /// ON and OFF passes on separate threads, joined before merging.
    DualConcurrent,
}

impl ExecMode {
    pub fn name(self) -> &'static str {
        match self {
            ExecMode::Joint => "joint",
            ExecMode::DualSequential => "dual_sequential",
            ExecMode::DualConcurrent => "dual_concurrent",
        }
    }

    pub fn is_dual(self) -> bool {
        !matches!(self, ExecMode::Joint)
    }
}

impl fmt::Display for ExecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExecMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(ExecMode::Joint),
            "dual_sequential" => Ok(ExecMode::DualSequential),
            "dual_concurrent" => Ok(ExecMode::DualConcurrent),
            other => Err(Error::Config(format!("unknown execution mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub variant: Variant,
    /// Spiking conv, then spiking transposed conv.
    pub layers: Vec<LayerConfig>,
    pub neurons: Vec<NeuronConfig>,
    pub scale: usize,
    pub dt_ms: f64,
}

impl NetworkSpec {
    pub fn dual_layer() -> Self {
        Self::with_channels(Variant::DualLayer, 2)
    }

    pub fn ultralight() -> Self {
        Self::with_channels(Variant::Ultralight, 1)
    }

    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::DualLayer => Self::dual_layer(),
            Variant::Ultralight => Self::ultralight(),
        }
    }

    fn with_channels(variant: Variant, io: usize) -> Self {
        NetworkSpec {
            variant,
            layers: vec![
                LayerConfig {
                    kind: LayerKind::Conv,
                    in_channels: io,
                    out_channels: 8,
                    kernel_h: 5,
                    kernel_w: 5,
                    stride: 1,
                    padding: 2,
                },
                LayerConfig {
                    kind: LayerKind::TransposedConv,
                    in_channels: 8,
                    out_channels: io,
                    kernel_h: 2,
                    kernel_w: 2,
                    stride: 2,
                    padding: 0,
                },
            ],
            neurons: vec![NeuronConfig::CONV, NeuronConfig::UPCONV],
            scale: 2,
            dt_ms: 1.0,
        }
    }

    /// Channels the network consumes and produces per pass.
    pub fn io_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn default_mode(&self) -> ExecMode {
        match self.variant {
            Variant::DualLayer => ExecMode::Joint,
            Variant::Ultralight => ExecMode::DualSequential,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() != 2 || self.neurons.len() != 2 {
            return Err(Error::Config(format!(
                "expected 2 layers and 2 neuron configs, found {} and {}",
                self.layers.len(),
                self.neurons.len()
            )));
        }
        let (conv, up) = (&self.layers[0], &self.layers[1]);
        conv.validate()?;
        up.validate()?;
        let io = match self.variant {
            Variant::DualLayer => 2,
            Variant::Ultralight => 1,
        };
        let geometry_ok = conv.kind == LayerKind::Conv
            && up.kind == LayerKind::TransposedConv
            && conv.in_channels == io
            && up.out_channels == io
            && conv.out_channels == up.in_channels
            && conv.stride == 1
            && conv.kernel_h == 2 * conv.padding + 1
            && conv.kernel_w == 2 * conv.padding + 1
            && up.kernel_h == 2
            && up.kernel_w == 2
            && up.stride == 2
            && up.padding == 0;
        if !geometry_ok || self.scale != 2 {
            return Err(Error::Config(format!(
                "layers do not form a 2x {} network: {:?}",
                self.variant, self.layers
            )));
        }
        for n in &self.neurons {
            n.validate()?;
        }
        if !(self.dt_ms > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt_ms)));
        }
        Ok(())
    }

    pub fn check_mode(&self, mode: ExecMode) -> Result<()> {
        match (self.variant, mode.is_dual()) {
            (Variant::DualLayer, false) | (Variant::Ultralight, true) => Ok(()),
            _ => Err(Error::Config(format!(
                "variant {} cannot run in mode {}",
                self.variant, mode
            ))),
        }
    }
}

/// Synaptic weights of every layer, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub layers: Vec<LayerWeights>,
}

impl NetworkWeights {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        NetworkWeights {
            layers: spec.layers.iter().map(LayerWeights::zeros).collect(),
        }
    }

    /// Seeded uniform initialisation, `b = v_th / fan_in` per layer.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NetworkWeights {
            layers: spec
                .layers
                .iter()
                .zip(&spec.neurons)
                .map(|(l, n)| LayerWeights::uniform(l, n.v_th, &mut rng))
                .collect(),
        }
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len()
            || !self.layers.iter().zip(&spec.layers).all(|(w, l)| w.matches(l))
        {
            return Err(Error::Shape("weights do not match network layers".to_string()));
        }
        if self.layers.iter().flat_map(|l| &l.data).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network weight".to_string()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.data.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} values for {} weights",
                flat.len(),
                self.param_count()
            )));
        }
        let mut rest = flat;
        for l in &mut self.layers {
            let (head, tail) = rest.split_at(l.data.len());
            l.data.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }
}

/// Learnable parameter count (no biases).
pub fn count_params(spec: &NetworkSpec) -> usize {
    spec.layers.iter().map(LayerConfig::weight_count).sum()
}

/// Multiply-accumulate FLOPs of the convolution layers over a `h x w x t`
/// input, `2 * kH * kW * C_in * C_out * H_out * W_out * T` per layer. Dual
/// variants run the single-channel network twice.
pub fn count_flops(spec: &NetworkSpec, h: usize, w: usize, t: usize) -> u64 {
    let (mut h, mut w) = (h, w);
    let mut per_pass = 0u64;
    for l in &spec.layers {
        let (oh, ow) = l.output_hw(h, w).unwrap_or((0, 0));
        per_pass += 2
            * (l.kernel_h * l.kernel_w * l.in_channels * l.out_channels) as u64
            * (oh * ow) as u64
            * t as u64;
        (h, w) = (oh, ow);
    }
    let passes = match spec.variant {
        Variant::DualLayer => 1,
        Variant::Ultralight => 2,
    };
    per_pass * passes
}

/// Activations of one pass through the network.
#[derive(Debug, Clone, PartialEq)]
pub struct PassCache {
    pub conv: LayerCache,
    pub upconv: LayerCache,
    /// Upsampled input PSP added to the transposed-conv drive.
    pub bypass: Tensor4,
}

impl PassCache {
    pub fn output(&self) -> &SpikeTensor {
        &self.upconv.spikes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCaches {
    pub mode: ExecMode,
    pub spike_fn: SpikeFn,
    /// One entry for joint mode; ON then OFF for dual modes.
    pub passes: Vec<PassCache>,
}

/// Forward pass with hard spikes.
pub fn forward(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    input: &SpikeTensor,
    mode: ExecMode,
) -> Result<(SpikeTensor, ForwardCaches)> {
    forward_with(spec, weights, input, mode, SpikeFn::Hard)
}

pub fn forward_with(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    input: &SpikeTensor,
    mode: ExecMode,
    spike_fn: SpikeFn,
) -> Result<(SpikeTensor, ForwardCaches)> {
    spec.validate()?;
    spec.check_mode(mode)?;
    weights.validate(spec)?;
    if input.shape().c != 2 {
        return Err(Error::Shape(format!(
            "network input must be polarity-paired, found {} channels",
            input.shape().c
        )));
    }

    let passes = match mode {
        ExecMode::Joint => vec![run_pass(spec, weights, input, spike_fn)?],
        ExecMode::DualSequential => {
            let (pos, neg) = split_polarity(input)?;
            vec![
                run_pass(spec, weights, &pos, spike_fn)?,
                run_pass(spec, weights, &neg, spike_fn)?,
            ]
        }
        ExecMode::DualConcurrent => {
            let (pos, neg) = split_polarity(input)?;
            let (p, n) = std::thread::scope(|scope| {
                let neg_pass = scope.spawn(|| run_pass(spec, weights, &neg, spike_fn));
                let p = run_pass(spec, weights, &pos, spike_fn);
                let n = neg_pass.join().expect("OFF-polarity pass panicked");
                (p, n)
            });
            vec![p?, n?]
        }
    };

    let output = match passes.as_slice() {
        [joint] => joint.output().clone(),
        [pos, neg] => merge_polarity(pos.output(), neg.output())?,
        _ => unreachable!("one or two passes"),
    };
    Ok((
        output,
        ForwardCaches {
            mode,
            spike_fn,
            passes,
        },
    ))
}

fn run_pass(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    input: &SpikeTensor,
    spike_fn: SpikeFn,
) -> Result<PassCache> {
    let dt = input.dt_ms();
    let conv = spiking_layer(
        input,
        dt,
        &weights.layers[0],
        &spec.layers[0],
        &spec.neurons[0],
        None,
        spike_fn,
    )?;
    let bypass = bilinear_upsample_2x(&conv.psp);
    let upconv = spiking_layer(
        &conv.spikes,
        dt,
        &weights.layers[1],
        &spec.layers[1],
        &spec.neurons[1],
        Some(&bypass),
        spike_fn,
    )?;
    Ok(PassCache {
        conv,
        upconv,
        bypass,
    })
}
