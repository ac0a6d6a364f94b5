//! Discrete-time Spike Response Model.
//!
//! Membrane potential is the synaptically weighted PSP drive plus the
//! refractory response to the neuron's own past spikes:
//!
//! ```text
//! u[t] = drive[t] + sum_{t_k < t} gamma(t - t_k)
//! eps(t)   = (t / tau_s) * exp(1 - t / tau_s)
//! gamma(t) = -lambda * exp(-t / tau_r)
//! ```
//!
//! A neuron fires when `u[t] >= v_th`. Firing never resets the membrane; the
//! refractory kernel is added from the following step onwards.

use crate::error::{Error, Result};
use crate::events::voxel::SpikeTensor;
use crate::tensor::Tensor4;

/// Kernels are truncated after this many time constants.
pub const KERNEL_SPAN_TAUS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronConfig {
    pub v_th: f64,
    /// Spike-response time constant (ms).
    pub tau_s: f64,
    /// Refractory time constant (ms).
    pub tau_r: f64,
    pub lambda: f64,
    pub tau_rho: f64,
    pub rho: f64,
}

impl NeuronConfig {
    /// Parameters of the spiking convolution layer.
    pub const CONV: NeuronConfig = NeuronConfig {
        v_th: 30.0,
        tau_s: 1.0,
        tau_r: 1.0,
        lambda: 1.0,
        tau_rho: 1.0,
        rho: 10.0,
    };

    /// Parameters of the spiking transposed-convolution layer.
    pub const UPCONV: NeuronConfig = NeuronConfig {
        v_th: 100.0,
        tau_s: 4.0,
        tau_r: 4.0,
        lambda: 1.0,
        tau_rho: 10.0,
        rho: 100.0,
    };

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v_th", self.v_th),
            ("tau_s", self.tau_s),
            ("tau_r", self.tau_r),
            ("tau_rho", self.tau_rho),
            ("rho", self.rho),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Width of the surrogate and soft-spike nonlinearities.
    pub fn surrogate_width(&self) -> f64 {
        self.tau_rho * self.v_th
    }
}

/// Causal kernel sampled at `k * dt` for `k = 0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSamples {
    pub values: Vec<f64>,
    pub dt: f64,
}

impl KernelSamples {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Truncated kernel length for time constant `tau`, capped at `steps`.
pub fn kernel_len(tau: f64, dt: f64, steps: usize) -> usize {
    let n = (KERNEL_SPAN_TAUS * tau / dt).ceil() as usize;
    n.clamp(1, steps.max(1))
}

pub fn spike_kernel(tau_s: f64, dt: f64, length: usize) -> KernelSamples {
    let values = (0..length)
        .map(|k| {
            let r = k as f64 * dt / tau_s;
            r * (1.0 - r).exp()
        })
        .collect();
    KernelSamples { values, dt }
}

pub fn refractory_kernel(tau_r: f64, lambda: f64, dt: f64, length: usize) -> KernelSamples {
    let values = (0..length)
        .map(|k| -lambda * (-(k as f64) * dt / tau_r).exp())
        .collect();
    KernelSamples { values, dt }
}

/// Causal temporal convolution of every neuron's series with `kernel`.
pub fn apply_psp(input: &Tensor4, kernel: &KernelSamples) -> Tensor4 {
    let mut out = Tensor4::zeros(input.shape());
    for (src, dst) in input.neurons().zip(out.neurons_mut()) {
        causal_conv(src, &kernel.values, dst);
    }
    out
}

/// Adjoint of [`apply_psp`]: time-reversed correlation with `kernel`.
pub fn apply_psp_adjoint(grad: &Tensor4, kernel: &KernelSamples) -> Tensor4 {
    let mut out = Tensor4::zeros(grad.shape());
    for (src, dst) in grad.neurons().zip(out.neurons_mut()) {
        let n = src.len();
        for (t, d) in dst.iter_mut().enumerate() {
            let span = kernel.values.len().min(n - t);
            *d = kernel.values[..span]
                .iter()
                .zip(&src[t..t + span])
                .map(|(k, g)| k * g)
                .sum();
        }
    }
    out
}

fn causal_conv(src: &[f64], kernel: &[f64], dst: &mut [f64]) {
    for (t, &s) in src.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        for (d, k) in dst[t..].iter_mut().zip(kernel) {
            *d += k * s;
        }
    }
}

/// How membrane potential turns into output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpikeFn {
    /// Threshold crossing with refractory feedback; trained via the surrogate.
    #[default]
    Hard,
    /// `sigmoid((u - v_th) / (tau_rho * v_th))` without refractory feedback.
    /// Exactly differentiable, used to certify gradients.
    Soft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeOutput {
    pub spikes: SpikeTensor,
    /// Membrane potential including refractory contributions.
    pub membrane: Tensor4,
}

/// Runs the neuron dynamics for every series in `drive`.
pub fn generate_spikes(
    drive: &Tensor4,
    cfg: &NeuronConfig,
    dt: f64,
    mode: SpikeFn,
) -> SpikeOutput {
    let steps = drive.shape().t;
    let mut membrane = drive.clone();
    let mut spikes = Tensor4::zeros(drive.shape());
    match mode {
        SpikeFn::Hard => {
            let gamma = refractory_kernel(cfg.tau_r, cfg.lambda, dt, kernel_len(cfg.tau_r, dt, steps));
            for (u, s) in membrane.neurons_mut().zip(spikes.neurons_mut()) {
                fire_series(u, s, cfg.v_th, &gamma.values);
            }
        }
        SpikeFn::Soft => {
            let width = cfg.surrogate_width();
            for (u, s) in membrane.data().iter().zip(spikes.data_mut()) {
                *s = sigmoid((u - cfg.v_th) / width);
            }
        }
    }
    SpikeOutput {
        spikes: SpikeTensor::from_grid_unchecked(spikes, dt),
        membrane,
    }
}

fn fire_series(u: &mut [f64], s: &mut [f64], v_th: f64, gamma: &[f64]) {
    let n = u.len();
    for t in 0..n {
        if u[t] >= v_th {
            s[t] = 1.0;
            for k in 1..gamma.len().min(n - t) {
                u[t + k] += gamma[k];
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Surrogate derivative of the spike function with respect to membrane
/// potential: a Laplace-shaped bump centred on the threshold.
pub fn surrogate_grad(u: f64, cfg: &NeuronConfig) -> f64 {
    let width = cfg.surrogate_width();
    cfg.rho / width * (-(u - cfg.v_th).abs() / width).exp()
}

/// `ds/du` for either spike function, given the cached membrane and output.
pub fn spike_derivative(u: f64, s: f64, cfg: &NeuronConfig, mode: SpikeFn) -> f64 {
    match mode {
        SpikeFn::Hard => surrogate_grad(u, cfg),
        SpikeFn::Soft => s * (1.0 - s) / cfg.surrogate_width(),
    }
}
