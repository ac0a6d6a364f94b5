//! Reverse-mode gradients through the spiking network.
//!
//! The chain for one pass, output to input:
//!
//! ```text
//! dL/ds2 -> dL/du2 = dL/ds2 * s'(u2)              (surrogate or soft slope)
//!        -> dW2 via transposed-conv weight grad against PSP(s1)
//!        -> dL/dPSP(s1) via transposed-conv adjoint -> dL/ds1 via PSP adjoint
//!        -> dL/du1 = dL/ds1 * s'(u1) -> dW1 against PSP(input)
//! dL/dPSP(input) = conv adjoint + bilinear adjoint of dL/du2 (bypass)
//! ```
//!
//! Refractory feedback is held constant, so gradients do not flow through a
//! neuron's own spike history. Dual modes sum the per-polarity weight
//! gradients into the shared weights.

use crate::error::{Error, Result};
use crate::events::voxel::SpikeTensor;
use crate::model::bilinear::bilinear_upsample_2x_adjoint;
use crate::model::layer::{linear_adjoint, linear_weight_grad, LayerCache, LayerWeights};
use crate::model::network::{ForwardCaches, NetworkSpec, NetworkWeights, PassCache};
use crate::srm::{self, NeuronConfig, SpikeFn};
use crate::tensor::Tensor4;

use super::loss::{loss_with_grad, LossBreakdown, LossState};

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: NetworkWeights,
    pub log_var: [f64; 3],
    /// Gradient with respect to the network's input spike tensor.
    pub input: Tensor4,
}

/// Loss and gradients for one sample whose forward pass produced `caches`.
pub fn backward(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    caches: &ForwardCaches,
    out: &SpikeTensor,
    gt: &SpikeTensor,
    state: &LossState,
) -> Result<(LossBreakdown, Gradients)> {
    let (loss, grad_out, log_var) = loss_with_grad(out, gt, state)?;
    let (w, input) = backward_from_output(spec, weights, caches, &grad_out)?;
    Ok((
        loss,
        Gradients {
            weights: w,
            log_var,
            input,
        },
    ))
}

/// Pulls an arbitrary output gradient back to weights and input.
pub fn backward_from_output(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    caches: &ForwardCaches,
    grad_out: &Tensor4,
) -> Result<(NetworkWeights, Tensor4)> {
    weights.validate(spec)?;
    let mut grad_w = NetworkWeights::zeros(spec);
    let mut grad_inputs = Vec::with_capacity(caches.passes.len());
    match caches.passes.as_slice() {
        [joint] => {
            grad_inputs.push(backward_pass(spec, weights, joint, grad_out, caches.spike_fn, &mut grad_w)?);
        }
        [pos, neg] => {
            if grad_out.shape().c != 2 {
                return Err(Error::Shape(format!(
                    "dual-forward output gradient needs 2 channels, found {}",
                    grad_out.shape().c
                )));
            }
            for (c, pass) in [pos, neg].into_iter().enumerate() {
                let g = grad_out.channel(c);
                grad_inputs.push(backward_pass(spec, weights, pass, &g, caches.spike_fn, &mut grad_w)?);
            }
        }
        _ => return Err(Error::Shape("forward cache holds no passes".to_string())),
    }
    let refs: Vec<&Tensor4> = grad_inputs.iter().collect();
    Ok((grad_w, Tensor4::concat_channels(&refs)?))
}

/// One polarity (or joint) pass; accumulates into `grad_w`, returns the
/// gradient with respect to that pass's input spikes.
fn backward_pass(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    pass: &PassCache,
    grad_out: &Tensor4,
    spike_fn: SpikeFn,
    grad_w: &mut NetworkWeights,
) -> Result<Tensor4> {
    let (conv, upconv) = (&pass.conv, &pass.upconv);
    grad_out.expect_shape(upconv.spikes.shape())?;
    let dt = upconv.spikes.dt_ms();

    let g_u2 = through_spikes(grad_out, upconv, &spec.neurons[1], spike_fn);
    accumulate(&mut grad_w.layers[1], &linear_weight_grad(&spec.layers[1], &upconv.psp, &g_u2)?);
    let g_psp_mid = linear_adjoint(&spec.layers[1], &weights.layers[1], &g_u2, upconv.psp.shape())?;
    let g_s1 = srm::apply_psp_adjoint(&g_psp_mid, &psp_kernel(&spec.neurons[1], dt, g_psp_mid.shape().t));

    let g_u1 = through_spikes(&g_s1, conv, &spec.neurons[0], spike_fn);
    accumulate(&mut grad_w.layers[0], &linear_weight_grad(&spec.layers[0], &conv.psp, &g_u1)?);
    let mut g_psp_in = linear_adjoint(&spec.layers[0], &weights.layers[0], &g_u1, conv.psp.shape())?;
    g_psp_in.add_assign(&bilinear_upsample_2x_adjoint(&g_u2))?;
    Ok(srm::apply_psp_adjoint(&g_psp_in, &psp_kernel(&spec.neurons[0], dt, g_psp_in.shape().t)))
}

fn psp_kernel(neuron: &NeuronConfig, dt: f64, steps: usize) -> srm::KernelSamples {
    srm::spike_kernel(neuron.tau_s, dt, srm::kernel_len(neuron.tau_s, dt, steps))
}

fn through_spikes(grad: &Tensor4, layer: &LayerCache, neuron: &NeuronConfig, mode: SpikeFn) -> Tensor4 {
    let mut out = grad.clone();
    for ((g, u), s) in out
        .data_mut()
        .iter_mut()
        .zip(layer.membrane.data())
        .zip(layer.spikes.data())
    {
        *g *= srm::spike_derivative(*u, *s, neuron, mode);
    }
    out
}

fn accumulate(into: &mut LayerWeights, from: &LayerWeights) {
    for (a, b) in into.data.iter_mut().zip(&from.data) {
        *a += b;
    }
}
