//! Spiking convolution and transposed-convolution layers.
//!
//! Both layer kinds are a spatial linear map applied identically at every
//! time step. The map is described once as a list of pixel "taps" linking an
//! input pixel to an output pixel through one kernel position; forward,
//! input-adjoint and weight-gradient passes all walk the same taps.

use rand::Rng;

use crate::error::{Error, Result};
use crate::events::voxel::SpikeTensor;
use crate::srm::{self, NeuronConfig, SpikeFn};
use crate::tensor::{Shape4, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    TransposedConv,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::TransposedConv => "transposed_conv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "conv" => Some(LayerKind::Conv),
            "transposed_conv" => Some(LayerKind::TransposedConv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerConfig {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl LayerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0
            || self.out_channels == 0
            || self.kernel_h == 0
            || self.kernel_w == 0
            || self.stride == 0
        {
            return Err(Error::Config(format!("layer sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_h * self.kernel_w
    }

    /// Fan-in used for weight initialisation.
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    /// Output spatial size for an `h x w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let dim = |n: usize, k: usize| -> Option<usize> {
            match self.kind {
                LayerKind::Conv => {
                    let padded = n + 2 * self.padding;
                    padded.checked_sub(k).map(|r| r / self.stride + 1)
                }
                LayerKind::TransposedConv => ((n.checked_sub(1)?) * self.stride + k)
                    .checked_sub(2 * self.padding),
            }
        };
        match (dim(h, self.kernel_h), dim(w, self.kernel_w)) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok((oh, ow)),
            _ => Err(Error::Shape(format!(
                "{}x{} input incompatible with {} kernel {}x{} stride {} pad {}",
                h,
                w,
                self.kind.name(),
                self.kernel_h,
                self.kernel_w,
                self.stride,
                self.padding
            ))),
        }
    }

    /// Every `(kernel offset, input pixel, output pixel)` link of the map.
    fn taps(&self, in_hw: (usize, usize), out_hw: (usize, usize)) -> Vec<Tap> {
        let (ih, iw) = (in_hw.0 as isize, in_hw.1 as isize);
        let (oh, ow) = (out_hw.0 as isize, out_hw.1 as isize);
        let s = self.stride as isize;
        let p = self.padding as isize;
        let mut taps = Vec::new();
        for ky in 0..self.kernel_h {
            for kx in 0..self.kernel_w {
                let (dy, dx) = (ky as isize - p, kx as isize - p);
                match self.kind {
                    LayerKind::Conv => {
                        for yo in 0..oh {
                            let yi = yo * s + dy;
                            if !(0..ih).contains(&yi) {
                                continue;
                            }
                            for xo in 0..ow {
                                let xi = xo * s + dx;
                                if (0..iw).contains(&xi) {
                                    taps.push(Tap::new(ky, kx, yi, xi, yo, xo));
                                }
                            }
                        }
                    }
                    LayerKind::TransposedConv => {
                        for yi in 0..ih {
                            let yo = yi * s + dy;
                            if !(0..oh).contains(&yo) {
                                continue;
                            }
                            for xi in 0..iw {
                                let xo = xi * s + dx;
                                if (0..ow).contains(&xo) {
                                    taps.push(Tap::new(ky, kx, yi, xi, yo, xo));
                                }
                            }
                        }
                    }
                }
            }
        }
        taps
    }
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    ky: usize,
    kx: usize,
    yi: usize,
    xi: usize,
    yo: usize,
    xo: usize,
}

impl Tap {
    fn new(ky: usize, kx: usize, yi: isize, xi: isize, yo: isize, xo: isize) -> Self {
        Tap {
            ky,
            kx,
            yi: yi as usize,
            xi: xi as usize,
            yo: yo as usize,
            xo: xo as usize,
        }
    }
}

/// Bias-free synaptic weights laid out `[out, in, kh, kw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub data: Vec<f64>,
}

impl LayerWeights {
    pub fn zeros(cfg: &LayerConfig) -> Self {
        LayerWeights {
            out_channels: cfg.out_channels,
            in_channels: cfg.in_channels,
            kernel_h: cfg.kernel_h,
            kernel_w: cfg.kernel_w,
            data: vec![0.0; cfg.weight_count()],
        }
    }

    pub fn from_vec(cfg: &LayerConfig, data: Vec<f64>) -> Result<Self> {
        if data.len() != cfg.weight_count() {
            return Err(Error::Shape(format!(
                "{} weights for a layer needing {}",
                data.len(),
                cfg.weight_count()
            )));
        }
        Ok(LayerWeights {
            data,
            ..Self::zeros(cfg)
        })
    }

    /// Uniform in `[-b, b]` with `b = v_th / fan_in`.
    pub fn uniform(cfg: &LayerConfig, v_th: f64, rng: &mut impl Rng) -> Self {
        let bound = v_th / cfg.fan_in() as f64;
        let data = (0..cfg.weight_count())
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        LayerWeights {
            data,
            ..Self::zeros(cfg)
        }
    }

    #[inline]
    pub fn index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel_h + ky) * self.kernel_w + kx
    }

    #[inline]
    pub fn get(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.data[self.index(o, i, ky, kx)]
    }

    pub fn matches(&self, cfg: &LayerConfig) -> bool {
        self.out_channels == cfg.out_channels
            && self.in_channels == cfg.in_channels
            && self.kernel_h == cfg.kernel_h
            && self.kernel_w == cfg.kernel_w
            && self.data.len() == cfg.weight_count()
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check_weights(cfg: &LayerConfig, weights: &LayerWeights) -> Result<()> {
    cfg.validate()?;
    if !weights.matches(cfg) {
        return Err(Error::Shape(format!(
            "weights [{}, {}, {}, {}] do not match layer {cfg:?}",
            weights.out_channels, weights.in_channels, weights.kernel_h, weights.kernel_w
        )));
    }
    Ok(())
}

/// Spatial map of the layer applied at every time step (no spiking).
pub fn linear_forward(cfg: &LayerConfig, weights: &LayerWeights, input: &Tensor4) -> Result<Tensor4> {
    check_weights(cfg, weights)?;
    let s = input.shape();
    if s.c != cfg.in_channels {
        return Err(Error::Shape(format!(
            "layer expects {} input channels, found {}",
            cfg.in_channels, s.c
        )));
    }
    let (oh, ow) = cfg.output_hw(s.h, s.w)?;
    let mut out = Tensor4::zeros(Shape4::new(cfg.out_channels, oh, ow, s.t));
    let taps = cfg.taps((s.h, s.w), (oh, ow));
    for co in 0..cfg.out_channels {
        for ci in 0..cfg.in_channels {
            for tap in &taps {
                let w = weights.get(co, ci, tap.ky, tap.kx);
                if w == 0.0 {
                    continue;
                }
                axpy(w, input.series(ci, tap.yi, tap.xi), out.series_mut(co, tap.yo, tap.xo));
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`linear_forward`] with respect to its input.
pub fn linear_adjoint(
    cfg: &LayerConfig,
    weights: &LayerWeights,
    grad_out: &Tensor4,
    in_shape: Shape4,
) -> Result<Tensor4> {
    check_weights(cfg, weights)?;
    let (oh, ow) = cfg.output_hw(in_shape.h, in_shape.w)?;
    grad_out.expect_shape(Shape4::new(cfg.out_channels, oh, ow, in_shape.t))?;
    let mut grad_in = Tensor4::zeros(in_shape);
    let taps = cfg.taps((in_shape.h, in_shape.w), (oh, ow));
    for co in 0..cfg.out_channels {
        for ci in 0..cfg.in_channels {
            for tap in &taps {
                let w = weights.get(co, ci, tap.ky, tap.kx);
                axpy(w, grad_out.series(co, tap.yo, tap.xo), grad_in.series_mut(ci, tap.yi, tap.xi));
            }
        }
    }
    Ok(grad_in)
}

/// Gradient of `<grad_out, linear_forward(W, input)>` with respect to `W`.
pub fn linear_weight_grad(cfg: &LayerConfig, input: &Tensor4, grad_out: &Tensor4) -> Result<LayerWeights> {
    cfg.validate()?;
    let s = input.shape();
    let (oh, ow) = cfg.output_hw(s.h, s.w)?;
    grad_out.expect_shape(Shape4::new(cfg.out_channels, oh, ow, s.t))?;
    let mut grad = LayerWeights::zeros(cfg);
    let taps = cfg.taps((s.h, s.w), (oh, ow));
    for co in 0..cfg.out_channels {
        for ci in 0..cfg.in_channels {
            for tap in &taps {
                let i = grad.index(co, ci, tap.ky, tap.kx);
                grad.data[i] += dot(grad_out.series(co, tap.yo, tap.xo), input.series(ci, tap.yi, tap.xi));
            }
        }
    }
    Ok(grad)
}

/// Everything a spiking layer computed, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    /// PSP of the layer input.
    pub psp: Tensor4,
    /// Synaptic drive (plus bypass, if any) before refractory feedback.
    pub drive: Tensor4,
    pub membrane: Tensor4,
    pub spikes: SpikeTensor,
}

pub(crate) fn spiking_layer(
    in_spikes: &Tensor4,
    dt: f64,
    weights: &LayerWeights,
    layer: &LayerConfig,
    neuron: &NeuronConfig,
    bypass: Option<&Tensor4>,
    mode: SpikeFn,
) -> Result<LayerCache> {
    neuron.validate()?;
    let steps = in_spikes.shape().t;
    let eps = srm::spike_kernel(neuron.tau_s, dt, srm::kernel_len(neuron.tau_s, dt, steps));
    let psp = srm::apply_psp(in_spikes, &eps);
    let mut drive = linear_forward(layer, weights, &psp)?;
    if let Some(b) = bypass {
        drive.add_assign(b).map_err(|e| Error::Shape(format!("bypass: {e}")))?;
    }
    let out = srm::generate_spikes(&drive, neuron, dt, mode);
    Ok(LayerCache {
        psp,
        drive,
        membrane: out.membrane,
        spikes: out.spikes,
    })
}

/// PSP, spatial convolution, then spike generation.
pub fn spiking_conv_forward(
    in_spikes: &SpikeTensor,
    weights: &LayerWeights,
    layer: &LayerConfig,
    neuron: &NeuronConfig,
    mode: SpikeFn,
) -> Result<(SpikeTensor, LayerCache)> {
    let cache = spiking_layer(in_spikes, in_spikes.dt_ms(), weights, layer, neuron, None, mode)?;
    Ok((cache.spikes.clone(), cache))
}

/// PSP, transposed convolution, optional additive bypass, then spikes.
pub fn spiking_upconv_forward(
    in_spikes: &SpikeTensor,
    weights: &LayerWeights,
    layer: &LayerConfig,
    neuron: &NeuronConfig,
    bypass: Option<&Tensor4>,
    mode: SpikeFn,
) -> Result<(SpikeTensor, LayerCache)> {
    let cache = spiking_layer(in_spikes, in_spikes.dt_ms(), weights, layer, neuron, bypass, mode)?;
    Ok((cache.spikes.clone(), cache))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(cin: usize, cout: usize, k: usize, s: usize, p: usize) -> LayerConfig {
        LayerConfig {
            kind: LayerKind::Conv,
            in_channels: cin,
            out_channels: cout,
            kernel_h: k,
            kernel_w: k,
            stride: s,
            padding: p,
        }
    }

    #[test]
    fn output_geometry() {
        assert_eq!(conv(2, 8, 5, 1, 2).output_hw(16, 12).unwrap(), (16, 12));
        assert_eq!(conv(1, 1, 3, 2, 0).output_hw(7, 7).unwrap(), (3, 3));
        let up = LayerConfig {
            kind: LayerKind::TransposedConv,
            ..conv(8, 2, 2, 2, 0)
        };
        assert_eq!(up.output_hw(17, 5).unwrap(), (34, 10));
        assert!(conv(1, 1, 5, 1, 0).output_hw(3, 3).is_err());
    }

    #[test]
    fn transposed_taps_cover_each_output_once_for_k2_s2() {
        let up = LayerConfig {
            kind: LayerKind::TransposedConv,
            ..conv(1, 1, 2, 2, 0)
        };
        let taps = up.taps((3, 4), (6, 8));
        assert_eq!(taps.len(), 48);
        let mut seen = vec![0; 48];
        for t in &taps {
            seen[t.yo * 8 + t.xo] += 1;
        }
        assert!(seen.iter().all(|&n| n == 1));
    }

    #[test]
    fn adjoint_matches_forward_inner_product() {
        let cfg = conv(2, 3, 3, 1, 1);
        let w = LayerWeights::from_vec(&cfg, (0..54).map(|i| ((i * 13) % 7) as f64 - 3.0).collect()).unwrap();
        let x = Tensor4::from_fn(Shape4::new(2, 4, 5, 3), |c, y, x, t| ((c + 2 * y + 3 * x + t) % 5) as f64);
        let g = Tensor4::from_fn(Shape4::new(3, 4, 5, 3), |c, y, x, t| ((3 * c + y + x * t) % 4) as f64 - 1.0);
        let fx = linear_forward(&cfg, &w, &x).unwrap();
        let lhs: f64 = fx.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let at = linear_adjoint(&cfg, &w, &g, x.shape()).unwrap();
        let rhs: f64 = at.data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
        let gw = linear_weight_grad(&cfg, &x, &g).unwrap();
        let via_w: f64 = gw.data.iter().zip(&w.data).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, via_w);
    }

    #[test]
    fn wrong_channel_count_is_shape_error() {
        let cfg = conv(2, 8, 5, 1, 2);
        let w = LayerWeights::zeros(&cfg);
        let x = Tensor4::zeros(Shape4::new(1, 4, 4, 2));
        assert!(matches!(linear_forward(&cfg, &w, &x), Err(Error::Shape(_))));
        let bad = LayerWeights::zeros(&conv(1, 8, 5, 1, 2));
        let x2 = Tensor4::zeros(Shape4::new(2, 4, 4, 2));
        assert!(linear_forward(&cfg, &bad, &x2).is_err());
    }
}
