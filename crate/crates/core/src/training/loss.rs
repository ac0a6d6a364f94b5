//! Learnable spatio-temporal polarity-aware loss.
//!
//! ```text
//! L_T = (1/T) sum_t ||out[.., t] - gt[.., t]||^2
//! L_S = sum_b ||sum_{t in b} out - sum_{t in b} gt||^2
//! L_P = ||out_on - gt_on||^2 + ||out_off - gt_off||^2
//! L   = sum_i w_i L_i + sum_i log(1 / w_i),   w_i = exp(-log_var_i)
//! ```

use crate::error::{Error, Result};
use crate::events::voxel::SpikeTensor;
use crate::metrics::block_steps;
use crate::tensor::Tensor4;

pub const DEFAULT_BIN_WIDTH_MS: f64 = 50.0;

/// Learnable log-variances of the three loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossState {
    /// Temporal, spatial, polarity.
    pub log_var: [f64; 3],
    /// Width of each spatial-loss bin.
    pub bin_width_ms: f64,
}

impl Default for LossState {
    fn default() -> Self {
        LossState {
            log_var: [0.0; 3],
            bin_width_ms: DEFAULT_BIN_WIDTH_MS,
        }
    }
}

impl LossState {
    pub fn weights(&self) -> [f64; 3] {
        self.log_var.map(|lv| (-lv).exp())
    }

    /// Number of spatial bins `ceil(T * dt / bin_width)`.
    pub fn bin_count(&self, steps: usize, dt_ms: f64) -> Result<usize> {
        Ok(steps.div_ceil(block_steps(self.bin_width_ms, dt_ms)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub temporal: f64,
    pub spatial: f64,
    pub polarity: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn terms(&self) -> [f64; 3] {
        [self.temporal, self.spatial, self.polarity]
    }
}

fn check_pair(out: &SpikeTensor, gt: &SpikeTensor) -> Result<()> {
    out.expect_shape(gt.shape())?;
    if out.dt_ms() != gt.dt_ms() {
        return Err(Error::Shape(format!(
            "bin widths differ: {} vs {} ms",
            out.dt_ms(),
            gt.dt_ms()
        )));
    }
    Ok(())
}

fn check_polarity(out: &SpikeTensor) -> Result<()> {
    if out.shape().c != 2 {
        return Err(Error::Shape(format!(
            "polarity loss needs 2 channels, found {}",
            out.shape().c
        )));
    }
    Ok(())
}

fn squared_norm_diff(out: &Tensor4, gt: &Tensor4) -> f64 {
    out.data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

pub fn loss_temporal(out: &SpikeTensor, gt: &SpikeTensor) -> Result<f64> {
    check_pair(out, gt)?;
    Ok(squared_norm_diff(out, gt) / out.shape().t.max(1) as f64)
}

pub fn loss_spatial(out: &SpikeTensor, gt: &SpikeTensor, state: &LossState) -> Result<f64> {
    check_pair(out, gt)?;
    let block = block_steps(state.bin_width_ms, out.dt_ms())?;
    let mut total = 0.0;
    for (o, g) in out.neurons().zip(gt.neurons()) {
        for (ob, gb) in o.chunks(block).zip(g.chunks(block)) {
            let d = ob.iter().sum::<f64>() - gb.iter().sum::<f64>();
            total += d * d;
        }
    }
    Ok(total)
}

pub fn loss_polarity(out: &SpikeTensor, gt: &SpikeTensor) -> Result<f64> {
    check_pair(out, gt)?;
    check_polarity(out)?;
    let on = squared_norm_diff(&out.channel(0), &gt.channel(0));
    let off = squared_norm_diff(&out.channel(1), &gt.channel(1));
    Ok(on + off)
}

pub fn loss_total(out: &SpikeTensor, gt: &SpikeTensor, state: &LossState) -> Result<LossBreakdown> {
    let temporal = loss_temporal(out, gt)?;
    let spatial = loss_spatial(out, gt, state)?;
    let polarity = loss_polarity(out, gt)?;
    Ok(combine([temporal, spatial, polarity], state))
}

fn combine(terms: [f64; 3], state: &LossState) -> LossBreakdown {
    let w = state.weights();
    let total = (0..3).map(|i| w[i] * terms[i] + state.log_var[i]).sum();
    LossBreakdown {
        temporal: terms[0],
        spatial: terms[1],
        polarity: terms[2],
        total,
    }
}

/// `d total / d log_var_i = 1 - w_i * L_i`.
pub fn log_var_grad(terms: [f64; 3], state: &LossState) -> [f64; 3] {
    let w = state.weights();
    [0, 1, 2].map(|i| 1.0 - w[i] * terms[i])
}

/// Loss value plus its gradient with respect to `out` and the log-variances.
pub fn loss_with_grad(
    out: &SpikeTensor,
    gt: &SpikeTensor,
    state: &LossState,
) -> Result<(LossBreakdown, Tensor4, [f64; 3])> {
    check_pair(out, gt)?;
    check_polarity(out)?;
    let breakdown = loss_total(out, gt, state)?;
    let [w_t, w_s, w_p] = state.weights();
    let steps = out.shape().t.max(1);
    let block = block_steps(state.bin_width_ms, out.dt_ms())?;

    let mut grad = Tensor4::zeros(out.shape());
    let pointwise = 2.0 * (w_t / steps as f64 + w_p);
    for ((o, g), d) in out.neurons().zip(gt.neurons()).zip(grad.neurons_mut()) {
        for ((ob, gb), db) in o.chunks(block).zip(g.chunks(block)).zip(d.chunks_mut(block)) {
            let bin_diff = ob.iter().sum::<f64>() - gb.iter().sum::<f64>();
            for ((dv, ov), gv) in db.iter_mut().zip(ob).zip(gb) {
                *dv = pointwise * (ov - gv) + 2.0 * w_s * bin_diff;
            }
        }
    }
    let lv = log_var_grad(breakdown.terms(), state);
    Ok((breakdown, grad, lv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape4;

    fn spikes(shape: Shape4, f: impl FnMut(usize, usize, usize, usize) -> f64) -> SpikeTensor {
        SpikeTensor::new(Tensor4::from_fn(shape, f), 1.0).unwrap()
    }

    #[test]
    fn identical_tensors_zero_loss() {
        let a = spikes(Shape4::new(2, 3, 3, 10), |c, y, x, t| ((c + y * x + t) % 3) as f64);
        let l = loss_total(&a, &a, &LossState::default()).unwrap();
        assert_eq!(l.total, 0.0);
        let (_, g, lv) = loss_with_grad(&a, &a, &LossState::default()).unwrap();
        assert!(g.data().iter().all(|v| *v == 0.0));
        assert_eq!(lv, [1.0; 3]);
    }

    #[test]
    fn temporal_single_voxel_over_two_steps() {
        let a = spikes(Shape4::new(2, 1, 1, 2), |_, _, _, _| 0.0);
        let b = spikes(Shape4::new(2, 1, 1, 2), |c, _, _, t| (c == 0 && t == 1) as u8 as f64);
        assert_eq!(loss_temporal(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn spatial_is_blind_within_a_bin() {
        let a = spikes(Shape4::new(2, 2, 2, 100), |c, y, x, t| (t == 3 + c + y + x) as u8 as f64);
        let b = spikes(Shape4::new(2, 2, 2, 100), |c, y, x, t| (t == 40 - c - y - x) as u8 as f64);
        assert_eq!(loss_spatial(&a, &b, &LossState::default()).unwrap(), 0.0);
        assert!(loss_temporal(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn swapped_channels_are_penalised() {
        let a = spikes(Shape4::new(2, 2, 2, 4), |c, _, _, t| if c == 0 { t as f64 } else { 0.0 });
        let mut swapped = a.channel(1);
        swapped = Tensor4::concat_channels(&[&swapped, &a.channel(0)]).unwrap();
        let b = SpikeTensor::new(swapped, 1.0).unwrap();
        assert!(loss_polarity(&a, &b).unwrap() > 0.0);
        let one = spikes(Shape4::new(1, 2, 2, 4), |_, _, _, _| 0.0);
        assert!(matches!(loss_polarity(&one, &one), Err(Error::Shape(_))));
    }

    #[test]
    fn bin_count_rounds_up() {
        let s = LossState::default();
        assert_eq!(s.bin_count(100, 1.0).unwrap(), 2);
        assert_eq!(s.bin_count(64, 1.0).unwrap(), 2);
        assert_eq!(s.bin_count(50, 1.0).unwrap(), 1);
    }

    #[test]
    fn weights_stay_positive() {
        let s = LossState {
            log_var: [700.0, -700.0, 0.0],
            ..LossState::default()
        };
        assert!(s.weights().iter().all(|w| *w > 0.0));
    }
}
