//! Conversion between event streams and dense spike tensors.

use std::ops::Deref;

use super::{Event, EventStream, Polarity};
use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

/// Non-negative `[C, H, W, T]` spike counts with bin width `dt_ms`.
///
/// Channel 0 carries ON events and channel 1 OFF events for polarity-paired
/// tensors; single-channel tensors carry one polarity.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTensor {
    grid: Tensor4,
    dt_ms: f64,
}

impl SpikeTensor {
    pub fn new(grid: Tensor4, dt_ms: f64) -> Result<Self> {
        if !(dt_ms > 0.0) {
            return Err(Error::Config(format!("bin width must be positive, got {dt_ms}")));
        }
        if let Some(v) = grid.data().iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Shape(format!("spike tensor entry {v} is negative")));
        }
        Ok(SpikeTensor { grid, dt_ms })
    }

    /// Wraps a grid the caller guarantees to be non-negative.
    pub(crate) fn from_grid_unchecked(grid: Tensor4, dt_ms: f64) -> Self {
        debug_assert!(grid.data().iter().all(|v| *v >= 0.0));
        SpikeTensor { grid, dt_ms }
    }

    pub fn zeros(shape: Shape4, dt_ms: f64) -> Self {
        SpikeTensor {
            grid: Tensor4::zeros(shape),
            dt_ms,
        }
    }

    pub fn dt_ms(&self) -> f64 {
        self.dt_ms
    }

    pub fn grid(&self) -> &Tensor4 {
        &self.grid
    }

    pub fn into_grid(self) -> Tensor4 {
        self.grid
    }
}

impl Deref for SpikeTensor {
    type Target = Tensor4;

    fn deref(&self) -> &Tensor4 {
        &self.grid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Voxelized {
    pub tensor: SpikeTensor,
    /// Events that fell outside `[origin, origin + T*dt]`.
    pub dropped: usize,
}

/// Bins a stream into a 2-channel count tensor starting at the stream's `t0`.
pub fn to_voxel_grid(stream: &EventStream, steps: usize, dt_ms: f64) -> Result<Voxelized> {
    to_voxel_grid_at(stream, stream.t0(), steps, dt_ms)
}

/// Bins a stream into `steps` bins of `dt_ms` starting at `origin_us`.
///
/// Bin index is `floor((t - origin) / dt)`. An event exactly on the closing
/// edge `origin + steps*dt` is kept in the last bin.
pub fn to_voxel_grid_at(
    stream: &EventStream,
    origin_us: u64,
    steps: usize,
    dt_ms: f64,
) -> Result<Voxelized> {
    if steps == 0 {
        return Err(Error::Config("voxel grid needs at least one bin".to_string()));
    }
    if !(dt_ms > 0.0) {
        return Err(Error::Config(format!("bin width must be positive, got {dt_ms}")));
    }
    let shape = Shape4::new(2, stream.height() as usize, stream.width() as usize, steps);
    let mut grid = Tensor4::zeros(shape);
    let dt_us = dt_ms * 1000.0;
    let window_us = steps as f64 * dt_us;
    let mut dropped = 0;
    for e in stream.events() {
        match bin_of(e.t, origin_us, dt_us, window_us, steps) {
            Some(bin) => *grid.get_mut(e.p.channel(), e.y as usize, e.x as usize, bin) += 1.0,
            None => dropped += 1,
        }
    }
    Ok(Voxelized {
        tensor: SpikeTensor::from_grid_unchecked(grid, dt_ms),
        dropped,
    })
}

fn bin_of(t: u64, origin: u64, dt_us: f64, window_us: f64, steps: usize) -> Option<usize> {
    if t < origin {
        return None;
    }
    let rel = (t - origin) as f64;
    let bin = (rel / dt_us).floor() as usize;
    if bin < steps {
        Some(bin)
    } else if rel == window_us {
        Some(steps - 1)
    } else {
        None
    }
}

/// Expands a spike tensor back into events.
///
/// A voxel holding `v > 0` yields `round(v)` events stamped at the bin centre
/// `t0 + (tau + 0.5) * dt`. Single-channel tensors are read as ON events.
pub fn from_voxel_grid(tensor: &SpikeTensor, t0_us: u64) -> Result<EventStream> {
    let shape = tensor.shape();
    if shape.c == 0 || shape.c > 2 {
        return Err(Error::Shape(format!(
            "expected 1 or 2 polarity channels, found {}",
            shape.c
        )));
    }
    let (width, height) = geometry_u16(shape)?;
    let dt_us = tensor.dt_ms() * 1000.0;
    let mut events = Vec::new();
    for tau in 0..shape.t {
        let t = t0_us + ((tau as f64 + 0.5) * dt_us).round() as u64;
        for c in 0..shape.c {
            let p = Polarity::from_channel(c).expect("channel < 2");
            for y in 0..shape.h {
                for x in 0..shape.w {
                    let v = tensor.get(c, y, x, tau);
                    if v > 0.0 {
                        let n = v.round() as usize;
                        events.extend(std::iter::repeat_n(Event::new(t, x as u16, y as u16, p), n));
                    }
                }
            }
        }
    }
    EventStream::new(width, height, events)
}

fn geometry_u16(shape: Shape4) -> Result<(u16, u16)> {
    let w = u16::try_from(shape.w).map_err(|_| Error::Shape(format!("width {} too large", shape.w)))?;
    let h = u16::try_from(shape.h).map_err(|_| Error::Shape(format!("height {} too large", shape.h)))?;
    Ok((w, h))
}

/// Splits a 2-channel tensor into its ON and OFF halves.
pub fn split_polarity(tensor: &SpikeTensor) -> Result<(SpikeTensor, SpikeTensor)> {
    if tensor.shape().c != 2 {
        return Err(Error::Shape(format!(
            "polarity split needs 2 channels, found {}",
            tensor.shape().c
        )));
    }
    let dt = tensor.dt_ms();
    Ok((
        SpikeTensor::from_grid_unchecked(tensor.channel(0), dt),
        SpikeTensor::from_grid_unchecked(tensor.channel(1), dt),
    ))
}

/// Stacks ON and OFF tensors into one polarity-paired tensor.
pub fn merge_polarity(pos: &SpikeTensor, neg: &SpikeTensor) -> Result<SpikeTensor> {
    if pos.shape() != neg.shape() {
        return Err(Error::Shape(format!(
            "polarity halves differ: {} vs {}",
            pos.shape(),
            neg.shape()
        )));
    }
    if pos.dt_ms() != neg.dt_ms() {
        return Err(Error::Shape(format!(
            "polarity halves use different bin widths: {} vs {}",
            pos.dt_ms(),
            neg.dt_ms()
        )));
    }
    let grid = Tensor4::concat_channels(&[pos.grid(), neg.grid()])?;
    Ok(SpikeTensor::from_grid_unchecked(grid, pos.dt_ms()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(w: u16, h: u16, evs: &[(u64, u16, u16, i64)]) -> EventStream {
        let evs = evs
            .iter()
            .map(|&(t, x, y, p)| Event::new(t, x, y, Polarity::from_sign(p).unwrap()))
            .collect();
        EventStream::from_unsorted(w, h, evs).unwrap()
    }

    #[test]
    fn events_in_same_bin_accumulate() {
        let s = stream(4, 4, &[(0, 0, 0, 1), (500, 2, 3, 1), (900, 2, 3, 1)]);
        let v = to_voxel_grid_at(&s, 0, 4, 1.0).unwrap();
        assert_eq!(v.tensor.get(0, 3, 2, 0), 2.0);
        assert_eq!(v.dropped, 0);
    }

    #[test]
    fn negative_event_bins_by_floor() {
        let s = stream(4, 4, &[(1500, 1, 2, -1)]);
        let v = to_voxel_grid_at(&s, 0, 4, 1.0).unwrap();
        assert_eq!(v.tensor.get(1, 2, 1, 1), 1.0);
        assert_eq!(v.tensor.sum(), 1.0);
    }

    #[test]
    fn closing_edge_clamps_and_beyond_drops() {
        let s = stream(2, 2, &[(0, 0, 0, 1), (3000, 1, 1, 1), (3001, 1, 0, 1)]);
        let v = to_voxel_grid(&s, 3, 1.0).unwrap();
        assert_eq!(v.tensor.get(0, 1, 1, 2), 1.0);
        assert_eq!(v.dropped, 1);
        assert_eq!(v.tensor.sum(), 2.0);
    }

    #[test]
    fn degenerate_stream_gives_zero_tensor() {
        let v = to_voxel_grid(&EventStream::empty(3, 2), 5, 1.0).unwrap();
        assert_eq!(v.tensor.shape(), Shape4::new(2, 2, 3, 5));
        assert_eq!(v.tensor.sum(), 0.0);
        assert!(to_voxel_grid(&EventStream::empty(3, 2), 0, 1.0).is_err());
    }

    #[test]
    fn single_voxel_lands_at_bin_centre() {
        let mut g = Tensor4::zeros(Shape4::new(2, 2, 2, 5));
        *g.get_mut(0, 1, 1, 4) = 1.0;
        let s = from_voxel_grid(&SpikeTensor::new(g, 1.0).unwrap(), 0).unwrap();
        assert_eq!(s.events(), &[Event::new(4500, 1, 1, Polarity::On)]);
    }

    #[test]
    fn zero_tensor_gives_empty_stream() {
        let s = from_voxel_grid(&SpikeTensor::zeros(Shape4::new(2, 3, 4, 6), 1.0), 77).unwrap();
        assert!(s.is_empty());
        assert_eq!((s.width(), s.height()), (4, 3));
    }

    #[test]
    fn fractional_values_round() {
        let mut g = Tensor4::zeros(Shape4::new(1, 1, 1, 2));
        *g.get_mut(0, 0, 0, 0) = 0.4;
        *g.get_mut(0, 0, 0, 1) = 2.6;
        let s = from_voxel_grid(&SpikeTensor::new(g, 1.0).unwrap(), 0).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.events().iter().all(|e| e.t == 1500));
    }

    #[test]
    fn split_requires_two_channels() {
        let t = SpikeTensor::zeros(Shape4::new(1, 2, 2, 2), 1.0);
        assert!(matches!(split_polarity(&t), Err(Error::Shape(_))));
    }

    #[test]
    fn split_isolates_channel_mass() {
        let mut g = Tensor4::zeros(Shape4::new(2, 2, 2, 3));
        *g.get_mut(0, 1, 0, 2) = 3.0;
        let (pos, neg) = split_polarity(&SpikeTensor::new(g, 1.0).unwrap()).unwrap();
        assert_eq!(pos.sum(), 3.0);
        assert_eq!(neg.sum(), 0.0);
        assert_eq!(pos.get(0, 1, 0, 2), 3.0);
    }

    #[test]
    fn merge_rejects_mismatch() {
        let a = SpikeTensor::zeros(Shape4::new(1, 2, 2, 3), 1.0);
        let b = SpikeTensor::zeros(Shape4::new(1, 2, 3, 3), 1.0);
        assert!(merge_polarity(&a, &b).is_err());
        let z = merge_polarity(&a, &a).unwrap();
        assert_eq!(z.shape().c, 2);
        assert_eq!(z.sum(), 0.0);
    }

    #[test]
    fn negative_entries_rejected() {
        let g = Tensor4::from_vec(Shape4::new(1, 1, 1, 1), vec![-1.0]).unwrap();
        assert!(SpikeTensor::new(g, 1.0).is_err());
    }
}
