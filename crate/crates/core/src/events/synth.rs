//! Synthetic moving-bar event streams for desk-scale training corpora.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::{Event, EventStream, Polarity};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingBar {
    pub width: u16,
    pub height: u16,
    pub duration_ms: f64,
    /// Pixels per millisecond, left to right.
    pub velocity: f64,
    /// Events emitted by each pixel when an edge crosses it.
    pub events_per_edge_px: u32,
    pub seed: u64,
}

pub const DEFAULT_VELOCITY: f64 = 0.25;
pub const DEFAULT_EVENTS_PER_EDGE_PX: u32 = 8;

impl MovingBar {
    pub fn new(width: u16, height: u16, duration_ms: f64, seed: u64) -> Self {
        MovingBar {
            width,
            height,
            duration_ms,
            velocity: DEFAULT_VELOCITY,
            events_per_edge_px: DEFAULT_EVENTS_PER_EDGE_PX,
            seed,
        }
    }
}

/// Seed of stream `index` in a corpus generated from `base`.
pub fn corpus_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index);
    rng.next_u64()
}

/// Simulates a bright vertical bar sweeping left to right.
///
/// The leading edge fires ON events and the trailing edge OFF events. Within
/// the dwell time `1/velocity` of an edge over a pixel, event times follow a
/// Poisson process conditioned on its count. Bar width, vertical extent and
/// start offset are drawn from the seed.
pub fn synth_moving_bar(cfg: &MovingBar) -> Result<EventStream> {
    if cfg.velocity < 0.0 || !cfg.velocity.is_finite() {
        return Err(Error::Config(format!("velocity must be >= 0, got {}", cfg.velocity)));
    }
    if !(cfg.duration_ms > 0.0) {
        return Err(Error::Config(format!(
            "duration must be positive, got {}",
            cfg.duration_ms
        )));
    }
    if cfg.width == 0 || cfg.height == 0 {
        return Err(Error::Config("sensor must be at least 1x1".to_string()));
    }
    if cfg.velocity == 0.0 || cfg.events_per_edge_px == 0 {
        return Ok(EventStream::empty(cfg.width, cfg.height));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let w = cfg.width as f64;
    let h = cfg.height as usize;
    let bar_width = rng.gen_range(2.0..=(w / 4.0).max(2.0));
    let start = rng.gen_range(0.0..=w / 4.0);
    let y0 = rng.gen_range(0..=h / 4);
    let y1 = rng.gen_range((3 * h).div_ceil(4)..=h).max(y0 + 1);

    let dwell_ms = 1.0 / cfg.velocity;
    let end_us = cfg.duration_ms * 1000.0;
    let mut events = Vec::new();
    let edges = [(0.0, Polarity::On), (bar_width, Polarity::Off)];
    for col in 0..cfg.width {
        for (lag, p) in edges {
            // Edge position is start - lag + v*t; it enters this column at:
            let enter_ms = (col as f64 - start + lag) / cfg.velocity;
            if enter_ms < 0.0 || enter_ms * 1000.0 >= end_us {
                continue;
            }
            for y in y0..y1 {
                for offset in conditioned_arrivals(&mut rng, cfg.events_per_edge_px) {
                    let t_us = ((enter_ms + offset * dwell_ms) * 1000.0).round();
                    if t_us < end_us {
                        events.push(Event::new(t_us as u64, col, y as u16, p));
                    }
                }
            }
        }
    }
    EventStream::from_unsorted(cfg.width, cfg.height, events)
}

/// `n` sorted arrival fractions in `[0, 1)` of a Poisson process with `n`
/// arrivals in the unit interval.
fn conditioned_arrivals(rng: &mut ChaCha8Rng, n: u32) -> Vec<f64> {
    let gaps: Vec<f64> = (0..=n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = gaps.iter().sum();
    let mut acc = 0.0;
    gaps[..n as usize]
        .iter()
        .map(|g| {
            acc += g;
            acc / total
        })
        .collect()
}
