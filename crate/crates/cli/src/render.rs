//! Event accumulation into binary PPM (P6) images.
//!
//! Background is white. ON events remove green and blue, OFF events remove
//! red and green, each in proportion to the pixel's count over the window's
//! largest per-pixel count.

use spikesr::{EventStream, Polarity};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start_us: f64,
    pub end_us: f64,
    /// Whether an event exactly at `end_us` belongs to the window.
    pub closed: bool,
}

impl Window {
    fn contains(&self, t: f64) -> bool {
        t >= self.start_us && (t < self.end_us || (self.closed && t == self.end_us))
    }
}

/// Splits the requested time range into frame windows.
pub fn windows(
    stream: &EventStream,
    start_ms: f64,
    window_ms: Option<f64>,
    every_ms: Option<f64>,
) -> Result<Vec<Window>, String> {
    if !(start_ms >= 0.0) {
        return Err(format!("start must be >= 0 ms, got {start_ms}"));
    }
    for (name, v) in [("window", window_ms), ("frame interval", every_ms)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be a positive length, got {v} ms"));
            }
        }
    }
    let start = stream.t0() as f64 + start_ms * 1000.0;
    let (end, closed) = match window_ms {
        Some(w) => (start + w * 1000.0, false),
        None => ((stream.t1() as f64).max(start), true),
    };
    let Some(every) = every_ms.map(|e| e * 1000.0) else {
        return Ok(vec![Window { start_us: start, end_us: end, closed }]);
    };
    let n = (((end - start) / every).ceil() as usize).max(1);
    Ok((0..n)
        .map(|i| {
            let lo = start + i as f64 * every;
            let last = i + 1 == n;
            Window {
                start_us: lo,
                end_us: if last { end } else { lo + every },
                closed: last && closed,
            }
        })
        .collect())
}

/// Per-pixel ON and OFF counts inside `window`.
pub fn accumulate(stream: &EventStream, window: Window) -> (Vec<u32>, Vec<u32>) {
    let n = stream.width() as usize * stream.height() as usize;
    let (mut on, mut off) = (vec![0u32; n], vec![0u32; n]);
    for e in stream.events() {
        if window.contains(e.t as f64) {
            let i = e.y as usize * stream.width() as usize + e.x as usize;
            match e.p {
                Polarity::On => on[i] += 1,
                Polarity::Off => off[i] += 1,
            }
        }
    }
    (on, off)
}

pub fn to_ppm(width: u16, height: u16, on: &[u32], off: &[u32]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    let peak = on.iter().zip(off).map(|(a, b)| a + b).max().unwrap_or(0).max(1) as f64;
    let shade = |v: f64| (255.0 * (1.0 - v / peak)).round().clamp(0.0, 255.0) as u8;
    for (&p, &n) in on.iter().zip(off) {
        let (p, n) = (p as f64, n as f64);
        out.extend_from_slice(&[shade(n), shade(p + n), shade(p)]);
    }
    out
}
