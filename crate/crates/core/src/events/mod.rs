//! Event-stream data model.
//!
//! An [`EventStream`] is a time-ordered list of `(t, x, y, p)` tuples plus the
//! sensor geometry. Timestamps are integer microseconds. The stream's span
//! `[t0, t1]` is always the tight bound over its events (both zero when the
//! stream is empty), so it survives every file format unchanged.

pub mod io;
pub mod synth;
pub mod voxel;

use crate::error::{Error, Result};

/// Sign of a brightness change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    /// Brightness increase, `p = +1`, tensor channel 0.
    On,
    /// Brightness decrease, `p = -1`, tensor channel 1.
    Off,
}

impl Polarity {
    pub fn from_sign(p: i64) -> Option<Self> {
        match p {
            1 => Some(Polarity::On),
            -1 => Some(Polarity::Off),
            _ => None,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    /// Channel index in a polarity-paired spike tensor.
    pub fn channel(self) -> usize {
        match self {
            Polarity::On => 0,
            Polarity::Off => 1,
        }
    }

    pub fn from_channel(c: usize) -> Option<Self> {
        match c {
            0 => Some(Polarity::On),
            1 => Some(Polarity::Off),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    /// Microseconds.
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Event { t, x, y, p }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    events: Vec<Event>,
    width: u16,
    height: u16,
    t0: u64,
    t1: u64,
}

impl EventStream {
    /// Builds a stream from events already sorted by timestamp.
    pub fn new(width: u16, height: u16, events: Vec<Event>) -> Result<Self> {
        if let Some(i) = events.windows(2).position(|w| w[1].t < w[0].t) {
            return Err(Error::Format(format!(
                "events not sorted: index {} has t={} after t={}",
                i + 1,
                events[i + 1].t,
                events[i].t
            )));
        }
        Self::checked(width, height, events)
    }

    /// Builds a stream from events in arbitrary order (stable sort by time).
    pub fn from_unsorted(width: u16, height: u16, mut events: Vec<Event>) -> Result<Self> {
        events.sort_by_key(|e| e.t);
        Self::checked(width, height, events)
    }

    pub fn empty(width: u16, height: u16) -> Self {
        EventStream {
            events: Vec::new(),
            width,
            height,
            t0: 0,
            t1: 0,
        }
    }

    fn checked(width: u16, height: u16, events: Vec<Event>) -> Result<Self> {
        if let Some(e) = events.iter().find(|e| e.x >= width || e.y >= height) {
            return Err(Error::Format(format!(
                "event at ({}, {}) outside {}x{} sensor",
                e.x, e.y, width, height
            )));
        }
        let t0 = events.first().map_or(0, |e| e.t);
        let t1 = events.last().map_or(0, |e| e.t);
        Ok(EventStream {
            events,
            width,
            height,
            t0,
            t1,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn t0(&self) -> u64 {
        self.t0
    }

    pub fn t1(&self) -> u64 {
        self.t1
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Merges every 2x2 pixel block into one low-resolution pixel.
///
/// Each event keeps its timestamp and polarity; coordinates are floor-halved.
/// Odd dimensions fold the last row/column into the final cell, giving a
/// `ceil(W/2) x ceil(H/2)` sensor.
pub fn downsample_2x(stream: &EventStream) -> EventStream {
    let events = stream
        .events
        .iter()
        .map(|e| Event::new(e.t, e.x / 2, e.y / 2, e.p))
        .collect();
    EventStream {
        events,
        width: stream.width.div_ceil(2),
        height: stream.height.div_ceil(2),
        t0: stream.t0,
        t1: stream.t1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unsorted_input_is_rejected_by_new() {
        let evs = vec![
            Event::new(10, 0, 0, Polarity::On),
            Event::new(5, 0, 0, Polarity::On),
        ];
        assert!(matches!(EventStream::new(2, 2, evs.clone()), Err(Error::Format(_))));
        let s = EventStream::from_unsorted(2, 2, evs).unwrap();
        assert_eq!(s.t0(), 5);
        assert_eq!(s.t1(), 10);
    }

    #[test]
    fn out_of_bounds_event_rejected() {
        let evs = vec![Event::new(0, 4, 0, Polarity::Off)];
        assert!(EventStream::new(4, 4, evs).is_err());
    }

    #[test]
    fn stable_order_for_equal_timestamps() {
        let evs = vec![
            Event::new(7, 1, 0, Polarity::On),
            Event::new(3, 0, 0, Polarity::On),
            Event::new(7, 0, 1, Polarity::Off),
        ];
        let s = EventStream::from_unsorted(2, 2, evs).unwrap();
        assert_eq!(s.events()[1], Event::new(7, 1, 0, Polarity::On));
        assert_eq!(s.events()[2], Event::new(7, 0, 1, Polarity::Off));
    }

    #[test]
    fn downsample_floor_halves_coordinates() {
        let s = EventStream::new(8, 8, vec![Event::new(42, 5, 7, Polarity::Off)]).unwrap();
        let lr = downsample_2x(&s);
        assert_eq!(lr.events()[0], Event::new(42, 2, 3, Polarity::Off));
        assert_eq!((lr.width(), lr.height()), (4, 4));
    }

    #[test]
    fn downsample_odd_dims_round_up() {
        let s = EventStream::new(5, 3, vec![Event::new(0, 4, 2, Polarity::On)]).unwrap();
        let lr = downsample_2x(&s);
        assert_eq!((lr.width(), lr.height()), (3, 2));
        assert_eq!((lr.events()[0].x, lr.events()[0].y), (2, 1));
    }

    #[test]
    fn polarity_round_trips() {
        for p in [Polarity::On, Polarity::Off] {
            assert_eq!(Polarity::from_sign(p.sign() as i64), Some(p));
            assert_eq!(Polarity::from_channel(p.channel()), Some(p));
        }
        assert_eq!(Polarity::from_sign(0), None);
    }
}
