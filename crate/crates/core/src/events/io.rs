//! Event file formats.
//!
//! * `csv`: optional `# WxH` geometry line, header `t_us,x,y,p`, one event per
//!   line with `p` in `{1, -1}`.
//! * `evbin`: `EVS1`, LE `u16` width, `u16` height, `u64` count, then 13-byte
//!   records (`u64 t_us`, `u16 x`, `u16 y`, `i8 p`).
//! * `nmnist_bin`: ATIS 40-bit records on a fixed 34x34 sensor.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{Event, EventStream, Polarity};
use crate::error::{Error, Result};

pub const EVBIN_MAGIC: &[u8; 4] = b"EVS1";
const EVBIN_HEADER_LEN: usize = 16;
const EVBIN_RECORD_LEN: usize = 13;
const NMNIST_RECORD_LEN: usize = 5;
pub const NMNIST_SIZE: u16 = 34;
pub const CSV_HEADER: &str = "t_us,x,y,p";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Evbin,
    NmnistBin,
}

impl EventFormat {
    /// Guesses the format from a file extension (`.csv`, `.evbin`, `.bin`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(EventFormat::Csv),
            "evbin" => Some(EventFormat::Evbin),
            "bin" => Some(EventFormat::NmnistBin),
            _ => None,
        }
    }
}

impl FromStr for EventFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(EventFormat::Csv),
            "evbin" => Ok(EventFormat::Evbin),
            "nmnist_bin" | "nmnist" => Ok(EventFormat::NmnistBin),
            other => Err(Error::Config(format!("unknown event format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Overrides the stored or inferred sensor geometry (width, height).
    pub geometry: Option<(u16, u16)>,
    /// Largest backwards timestamp jump (µs) that is silently re-sorted.
    pub regression_tolerance_us: u64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            geometry: None,
            regression_tolerance_us: 1000,
        }
    }
}

pub fn load_events(path: &Path, format: EventFormat, opts: LoadOptions) -> Result<EventStream> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_events(&bytes, format, opts)
}

pub fn decode_events(bytes: &[u8], format: EventFormat, opts: LoadOptions) -> Result<EventStream> {
    match format {
        EventFormat::Csv => decode_csv(bytes, opts),
        EventFormat::Evbin => decode_evbin(bytes, opts),
        EventFormat::NmnistBin => decode_nmnist(bytes, opts),
    }
}

pub fn save_events(stream: &EventStream, path: &Path, format: EventFormat) -> Result<()> {
    let bytes = encode_events(stream, format)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_events(stream: &EventStream, format: EventFormat) -> Result<Vec<u8>> {
    match format {
        EventFormat::Csv => Ok(encode_csv(stream).into_bytes()),
        EventFormat::Evbin => Ok(encode_evbin(stream)),
        EventFormat::NmnistBin => Err(Error::Config(
            "nmnist_bin is a read-only format".to_string(),
        )),
    }
}

/// Collects `(offset, event)` pairs, enforcing the regression tolerance, and
/// builds the sorted stream.
fn finish(
    events: Vec<(u64, Event)>,
    geometry: (u16, u16),
    opts: LoadOptions,
) -> Result<EventStream> {
    let mut max_t = 0u64;
    for (offset, e) in &events {
        if e.t + opts.regression_tolerance_us < max_t {
            return Err(Error::Format(format!(
                "timestamp regression at byte {offset}: t={} after t={max_t}",
                e.t
            )));
        }
        max_t = max_t.max(e.t);
    }
    let (w, h) = geometry;
    EventStream::from_unsorted(w, h, events.into_iter().map(|(_, e)| e).collect())
}

fn inferred_geometry(events: &[(u64, Event)]) -> (u16, u16) {
    let w = events.iter().map(|(_, e)| e.x + 1).max().unwrap_or(0);
    let h = events.iter().map(|(_, e)| e.y + 1).max().unwrap_or(0);
    (w, h)
}

fn parse_geometry_comment(line: &str) -> Option<(u16, u16)> {
    let body = line.strip_prefix('#')?.trim();
    let (w, h) = body.split_once('x')?;
    Some((w.trim().parse().ok()?, h.trim().parse().ok()?))
}

fn decode_csv(bytes: &[u8], opts: LoadOptions) -> Result<EventStream> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        offset: e.valid_up_to() as u64,
        message: "invalid UTF-8".to_string(),
    })?;

    let mut stored_geometry = None;
    let mut seen_header = false;
    let mut events = Vec::new();
    let mut offset = 0u64;
    for raw in text.split_inclusive('\n') {
        let line_offset = offset;
        offset += raw.len() as u64;
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(g) = parse_geometry_comment(line) {
                stored_geometry = Some(g);
            }
            continue;
        }
        if !seen_header && line.trim() == CSV_HEADER {
            seen_header = true;
            continue;
        }
        seen_header = true;
        events.push((line_offset, parse_csv_record(line, line_offset)?));
    }

    let geometry = opts
        .geometry
        .or(stored_geometry)
        .unwrap_or_else(|| inferred_geometry(&events));
    finish(events, geometry, opts)
}

fn parse_csv_record(line: &str, offset: u64) -> Result<Event> {
    let err = |message: String| Error::Parse { offset, message };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(err(format!("expected 4 fields, found {}", fields.len())));
    }
    let t = fields[0]
        .parse::<u64>()
        .map_err(|e| err(format!("bad timestamp '{}': {e}", fields[0])))?;
    let x = fields[1]
        .parse::<u16>()
        .map_err(|e| err(format!("bad x '{}': {e}", fields[1])))?;
    let y = fields[2]
        .parse::<u16>()
        .map_err(|e| err(format!("bad y '{}': {e}", fields[2])))?;
    let p = fields[3]
        .parse::<i64>()
        .ok()
        .and_then(Polarity::from_sign)
        .ok_or_else(|| err(format!("bad polarity '{}'", fields[3])))?;
    Ok(Event::new(t, x, y, p))
}

fn encode_csv(stream: &EventStream) -> String {
    let mut out = String::with_capacity(32 + stream.len() * 16);
    let _ = writeln!(out, "# {}x{}", stream.width(), stream.height());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for e in stream.events() {
        let _ = writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.p.sign());
    }
    out
}

fn read_le<const N: usize>(bytes: &[u8], at: usize) -> [u8; N] {
    bytes[at..at + N].try_into().expect("slice length checked by caller")
}

fn decode_evbin(bytes: &[u8], opts: LoadOptions) -> Result<EventStream> {
    if bytes.len() < EVBIN_HEADER_LEN {
        return Err(Error::Parse {
            offset: bytes.len() as u64,
            message: "truncated evbin header".to_string(),
        });
    }
    if &bytes[..4] != EVBIN_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "missing EVS1 magic".to_string(),
        });
    }
    let width = u16::from_le_bytes(read_le(bytes, 4));
    let height = u16::from_le_bytes(read_le(bytes, 6));
    let count = u64::from_le_bytes(read_le(bytes, 8));

    let body = bytes.len() - EVBIN_HEADER_LEN;
    let expected = count
        .checked_mul(EVBIN_RECORD_LEN as u64)
        .ok_or_else(|| Error::Parse {
            offset: 8,
            message: format!("event count {count} overflows"),
        })?;
    if body as u64 != expected {
        let offset = EVBIN_HEADER_LEN as u64 + expected.min(body as u64);
        return Err(Error::Parse {
            offset,
            message: format!("expected {count} records ({expected} bytes), found {body} bytes"),
        });
    }

    let mut events = Vec::with_capacity(count as usize);
    for (i, rec) in bytes[EVBIN_HEADER_LEN..].chunks_exact(EVBIN_RECORD_LEN).enumerate() {
        let offset = (EVBIN_HEADER_LEN + i * EVBIN_RECORD_LEN) as u64;
        let t = u64::from_le_bytes(read_le(rec, 0));
        let x = u16::from_le_bytes(read_le(rec, 8));
        let y = u16::from_le_bytes(read_le(rec, 10));
        let p = Polarity::from_sign(rec[12] as i8 as i64).ok_or_else(|| Error::Parse {
            offset: offset + 12,
            message: format!("bad polarity byte {:#04x}", rec[12]),
        })?;
        events.push((offset, Event::new(t, x, y, p)));
    }
    finish(events, opts.geometry.unwrap_or((width, height)), opts)
}

fn encode_evbin(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(EVBIN_HEADER_LEN + stream.len() * EVBIN_RECORD_LEN);
    out.extend_from_slice(EVBIN_MAGIC);
    out.extend_from_slice(&stream.width().to_le_bytes());
    out.extend_from_slice(&stream.height().to_le_bytes());
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for e in stream.events() {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.p.sign() as u8);
    }
    out
}

/// Decodes one 40-bit ATIS record.
pub fn decode_atis_record(rec: [u8; 5]) -> Event {
    let x = rec[0] as u16;
    let y = rec[1] as u16;
    let p = if rec[2] & 0x80 != 0 {
        Polarity::On
    } else {
        Polarity::Off
    };
    let t = ((rec[2] as u64 & 0x7F) << 16) | ((rec[3] as u64) << 8) | rec[4] as u64;
    Event::new(t, x, y, p)
}

fn decode_nmnist(bytes: &[u8], opts: LoadOptions) -> Result<EventStream> {
    if bytes.len() % NMNIST_RECORD_LEN != 0 {
        let offset = (bytes.len() - bytes.len() % NMNIST_RECORD_LEN) as u64;
        return Err(Error::Parse {
            offset,
            message: format!("trailing partial record of {} bytes", bytes.len() % 5),
        });
    }
    let geometry = opts.geometry.unwrap_or((NMNIST_SIZE, NMNIST_SIZE));
    let mut events = Vec::with_capacity(bytes.len() / NMNIST_RECORD_LEN);
    for (i, rec) in bytes.chunks_exact(NMNIST_RECORD_LEN).enumerate() {
        let offset = (i * NMNIST_RECORD_LEN) as u64;
        let e = decode_atis_record(rec.try_into().expect("chunk of 5"));
        if e.x >= geometry.0 || e.y >= geometry.1 {
            return Err(Error::Parse {
                offset,
                message: format!("coordinate ({}, {}) outside sensor", e.x, e.y),
            });
        }
        events.push((offset, e));
    }
    finish(events, geometry, opts)
}
