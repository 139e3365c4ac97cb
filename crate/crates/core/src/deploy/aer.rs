//! Address-event sequences.
//!
//! Each event maps to one flat address `A = 2 x H + 2 y + p`. Events that
//! fall into the same time step form a frame; a frame carries its step index
//! as the time flag and lists distinct addresses in ascending order.
//!
//! Wire format `AERSEQ1`, little-endian:
//!
//! ```text
//! magic "AERSEQ1" | width u16 | height u16 | steps u16 | frame_count u16
//! per frame: step u16 | count u32 | count x u32 address
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::event::{bin_of, Event, EventStream, Polarity};

pub const AERSEQ1_MAGIC: &[u8; 7] = b"AERSEQ1";

/// Neurons per emulated core in the hierarchical address view.
pub const NEURONS_PER_CORE: u32 = 1024;

/// Time step at which the sequence clock advances, in microseconds.
const STEP_US: u32 = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressFrame {
    pub step: u16,
    pub addresses: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressSequence {
    pub width: u16,
    pub height: u16,
    pub steps: u16,
    /// Window the steps divide. The wire format does not carry it; sequences
    /// read from bytes assume one millisecond per step.
    pub window_us: u32,
    /// Non-empty frames in increasing step order.
    pub frames: Vec<AddressFrame>,
}

impl AddressSequence {
    /// Row-dimension constant of the address mapping.
    pub fn row_constant(&self) -> u32 {
        self.height as u32
    }

    pub fn address_count(&self) -> usize {
        self.frames.iter().map(|f| f.addresses.len()).sum()
    }

    /// Checks ordering and address range.
    pub fn validate(&self) -> Result<()> {
        let limit = 2 * self.width as u32 * self.height as u32;
        let mut prev: Option<u16> = None;
        for f in &self.frames {
            if f.step >= self.steps {
                return Err(Error::arg(format!("frame step {} outside {} steps", f.step, self.steps)));
            }
            if prev.is_some_and(|p| f.step <= p) {
                return Err(Error::arg(format!("frame steps not increasing at step {}", f.step)));
            }
            prev = Some(f.step);
            if !f.addresses.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::arg(format!("addresses of step {} not strictly ascending", f.step)));
            }
            if let Some(&a) = f.addresses.last() {
                if a >= limit {
                    return Err(Error::arg(format!("address {a} outside {limit}")));
                }
            }
        }
        Ok(())
    }
}

/// `A = 2 x l_H + 2 y + p` with `l_H` the height of the grid.
pub fn encode_address(event: &Event, width: u16, height: u16) -> Result<u32> {
    if event.x >= width || event.y >= height {
        return Err(Error::arg(format!("event at ({}, {}) outside {width}x{height}", event.x, event.y)));
    }
    Ok(2 * event.x as u32 * height as u32 + 2 * event.y as u32 + event.p.bit() as u32)
}

/// Inverse of [`encode_address`].
pub fn decode_address(a: u32, width: u16, height: u16) -> Result<(u16, u16, Polarity)> {
    let limit = 2 * width as u32 * height as u32;
    if a >= limit {
        return Err(Error::arg(format!("address {a} outside {limit}")));
    }
    let column = 2 * height as u32;
    let x = a / column;
    let rem = a % column;
    let p = if rem % 2 == 1 { Polarity::On } else { Polarity::Off };
    Ok((x as u16, (rem / 2) as u16, p))
}

/// `(core, neuron)` position of an address in a flat core layout.
pub fn core_view(a: u32) -> (u32, u32) {
    (a / NEURONS_PER_CORE, a % NEURONS_PER_CORE)
}

/// Bins a stream into `steps` frames of distinct addresses.
pub fn encode_sequence(stream: &EventStream, steps: usize) -> Result<AddressSequence> {
    if steps == 0 || steps > u16::MAX as usize {
        return Err(Error::arg(format!("step count {steps} not in [1, 65535]")));
    }
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); steps];
    for e in stream.events() {
        let a = encode_address(e, stream.width(), stream.height())?;
        bins[bin_of(e.t, stream.window_us(), steps)].push(a);
    }
    let frames = bins
        .into_iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(step, mut addresses)| {
            addresses.sort_unstable();
            addresses.dedup();
            AddressFrame { step: step as u16, addresses }
        })
        .collect();
    Ok(AddressSequence {
        width: stream.width(),
        height: stream.height(),
        steps: steps as u16,
        window_us: stream.window_us(),
        frames,
    })
}

/// Rebuilds a stream with every event placed at the start of its step.
pub fn decode_sequence(seq: &AddressSequence) -> Result<EventStream> {
    seq.validate()?;
    if seq.window_us == 0 {
        return Err(Error::arg("sequence window must be positive"));
    }
    let steps = seq.steps as u64;
    let mut events = Vec::with_capacity(seq.address_count());
    for f in &seq.frames {
        // first timestamp that bins to this step
        let t = (f.step as u64 * seq.window_us as u64).div_ceil(steps) as u32;
        if bin_of(t, seq.window_us, seq.steps as usize) != f.step as usize {
            return Err(Error::arg(format!("step {} is empty for a {} us window", f.step, seq.window_us)));
        }
        for &a in &f.addresses {
            let (x, y, p) = decode_address(a, seq.width, seq.height)?;
            events.push(Event::new(t, x, y, p));
        }
    }
    EventStream::from_events(events, seq.width, seq.height, seq.window_us)
}

pub fn write_sequence(seq: &AddressSequence, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_sequence_to(seq, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_sequence_to<W: Write>(seq: &AddressSequence, w: &mut W) -> Result<()> {
    seq.validate()?;
    let frame_count = u16::try_from(seq.frames.len())
        .map_err(|_| Error::arg(format!("{} frames exceed the format limit", seq.frames.len())))?;
    let mut buf = Vec::with_capacity(15 + seq.frames.len() * 6 + seq.address_count() * 4);
    buf.extend_from_slice(AERSEQ1_MAGIC);
    for v in [seq.width, seq.height, seq.steps, frame_count] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for f in &seq.frames {
        buf.extend_from_slice(&f.step.to_le_bytes());
        buf.extend_from_slice(&(f.addresses.len() as u32).to_le_bytes());
        for a in &f.addresses {
            buf.extend_from_slice(&a.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_sequence(path: impl AsRef<Path>) -> Result<AddressSequence> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    read_sequence_from(&bytes)
}

pub fn read_sequence_from(bytes: &[u8]) -> Result<AddressSequence> {
    let mut pos = 0usize;
    let mut take = |n: usize, what: &str| -> Result<&[u8]> {
        if pos + n > bytes.len() {
            return Err(Error::parse(pos as u64, format!("truncated while reading {what}")));
        }
        let s = &bytes[pos..pos + n];
        pos += n;
        Ok(s)
    };
    if take(7, "magic")? != AERSEQ1_MAGIC {
        return Err(Error::parse(0, "not an AERSEQ1 file"));
    }
    let mut u16_at = |what: &str| -> Result<u16> {
        let b = take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    };
    let width = u16_at("width")?;
    let height = u16_at("height")?;
    let steps = u16_at("steps")?;
    let frame_count = u16_at("frame count")?;
    if steps == 0 {
        return Err(Error::parse(11, "zero steps"));
    }
    let mut frames = Vec::with_capacity(frame_count as usize);
    let mut pos = 15usize;
    for _ in 0..frame_count {
        let at = pos as u64;
        if pos + 6 > bytes.len() {
            return Err(Error::parse(at, "truncated frame header"));
        }
        let step = u16::from_le_bytes([bytes[pos], bytes[pos + 1]]);
        let count = u32::from_le_bytes(bytes[pos + 2..pos + 6].try_into().unwrap()) as usize;
        pos += 6;
        let len = count
            .checked_mul(4)
            .filter(|&l| pos + l <= bytes.len())
            .ok_or_else(|| Error::parse(at, format!("frame of {count} addresses runs past the end")))?;
        let addresses =
            bytes[pos..pos + len].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        pos += len;
        frames.push(AddressFrame { step, addresses });
    }
    if pos != bytes.len() {
        return Err(Error::parse(pos as u64, "trailing bytes after last frame"));
    }
    let window_us = steps as u32 * STEP_US;
    let seq = AddressSequence { width, height, steps, window_us, frames };
    seq.validate().map_err(|e| Error::parse(0, e.to_string()))?;
    Ok(seq)
}
