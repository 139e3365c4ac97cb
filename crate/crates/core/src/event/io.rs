//! EVS1 binary event files and the CSV alternative.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EVS1"
//! 4       2     width
//! 6       2     height
//! 8       4     window_us
//! 12      4     event_count
//! 16      8*n   records: t_us u32, x u16 (bit 15 = polarity, 1 = ON), y u16
//! ```
//!
//! CSV files start with a `# width,height,window_us` comment line followed by
//! `t_us,x,y,p` rows. A column-name row is tolerated.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{validate_stream_us, Event, EventStream, Polarity, RawEvent};
use crate::error::{Error, Result};

pub const EVS1_MAGIC: &[u8; 4] = b"EVS1";
const HEADER_LEN: usize = 16;
const RECORD_LEN: usize = 8;
const POLARITY_BIT: u16 = 0x8000;

pub fn write_stream(stream: &EventStream, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_stream_to(stream, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_stream_to<W: Write>(stream: &EventStream, w: &mut W) -> Result<()> {
    let count = u32::try_from(stream.len()).map_err(|_| Error::arg("too many events for EVS1"))?;
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(EVS1_MAGIC);
    header[4..6].copy_from_slice(&stream.width().to_le_bytes());
    header[6..8].copy_from_slice(&stream.height().to_le_bytes());
    header[8..12].copy_from_slice(&stream.window_us().to_le_bytes());
    header[12..16].copy_from_slice(&count.to_le_bytes());
    w.write_all(&header)?;
    for e in stream.events() {
        let x = e.x | if e.p == Polarity::On { POLARITY_BIT } else { 0 };
        let mut rec = [0u8; RECORD_LEN];
        rec[0..4].copy_from_slice(&e.t.to_le_bytes());
        rec[4..6].copy_from_slice(&x.to_le_bytes());
        rec[6..8].copy_from_slice(&e.y.to_le_bytes());
        w.write_all(&rec)?;
    }
    Ok(())
}

/// Reads an EVS1 or CSV event file, chosen by the leading magic bytes.
pub fn read_stream(path: impl AsRef<Path>) -> Result<EventStream> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    read_stream_from(&bytes)
}

pub fn read_stream_from(bytes: &[u8]) -> Result<EventStream> {
    if bytes.starts_with(EVS1_MAGIC) {
        parse_binary(bytes)
    } else {
        parse_csv(bytes)
    }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_binary(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse(bytes.len() as u64, "truncated EVS1 header"));
    }
    let width = u16_at(bytes, 4);
    let height = u16_at(bytes, 6);
    let window_us = u32_at(bytes, 8);
    let count = u32_at(bytes, 12) as usize;
    if width == 0 || height == 0 || width > 0x7fff {
        return Err(Error::parse(4, format!("bad resolution {width}x{height}")));
    }
    if window_us == 0 {
        return Err(Error::parse(8, "window_us must be positive"));
    }
    let expected = HEADER_LEN as u64 + count as u64 * RECORD_LEN as u64;
    if bytes.len() as u64 != expected {
        let offset = (bytes.len() as u64).min(expected);
        return Err(Error::parse(
            offset,
            format!("expected {expected} bytes for {count} events, found {}", bytes.len()),
        ));
    }
    let mut events = Vec::with_capacity(count);
    let mut last_t = 0u32;
    for i in 0..count {
        let at = HEADER_LEN + i * RECORD_LEN;
        let t = u32_at(bytes, at);
        let xp = u16_at(bytes, at + 4);
        let y = u16_at(bytes, at + 6);
        let x = xp & !POLARITY_BIT;
        let p = if xp & POLARITY_BIT != 0 { Polarity::On } else { Polarity::Off };
        if x >= width || y >= height || t >= window_us {
            return Err(Error::parse(
                at as u64,
                format!("event {i} (t={t}, x={x}, y={y}) outside {width}x{height} / {window_us} us"),
            ));
        }
        if t < last_t {
            return Err(Error::parse(at as u64, format!("event {i} breaks timestamp order")));
        }
        last_t = t;
        events.push(Event::new(t, x, y, p));
    }
    Ok(EventStream::from_sorted_unchecked(events, width, height, window_us))
}

fn parse_csv(bytes: &[u8]) -> Result<EventStream> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(e.valid_up_to() as u64, "not UTF-8"))?;
    let header_end = text.find('\n').unwrap_or(text.len());
    let header = text[..header_end].trim();
    let meta = header.strip_prefix('#').ok_or_else(|| Error::parse(0, "missing '# width,height,window_us' header"))?;
    let fields: Vec<&str> = meta.split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(Error::parse(0, "header must hold width,height,window_us"));
    }
    let width: u16 = fields[0].parse().map_err(|_| Error::parse(0, "bad width"))?;
    let height: u16 = fields[1].parse().map_err(|_| Error::parse(0, "bad height"))?;
    let window_us: u32 = fields[2].parse().map_err(|_| Error::parse(0, "bad window_us"))?;

    let body_start = (header_end + 1).min(bytes.len());
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(&bytes[body_start..]);

    let mut raw = Vec::new();
    let mut offsets = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let at = e.position().map_or(0, |p| p.byte()) + body_start as u64;
            Error::parse(at, e.to_string())
        })?;
        let at = record.position().map_or(0, |p| p.byte()) + body_start as u64;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.get(0) == Some("t_us") {
            continue;
        }
        if record.len() != 4 {
            return Err(Error::parse(at, format!("expected 4 fields, found {}", record.len())));
        }
        let mut vals = [0i64; 4];
        for (v, s) in vals.iter_mut().zip(record.iter()) {
            *v = s.parse().map_err(|_| Error::parse(at, format!("bad integer {s:?}")))?;
        }
        if vals[0] < 0 {
            return Err(Error::parse(at, format!("negative timestamp {}", vals[0])));
        }
        raw.push(RawEvent { t: vals[0], x: vals[1], y: vals[2], p: vals[3] });
        offsets.push(at);
    }
    validate_stream_us(&raw, width, height, window_us).map_err(|e| match e {
        Error::InvalidEvent { index, reason } => Error::parse(offsets[index], reason),
        other => other,
    })
}

/// Writes the CSV variant.
pub fn write_stream_csv<W: Write>(stream: &EventStream, w: &mut W) -> Result<()> {
    writeln!(w, "# {},{},{}", stream.width(), stream.height(), stream.window_us())?;
    writeln!(w, "t_us,x,y,p")?;
    for e in stream.events() {
        writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.p.bit())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EventStream {
        EventStream::from_events(
            vec![
                Event::new(3, 1, 2, Polarity::On),
                Event::new(3, 127, 0, Polarity::Off),
                Event::new(49_999, 0, 127, Polarity::On),
            ],
            128,
            128,
            50_000,
        )
        .unwrap()
    }

    #[test]
    fn binary_roundtrip() {
        let s = sample();
        let mut buf = Vec::new();
        write_stream_to(&s, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 3 * 8);
        assert_eq!(read_stream_from(&buf).unwrap(), s);
    }

    #[test]
    fn empty_roundtrip_keeps_metadata() {
        let s = EventStream::empty(64, 32, 30_000).unwrap();
        let mut buf = Vec::new();
        write_stream_to(&s, &mut buf).unwrap();
        let back = read_stream_from(&buf).unwrap();
        assert_eq!(back, s);
        assert_eq!((back.width(), back.height(), back.window_us()), (64, 32, 30_000));
    }

    #[test]
    fn csv_roundtrip() {
        let s = sample();
        let mut buf = Vec::new();
        write_stream_csv(&s, &mut buf).unwrap();
        assert_eq!(read_stream_from(&buf).unwrap(), s);
    }

    #[test]
    fn negative_timestamp_is_a_parse_error() {
        let text = b"# 128,128,50000\n10,1,1,1\n-5,1,1,0\n";
        match read_stream_from(text).unwrap_err() {
            Error::Parse { offset, reason } => {
                assert_eq!(offset, 25);
                assert!(reason.contains("negative"));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let mut buf = Vec::new();
        write_stream_to(&sample(), &mut buf).unwrap();
        buf.truncate(20);
        assert!(matches!(read_stream_from(&buf), Err(Error::Parse { offset: 20, .. })));
    }

    #[test]
    fn out_of_window_record_is_rejected() {
        let mut buf = Vec::new();
        write_stream_to(&sample(), &mut buf).unwrap();
        // bump the last record's timestamp past the window
        let at = 16 + 2 * 8;
        buf[at..at + 4].copy_from_slice(&60_000u32.to_le_bytes());
        assert!(matches!(read_stream_from(&buf), Err(Error::Parse { offset, .. }) if offset == at as u64));
    }
}
