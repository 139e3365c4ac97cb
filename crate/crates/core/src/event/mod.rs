//! Event data model.
//!
//! An [`EventStream`] is a time-sorted list of address events captured in a
//! single window. Timestamps are integer microseconds relative to the window
//! start; the window length is stored in microseconds as well.

mod field;
mod io;
mod scene;

pub use field::{bin_of, EventField};
pub use io::{read_stream, read_stream_from, write_stream, write_stream_csv, write_stream_to, EVS1_MAGIC};
pub use scene::{generate_scene, inject_noise, render_scene, ApproachDirection, ObjectKind, SceneConfig, TaggedScene};

use crate::error::{Error, Result};

/// Default sensor resolution after downscaling.
pub const DEFAULT_RESOLUTION: u16 = 128;

/// Event polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Polarity {
    Off = 0,
    On = 1,
}

impl Polarity {
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    #[inline]
    pub fn bit(self) -> u8 {
        self as u8
    }
}

/// One address event. `t` is in microseconds since window start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u32,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u32, x: u16, y: u16, p: Polarity) -> Self {
        Event { t, x, y, p }
    }
}

/// An event as it arrives from an untrusted source, before bounds checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawEvent {
    pub t: i64,
    pub x: i64,
    pub y: i64,
    pub p: i64,
}

impl From<Event> for RawEvent {
    fn from(e: Event) -> Self {
        RawEvent { t: e.t as i64, x: e.x as i64, y: e.y as i64, p: e.p.bit() as i64 }
    }
}

/// A validated, time-sorted event stream for one capture window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    events: Vec<Event>,
    width: u16,
    height: u16,
    window_us: u32,
}

impl EventStream {
    /// An empty stream with the given geometry.
    pub fn empty(width: u16, height: u16, window_us: u32) -> Result<Self> {
        check_geometry(width, height, window_us)?;
        Ok(EventStream { events: Vec::new(), width, height, window_us })
    }

    /// Builds a stream from events already known to be in bounds.
    ///
    /// Events are stably sorted by timestamp; bounds are still checked.
    pub fn from_events(mut events: Vec<Event>, width: u16, height: u16, window_us: u32) -> Result<Self> {
        check_geometry(width, height, window_us)?;
        for (index, e) in events.iter().enumerate() {
            check_event(index, e.t as i64, e.x as i64, e.y as i64, width, height, window_us)?;
        }
        events.sort_by_key(|e| e.t);
        Ok(EventStream { events, width, height, window_us })
    }

    /// Internal constructor for subsets of an already valid stream.
    pub(crate) fn from_sorted_unchecked(events: Vec<Event>, width: u16, height: u16, window_us: u32) -> Self {
        debug_assert!(events.windows(2).all(|w| w[0].t <= w[1].t));
        EventStream { events, width, height, window_us }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn window_us(&self) -> u32 {
        self.window_us
    }

    pub fn window_ms(&self) -> f64 {
        self.window_us as f64 / 1000.0
    }

    /// Same geometry, different events. The events must be sorted and in
    /// bounds.
    pub(crate) fn with_events(&self, events: Vec<Event>) -> Self {
        Self::from_sorted_unchecked(events, self.width, self.height, self.window_us)
    }
}

/// Checks a raw event list against the stream geometry and returns a sorted
/// stream. Ties keep their input order.
pub fn validate_stream(raw: &[RawEvent], width: u16, height: u16, window_ms: f64) -> Result<EventStream> {
    if !(window_ms.is_finite() && window_ms > 0.0) {
        return Err(Error::arg(format!("window must be positive, got {window_ms} ms")));
    }
    let window_us = (window_ms * 1000.0).round();
    if window_us > u32::MAX as f64 {
        return Err(Error::arg("window too long"));
    }
    validate_stream_us(raw, width, height, window_us as u32)
}

/// [`validate_stream`] with the window given in microseconds.
pub fn validate_stream_us(raw: &[RawEvent], width: u16, height: u16, window_us: u32) -> Result<EventStream> {
    check_geometry(width, height, window_us)?;
    let mut events = Vec::with_capacity(raw.len());
    for (index, r) in raw.iter().enumerate() {
        check_event(index, r.t, r.x, r.y, width, height, window_us)?;
        let p = Polarity::from_bit(u8::try_from(r.p).unwrap_or(u8::MAX))
            .ok_or_else(|| Error::InvalidEvent { index, reason: format!("polarity {} not in {{0, 1}}", r.p) })?;
        events.push(Event::new(r.t as u32, r.x as u16, r.y as u16, p));
    }
    events.sort_by_key(|e| e.t);
    Ok(EventStream { events, width, height, window_us })
}

fn check_geometry(width: u16, height: u16, window_us: u32) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::arg(format!("resolution {width}x{height} is empty")));
    }
    if width > 0x7fff {
        // the EVS1 record format reserves the top bit of x for polarity
        return Err(Error::arg(format!("width {width} exceeds 32767")));
    }
    if window_us == 0 {
        return Err(Error::arg("window must be positive"));
    }
    Ok(())
}

fn check_event(index: usize, t: i64, x: i64, y: i64, width: u16, height: u16, window_us: u32) -> Result<()> {
    let reason = if x < 0 || x >= width as i64 {
        format!("x out of bounds ({x} not in [0, {width}))")
    } else if y < 0 || y >= height as i64 {
        format!("y out of bounds ({y} not in [0, {height}))")
    } else if t < 0 {
        format!("negative timestamp {t}")
    } else if t >= window_us as i64 {
        format!("timestamp {t} us outside window of {window_us} us")
    } else {
        return Ok(());
    };
    Err(Error::InvalidEvent { index, reason })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(t: i64, x: i64, y: i64, p: i64) -> RawEvent {
        RawEvent { t, x, y, p }
    }

    #[test]
    fn empty_list_is_valid() {
        let s = validate_stream(&[], 128, 128, 50.0).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.window_us(), 50_000);
    }

    #[test]
    fn single_event() {
        let s = validate_stream(&[raw(10, 5, 5, 1)], 128, 128, 50.0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.events()[0], Event::new(10, 5, 5, Polarity::On));
    }

    #[test]
    fn x_out_of_bounds_names_the_event() {
        let err = validate_stream(&[raw(1, 1, 1, 0), raw(10, 200, 5, 1)], 128, 128, 50.0).unwrap_err();
        match err {
            Error::InvalidEvent { index, reason } => {
                assert_eq!(index, 1);
                assert!(reason.contains("x out of bounds"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_polarity_and_time() {
        assert!(validate_stream(&[raw(1, 1, 1, 2)], 8, 8, 1.0).is_err());
        assert!(validate_stream(&[raw(-1, 1, 1, 0)], 8, 8, 1.0).is_err());
        assert!(validate_stream(&[raw(1000, 1, 1, 0)], 8, 8, 1.0).is_err());
        assert!(validate_stream(&[raw(999, 1, 1, 0)], 8, 8, 1.0).is_ok());
    }

    #[test]
    fn sort_is_stable_for_ties() {
        let s =
            validate_stream(&[raw(5, 1, 0, 0), raw(3, 2, 0, 0), raw(5, 3, 0, 1), raw(3, 4, 0, 1)], 8, 8, 1.0).unwrap();
        let xs: Vec<u16> = s.events().iter().map(|e| e.x).collect();
        assert_eq!(xs, vec![2, 4, 1, 3]);
    }
}
