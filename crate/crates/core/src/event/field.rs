use super::EventStream;
use crate::error::{Error, Result};

/// Time bin of a timestamp for a window split into `steps` equal bins.
///
/// Timestamps at or past the right edge land in the last bin.
#[inline]
pub fn bin_of(t_us: u32, window_us: u32, steps: usize) -> usize {
    let bin = (t_us as u64 * steps as u64) / window_us as u64;
    (bin as usize).min(steps - 1)
}

/// Dense binary tensor of shape `steps x 2 x height x width`.
///
/// Slice `t` is the network input at step `t`; channel 0 holds OFF events and
/// channel 1 ON events. Several events landing on one cell set it once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventField {
    steps: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl EventField {
    pub fn zeros(steps: usize, height: usize, width: usize) -> Self {
        EventField { steps, height, width, data: vec![0; steps * 2 * height * width] }
    }

    /// Bins a stream into `steps` slices.
    pub fn from_stream(stream: &EventStream, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::arg("bin count must be at least 1"));
        }
        let mut field = Self::zeros(steps, stream.height() as usize, stream.width() as usize);
        for e in stream.events() {
            let bin = bin_of(e.t, stream.window_us(), steps);
            let idx = field.index(bin, e.p.bit() as usize, e.y as usize, e.x as usize);
            field.data[idx] = 1;
        }
        Ok(field)
    }

    /// Event-frame baseline input: every event in the window is accumulated
    /// into one binary frame, and that frame is repeated at every step.
    pub fn replicated_frame(stream: &EventStream, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::arg("bin count must be at least 1"));
        }
        let mut field = Self::zeros(steps, stream.height() as usize, stream.width() as usize);
        let slice = field.slice_len();
        for e in stream.events() {
            let idx = field.index(0, e.p.bit() as usize, e.y as usize, e.x as usize);
            field.data[idx] = 1;
        }
        let (first, rest) = field.data.split_at_mut(slice);
        for chunk in rest.chunks_exact_mut(slice) {
            chunk.copy_from_slice(first);
        }
        Ok(field)
    }

    #[inline]
    fn index(&self, bin: usize, p: usize, y: usize, x: usize) -> usize {
        ((bin * 2 + p) * self.height + y) * self.width + x
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of cells in one time slice (`2 * height * width`).
    pub fn slice_len(&self) -> usize {
        2 * self.height * self.width
    }

    pub fn get(&self, bin: usize, p: usize, y: usize, x: usize) -> u8 {
        self.data[self.index(bin, p, y, x)]
    }

    pub fn set(&mut self, bin: usize, p: usize, y: usize, x: usize, value: bool) {
        let idx = self.index(bin, p, y, x);
        self.data[idx] = value as u8;
    }

    /// The dense slice for one step, laid out channel-major (`p, y, x`).
    pub fn slice(&self, bin: usize) -> &[u8] {
        let n = self.slice_len();
        &self.data[bin * n..(bin + 1) * n]
    }

    /// Ascending flat indices of the set cells in one slice.
    pub fn active(&self, bin: usize) -> Vec<u32> {
        self.slice(bin).iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, _)| i as u32).collect()
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }
}

impl EventStream {
    /// Dense event field with `steps` time bins.
    pub fn to_event_field(&self, steps: usize) -> Result<EventField> {
        EventField::from_stream(self, steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, Polarity};

    fn stream(events: Vec<Event>) -> EventStream {
        EventStream::from_events(events, 128, 128, 50_000).unwrap()
    }

    #[test]
    fn first_bin_placement() {
        let f = stream(vec![Event::new(0, 3, 4, Polarity::On)]).to_event_field(50).unwrap();
        assert_eq!(f.get(0, 1, 4, 3), 1);
        assert_eq!(f.count_ones(), 1);
    }

    #[test]
    fn duplicate_cells_clamp() {
        let f = stream(vec![Event::new(100, 3, 4, Polarity::On), Event::new(900, 3, 4, Polarity::On)])
            .to_event_field(50)
            .unwrap();
        assert_eq!(f.count_ones(), 1);
    }

    #[test]
    fn right_edge_lands_in_last_bin() {
        // floor(49_999 / (50_000 / 50)) = floor(49.999) = 49
        let f = stream(vec![Event::new(49_999, 0, 0, Polarity::Off)]).to_event_field(50).unwrap();
        assert_eq!(f.get(49, 0, 0, 0), 1);
        assert_eq!(bin_of(50_000, 50_000, 50), 49);
    }

    #[test]
    fn zero_bins_is_an_error() {
        assert!(stream(vec![]).to_event_field(0).is_err());
    }

    #[test]
    fn replicated_frame_repeats_every_step() {
        let s = stream(vec![Event::new(0, 1, 1, Polarity::On), Event::new(40_000, 2, 2, Polarity::Off)]);
        let f = EventField::replicated_frame(&s, 5).unwrap();
        for t in 0..5 {
            assert_eq!(f.active(t), f.active(0));
        }
        assert_eq!(f.count_ones(), 10);
    }
}
