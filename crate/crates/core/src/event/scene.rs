//! Synthetic event streams from an idealized contrast-threshold sensor.
//!
//! A bright object with a soft edge moves along a straight line. Each pixel
//! keeps a reference log-intensity; whenever the pixel's log-intensity moves a
//! full threshold step away from the reference, an event of the matching
//! polarity is emitted and the reference shifts by one step. Crossing times are
//! solved in closed form on the linear trajectory, so timestamps have
//! microsecond resolution without time stepping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{Event, EventStream, Polarity};
use crate::error::{Error, Result};

/// Width in pixels of the object's edge ramp.
const EDGE_WIDTH: f64 = 1.0;
/// Vertical elongation of the tall blob relative to its radius.
const TALL_BLOB_ASPECT: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectKind {
    Disk,
    TallBlob,
}

impl ObjectKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::Disk => "disk",
            ObjectKind::TallBlob => "tall-blob",
        }
    }

    fn aspect(self) -> f64 {
        match self {
            ObjectKind::Disk => 1.0,
            ObjectKind::TallBlob => TALL_BLOB_ASPECT,
        }
    }
}

impl std::str::FromStr for ObjectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disk" | "ball" => Ok(ObjectKind::Disk),
            "tall-blob" | "blob" | "human" => Ok(ObjectKind::TallBlob),
            _ => Err(Error::arg(format!("unknown object kind {s:?}"))),
        }
    }
}

/// Side the object approaches from. The value doubles as the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[repr(u8)]
pub enum ApproachDirection {
    FromLeft = 0,
    FromRight = 1,
}

impl ApproachDirection {
    pub fn label(self) -> usize {
        self as usize
    }

    pub fn from_label(label: usize) -> Option<Self> {
        match label {
            0 => Some(ApproachDirection::FromLeft),
            1 => Some(ApproachDirection::FromRight),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub kind: ObjectKind,
    /// Object centre at the window start, pixels `(x, y)`.
    pub start: (f64, f64),
    /// Object centre at the window end.
    pub end: (f64, f64),
    pub radius: f64,
    pub direction: ApproachDirection,
    /// Contrast threshold on log-intensity.
    pub threshold: f64,
    /// Log-intensity step between object and background.
    pub contrast: f64,
    /// Background noise, events per pixel per second.
    pub noise_rate: f64,
    pub seed: u64,
    pub width: u16,
    pub height: u16,
    pub window_us: u32,
}

impl SceneConfig {
    fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::Scene(format!("threshold must be > 0, got {}", self.threshold)));
        }
        if !(self.noise_rate >= 0.0 && self.noise_rate.is_finite()) {
            return Err(Error::Scene(format!("noise rate must be >= 0, got {}", self.noise_rate)));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Scene(format!("radius must be > 0, got {}", self.radius)));
        }
        if !self.contrast.is_finite() {
            return Err(Error::Scene("contrast must be finite".into()));
        }
        if self.width == 0 || self.height == 0 || self.window_us == 0 {
            return Err(Error::Scene("empty resolution or window".into()));
        }
        for (name, (x, y)) in [("start", self.start), ("end", self.end)] {
            if !self.footprint_visible(x, y) {
                return Err(Error::Scene(format!(
                    "object at {name} ({x:.1}, {y:.1}) lies entirely outside the {}x{} frame",
                    self.width, self.height
                )));
            }
        }
        Ok(())
    }

    fn half_extent(&self) -> (f64, f64) {
        let reach = self.radius + EDGE_WIDTH / 2.0;
        (reach, reach * self.kind.aspect())
    }

    fn footprint_visible(&self, x: f64, y: f64) -> bool {
        let (hx, hy) = self.half_extent();
        x + hx > 0.0 && x - hx < (self.width - 1) as f64 && y + hy > 0.0 && y - hy < (self.height - 1) as f64
    }
}

/// A rendered scene with per-event ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedScene {
    pub stream: EventStream,
    pub label: ApproachDirection,
    /// `is_object[i]` is true when event `i` came from the object rather
    /// than background noise.
    pub is_object: Vec<bool>,
}

/// Renders the scene and returns the stream with its direction label.
pub fn generate_scene(config: &SceneConfig) -> Result<(EventStream, ApproachDirection)> {
    let scene = render_scene(config)?;
    Ok((scene.stream, scene.label))
}

pub fn render_scene(config: &SceneConfig) -> Result<TaggedScene> {
    config.validate()?;
    let object = object_events(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = noise_events(&mut rng, config.noise_rate, config.width, config.height, config.window_us);
    let (events, is_object) = merge_tagged(object, noise);
    Ok(TaggedScene {
        stream: EventStream::from_sorted_unchecked(events, config.width, config.height, config.window_us),
        label: config.direction,
        is_object,
    })
}

/// Superimposes uniform background noise on a stream. Original events are
/// kept and precede noise events with equal timestamps.
pub fn inject_noise(stream: &EventStream, rate: f64, seed: u64) -> Result<EventStream> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::arg(format!("noise rate must be >= 0, got {rate}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = noise_events(&mut rng, rate, stream.width(), stream.height(), stream.window_us());
    let (events, _) = merge_tagged(stream.events().to_vec(), noise);
    Ok(stream.with_events(events))
}

fn noise_events<R: Rng>(rng: &mut R, rate: f64, width: u16, height: u16, window_us: u32) -> Vec<Event> {
    let mean = rate * width as f64 * height as f64 * window_us as f64 * 1e-6;
    if mean <= 0.0 {
        return Vec::new();
    }
    let count = Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0);
    let mut events: Vec<Event> = (0..count)
        .map(|_| {
            let t = rng.random_range(0..window_us);
            let x = rng.random_range(0..width);
            let y = rng.random_range(0..height);
            let p = if rng.random::<bool>() { Polarity::On } else { Polarity::Off };
            Event::new(t, x, y, p)
        })
        .collect();
    events.sort_by_key(|e| e.t);
    events
}

/// Stable merge of two sorted lists; ties put `first` before `second`.
fn merge_tagged(first: Vec<Event>, second: Vec<Event>) -> (Vec<Event>, Vec<bool>) {
    let mut events = Vec::with_capacity(first.len() + second.len());
    let mut tags = Vec::with_capacity(first.len() + second.len());
    let (mut i, mut j) = (0, 0);
    while i < first.len() || j < second.len() {
        let take_first = j >= second.len() || (i < first.len() && first[i].t <= second[j].t);
        if take_first {
            events.push(first[i]);
            tags.push(true);
            i += 1;
        } else {
            events.push(second[j]);
            tags.push(false);
            j += 1;
        }
    }
    (events, tags)
}

/// Object events, sorted by time.
fn object_events(cfg: &SceneConfig) -> Vec<Event> {
    let aspect = cfg.kind.aspect();
    let window_s = cfg.window_us as f64;
    // work in a space where the footprint is a disk of `radius`
    let c0 = (cfg.start.0, cfg.start.1 / aspect);
    let vel = ((cfg.end.0 - cfg.start.0) / window_s, (cfg.end.1 - cfg.start.1) / window_s / aspect);
    let speed2 = vel.0 * vel.0 + vel.1 * vel.1;
    if speed2 == 0.0 || cfg.contrast == 0.0 {
        return Vec::new();
    }
    let speed = speed2.sqrt();
    let r = cfg.radius;
    let outer = r + EDGE_WIDTH / 2.0;
    let profile = |d: f64| ((outer - d) / EDGE_WIDTH).clamp(0.0, 1.0);

    let (hx, hy) = cfg.half_extent();
    let x_lo = (cfg.start.0.min(cfg.end.0) - hx).floor().max(0.0) as u16;
    let x_hi = (cfg.start.0.max(cfg.end.0) + hx).ceil().min((cfg.width - 1) as f64) as u16;
    let y_lo = (cfg.start.1.min(cfg.end.1) - hy).floor().max(0.0) as u16;
    let y_hi = (cfg.start.1.max(cfg.end.1) + hy).ceil().min((cfg.height - 1) as f64) as u16;

    let last_t = cfg.window_us - 1;
    let to_us = |t: f64| (t.max(0.0).floor() as u64).min(last_t as u64) as u32;
    let mut events = Vec::new();
    for py in y_lo..=y_hi {
        for px in x_lo..=x_hi {
            let p = (px as f64, py as f64 / aspect);
            let rel = (p.0 - c0.0, p.1 - c0.1);
            // closest approach along the unbounded line, then clipped to the window
            let t_star = ((rel.0 * vel.0 + rel.1 * vel.1) / speed2).clamp(0.0, window_s);
            let dist_at = |t: f64| {
                let dx = rel.0 - vel.0 * t;
                let dy = rel.1 - vel.1 * t;
                (dx * dx + dy * dy).sqrt()
            };
            let d_start = dist_at(0.0);
            let d_min = dist_at(t_star);
            let d_end = dist_at(window_s);
            if d_min >= outer {
                continue;
            }
            let perp2 = {
                // squared distance from the pixel to the unbounded line
                let along = (rel.0 * vel.0 + rel.1 * vel.1) / speed;
                (rel.0 * rel.0 + rel.1 * rel.1 - along * along).max(0.0)
            };
            let t_line = (rel.0 * vel.0 + rel.1 * vel.1) / speed2;
            // time at which the distance equals `d` on the given side of the
            // closest approach
            let time_at = |d: f64, before: bool| {
                let off = (d * d - perp2).max(0.0).sqrt() / speed;
                if before {
                    t_line - off
                } else {
                    t_line + off
                }
            };
            let level_to_dist = |level: f64| outer - (level / cfg.contrast) * EDGE_WIDTH;

            let l_start = cfg.contrast * profile(d_start);
            let l_peak = cfg.contrast * profile(d_min);
            let l_end = cfg.contrast * profile(d_end);
            let mut reference = l_start;
            for (from, to, before) in [(l_start, l_peak, true), (l_peak, l_end, false)] {
                let rising = to > from;
                loop {
                    let level = if rising { reference + cfg.threshold } else { reference - cfg.threshold };
                    let reached = if rising { level <= to + 1e-12 } else { level >= to - 1e-12 };
                    if !reached || (level - from).abs() > (to - from).abs() + 1e-12 {
                        break;
                    }
                    let t = time_at(level_to_dist(level), before).clamp(0.0, window_s);
                    let polarity = if rising { Polarity::On } else { Polarity::Off };
                    events.push(Event::new(to_us(t), px, py, polarity));
                    reference = level;
                }
            }
        }
    }
    events.sort_by_key(|e| e.t);
    events
}
