//! Key-event-point extraction.
//!
//! Two stages reduce a raw window to the events that carry the motion:
//!
//! 1. **Main stream.** Events are mapped into the unit cube
//!    `(x / (width-1), y / (height-1), t / window)`. The centroid of that
//!    cloud minimises the summed squared distance, and events within `radius`
//!    of it form the main stream.
//! 2. **Key stream.** A target size `M'` is derived from the main-stream size
//!    `M` by [`key_count`]. Several random `M'`-subsets are drawn and the one
//!    whose 3-D occupancy histogram is closest to the main stream's in KL
//!    divergence is kept.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Event, EventStream};

/// Main-stream threshold used when none is configured.
pub const DEFAULT_RADIUS: f64 = 0.35;
pub const DEFAULT_LAMBDA1: f64 = 300.0;
pub const DEFAULT_LAMBDA2: f64 = 600.0;
pub const DEFAULT_TRIALS: usize = 16;
/// Histogram cells per axis.
pub const DEFAULT_CELLS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KepConfig {
    pub radius: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub trials: usize,
    pub cells: usize,
    pub seed: u64,
}

impl Default for KepConfig {
    fn default() -> Self {
        KepConfig {
            radius: DEFAULT_RADIUS,
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            trials: DEFAULT_TRIALS,
            cells: DEFAULT_CELLS,
            seed: 0,
        }
    }
}

impl KepConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN as well
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::arg(format!("KEP radius must be > 0, got {}", self.radius)));
        }
        if !(self.lambda1 < self.lambda2) {
            return Err(Error::arg(format!("KEP needs lambda1 < lambda2, got {} and {}", self.lambda1, self.lambda2)));
        }
        if self.trials == 0 {
            return Err(Error::arg("KEP trials must be >= 1"));
        }
        if self.cells == 0 {
            return Err(Error::arg("KEP cells per axis must be >= 1"));
        }
        Ok(())
    }
}

/// Centroid of the normalized event cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterCenter {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

/// Normalized `(x, y, t)` coordinates of an event.
#[inline]
fn normalized(e: &Event, stream: &EventStream) -> [f64; 3] {
    let nx = if stream.width() > 1 { e.x as f64 / (stream.width() - 1) as f64 } else { 0.0 };
    let ny = if stream.height() > 1 { e.y as f64 / (stream.height() - 1) as f64 } else { 0.0 };
    [nx, ny, e.t as f64 / stream.window_us() as f64]
}

pub fn cluster_center(stream: &EventStream) -> Result<ClusterCenter> {
    if stream.is_empty() {
        return Err(Error::Empty("cluster centre of an empty stream"));
    }
    let mut sum = [0.0f64; 3];
    for e in stream.events() {
        let c = normalized(e, stream);
        for k in 0..3 {
            sum[k] += c[k];
        }
    }
    let n = stream.len() as f64;
    Ok(ClusterCenter { x: sum[0] / n, y: sum[1] / n, t: sum[2] / n })
}

/// Events within `config.radius` of the centroid, in their original order.
pub fn extract_main(stream: &EventStream, config: &KepConfig) -> Result<EventStream> {
    let events = stream.events();
    let kept = main_indices(stream, config)?.into_iter().map(|i| events[i]).collect();
    Ok(stream.with_events(kept))
}

/// Indices of the main-stream events, ascending.
pub fn main_indices(stream: &EventStream, config: &KepConfig) -> Result<Vec<usize>> {
    let center = cluster_center(stream)?;
    let r2 = config.radius * config.radius;
    Ok(stream
        .events()
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            let c = normalized(e, stream);
            let d2 = (c[0] - center.x).powi(2) + (c[1] - center.y).powi(2) + (c[2] - center.t).powi(2);
            d2 <= r2
        })
        .map(|(i, _)| i)
        .collect())
}

/// Target key-stream size for a main stream of `m` events.
///
/// Below 500 events everything is kept; above, the size saturates near
/// `lambda1` (for `500 <= m < 1000`) or `lambda2` (for `m >= 1000`). The result
/// is floored and never exceeds `m`.
pub fn key_count(m: usize, lambda1: f64, lambda2: f64) -> usize {
    let saturating = |lambda: f64| {
        let value = 0.5 * lambda * (1.0 + (1.0 / (m as f64 - lambda)).exp());
        value.floor().max(0.0) as usize
    };
    let count = if m < 500 {
        m
    } else if m < 1000 {
        saturating(lambda1)
    } else {
        saturating(lambda2)
    };
    count.min(m)
}

/// Normalized occupancy histogram over `cells^3` spatio-temporal cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityGrid {
    pub cells: usize,
    pub counts: Vec<u64>,
    pub probs: Vec<f64>,
}

impl ProbabilityGrid {
    pub fn from_counts(cells: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != cells * cells * cells {
            return Err(Error::shape(format!("{} counts for a {cells}^3 grid", counts.len())));
        }
        let total: u64 = counts.iter().sum();
        let probs = if total == 0 {
            vec![0.0; counts.len()]
        } else {
            counts.iter().map(|&h| h as f64 / total as f64).collect()
        };
        Ok(ProbabilityGrid { cells, counts, probs })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[inline]
fn cell_of(v: f64, cells: usize) -> usize {
    ((v * cells as f64).floor().max(0.0) as usize).min(cells - 1)
}

fn histogram_of<'a>(events: impl Iterator<Item = &'a Event>, stream: &EventStream, cells: usize) -> Vec<u64> {
    let mut counts = vec![0u64; cells * cells * cells];
    for e in events {
        let c = normalized(e, stream);
        let (i, j, k) = (cell_of(c[0], cells), cell_of(c[1], cells), cell_of(c[2], cells));
        counts[(i * cells + j) * cells + k] += 1;
    }
    counts
}

pub fn histogram_prob(stream: &EventStream, cells: usize) -> Result<ProbabilityGrid> {
    if stream.is_empty() {
        return Err(Error::Empty("histogram of an empty stream"));
    }
    if cells == 0 {
        return Err(Error::arg("histogram needs at least one cell per axis"));
    }
    ProbabilityGrid::from_counts(cells, histogram_of(stream.events().iter(), stream, cells))
}

/// KL divergence `D(p || q)` in nats.
///
/// Cells with `p = 0` contribute nothing. When `p` has mass on a cell that is
/// empty in `q`, `q` receives a pseudo-count of `1 / cells^3` on every cell
/// before normalisation; otherwise both distributions are used as given.
pub fn kl_divergence(p: &ProbabilityGrid, q: &ProbabilityGrid) -> Result<f64> {
    if p.cells != q.cells || p.probs.len() != q.probs.len() {
        return Err(Error::shape(format!("KL between grids of {} and {} cells per axis", p.cells, q.cells)));
    }
    let uncovered = p.probs.iter().zip(&q.probs).any(|(&pp, &qq)| pp > 0.0 && qq == 0.0);
    let mut kl = 0.0;
    if uncovered {
        let eps = 1.0 / q.probs.len() as f64;
        let denom = q.total() as f64 + eps * q.probs.len() as f64;
        for (&pp, &h) in p.probs.iter().zip(&q.counts) {
            if pp > 0.0 {
                kl += pp * (pp / ((h as f64 + eps) / denom)).ln();
            }
        }
    } else {
        for (&pp, &qq) in p.probs.iter().zip(&q.probs) {
            if pp > 0.0 {
                kl += pp * (pp / qq).ln();
            }
        }
    }
    Ok(kl)
}

/// The chosen key subset and the score of every candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct KeySelection {
    pub stream: EventStream,
    /// KL divergence of the chosen subset.
    pub kl: f64,
    /// Index into `candidate_kl` of the chosen subset.
    pub chosen: usize,
    pub candidate_kl: Vec<f64>,
    /// Sorted event indices into the main stream for each candidate.
    pub candidates: Vec<Vec<usize>>,
}

/// Draws `trials` random subsets of size [`key_count`] and keeps the one with
/// the lowest KL divergence to the main stream. Ties go to the earliest draw.
pub fn extract_key(main: &EventStream, config: &KepConfig) -> Result<EventStream> {
    Ok(select_key(main, config)?.stream)
}

pub fn select_key(main: &EventStream, config: &KepConfig) -> Result<KeySelection> {
    config.validate()?;
    if main.is_empty() {
        return Err(Error::Empty("key extraction from an empty stream"));
    }
    let m = main.len();
    let target = key_count(m, config.lambda1, config.lambda2);
    if target >= m {
        return Ok(KeySelection {
            stream: main.clone(),
            kl: 0.0,
            chosen: 0,
            candidate_kl: vec![0.0],
            candidates: vec![(0..m).collect()],
        });
    }

    // candidates are drawn serially from one generator so the set does not
    // depend on how they are scored
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pool: Vec<usize> = (0..m).collect();
    let mut candidates = Vec::with_capacity(config.trials);
    for _ in 0..config.trials {
        for i in 0..target {
            let j = rng.random_range(i..m);
            pool.swap(i, j);
        }
        let mut chosen = pool[..target].to_vec();
        chosen.sort_unstable();
        candidates.push(chosen);
    }

    let reference = histogram_prob(main, config.cells)?;
    let events = main.events();
    let mut candidate_kl = Vec::with_capacity(candidates.len());
    for idx in &candidates {
        let counts = histogram_of(idx.iter().map(|&i| &events[i]), main, config.cells);
        let grid = ProbabilityGrid::from_counts(config.cells, counts)?;
        candidate_kl.push(kl_divergence(&grid, &reference)?);
    }
    let mut best = 0;
    for (i, &kl) in candidate_kl.iter().enumerate() {
        if kl < candidate_kl[best] {
            best = i;
        }
    }
    let subset = candidates[best].iter().map(|&i| events[i]).collect();
    Ok(KeySelection {
        stream: main.with_events(subset),
        kl: candidate_kl[best],
        chosen: best,
        candidate_kl,
        candidates,
    })
}

/// Output of the full two-stage filter.
#[derive(Debug, Clone, PartialEq)]
pub struct KepOutput {
    pub main: EventStream,
    pub key: EventStream,
}

impl KepOutput {
    pub fn sizes(&self) -> (usize, usize) {
        (self.main.len(), self.key.len())
    }
}

/// Main-stream extraction followed by key-stream selection. An empty input,
/// or an empty main stream, yields empty outputs.
pub fn run(stream: &EventStream, config: &KepConfig) -> Result<KepOutput> {
    config.validate()?;
    if stream.is_empty() {
        return Ok(KepOutput { main: stream.clone(), key: stream.clone() });
    }
    let main = extract_main(stream, config)?;
    let key = if main.is_empty() { main.clone() } else { extract_key(&main, config)? };
    Ok(KepOutput { main, key })
}

/// Positions in the raw stream of the main and key events, both ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KepIndices {
    pub main: Vec<usize>,
    pub key: Vec<usize>,
}

/// [`run`], reporting which raw events survive each stage.
pub fn run_indexed(stream: &EventStream, config: &KepConfig) -> Result<KepIndices> {
    config.validate()?;
    if stream.is_empty() {
        return Ok(KepIndices { main: Vec::new(), key: Vec::new() });
    }
    let main = main_indices(stream, config)?;
    if main.is_empty() {
        return Ok(KepIndices { main, key: Vec::new() });
    }
    let events = stream.events();
    let main_stream = stream.with_events(main.iter().map(|&i| events[i]).collect());
    let sel = select_key(&main_stream, config)?;
    let key = sel.candidates[sel.chosen].iter().map(|&j| main[j]).collect();
    Ok(KepIndices { main, key })
}
