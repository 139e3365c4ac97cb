use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ExperimentConfig, Lighting};
use crate::error::Result;
use crate::event::{render_scene, ApproachDirection, EventStream, ObjectKind, SceneConfig};
use crate::train::Sample;

/// A generated scene with its label and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScene {
    pub stream: EventStream,
    pub label: usize,
    pub object: ObjectKind,
    pub lighting: Lighting,
    pub window_ms: u32,
    /// True for events emitted by the object, false for noise.
    pub is_object: Vec<bool>,
}

impl LabeledScene {
    pub fn sample(&self) -> Sample {
        Sample { stream: self.stream.clone(), label: self.label }
    }
}

/// Scenes of one evaluation condition.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub object: ObjectKind,
    pub lighting: Lighting,
    pub window_ms: u32,
    pub scenes: Vec<LabeledScene>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub window_ms: u32,
    pub train: Vec<LabeledScene>,
    pub test: Vec<TestSet>,
}

// Stream identifiers that keep the splits independent of one another.
const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

/// Training and test scenes for one window.
///
/// The training split cycles through the training objects and lighting
/// conditions; every (test object, lighting) pair gets its own test set.
pub fn make_dataset(cfg: &ExperimentConfig, window_ms: u32) -> Result<Dataset> {
    cfg.validate()?;
    let mut combos = Vec::new();
    for &object in &cfg.train_objects {
        for &lighting in &cfg.lighting {
            combos.push((object, lighting));
        }
    }
    let mut rng = split_rng(cfg.seed, TRAIN_STREAM, window_ms, 0);
    let labels = stratified_labels(cfg.train_size, cfg.scenes.direction_balance, &mut rng);
    let mut train = Vec::with_capacity(cfg.train_size);
    for (i, &label) in labels.iter().enumerate() {
        let (object, lighting) = combos[i % combos.len()];
        train.push(draw_scene(cfg, object, lighting, window_ms, label, &mut rng)?);
    }

    let mut test = Vec::new();
    for (c, &object) in cfg.test_objects.iter().enumerate() {
        for (k, &lighting) in cfg.lighting.iter().enumerate() {
            let set = (c * cfg.lighting.len() + k) as u64;
            test.push(TestSet {
                object,
                lighting,
                window_ms,
                scenes: make_split(cfg, object, lighting, window_ms, cfg.test_size, set)?,
            });
        }
    }
    Ok(Dataset { window_ms, train, test })
}

/// `n` labelled scenes of a single condition. `set` separates independent
/// draws for the same condition.
pub fn make_split(
    cfg: &ExperimentConfig,
    object: ObjectKind,
    lighting: Lighting,
    window_ms: u32,
    n: usize,
    set: u64,
) -> Result<Vec<LabeledScene>> {
    let mut rng = split_rng(cfg.seed, TEST_STREAM, window_ms, set);
    let labels = stratified_labels(n, cfg.scenes.direction_balance, &mut rng);
    labels.into_iter().map(|label| draw_scene(cfg, object, lighting, window_ms, label, &mut rng)).collect()
}

fn split_rng(seed: u64, stream: u64, window_ms: u32, set: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream << 56) ^ ((window_ms as u64) << 24) ^ set);
    rng
}

/// Exactly `round(balance * n)` left approaches, in shuffled order.
fn stratified_labels(n: usize, balance: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let left = (balance * n as f64).round() as usize;
    let mut labels: Vec<usize> = (0..n)
        .map(|i| if i < left { ApproachDirection::FromLeft.label() } else { ApproachDirection::FromRight.label() })
        .collect();
    labels.shuffle(rng);
    labels
}

fn draw_scene(
    cfg: &ExperimentConfig,
    object: ObjectKind,
    lighting: Lighting,
    window_ms: u32,
    label: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledScene> {
    let d = &cfg.scenes;
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let radius = rng.random_range(d.radius.0..=d.radius.1);
    let speed = rng.random_range(d.speed.0..=d.speed.1);
    let drift = if d.vertical_drift > 0.0 { rng.random_range(-d.vertical_drift..=d.vertical_drift) } else { 0.0 };
    let half_height = match object {
        ObjectKind::Disk => radius,
        ObjectKind::TallBlob => radius * 2.5,
    };
    // keep the whole path on the sensor; long windows shorten the path
    let travel = (speed * window_ms as f64).min((w - 1.0 - 2.0 * radius).max(0.0));
    let x0 = rng.random_range(radius..=(w - 1.0 - radius - travel).max(radius));
    let y_lo = (half_height + drift.max(0.0)).min(h / 2.0);
    let y_hi = (h - 1.0 - half_height + drift.min(0.0)).max(y_lo);
    let y0 = rng.random_range(y_lo..=y_hi);
    let direction = ApproachDirection::from_label(label).expect("binary labels");
    let (start_x, end_x) = match direction {
        ApproachDirection::FromLeft => (x0, x0 + travel),
        ApproachDirection::FromRight => (w - 1.0 - x0, w - 1.0 - x0 - travel),
    };
    let scene = SceneConfig {
        kind: object,
        start: (start_x, y0 - drift / 2.0),
        end: (end_x, y0 + drift / 2.0),
        radius,
        direction,
        threshold: d.threshold,
        contrast: d.contrast_for(lighting),
        noise_rate: d.noise_for(lighting),
        seed: rng.random(),
        width: cfg.width,
        height: cfg.height,
        window_us: window_ms * 1000,
    };
    let tagged = render_scene(&scene)?;
    Ok(LabeledScene { stream: tagged.stream, label, object, lighting, window_ms, is_object: tagged.is_object })
}
