use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, LabeledScene, Lighting, Mode, TestSet};
use crate::deploy::{decode_action, quantize_weights, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::event::{EventStream, ObjectKind};
use crate::kep::{self, KepConfig};
use crate::parallel::map_ordered;
use crate::snn::{write_network, LayerSpec, Network, NeuronParams, Shape};
use crate::train::{fit, stream_inputs, History, LossSpec, Sample};

/// The default layer stack for an arbitrary resolution divisible by 16.
pub(crate) fn network_for(cfg: &ExperimentConfig, steps: usize) -> Result<Network> {
    let (h, w) = (cfg.height as usize, cfg.width as usize);
    if h % 16 != 0 || w % 16 != 0 {
        return Err(Error::Config(format!("resolution {w}x{h} must be a multiple of 16")));
    }
    let mut specs = Network::default_specs();
    specs[5] = LayerSpec::dense(32 * (h / 16) * (w / 16), 512);
    Network::build(Shape::new(2, h, w), &specs, steps, NeuronParams::default(), cfg.init_seed)
}

/// Trains one network on the training split of `window_ms`, applying KEP to
/// every stream first when the config asks for it.
pub fn run_training(cfg: &ExperimentConfig, train: &[LabeledScene], window_ms: u32) -> Result<(Network, History)> {
    cfg.validate()?;
    let mut net = network_for(cfg, window_ms as usize)?;
    let samples: Vec<Sample> = train
        .iter()
        .map(|s| {
            if s.window_ms != window_ms {
                return Err(Error::Config(format!("scene of {} ms in a {window_ms} ms training set", s.window_ms)));
            }
            let stream = if cfg.kep { kep::run(&s.stream, &cfg.kep_config)?.key } else { s.stream.clone() };
            Ok(Sample { stream, label: s.label })
        })
        .collect::<Result<_>>()?;
    let history = fit(&mut net, &samples, &cfg.train)?;
    Ok((net, history))
}

/// Writes the checkpoint and a JSON training history.
pub fn save_training(net: &Network, history: &History, checkpoint: &Path, history_path: &Path) -> Result<()> {
    write_network(net, checkpoint)?;
    std::fs::write(history_path, serde_json::to_string_pretty(history)? + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub mode: Mode,
    /// Quantize the checkpoint before evaluating (no-op if it already is).
    pub quantized: bool,
    pub sigma: f64,
    pub units: f64,
    pub kep: Option<KepConfig>,
    pub timing: bool,
    pub alpha: f64,
}

impl EvalOptions {
    pub fn from_config(cfg: &ExperimentConfig, mode: Mode) -> Self {
        EvalOptions {
            mode,
            quantized: cfg.quantize,
            sigma: cfg.sigma,
            units: cfg.units,
            kep: cfg.kep.then_some(cfg.kep_config),
            timing: cfg.timing,
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// Aggregate over the scenes of one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub object: ObjectKind,
    pub lighting: Lighting,
    pub window_ms: u32,
    pub mode: Mode,
    pub quantized: bool,
    pub kep: bool,
    pub scenes: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean spike count of each output channel.
    pub mean_counts: Vec<f64>,
    pub mean_speed: f64,
    pub mean_raw_events: f64,
    /// Events fed to the network per inference, after filtering.
    pub mean_input_events: f64,
    pub mean_main_events: Option<f64>,
    pub mean_key_events: Option<f64>,
    /// Fraction of key events emitted by the object; absent when the scenes
    /// carry no generator tags (e.g. loaded from disk).
    pub key_purity: Option<f64>,
    /// Mean wall-clock time of one forward pass, microseconds.
    pub mean_wall_us: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: Option<ExperimentConfig>,
    pub conditions: Vec<ConditionResult>,
}

impl EvalReport {
    pub fn merge(&mut self, other: EvalReport) {
        if self.config.is_none() {
            self.config = other.config;
        }
        self.conditions.extend(other.conditions);
    }

    pub fn find(&self, object: ObjectKind, lighting: Lighting, window_ms: u32, mode: Mode) -> Option<&ConditionResult> {
        self.conditions
            .iter()
            .find(|c| c.object == object && c.lighting == lighting && c.window_ms == window_ms && c.mode == mode)
    }

    /// Pooled success rate over every condition matching the filter.
    pub fn pooled_success(&self, mut keep: impl FnMut(&ConditionResult) -> bool) -> Option<f64> {
        let (mut hits, mut total) = (0, 0);
        for c in self.conditions.iter().filter(|c| keep(c)) {
            hits += c.successes;
            total += c.scenes;
        }
        (total > 0).then(|| hits as f64 / total as f64)
    }
}

/// Per-scene outcome of [`evaluate_one`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneOutcome {
    pub counts: Vec<u32>,
    pub predicted: usize,
    pub speed: f64,
    pub input_events: usize,
    pub main_events: Option<usize>,
    pub key_events: Option<usize>,
    pub key_object_events: Option<usize>,
    pub wall_us: f64,
}

/// Active inputs of the binary frame that accumulates the whole window,
/// repeated at every step.
pub fn frame_inputs(net: &Network, stream: &EventStream) -> Result<Vec<Vec<u32>>> {
    let per_step = stream_inputs(net, stream)?;
    let mut frame: Vec<u32> = per_step.into_iter().flatten().collect();
    frame.sort_unstable();
    frame.dedup();
    Ok(vec![frame; net.steps])
}

/// Runs one scene through a (possibly quantized) network.
pub fn evaluate_one(net: &Network, scene: &LabeledScene, opts: &EvalOptions) -> Result<SceneOutcome> {
    let (stream, main_events, key_events, key_object_events) = match &opts.kep {
        Some(k) => {
            let idx = kep::run_indexed(&scene.stream, k)?;
            let events = scene.stream.events();
            let key = scene.stream.with_events(idx.key.iter().map(|&i| events[i]).collect());
            let object = (scene.is_object.len() == events.len())
                .then(|| idx.key.iter().filter(|&&i| scene.is_object[i]).count());
            (key, Some(idx.main.len()), Some(idx.key.len()), object)
        }
        None => (scene.stream.clone(), None, None, None),
    };
    let n_dt = LossSpec::for_steps(net.steps as u32)?.target_true as f64;
    let started = opts.timing.then(Instant::now);
    let record = match opts.mode {
        Mode::Async => net.forward_async(&stream)?,
        Mode::EfSnn => net.forward_dense_inputs(&frame_inputs(net, &stream)?, false)?,
    };
    let wall_us = started.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e6);
    let action = decode_action(&record.counts, n_dt, opts.alpha)?;
    Ok(SceneOutcome {
        counts: record.counts,
        predicted: action.approach,
        speed: action.speed,
        input_events: stream.len(),
        main_events,
        key_events,
        key_object_events,
        wall_us,
    })
}

/// Evaluates a checkpoint on every test set in one mode.
pub fn evaluate(net: &Network, sets: &[TestSet], opts: &EvalOptions) -> Result<EvalReport> {
    let quantized;
    let net = if opts.quantized && net.quantization.is_none() {
        quantized = quantize_weights(net, opts.sigma, opts.units)?.network;
        &quantized
    } else {
        net
    };
    let mut report = EvalReport::default();
    for set in sets {
        if set.window_ms as usize != net.steps {
            return Err(Error::Config(format!(
                "checkpoint runs {} steps but the test set window is {} ms",
                net.steps, set.window_ms
            )));
        }
        if set.scenes.is_empty() {
            return Err(Error::Empty("test set"));
        }
        let outputs = net.output_channels();
        let n = set.scenes.len() as f64;
        let mut successes = 0;
        let mut counts = vec![0.0; outputs];
        let (mut speed, mut raw, mut input) = (0.0, 0.0, 0.0);
        let (mut main, mut key, mut key_object, mut wall) = (0.0, 0.0, 0.0, 0.0);
        let mut tagged = true;
        let outcomes = map_ordered(&set.scenes, |scene| evaluate_one(net, scene, opts));
        for (scene, out) in set.scenes.iter().zip(outcomes) {
            let out = out?;
            successes += (out.predicted == scene.label) as usize;
            for (acc, &c) in counts.iter_mut().zip(&out.counts) {
                *acc += c as f64;
            }
            speed += out.speed;
            raw += scene.stream.len() as f64;
            input += out.input_events as f64;
            main += out.main_events.unwrap_or(0) as f64;
            key += out.key_events.unwrap_or(0) as f64;
            key_object += out.key_object_events.unwrap_or(0) as f64;
            tagged &= out.key_object_events.is_some();
            wall += out.wall_us;
        }
        let kep = opts.kep.is_some();
        report.conditions.push(ConditionResult {
            object: set.object,
            lighting: set.lighting,
            window_ms: set.window_ms,
            mode: opts.mode,
            quantized: net.quantization.is_some(),
            kep,
            scenes: set.scenes.len(),
            successes,
            success_rate: successes as f64 / n,
            mean_counts: counts.iter().map(|c| c / n).collect(),
            mean_speed: speed / n,
            mean_raw_events: raw / n,
            mean_input_events: input / n,
            mean_main_events: kep.then_some(main / n),
            mean_key_events: kep.then_some(key / n),
            key_purity: (kep && tagged && key > 0.0).then_some(key_object / key),
            mean_wall_us: opts.timing.then_some(wall / n),
        });
    }
    Ok(report)
}
