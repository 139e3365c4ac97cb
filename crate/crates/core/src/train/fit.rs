use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward, Gradients, LossSpec, Optimizer, OptimizerKind, SurrogateSpec};
use crate::error::{Error, Result};
use crate::event::{bin_of, EventStream};
use crate::parallel::map_ordered;
use crate::snn::Network;

/// One labelled training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub stream: EventStream,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Spike-count targets; derived from the step count when absent.
    pub loss: Option<LossSpec>,
    pub surrogate: SurrogateSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 16,
            learning_rate: 0.001,
            optimizer: OptimizerKind::default(),
            seed: 0,
            loss: None,
            surrogate: SurrogateSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss over the epoch, measured before each batch update.
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

/// Index of the largest count; ties go to the lowest index.
pub fn argmax(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Fraction of predictions equal to their label.
pub fn accuracy_of(predictions: &[usize], labels: &[usize]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / predictions.len() as f64
}

/// Per-step sorted input indices (`p, y, x` layout) for a stream.
pub fn stream_inputs(net: &Network, stream: &EventStream) -> Result<Vec<Vec<u32>>> {
    if net.input.channels != 2
        || stream.height() as usize != net.input.height
        || stream.width() as usize != net.input.width
    {
        return Err(Error::shape(format!(
            "stream {}x{} does not match network input {}",
            stream.width(),
            stream.height(),
            net.input
        )));
    }
    let (h, w) = (net.input.height, net.input.width);
    let mut inputs = vec![Vec::new(); net.steps];
    for e in stream.events() {
        let bin = bin_of(e.t, stream.window_us(), net.steps);
        inputs[bin].push(((e.p.bit() as usize * h + e.y as usize) * w + e.x as usize) as u32);
    }
    for step in &mut inputs {
        step.sort_unstable();
        step.dedup();
    }
    Ok(inputs)
}

pub fn fit(net: &mut Network, samples: &[Sample], cfg: &TrainConfig) -> Result<History> {
    fit_with(net, samples, cfg, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with(
    net: &mut Network,
    samples: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<History> {
    if samples.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::arg("batch size must be positive"));
    }
    let outputs = net.output_channels();
    if let Some(bad) = samples.iter().find(|s| s.label >= outputs) {
        return Err(Error::arg(format!("label {} but the network has {outputs} outputs", bad.label)));
    }
    let loss = match cfg.loss {
        Some(l) if l.steps as usize != net.steps => {
            return Err(Error::arg(format!("loss built for {} steps, network runs {}", l.steps, net.steps)))
        }
        Some(l) => l,
        None => LossSpec::for_steps(net.steps as u32)?,
    };
    let inputs: Vec<Vec<Vec<u32>>> = samples.iter().map(|s| stream_inputs(net, &s.stream)).collect::<Result<_>>()?;

    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let shared: &Network = net;
            let per_sample = map_ordered(batch, |&i| -> Result<(bool, Gradients)> {
                let record = shared.forward_dense_inputs(&inputs[i], true)?;
                let hit = argmax(&record.counts) == samples[i].label;
                Ok((hit, backward(shared, &record, samples[i].label, &loss, &cfg.surrogate)?))
            });
            // summed in sample order so the result is independent of threading
            let mut acc = Gradients::zeros_like(net);
            for result in per_sample {
                let (hit, g) = result?;
                hits += hit as usize;
                acc.accumulate(&g);
            }
            loss_sum += acc.loss;
            acc.scale(1.0 / batch.len() as f64);
            opt.apply(net, &acc)?;
        }
        let stats =
            EpochStats { epoch, loss: loss_sum / samples.len() as f64, accuracy: hits as f64 / samples.len() as f64 };
        on_epoch(&stats);
        history.epochs.push(stats);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[3, 3]), 0);
        assert_eq!(argmax(&[0, 0, 0]), 0);
        assert_eq!(argmax(&[1, 4, 4]), 1);
        assert_eq!(argmax(&[]), 0);
    }

    #[test]
    fn accuracy() {
        assert_eq!(accuracy_of(&[0, 1, 1, 0], &[0, 1, 0, 0]), 0.75);
        assert_eq!(accuracy_of(&[], &[]), 0.0);
    }

    #[test]
    fn config_parses_from_toml() {
        let cfg: TrainConfig =
            toml::from_str("epochs = 3\nlearning_rate = 0.01\n[optimizer]\nkind = \"sgd\"\n").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.optimizer, OptimizerKind::Sgd);
    }
}
