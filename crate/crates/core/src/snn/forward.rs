use super::lif_update;
use super::network::{Layer, LayerKind, Network};
use crate::error::{Error, Result};
use crate::event::{bin_of, EventField, EventStream};

/// Spikes of every layer over a full presentation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeRecord {
    pub steps: usize,
    pub layer_sizes: Vec<usize>,
    /// Active input indices per step (`p, y, x` layout), ascending.
    pub input: Vec<Vec<u32>>,
    /// `spikes[layer][step]`: ascending indices of the neurons that fired.
    pub spikes: Vec<Vec<Vec<u32>>>,
    /// `voltages[layer][step * n + i]`, kept only in training mode.
    pub voltages: Option<Vec<Vec<f64>>>,
    /// Spike count of each output neuron over all steps.
    pub counts: Vec<u32>,
}

impl SpikeRecord {
    pub fn total_spikes(&self, layer: usize) -> usize {
        self.spikes[layer].iter().map(Vec::len).sum()
    }

    /// Dense `steps x n` 0/1 matrix of one layer.
    pub fn dense(&self, layer: usize) -> Vec<u8> {
        let n = self.layer_sizes[layer];
        let mut out = vec![0u8; self.steps * n];
        for (t, fired) in self.spikes[layer].iter().enumerate() {
            for &i in fired {
                out[t * n + i as usize] = 1;
            }
        }
        out
    }

    /// Per-neuron spike counts for one layer.
    pub fn layer_counts(&self, layer: usize) -> Vec<u32> {
        let mut counts = vec![0u32; self.layer_sizes[layer]];
        for fired in &self.spikes[layer] {
            for &i in fired {
                counts[i as usize] += 1;
            }
        }
        counts
    }

    /// True when both records hold the same input and the same spikes.
    pub fn same_spikes(&self, other: &SpikeRecord) -> bool {
        self.steps == other.steps
            && self.layer_sizes == other.layer_sizes
            && self.input == other.input
            && self.spikes == other.spikes
            && self.counts == other.counts
    }
}

/// Work done by the event-driven path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AsyncStats {
    /// Neuron-step updates performed per layer, lazy catch-up included.
    pub updates: Vec<u64>,
    /// Distinct neurons per layer that were ever updated.
    pub touched: Vec<usize>,
}

impl Network {
    pub fn forward_sync(&self, field: &EventField) -> Result<SpikeRecord> {
        self.forward_sync_with(field, false)
    }

    /// Dense forward pass; `training` keeps the membrane voltages.
    pub fn forward_sync_with(&self, field: &EventField, training: bool) -> Result<SpikeRecord> {
        self.check_field(field)?;
        let inputs: Vec<Vec<u32>> = (0..self.steps).map(|t| field.active(t)).collect();
        Ok(self.run_dense(inputs, training))
    }

    fn check_field(&self, field: &EventField) -> Result<()> {
        if field.steps() != self.steps {
            return Err(Error::shape(format!("event field has {} steps, network runs {}", field.steps(), self.steps)));
        }
        if self.input.channels != 2 || field.height() != self.input.height || field.width() != self.input.width {
            return Err(Error::shape(format!(
                "event field 2x{}x{} does not match network input {}",
                field.height(),
                field.width(),
                self.input
            )));
        }
        Ok(())
    }

    /// Dense pass over explicit per-step input spike lists.
    pub fn forward_dense_inputs(&self, inputs: &[Vec<u32>], training: bool) -> Result<SpikeRecord> {
        let inputs = self.checked_inputs(inputs)?;
        Ok(self.run_dense(inputs, training))
    }

    fn checked_inputs(&self, inputs: &[Vec<u32>]) -> Result<Vec<Vec<u32>>> {
        if inputs.len() != self.steps {
            return Err(Error::shape(format!("{} input steps for a {}-step network", inputs.len(), self.steps)));
        }
        let n = self.input.len() as u32;
        inputs
            .iter()
            .map(|step| {
                let mut s = step.clone();
                s.sort_unstable();
                s.dedup();
                match s.last() {
                    Some(&last) if last >= n => Err(Error::shape(format!("input index {last} outside {}", self.input))),
                    _ => Ok(s),
                }
            })
            .collect()
    }

    fn run_dense(&self, inputs: Vec<Vec<u32>>, training: bool) -> SpikeRecord {
        let sizes = self.layer_sizes();
        let mut current: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
        let mut voltage = current.clone();
        let mut spiked: Vec<Vec<bool>> = sizes.iter().map(|&n| vec![false; n]).collect();
        let mut acc = current.clone();
        let mut voltages: Option<Vec<Vec<f64>>> =
            training.then(|| sizes.iter().map(|&n| vec![0.0; n * self.steps]).collect());
        let mut spikes: Vec<Vec<Vec<u32>>> = vec![Vec::with_capacity(self.steps); self.layers.len()];
        let scatter: Vec<Scatter> = self.layers.iter().map(Scatter::new).collect();

        for t in 0..self.steps {
            let mut pre: &[u32] = &inputs[t];
            for (l, layer) in self.layers.iter().enumerate() {
                let a = &mut acc[l];
                a.fill(0.0);
                for &p in pre {
                    scatter[l].each(layer, p as usize, |post, w| a[post] += w as f64);
                }
                let (c, u, o) = (&mut current[l], &mut voltage[l], &mut spiked[l]);
                let mut fired = Vec::new();
                for i in 0..a.len() {
                    lif_update(&mut c[i], &mut u[i], &mut o[i], a[i], &layer.params);
                    if o[i] {
                        fired.push(i as u32);
                    }
                }
                if let Some(v) = voltages.as_mut() {
                    let n = sizes[l];
                    v[l][t * n..(t + 1) * n].copy_from_slice(u);
                }
                spikes[l].push(fired);
                pre = spikes[l].last().map(Vec::as_slice).unwrap_or(&[]);
            }
        }
        finish_record(self.steps, sizes, inputs, spikes, voltages)
    }

    /// Event-driven pass straight from a stream.
    pub fn forward_async(&self, stream: &EventStream) -> Result<SpikeRecord> {
        Ok(self.forward_async_stats(stream)?.0)
    }

    pub fn forward_async_stats(&self, stream: &EventStream) -> Result<(SpikeRecord, AsyncStats)> {
        if self.input.channels != 2
            || stream.height() as usize != self.input.height
            || stream.width() as usize != self.input.width
        {
            return Err(Error::shape(format!(
                "stream resolution {}x{} does not match network input {}",
                stream.width(),
                stream.height(),
                self.input
            )));
        }
        let (h, w) = (self.input.height, self.input.width);
        let mut inputs = vec![Vec::new(); self.steps];
        for e in stream.events() {
            let bin = bin_of(e.t, stream.window_us(), self.steps);
            inputs[bin].push(((e.p.bit() as usize * h + e.y as usize) * w + e.x as usize) as u32);
        }
        for step in &mut inputs {
            step.sort_unstable();
            step.dedup();
        }
        Ok(self.run_async(inputs))
    }

    /// Event-driven pass over explicit per-step input spike lists.
    pub fn forward_async_inputs(&self, inputs: &[Vec<u32>]) -> Result<(SpikeRecord, AsyncStats)> {
        let inputs = self.checked_inputs(inputs)?;
        Ok(self.run_async(inputs))
    }

    fn run_async(&self, inputs: Vec<Vec<u32>>) -> (SpikeRecord, AsyncStats) {
        let sizes = self.layer_sizes();
        let mut layers: Vec<LazyLayer> = sizes.iter().map(|&n| LazyLayer::new(n)).collect();
        let mut spikes: Vec<Vec<Vec<u32>>> = vec![Vec::with_capacity(self.steps); self.layers.len()];
        let scatter: Vec<Scatter> = self.layers.iter().map(Scatter::new).collect();
        for t in 0..self.steps {
            let mut pre: &[u32] = &inputs[t];
            for (l, layer) in self.layers.iter().enumerate() {
                let fired = layers[l].step(layer, &scatter[l], pre, t as u32);
                spikes[l].push(fired);
                pre = spikes[l].last().map(Vec::as_slice).unwrap_or(&[]);
            }
        }
        let stats = AsyncStats {
            updates: layers.iter().map(|l| l.updates).collect(),
            touched: layers.iter().map(|l| l.last.iter().filter(|s| s.is_some()).count()).collect(),
        };
        (finish_record(self.steps, sizes, inputs, spikes, None), stats)
    }
}

fn finish_record(
    steps: usize,
    layer_sizes: Vec<usize>,
    input: Vec<Vec<u32>>,
    spikes: Vec<Vec<Vec<u32>>>,
    voltages: Option<Vec<Vec<f64>>>,
) -> SpikeRecord {
    let out = layer_sizes.len() - 1;
    let mut counts = vec![0u32; layer_sizes[out]];
    for fired in &spikes[out] {
        for &i in fired {
            counts[i as usize] += 1;
        }
    }
    SpikeRecord { steps, layer_sizes, input, spikes, voltages, counts }
}

/// Synapse walk for one layer. Dense layers keep a presynaptic-major copy of
/// their weights so that one input spike reads a contiguous row. Targets are
/// visited in the same order either way.
enum Scatter {
    Direct,
    Rows { outputs: usize, weights: Vec<f32> },
}

impl Scatter {
    fn new(layer: &Layer) -> Self {
        if layer.spec.kind != LayerKind::Dense {
            return Scatter::Direct;
        }
        let (n_in, n_out) = (layer.spec.in_channels, layer.spec.out_channels);
        let mut weights = vec![0.0f32; n_in * n_out];
        for post in 0..n_out {
            for pre in 0..n_in {
                weights[pre * n_out + post] = layer.weights[post * n_in + pre];
            }
        }
        Scatter::Rows { outputs: n_out, weights }
    }

    #[inline]
    fn each(&self, layer: &Layer, pre: usize, mut f: impl FnMut(usize, f32)) {
        match self {
            Scatter::Direct => layer.for_each_target(pre, f),
            Scatter::Rows { outputs, weights } => {
                for (post, &w) in weights[pre * outputs..(pre + 1) * outputs].iter().enumerate() {
                    f(post, w);
                }
            }
        }
    }
}

/// Layer state for the event-driven path. A neuron's state is exact as of
/// step `last[i]`; steps after that with no input are replayed on demand.
struct LazyLayer {
    current: Vec<f64>,
    voltage: Vec<f64>,
    spiked: Vec<bool>,
    last: Vec<Option<u32>>,
    acc: Vec<f64>,
    pending: Vec<bool>,
    /// Neurons that might fire without further input.
    live: Vec<u32>,
    updates: u64,
}

impl LazyLayer {
    fn new(n: usize) -> Self {
        LazyLayer {
            current: vec![0.0; n],
            voltage: vec![0.0; n],
            spiked: vec![false; n],
            last: vec![None; n],
            acc: vec![0.0; n],
            pending: vec![false; n],
            live: Vec::new(),
            updates: 0,
        }
    }

    fn step(&mut self, layer: &Layer, scatter: &Scatter, pre: &[u32], t: u32) -> Vec<u32> {
        let mut candidates = std::mem::take(&mut self.live);
        {
            let (acc, pending) = (&mut self.acc, &mut self.pending);
            for &p in pre {
                scatter.each(layer, p as usize, |post, w| {
                    if !pending[post] {
                        pending[post] = true;
                        candidates.push(post as u32);
                    }
                    acc[post] += w as f64;
                });
            }
        }
        candidates.sort_unstable();
        candidates.dedup();

        let params = &layer.params;
        let margin = 1e-9 * params.threshold.max(1.0);
        let mut fired = Vec::new();
        let mut live = Vec::new();
        for &n in &candidates {
            let i = n as usize;
            let (c, u, o) = (&mut self.current[i], &mut self.voltage[i], &mut self.spiked[i]);
            if let Some(last) = self.last[i] {
                // idle steps: same arithmetic as a dense update with zero input
                for _ in last + 1..t {
                    lif_update(c, u, o, 0.0, params);
                    debug_assert!(!*o, "lazy catch-up produced a spike");
                    self.updates += 1;
                }
            }
            lif_update(c, u, o, self.acc[i], params);
            self.updates += 1;
            self.acc[i] = 0.0;
            self.pending[i] = false;
            self.last[i] = Some(t);
            if *o {
                fired.push(n);
            }
            if params.reachable_voltage(*c, *u) >= params.threshold - margin {
                live.push(n);
            }
        }
        self.live = live;
        fired
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, Polarity};
    use crate::snn::{LayerSpec, NeuronParams, Shape};

    /// Reference dense pass written as a gather over each neuron's receptive
    /// field, with no sparsity tricks.
    fn gather_forward(net: &Network, field: &EventField) -> Vec<Vec<Vec<u32>>> {
        let mut states: Vec<(Vec<f64>, Vec<f64>, Vec<bool>)> = net
            .layers
            .iter()
            .map(|l| (vec![0.0; l.neurons()], vec![0.0; l.neurons()], vec![false; l.neurons()]))
            .collect();
        let mut out = vec![Vec::new(); net.layers.len()];
        for t in 0..net.steps {
            let mut x: Vec<f64> = field.slice(t).iter().map(|&v| v as f64).collect();
            for (l, layer) in net.layers.iter().enumerate() {
                let a = gather(layer, &x);
                let (c, u, o) = &mut states[l];
                let mut fired = Vec::new();
                for i in 0..a.len() {
                    lif_update(&mut c[i], &mut u[i], &mut o[i], a[i], &layer.params);
                    if o[i] {
                        fired.push(i as u32);
                    }
                }
                x = o.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
                out[l].push(fired);
            }
        }
        out
    }

    fn gather(layer: &Layer, x: &[f64]) -> Vec<f64> {
        let (inp, outp, s) = (layer.input, layer.output, layer.spec);
        let mut a = vec![0.0; outp.len()];
        match s.kind {
            crate::snn::LayerKind::Dense => {
                for i in 0..s.out_channels {
                    for j in 0..s.in_channels {
                        a[i] += layer.weights[i * s.in_channels + j] as f64 * x[j];
                    }
                }
            }
            crate::snn::LayerKind::AvgPool => {
                let k = s.kernel;
                for c in 0..outp.channels {
                    for yo in 0..outp.height {
                        for xo in 0..outp.width {
                            let mut sum = 0.0;
                            for ky in 0..k {
                                for kx in 0..k {
                                    let xi = x[(c * inp.height + yo * k + ky) * inp.width + xo * k + kx];
                                    sum += layer.weights[ky * k + kx] as f64 * xi;
                                }
                            }
                            a[(c * outp.height + yo) * outp.width + xo] = sum;
                        }
                    }
                }
            }
            crate::snn::LayerKind::Conv => {
                let k = s.kernel as i64;
                for co in 0..outp.channels {
                    for yo in 0..outp.height {
                        for xo in 0..outp.width {
                            let mut sum = 0.0;
                            for ci in 0..inp.channels {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let yi = (yo * s.stride) as i64 + ky - s.padding as i64;
                                        let xi = (xo * s.stride) as i64 + kx - s.padding as i64;
                                        if yi < 0 || xi < 0 || yi >= inp.height as i64 || xi >= inp.width as i64 {
                                            continue;
                                        }
                                        let w = layer.weights[((co * inp.channels + ci) * s.kernel + ky as usize)
                                            * s.kernel
                                            + kx as usize] as f64;
                                        sum += w * x[(ci * inp.height + yi as usize) * inp.width + xi as usize];
                                    }
                                }
                            }
                            a[(co * outp.height + yo) * outp.width + xo] = sum;
                        }
                    }
                }
            }
        }
        a
    }

    fn small_net(seed: u64, steps: usize) -> Network {
        Network::build(
            Shape::new(2, 16, 16),
            &[
                LayerSpec::avg_pool(2, 2),
                LayerSpec::conv(2, 4, 3, 1, 1),
                LayerSpec::avg_pool(4, 2),
                LayerSpec::dense(64, 8),
                LayerSpec::dense(8, 2),
            ],
            steps,
            NeuronParams::default(),
            seed,
        )
        .unwrap()
    }

    fn moving_edge(steps: u32) -> EventStream {
        let mut events = Vec::new();
        for t in 0..steps {
            for y in 2..14u16 {
                let x = (t as u16 / 2 + 1).min(15);
                events.push(Event::new(t * 1000, x, y, Polarity::On));
                if x > 1 {
                    events.push(Event::new(t * 1000 + 500, x - 1, y, Polarity::Off));
                }
            }
        }
        EventStream::from_events(events, 16, 16, steps * 1000).unwrap()
    }

    #[test]
    fn zero_field_is_silent() {
        let net = small_net(1, 10);
        let rec = net.forward_sync(&EventField::zeros(10, 16, 16)).unwrap();
        assert!(rec.spikes.iter().all(|l| l.iter().all(Vec::is_empty)));
        let (rec, stats) = net.forward_async_stats(&EventStream::empty(16, 16, 10_000).unwrap()).unwrap();
        assert!(rec.counts.iter().all(|&c| c == 0));
        assert!(stats.updates.iter().all(|&u| u == 0));
    }

    #[test]
    fn sparse_scatter_matches_gather() {
        let stream = moving_edge(20);
        for seed in 0..4 {
            let net = small_net(seed, 20);
            let field = stream.to_event_field(20).unwrap();
            let rec = net.forward_sync(&field).unwrap();
            assert_eq!(rec.spikes, gather_forward(&net, &field));
            assert!(rec.total_spikes(0) > 0);
        }
    }

    #[test]
    fn async_matches_sync() {
        let stream = moving_edge(20);
        for seed in 0..4 {
            let net = small_net(seed, 20);
            let sync = net.forward_sync(&stream.to_event_field(20).unwrap()).unwrap();
            let asy = net.forward_async(&stream).unwrap();
            assert!(sync.same_spikes(&asy));
        }
    }

    #[test]
    fn one_event_touches_one_pool_neuron() {
        let net = Network::dodge(10, 0).unwrap();
        let s = EventStream::from_events(vec![Event::new(10, 5, 6, Polarity::On)], 128, 128, 10_000).unwrap();
        let (_, stats) = net.forward_async_stats(&s).unwrap();
        assert_eq!(stats.touched[0], 1);
        assert_eq!(stats.touched[1], 0);
    }

    #[test]
    fn output_counts_bounded_by_steps() {
        let stream = moving_edge(12);
        let net = small_net(5, 12);
        let rec = net.forward_sync(&stream.to_event_field(12).unwrap()).unwrap();
        assert!(rec.counts.iter().all(|&c| c as usize <= 12));
        assert_eq!(rec.counts, rec.layer_counts(4));
    }

    #[test]
    fn dimension_mismatch_errors() {
        let net = small_net(0, 10);
        assert!(net.forward_sync(&EventField::zeros(9, 16, 16)).is_err());
        assert!(net.forward_sync(&EventField::zeros(10, 8, 16)).is_err());
        assert!(net.forward_async(&EventStream::empty(32, 16, 1000).unwrap()).is_err());
    }

    #[test]
    fn training_mode_keeps_voltages() {
        let net = small_net(0, 6);
        let field = moving_edge(6).to_event_field(6).unwrap();
        let rec = net.forward_sync_with(&field, true).unwrap();
        let v = rec.voltages.as_ref().unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v[0].len(), 6 * net.layers[0].neurons());
        assert!(net.forward_sync(&field).unwrap().voltages.is_none());
    }
}
