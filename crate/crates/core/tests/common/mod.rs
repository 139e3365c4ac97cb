//! Shared helpers for integration tests.

#![allow(dead_code)]

use neurododge::snn::{Layer, LayerKind, LayerSpec, Network, NeuronParams, Shape, SpikeRecord};
use neurododge::train::{backward, spike_count_loss, surrogate_grad, LossSpec, SurrogateSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scalar reverse-mode tape. Each node stores its value and the local
/// derivatives with respect to earlier nodes.
#[derive(Default)]
pub struct Tape {
    values: Vec<f64>,
    parents: Vec<Vec<(usize, f64)>>,
}

impl Tape {
    pub fn leaf(&mut self, v: f64) -> usize {
        self.node(v, Vec::new())
    }

    pub fn node(&mut self, v: f64, parents: Vec<(usize, f64)>) -> usize {
        self.values.push(v);
        self.parents.push(parents);
        self.values.len() - 1
    }

    pub fn value(&self, n: usize) -> f64 {
        self.values[n]
    }

    /// Linear combination `sum_k c_k * x_k`.
    pub fn lin(&mut self, terms: &[(usize, f64)]) -> usize {
        let v = terms.iter().map(|&(n, c)| c * self.values[n]).sum();
        self.node(v, terms.to_vec())
    }

    pub fn mul(&mut self, a: usize, b: usize) -> usize {
        let (va, vb) = (self.values[a], self.values[b]);
        self.node(va * vb, vec![(a, vb), (b, va)])
    }

    pub fn square(&mut self, a: usize) -> usize {
        let va = self.values[a];
        self.node(va * va, vec![(a, 2.0 * va)])
    }

    /// Adjoints of every node with respect to `out`.
    pub fn grad(&self, out: usize) -> Vec<f64> {
        let mut adj = vec![0.0; self.values.len()];
        adj[out] = 1.0;
        for n in (0..=out).rev() {
            if adj[n] == 0.0 {
                continue;
            }
            for &(p, d) in &self.parents[n] {
                adj[p] += adj[n] * d;
            }
        }
        adj
    }
}

/// `(post, pre, weight_index)` for every synapse, written as a gather over
/// each output neuron's receptive field.
pub fn synapses(layer: &Layer) -> Vec<(usize, usize, usize)> {
    let (inp, out, s) = (layer.input, layer.output, layer.spec);
    let mut list = Vec::new();
    match s.kind {
        LayerKind::Dense => {
            for i in 0..s.out_channels {
                for j in 0..s.in_channels {
                    list.push((i, j, i * s.in_channels + j));
                }
            }
        }
        LayerKind::AvgPool => {
            let k = s.kernel;
            for c in 0..out.channels {
                for yo in 0..out.height {
                    for xo in 0..out.width {
                        for ky in 0..k {
                            for kx in 0..k {
                                let pre = (c * inp.height + yo * k + ky) * inp.width + xo * k + kx;
                                list.push(((c * out.height + yo) * out.width + xo, pre, ky * k + kx));
                            }
                        }
                    }
                }
            }
        }
        LayerKind::Conv => {
            let k = s.kernel as i64;
            for co in 0..out.channels {
                for yo in 0..out.height {
                    for xo in 0..out.width {
                        for ci in 0..inp.channels {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let yi = (yo * s.stride) as i64 + ky - s.padding as i64;
                                    let xi = (xo * s.stride) as i64 + kx - s.padding as i64;
                                    if yi < 0 || xi < 0 || yi >= inp.height as i64 || xi >= inp.width as i64 {
                                        continue;
                                    }
                                    let w =
                                        ((co * inp.channels + ci) * s.kernel + ky as usize) * s.kernel + kx as usize;
                                    let pre = (ci * inp.height + yi as usize) * inp.width + xi as usize;
                                    list.push(((co * out.height + yo) * out.width + xo, pre, w));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    list
}

/// Gradients of the spike-count loss by reverse-mode differentiation of the
/// unrolled graph without reset. Spike nodes take their value from `record`
/// and pass gradient with the surrogate slope at the recorded voltage.
pub fn tape_gradients(
    net: &Network,
    record: &SpikeRecord,
    label: usize,
    loss: &LossSpec,
    surrogate: &SurrogateSpec,
) -> (f64, Vec<Vec<f64>>) {
    let voltages = record.voltages.as_ref().expect("training-mode record");
    let steps = net.steps;
    let mut tape = Tape::default();
    let weights: Vec<Vec<usize>> =
        net.layers.iter().map(|l| l.weights.iter().map(|&w| tape.leaf(w as f64)).collect()).collect();
    let conns: Vec<_> = net.layers.iter().map(synapses).collect();

    // presynaptic spike nodes of the current layer at each step
    let mut below: Vec<Vec<Option<usize>>> = (0..steps)
        .map(|t| {
            let mut v = vec![None; net.input.len()];
            for &i in &record.input[t] {
                v[i as usize] = Some(tape.leaf(1.0));
            }
            v
        })
        .collect();
    let mut out_spikes = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        let n = layer.neurons();
        let p = layer.params;
        let mut c_prev: Vec<Option<usize>> = vec![None; n];
        let mut u_prev: Vec<Option<usize>> = vec![None; n];
        let mut spikes: Vec<Vec<Option<usize>>> = Vec::with_capacity(steps);
        for t in 0..steps {
            // a = W s, one product node per active synapse
            let mut a_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
            for &(post, pre, w) in &conns[l] {
                if let Some(s) = below[t][pre] {
                    let prod = tape.mul(weights[l][w], s);
                    a_terms[post].push((prod, 1.0));
                }
            }
            let mut row = Vec::with_capacity(n);
            for i in 0..n {
                let mut c_terms = a_terms[i].clone();
                if let Some(c) = c_prev[i] {
                    c_terms.push((c, p.current_decay));
                }
                let c = tape.lin(&c_terms);
                let mut u_terms = vec![(c, 1.0)];
                if let Some(u) = u_prev[i] {
                    u_terms.push((u, p.voltage_decay));
                }
                let u = tape.lin(&u_terms);
                c_prev[i] = Some(c);
                u_prev[i] = Some(u);
                let recorded_u = voltages[l][t * n + i];
                let fired = record.spikes[l][t].binary_search(&(i as u32)).is_ok();
                let slope = surrogate_grad(recorded_u, p.threshold, surrogate);
                let s = tape.node(if fired { 1.0 } else { 0.0 }, vec![(u, slope)]);
                row.push(Some(s));
            }
            spikes.push(row);
        }
        if l + 1 == net.layers.len() {
            out_spikes = spikes.clone();
        }
        below = spikes;
    }

    let t = steps as f64;
    let mut sq_terms = Vec::new();
    for i in 0..net.output_channels() {
        let mut terms: Vec<(usize, f64)> = out_spikes.iter().map(|row| (row[i].unwrap(), -1.0 / t)).collect();
        let d = tape.leaf(loss.desired(i, label) / t);
        terms.push((d, 1.0));
        let diff = tape.lin(&terms);
        sq_terms.push((tape.square(diff), 0.5));
    }
    let total = tape.lin(&sq_terms);
    let adj = tape.grad(total);
    let grads = net
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| if layer.is_trainable() { weights[l].iter().map(|&w| adj[w]).collect() } else { Vec::new() })
        .collect();
    (tape.value(total), grads)
}

fn topology(kind: usize, rng: &mut ChaCha8Rng) -> (Shape, Vec<LayerSpec>) {
    match kind {
        0 => {
            let n = rng.random_range(1..=20);
            (Shape::new(n, 1, 1), vec![LayerSpec::dense(n, rng.random_range(1..=6))])
        }
        1 => {
            let (n, h) = (rng.random_range(2..=20), rng.random_range(2..=18));
            (Shape::new(n, 1, 1), vec![LayerSpec::dense(n, h), LayerSpec::dense(h, 2)])
        }
        2 => (Shape::new(2, 3, 3), vec![LayerSpec::conv(2, 2, 3, 1, 1), LayerSpec::dense(18, 2)]),
        3 => (Shape::new(1, 5, 5), vec![LayerSpec::conv(1, 2, 3, 1, 2), LayerSpec::dense(18, 2)]),
        _ => (Shape::new(2, 4, 4), vec![LayerSpec::avg_pool(2, 2), LayerSpec::dense(8, 2)]),
    }
}

/// Relative agreement to 1e-6. Elements whose true value is zero come out of
/// either side as rounding residue, so an absolute floor of 1e-15 plus 1e-12
/// of the instance's largest gradient is allowed as well.
fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()) + 1e-12 * scale + 1e-15
}

/// Compares `backward` with the tape on `count` random instances of at most
/// two layers, twenty neurons and ten steps. Returns how many instances had a
/// non-zero gradient, or a description of the first mismatch.
pub fn oracle_check(count: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nonzero_instances = 0;
    for instance in 0..count {
        let (input, specs) = topology(instance % 5, &mut rng);
        let steps = rng.random_range(3..=10);
        let params = NeuronParams {
            current_decay: rng.random_range(0.5..0.95),
            voltage_decay: rng.random_range(0.8..1.0),
            threshold: rng.random_range(0.3..1.0),
        };
        let net = Network::build(input, &specs, steps, params, rng.random()).map_err(|e| e.to_string())?;
        let density = rng.random_range(0.2..0.6);
        let inputs: Vec<Vec<u32>> =
            (0..steps).map(|_| (0..input.len() as u32).filter(|_| rng.random_bool(density)).collect()).collect();
        let target_false = rng.random_range(1..steps as u32 - 1);
        let target_true = rng.random_range(target_false + 1..steps as u32);
        let loss = LossSpec::new(target_true, target_false, steps as u32).map_err(|e| e.to_string())?;
        let label = rng.random_range(0..net.output_channels());
        let surrogate = SurrogateSpec::default();

        let record = net.forward_dense_inputs(&inputs, true).map_err(|e| e.to_string())?;
        let grads = backward(&net, &record, label, &loss, &surrogate).map_err(|e| e.to_string())?;
        let (tape_loss, expected) = tape_gradients(&net, &record, label, &loss, &surrogate);

        let direct_loss = spike_count_loss(&record.counts, label, &loss).map_err(|e| e.to_string())?;
        if !close(grads.loss, direct_loss, 0.0) || !close(tape_loss, direct_loss, 0.0) {
            return Err(format!("instance {instance}: loss {} / tape {tape_loss} vs {direct_loss}", grads.loss));
        }
        if grads.layers.len() != expected.len() {
            return Err(format!("instance {instance}: layer count differs"));
        }
        let scale = expected.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (l, (got, want)) in grads.layers.iter().zip(&expected).enumerate() {
            if got.len() != want.len() {
                return Err(format!("instance {instance} layer {l}: {} vs {} weights", got.len(), want.len()));
            }
            for (k, (&g, &w)) in got.iter().zip(want).enumerate() {
                if !close(g, w, scale) {
                    return Err(format!("instance {instance} layer {l} weight {k}: {g} vs {w} (largest {scale:e})"));
                }
            }
        }
        if expected.iter().flatten().any(|&g| g != 0.0) {
            nonzero_instances += 1;
        }
    }
    Ok(nonzero_instances)
}
