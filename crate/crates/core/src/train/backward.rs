use super::{spike_count_loss, LossSpec, SurrogateAt, SurrogateSpec};
use crate::error::{Error, Result};
use crate::snn::{LayerKind, Network, SpikeRecord};

/// Loss gradients for one presentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Per layer, laid out like the layer's weights. Empty for fixed layers.
    pub layers: Vec<Vec<f64>>,
    pub loss: f64,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| if l.is_trainable() { vec![0.0; l.weights.len()] } else { Vec::new() })
                .collect(),
            loss: 0.0,
        }
    }

    /// `self += other`, element by element.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.loss += other.loss;
    }

    pub fn scale(&mut self, k: f64) {
        for g in self.layers.iter_mut().flatten() {
            *g *= k;
        }
        self.loss *= k;
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.layers.iter().flatten().all(|g| g.is_finite())
    }
}

/// Gradients of the spike-count loss with respect to every trainable weight.
///
/// `record` must come from a training-mode pass of `net` so that voltages are
/// available. Errors are propagated down to the lowest trainable layer.
pub fn backward(
    net: &Network,
    record: &SpikeRecord,
    true_channel: usize,
    loss: &LossSpec,
    surrogate: &SurrogateSpec,
) -> Result<Gradients> {
    let voltages = record.voltages.as_ref().ok_or(Error::MissingTraces)?;
    let steps = net.steps;
    if record.steps != steps || record.layer_sizes != net.layer_sizes() || loss.steps as usize != steps {
        return Err(Error::shape("spike record, loss and network disagree on shape"));
    }
    let value = spike_count_loss(&record.counts, true_channel, loss)?;
    let mut grads = Gradients::zeros_like(net);
    grads.loss = value;
    let Some(lowest) = net.layers.iter().position(|l| l.is_trainable()) else {
        return Ok(grads);
    };

    let last = net.layers.len() - 1;
    let t2 = (steps * steps) as f64;
    // error on the spikes of the current layer, neuron-major: [i * steps + n]
    let mut e: Vec<f64> = (0..net.layers[last].neurons())
        .flat_map(|i| {
            let v = -(loss.desired(i, true_channel) - record.counts[i] as f64) / t2;
            std::iter::repeat_n(v, steps)
        })
        .collect();

    for l in (lowest..=last).rev() {
        let layer = &net.layers[l];
        let n = layer.neurons();
        let p = &layer.params;
        let u = &voltages[l];

        // surrogate-weighted error; the voltage trace is time-major, so work
        // in blocks of neurons to keep the transposition in cache
        let sg = SurrogateAt::new(p.threshold, surrogate);
        let mut g = vec![0.0; n * steps];
        const BLOCK: usize = 64;
        for start in (0..n).step_by(BLOCK) {
            let end = (start + BLOCK).min(n);
            for m in 0..steps {
                for i in start..end {
                    let ei = e[i * steps + m];
                    if ei != 0.0 {
                        g[i * steps + m] = ei * sg.eval(u[m * n + i]);
                    }
                }
            }
        }
        // d[m] = sum_{k >= m} g[k] * kernel_v[k - m] via two first-order passes
        let mut d = g;
        for di in d.chunks_exact_mut(steps) {
            let (mut carry_p, mut carry_d) = (0.0, 0.0);
            for v in di.iter_mut().rev() {
                carry_p = *v + p.voltage_decay * carry_p;
                carry_d = carry_p + p.current_decay * carry_d;
                *v = carry_d;
            }
        }

        if layer.is_trainable() {
            let gw = &mut grads.layers[l];
            let pre_at = |m: usize| -> &[u32] {
                if l == 0 {
                    &record.input[m]
                } else {
                    &record.spikes[l - 1][m]
                }
            };
            if layer.spec.kind == LayerKind::Dense {
                // one weight row per postsynaptic neuron keeps the updates local
                let n_in = layer.spec.in_channels;
                for (post, dp) in d.chunks_exact(steps).enumerate() {
                    let row = &mut gw[post * n_in..(post + 1) * n_in];
                    for (m, &dm) in dp.iter().enumerate() {
                        if dm != 0.0 {
                            for &j in pre_at(m) {
                                row[j as usize] += dm;
                            }
                        }
                    }
                }
            } else {
                for m in 0..steps {
                    for &j in pre_at(m) {
                        layer.for_each_synapse(j as usize, |post, k| gw[k] += d[post * steps + m]);
                    }
                }
            }
        }

        if l > lowest {
            let mut below = vec![0.0; layer.input.len() * steps];
            layer.transpose_into(&d, &mut below, steps);
            e = below;
        }
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    Ok(grads)
}
