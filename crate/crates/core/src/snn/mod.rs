//! Dual-state leaky integrate-and-fire networks.
//!
//! Every layer, pooling included, is a population of TS-LIF neurons. One step
//! of a layer with synaptic input `a` is
//!
//! ```text
//! C' = dc * C + a
//! U' = dv * U * (1 - O) + C'
//! O' = [U' >= u_th]
//! ```
//!
//! Two forward paths exist. [`Network::forward_sync`] updates every neuron
//! at every step from a dense [`EventField`](crate::event::EventField).
//! [`Network::forward_async`] consumes events directly and only touches
//! neurons that receive input or may still fire; idle neurons are brought up
//! to date lazily when they are next touched. Both produce identical spikes.

mod forward;
mod io;
mod network;

pub use forward::{AsyncStats, SpikeRecord};
pub use io::{read_network, read_network_from, write_network, write_network_to, SNN1_MAGIC};
pub use network::{Layer, LayerKind, LayerSpec, Network, Quantization, Shape};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CURRENT_DECAY: f64 = 0.75;
pub const DEFAULT_VOLTAGE_DECAY: f64 = 0.96875;
pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    pub current_decay: f64,
    pub voltage_decay: f64,
    pub threshold: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            current_decay: DEFAULT_CURRENT_DECAY,
            voltage_decay: DEFAULT_VOLTAGE_DECAY,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.current_decay) || !unit(self.voltage_decay) {
            return Err(Error::arg(format!(
                "decays must lie in (0, 1], got current {} voltage {}",
                self.current_decay, self.voltage_decay
            )));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::arg(format!("threshold must be > 0, got {}", self.threshold)));
        }
        Ok(())
    }

    /// Upper bound on the voltage a neuron can reach from `(c, u)` if it
    /// receives no further input.
    #[inline]
    pub(crate) fn reachable_voltage(&self, c: f64, u: f64) -> f64 {
        if self.current_decay >= 1.0 {
            return if c > 0.0 { f64::INFINITY } else { u.max(0.0) };
        }
        let gain = self.current_decay / (1.0 - self.current_decay);
        u.max(0.0) + c.max(0.0) * gain
    }
}

/// One neuron update. Shared by every forward path so that all of them
/// round identically.
#[inline(always)]
pub(crate) fn lif_update(c: &mut f64, u: &mut f64, o: &mut bool, input: f64, p: &NeuronParams) {
    let gate = if *o { 0.0 } else { 1.0 };
    *c = p.current_decay * *c + input;
    *u = p.voltage_decay * *u * gate + *c;
    *o = *u >= p.threshold;
}

/// Membrane state of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
    pub spiked: Vec<bool>,
}

impl LayerState {
    pub fn zeros(n: usize) -> Self {
        LayerState { current: vec![0.0; n], voltage: vec![0.0; n], spiked: vec![false; n] }
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }
}

/// Advances every neuron of `state` by one step and returns the indices that
/// fired, ascending.
pub fn lif_step(state: &mut LayerState, input: &[f64], params: &NeuronParams) -> Result<Vec<u32>> {
    if input.len() != state.len() {
        return Err(Error::shape(format!("{} inputs for a layer of {} neurons", input.len(), state.len())));
    }
    let mut fired = Vec::new();
    let LayerState { current, voltage, spiked } = state;
    for (i, &a) in input.iter().enumerate() {
        lif_update(&mut current[i], &mut voltage[i], &mut spiked[i], a, params);
        if spiked[i] {
            fired.push(i as u32);
        }
    }
    Ok(fired)
}
