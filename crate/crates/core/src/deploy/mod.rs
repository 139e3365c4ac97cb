//! Deployment emulation.
//!
//! Neuromorphic chips take 8-bit integer weights and receive input as
//! address events grouped by time step. This module snaps trained weights to
//! that integer grid, converts streams to and from framed address sequences,
//! and turns output spike counts into a dodge command.

mod aer;

pub use aer::{
    core_view, decode_address, decode_sequence, encode_address, encode_sequence, read_sequence, read_sequence_from,
    write_sequence, write_sequence_to, AddressFrame, AddressSequence, AERSEQ1_MAGIC, NEURONS_PER_CORE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snn::{AsyncStats, Network, Quantization, SpikeRecord};
use crate::train::argmax;

/// Default grid interval of the integer weights.
pub const DEFAULT_SIGMA: f64 = 2.0;
/// Default integer weight units per unit of synaptic current.
pub const DEFAULT_UNITS: f64 = 128.0;
/// Default gain from winning spike count to dodge speed.
pub const DEFAULT_ALPHA: f64 = 2.0;

const MANTISSA_MIN: f64 = -128.0;
const MANTISSA_MAX: f64 = 127.0;

/// Snaps one integer-domain weight to the grid of interval `sigma`.
///
/// Rounds half away from zero and clamps to the range an 8-bit signed
/// mantissa can express, `[-128 sigma, 127 sigma]`. The flag reports whether
/// clamping changed the result.
pub fn quantize_value(w: f64, sigma: f64) -> (f64, bool) {
    let m = (w / sigma).round();
    let clamped = m.clamp(MANTISSA_MIN, MANTISSA_MAX);
    (clamped * sigma, clamped != m)
}

/// Result of [`quantize_weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedNetwork {
    pub network: Network,
    /// Weights that fell outside the representable range.
    pub clamped: usize,
    pub total: usize,
}

/// Quantizes every weight of `net`.
///
/// Float weights are first expressed in integer units (`w * units`), snapped
/// with [`quantize_value`], and mapped back. Pooling weights are quantized
/// too, so the whole network runs on grid values.
pub fn quantize_weights(net: &Network, sigma: f64, units: f64) -> Result<QuantizedNetwork> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::arg(format!("quantization interval must be positive, got {sigma}")));
    }
    if !(units.is_finite() && units > 0.0) {
        return Err(Error::arg(format!("weight units must be positive, got {units}")));
    }
    let q = Quantization { sigma, units };
    let mut network = net.clone();
    let (mut clamped, mut total) = (0, 0);
    for layer in &mut network.layers {
        for w in &mut layer.weights {
            let (v, c) = quantize_value(*w as f64 * units, sigma);
            clamped += c as usize;
            total += 1;
            *w = q.dequantize((v / sigma) as i8);
        }
    }
    network.quantization = Some(q);
    Ok(QuantizedNetwork { network, clamped, total })
}

/// A decoded avoidance command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DodgeAction {
    /// Output channel of the approach direction. Channel 0 is an approach
    /// from the left, answered by dodging right.
    pub approach: usize,
    pub speed: f64,
}

impl DodgeAction {
    /// Channel the robot should move towards.
    pub fn dodge_channel(&self) -> usize {
        match self.approach {
            0 => 1,
            1 => 0,
            other => other,
        }
    }
}

/// Winner-take-all decoding: the channel with most spikes is the approach
/// direction and `speed = alpha * count / n_dt`.
pub fn decode_action(counts: &[u32], n_dt: f64, alpha: f64) -> Result<DodgeAction> {
    if counts.is_empty() {
        return Err(Error::Empty("output spike counts"));
    }
    if !(n_dt.is_finite() && n_dt > 0.0) {
        return Err(Error::arg(format!("desired count must be positive, got {n_dt}")));
    }
    let approach = argmax(counts);
    Ok(DodgeAction { approach, speed: alpha * counts[approach] as f64 / n_dt })
}

impl Network {
    /// Event-driven pass fed from an address sequence, the way a chip would
    /// receive it.
    pub fn forward_sequence(&self, seq: &AddressSequence) -> Result<(SpikeRecord, AsyncStats)> {
        if seq.steps as usize != self.steps {
            return Err(Error::shape(format!("sequence has {} steps, network runs {}", seq.steps, self.steps)));
        }
        if self.input.channels != 2
            || seq.height as usize != self.input.height
            || seq.width as usize != self.input.width
        {
            return Err(Error::shape(format!(
                "sequence {}x{} does not match network input {}",
                seq.width, seq.height, self.input
            )));
        }
        let (h, w) = (self.input.height, self.input.width);
        let mut inputs = vec![Vec::new(); self.steps];
        for frame in &seq.frames {
            let step = &mut inputs[frame.step as usize];
            for &a in &frame.addresses {
                let (x, y, p) = decode_address(a, seq.width, seq.height)?;
                step.push(((p.bit() as usize * h + y as usize) * w + x as usize) as u32);
            }
        }
        self.forward_async_inputs(&inputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_value(0.0, 2.0), (0.0, false));
        assert_eq!(quantize_value(3.7, 2.0), (4.0, false));
        assert_eq!(quantize_value(1.0, 2.0), (2.0, false));
        assert_eq!(quantize_value(-1.0, 2.0), (-2.0, false));
        assert_eq!(quantize_value(254.9, 2.0), (254.0, false));
        assert_eq!(quantize_value(255.0, 2.0), (254.0, true));
        assert_eq!(quantize_value(-257.0, 2.0), (-256.0, true));
        assert_eq!(quantize_value(-1e9, 2.0), (-256.0, true));
    }

    #[test]
    fn quantized_network_is_on_grid() {
        let net = Network::dodge(10, 3).unwrap();
        let q = quantize_weights(&net, 2.0, 128.0).unwrap();
        assert_eq!(q.total, net.layers.iter().map(|l| l.weights.len()).sum::<usize>());
        for (a, b) in net.layers.iter().zip(&q.network.layers) {
            for (&w, &wq) in a.weights.iter().zip(&b.weights) {
                let m = wq as f64 * 64.0;
                assert_eq!(m, m.round());
                assert!((-256.0..=254.0).contains(&(wq as f64 * 128.0)));
                assert!((w as f64 - wq as f64).abs() <= 1.0 / 128.0 + 1e-7);
            }
        }
        // pooling weights are representable exactly
        assert_eq!(q.network.layers[0].weights, net.layers[0].weights);
        assert!(quantize_weights(&net, 0.0, 128.0).is_err());
    }

    #[test]
    fn action_examples() {
        assert_eq!(decode_action(&[70, 10], 70.0, 2.0).unwrap(), DodgeAction { approach: 0, speed: 2.0 });
        assert_eq!(decode_action(&[10, 35], 70.0, 2.0).unwrap(), DodgeAction { approach: 1, speed: 1.0 });
        assert_eq!(decode_action(&[0, 0], 70.0, 2.0).unwrap(), DodgeAction { approach: 0, speed: 0.0 });
        assert!(decode_action(&[], 70.0, 2.0).is_err());
        assert!(decode_action(&[1, 2], 0.0, 2.0).is_err());
        assert_eq!(decode_action(&[70, 10], 70.0, 2.0).unwrap().dodge_channel(), 1);
    }
}
