//! Offline training.
//!
//! The forward pass is the reset-aware TS-LIF simulation. Gradients are taken
//! through its reset-free linearisation: each layer's voltage is the input
//! current convolved with the voltage response kernel, spikes are replaced by
//! a smooth escape-rate surrogate, and errors travel backwards in time as a
//! correlation with that kernel.

mod backward;
mod fit;
mod optim;

pub use backward::{backward, Gradients};
pub use fit::{accuracy_of, argmax, fit, fit_with, stream_inputs, EpochStats, History, Sample, TrainConfig};
pub use optim::{Optimizer, OptimizerKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target spike counts for the spike-count loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossSpec {
    /// Desired count on the true channel.
    pub target_true: u32,
    /// Desired count on every other channel.
    pub target_false: u32,
    pub steps: u32,
}

impl LossSpec {
    pub fn new(target_true: u32, target_false: u32, steps: u32) -> Result<Self> {
        if !(0 < target_false && target_false < target_true && target_true < steps) {
            return Err(Error::arg(format!("loss targets need 0 < {target_false} < {target_true} < {steps}")));
        }
        Ok(LossSpec { target_true, target_false, steps })
    }

    /// Default targets for a step count: 30 -> (25, 5), 50 -> (30, 10),
    /// 100 -> (70, 10). Other step counts use (0.6 T, 0.2 T) rounded.
    pub fn for_steps(steps: u32) -> Result<Self> {
        match steps {
            30 => Self::new(25, 5, 30),
            50 => Self::new(30, 10, 50),
            100 => Self::new(70, 10, 100),
            _ => {
                let t = (0.6 * steps as f64).round() as u32;
                let f = ((0.2 * steps as f64).round() as u32).max(1);
                Self::new(t, f, steps)
            }
        }
    }

    pub fn desired(&self, channel: usize, true_channel: usize) -> f64 {
        if channel == true_channel {
            self.target_true as f64
        } else {
            self.target_false as f64
        }
    }
}

/// `L = 1/2 * sum_i ((D[i] - S[i]) / T)^2`.
pub fn spike_count_loss(counts: &[u32], true_channel: usize, spec: &LossSpec) -> Result<f64> {
    if true_channel >= counts.len() {
        return Err(Error::arg(format!("true channel {true_channel} out of range for {} outputs", counts.len())));
    }
    let t = spec.steps as f64;
    Ok(0.5
        * counts
            .iter()
            .enumerate()
            .map(|(i, &s)| ((spec.desired(i, true_channel) - s as f64) / t).powi(2))
            .sum::<f64>())
}

/// Current and voltage impulse responses of a TS-LIF neuron without reset.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseKernels {
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
}

pub fn response_kernels(current_decay: f64, voltage_decay: f64, steps: usize) -> ResponseKernels {
    let mut current = Vec::with_capacity(steps);
    let mut voltage = Vec::with_capacity(steps);
    for t in 0..steps {
        if t == 0 {
            current.push(1.0);
            voltage.push(1.0);
        } else {
            let c = current_decay * current[t - 1];
            current.push(c);
            voltage.push(voltage_decay * voltage[t - 1] + c);
        }
    }
    ResponseKernels { current, voltage }
}

/// `d[n] = sum_{m >= n} g[m] * kernel[m - n]`, evaluated directly.
pub fn correlate_with_kernel(g: &[f64], kernel: &[f64]) -> Vec<f64> {
    (0..g.len()).map(|n| (n..g.len()).map(|m| g[m] * kernel[m - n]).sum()).collect()
}

/// Parameters of the escape-rate surrogate derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub neuron_time: f64,
    pub derivative_time: f64,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        SurrogateSpec { neuron_time: 1.0, derivative_time: 1.25 }
    }
}

/// `tau_n / (tau_d u_th) * exp(-|u - u_th| / (tau_d u_th))`.
#[inline]
pub fn surrogate_grad(u: f64, threshold: f64, spec: &SurrogateSpec) -> f64 {
    SurrogateAt::new(threshold, spec).eval(u)
}

/// The surrogate with its constants resolved for one threshold.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SurrogateAt {
    threshold: f64,
    scale: f64,
    peak: f64,
}

impl SurrogateAt {
    pub(crate) fn new(threshold: f64, spec: &SurrogateSpec) -> Self {
        let scale = spec.derivative_time * threshold;
        SurrogateAt { threshold, scale, peak: spec.neuron_time / scale }
    }

    #[inline]
    pub(crate) fn eval(&self, u: f64) -> f64 {
        self.peak * (-(u - self.threshold).abs() / self.scale).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        let spec = LossSpec::new(70, 10, 100).unwrap();
        assert_eq!(spike_count_loss(&[70, 10], 0, &spec).unwrap(), 0.0);
        assert!((spike_count_loss(&[60, 20], 0, &spec).unwrap() - 0.01).abs() < 1e-15);
        assert!((spike_count_loss(&[0, 0], 0, &spec).unwrap() - 0.25).abs() < 1e-15);
        assert!(spike_count_loss(&[0, 0], 2, &spec).is_err());
    }

    #[test]
    fn loss_spec_bounds() {
        assert!(LossSpec::new(10, 10, 50).is_err());
        assert!(LossSpec::new(50, 10, 50).is_err());
        assert!(LossSpec::new(30, 0, 50).is_err());
        assert_eq!(LossSpec::for_steps(30).unwrap(), LossSpec::new(25, 5, 30).unwrap());
        assert_eq!(LossSpec::for_steps(50).unwrap(), LossSpec::new(30, 10, 50).unwrap());
        assert_eq!(LossSpec::for_steps(100).unwrap(), LossSpec::new(70, 10, 100).unwrap());
    }

    #[test]
    fn kernel_values() {
        let k = response_kernels(0.75, 0.96875, 4);
        assert_eq!(k.current, vec![1.0, 0.75, 0.5625, 0.421875]);
        assert_eq!(k.voltage[1], 1.71875);
        let k = response_kernels(0.0, 0.0, 3);
        assert_eq!(k.current, vec![1.0, 0.0, 0.0]);
        assert_eq!(k.voltage, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn voltage_kernel_is_double_geometric_convolution() {
        let (dc, dv) = (0.75, 0.96875);
        let k = response_kernels(dc, dv, 60);
        for t in 0..60 {
            let direct: f64 = (0..=t).map(|j| dc.powi(j as i32) * dv.powi((t - j) as i32)).sum();
            assert!((k.voltage[t] - direct).abs() <= 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn surrogate_peak_and_symmetry() {
        let s = SurrogateSpec::default();
        assert_eq!(surrogate_grad(0.8, 0.8, &s), 1.0);
        for d in [0.01, 0.3, 2.0, 17.0] {
            let (a, b) = (surrogate_grad(0.8 + d, 0.8, &s), surrogate_grad(0.8 - d, 0.8, &s));
            assert!((a - b).abs() < 1e-12);
            assert!(surrogate_grad(0.8 + d, 0.8, &s) < 1.0);
        }
        assert_eq!(surrogate_grad(1e6, 0.8, &s), 0.0);
        assert_eq!(surrogate_grad(-1e6, 0.8, &s), 0.0);
    }
}
