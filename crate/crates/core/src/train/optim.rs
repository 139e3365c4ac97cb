use serde::{Deserialize, Serialize};

use super::Gradients;
use crate::error::{Error, Result};
use crate::snn::Network;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First-order optimiser over the trainable weights of a network.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, net: &Network) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::arg(format!("learning rate must be positive, got {learning_rate}")));
        }
        if let OptimizerKind::Adam { beta1, beta2, epsilon } = kind {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) {
                return Err(Error::arg("adam needs betas in [0, 1) and a positive epsilon"));
            }
        }
        let zeros = Gradients::zeros_like(net).layers;
        Ok(Optimizer { kind, learning_rate, step: 0, first: zeros.clone(), second: zeros })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Gradients must match the network layout.
    pub fn apply(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers.len() {
            return Err(Error::shape("gradient layout does not match network"));
        }
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        self.step += 1;
        let lr = self.learning_rate;
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let g = &grads.layers[l];
            if !layer.is_trainable() {
                continue;
            }
            if g.len() != layer.weights.len() {
                return Err(Error::shape(format!("layer {l}: gradient length {} != {}", g.len(), layer.weights.len())));
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, &gi) in layer.weights.iter_mut().zip(g) {
                        *w = (*w as f64 - lr * gi) as f32;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, epsilon } => {
                    let c1 = 1.0 - beta1.powi(self.step as i32);
                    let c2 = 1.0 - beta2.powi(self.step as i32);
                    let (m, v) = (&mut self.first[l], &mut self.second[l]);
                    for (k, w) in layer.weights.iter_mut().enumerate() {
                        let gi = g[k];
                        m[k] = beta1 * m[k] + (1.0 - beta1) * gi;
                        v[k] = beta2 * v[k] + (1.0 - beta2) * gi * gi;
                        let mh = m[k] / c1;
                        let vh = v[k] / c2;
                        *w = (*w as f64 - lr * mh / (vh.sqrt() + epsilon)) as f32;
                    }
                }
            }
        }
        Ok(())
    }
}
