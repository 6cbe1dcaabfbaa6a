//! Named parameters and AdamW with layer-wise learning-rate decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A trainable tensor, its accumulated gradient, and the depth used for
/// layer-wise learning-rate decay.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub gradient: Tensor,
    layer_index: usize,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor, layer_index: usize) -> Self {
        let gradient = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            gradient,
            layer_index,
        }
    }

    pub fn layer_index(&self) -> usize {
        self.layer_index
    }

    pub fn zero_grad(&mut self) {
        self.gradient.data_mut().fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Learning rate for a parameter at `layer_index` when the deepest layer is `max_layer`.
pub fn layer_lr(base_lr: f64, decay_factor: f64, max_layer: usize, layer_index: usize) -> f64 {
    base_lr * decay_factor.powi((max_layer - layer_index.min(max_layer)) as i32)
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub hyper: AdamWHyper,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u32,
}

impl AdamW {
    pub fn new(hyper: AdamWHyper) -> Self {
        Self {
            hyper,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    /// One update over `params`. Moment buffers are keyed by position, so the
    /// same slice order must be used on every call.
    pub fn step(&mut self, params: &mut [Parameter], base_lr: f64, decay_factor: f64) -> Result<()> {
        if !(decay_factor > 0.0 && decay_factor <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "layer decay factor must be in (0, 1], got {decay_factor}"
            )));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(Error::Shape("parameter list changed between optimizer steps".into()));
        }
        for p in params.iter() {
            p.gradient.ensure_finite("gradient")?;
        }
        self.steps += 1;
        let h = self.hyper;
        let t = self.steps as i32;
        let bc1 = 1.0 - h.beta1.powi(t);
        let bc2 = 1.0 - h.beta2.powi(t);
        let max_layer = params.iter().map(|p| p.layer_index).max().unwrap_or(0);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let lr = layer_lr(base_lr, decay_factor, max_layer, p.layer_index);
            let grads = p.gradient.data().to_vec();
            for (((w, g), mi), vi) in p.value.data_mut().iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = h.beta1 * *mi + (1.0 - h.beta1) * g;
                *vi = h.beta2 * *vi + (1.0 - h.beta2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * (mhat / (vhat.sqrt() + h.epsilon) + h.weight_decay * *w);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut params = vec![Parameter::new("w", Tensor::from_vec(vec![1.5, -2.0]), 0)];
        let mut opt = AdamW::new(AdamWHyper {
            weight_decay: 0.0,
            ..Default::default()
        });
        for _ in 0..5 {
            opt.step(&mut params, 0.1, 0.75).unwrap();
        }
        assert_eq!(params[0].value.data(), &[1.5, -2.0]);
    }

    #[test]
    fn layer_decay_rates() {
        assert_eq!(layer_lr(9e-5, 0.75, 1, 1), 9e-5);
        assert!((layer_lr(9e-5, 0.75, 1, 0) - 6.75e-5).abs() < 1e-18);
        assert_eq!(layer_lr(9e-5, 1.0, 4, 0), 9e-5);
    }

    #[test]
    fn first_step_moves_by_lr_per_layer() {
        // Adam's first bias-corrected step has magnitude ~lr in every coordinate.
        let mut params = vec![
            Parameter::new("shallow", Tensor::from_vec(vec![0.0]), 0),
            Parameter::new("deep", Tensor::from_vec(vec![0.0]), 1),
        ];
        params[0].gradient = Tensor::from_vec(vec![1.0]);
        params[1].gradient = Tensor::from_vec(vec![1.0]);
        let mut opt = AdamW::new(AdamWHyper {
            weight_decay: 0.0,
            epsilon: 0.0,
            ..Default::default()
        });
        opt.step(&mut params, 9e-5, 0.75).unwrap();
        assert!((params[1].value.data()[0] + 9e-5).abs() < 1e-15);
        assert!((params[0].value.data()[0] + 6.75e-5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_decay_and_nan_gradient() {
        let mut params = vec![Parameter::new("w", Tensor::from_vec(vec![1.0]), 0)];
        let mut opt = AdamW::new(AdamWHyper::default());
        assert!(opt.step(&mut params, 0.1, 0.0).is_err());
        params[0].gradient = Tensor::from_vec(vec![f64::NAN]);
        assert!(opt.step(&mut params, 0.1, 0.5).is_err());
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut params = vec![Parameter::new("w", Tensor::from_vec(vec![2.0]), 0)];
        let mut opt = AdamW::new(AdamWHyper {
            weight_decay: 0.1,
            ..Default::default()
        });
        opt.step(&mut params, 0.5, 1.0).unwrap();
        // zero gradient: only the decay term acts, w -= lr * wd * w
        assert!((params[0].value.data()[0] - (2.0 - 0.5 * 0.1 * 2.0)).abs() < 1e-15);
    }
}
