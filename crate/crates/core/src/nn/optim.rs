use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    /// Pretraining schedule: 10 epochs, batch 64, lr 0.01, momentum 0.9.
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            epochs: 10,
            seed: 7,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    /// Fine-tuning counterpart: same schedule at a tenth of the learning rate.
    pub fn fine_tune_from(pretrain: &OptimizerConfig) -> Self {
        Self {
            learning_rate: pretrain.learning_rate * 0.1,
            ..*pretrain
        }
    }
}

/// SGD with classical momentum:
/// `v <- momentum * v + g`, `p <- p - lr * v`.
#[derive(Debug, Clone, Default)]
pub struct Sgd<T> {
    velocity: Vec<Vec<Tensor<T>>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new() -> Self {
        Self {
            velocity: Vec::new(),
        }
    }

    /// Applies one update. Layers whose gradient list is empty are left
    /// untouched (frozen or parameter-free).
    pub fn step(
        &mut self,
        net: &mut Network<T>,
        grads: &Gradients<T>,
        config: &OptimizerConfig,
    ) -> Result<()> {
        let n_layers = net.layers().len();
        if grads.len() != n_layers {
            return Err(Error::LengthMismatch {
                what: "gradient layers vs network layers",
                left: grads.len(),
                right: n_layers,
            });
        }
        if self.velocity.len() != n_layers {
            self.velocity = net
                .layers()
                .iter()
                .map(|l| l.params().iter().map(|p| Tensor::zeros(p.shape())).collect())
                .collect();
        }
        for (index, g) in grads.iter().enumerate() {
            if g.is_empty() {
                continue;
            }
            let shapes_match = net.layers()[index]
                .params()
                .iter()
                .map(Tensor::shape)
                .eq(g.iter().map(Tensor::shape));
            if !shapes_match {
                return Err(Error::ShapeMismatch {
                    layer: index,
                    kind: net.layers()[index].spec().kind().name(),
                    expected: net.layers()[index].params()[0].shape().to_vec(),
                    found: g[0].shape().to_vec(),
                });
            }
        }
        let lr = T::from_f64(config.learning_rate);
        let momentum = T::from_f64(config.momentum);
        for (index, g) in grads.iter().enumerate() {
            if g.is_empty() {
                continue;
            }
            let params = net.params_mut(index);
            for ((p, v), g) in params.iter_mut().zip(&mut self.velocity[index]).zip(g) {
                for ((p, v), &g) in p
                    .data_mut()
                    .iter_mut()
                    .zip(v.data_mut().iter_mut())
                    .zip(g.data())
                {
                    *v = momentum * *v + g;
                    *p = *p - lr * *v;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Mode};
    use alloc::vec;

    fn one_param_net(value: f64) -> Network<f64> {
        // Dense 1 -> 1; weight is the parameter under test, bias stays 0.
        let mut net = Network::new(&[1], &[LayerSpec::Dense { units: 1 }]).unwrap();
        net.params_mut(0)[0].data_mut()[0] = value;
        net
    }

    fn grads_for(net: &Network<f64>, x: f64, upstream: f64) -> Gradients<f64> {
        let input = Tensor::new(vec![1, 1], vec![x]).unwrap();
        let (_, cache) = net.forward(&input, Mode::Eval).unwrap();
        net.backward(&cache, &Tensor::new(vec![1, 1], vec![upstream]).unwrap())
            .unwrap()
    }

    fn config(lr: f64, momentum: f64) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: lr,
            momentum,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn single_plain_step() {
        // dL/dw = upstream * x = 0.5
        let mut net = one_param_net(1.0);
        let g = grads_for(&net, 1.0, 0.5);
        Sgd::new().step(&mut net, &g, &config(0.1, 0.0)).unwrap();
        assert!((net.layers()[0].params()[0].data()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut net = one_param_net(0.3);
        let before = net.clone();
        let g = grads_for(&net, 1.0, 0.0);
        Sgd::new().step(&mut net, &g, &config(0.1, 0.0)).unwrap();
        assert_eq!(net.layers(), before.layers());
    }

    #[test]
    fn momentum_recurrence_two_steps() {
        // g1 = 0.5: v1 = 0.5, p1 = 1 - 0.1*0.5 = 0.95
        // g2 = 0.25: v2 = 0.9*0.5 + 0.25 = 0.7, p2 = 0.95 - 0.07 = 0.88
        let mut net = one_param_net(1.0);
        let mut sgd = Sgd::new();
        let cfg = config(0.1, 0.9);
        let g1 = grads_for(&net, 1.0, 0.5);
        sgd.step(&mut net, &g1, &cfg).unwrap();
        let g2 = grads_for(&net, 1.0, 0.25);
        sgd.step(&mut net, &g2, &cfg).unwrap();
        assert!((net.layers()[0].params()[0].data()[0] - 0.88).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(config(0.0, 0.0).validate().is_err());
        assert!(config(0.1, 1.0).validate().is_err());
        let mut c = config(0.1, 0.5);
        c.batch_size = 0;
        assert!(c.validate().is_err());
        assert!(OptimizerConfig::default().validate().is_ok());
    }

    #[test]
    fn fine_tune_rate_is_a_tenth() {
        let ft = OptimizerConfig::fine_tune_from(&OptimizerConfig::default());
        assert!((ft.learning_rate - 0.001).abs() < 1e-15);
        assert_eq!(ft.epochs, 10);
    }
}
