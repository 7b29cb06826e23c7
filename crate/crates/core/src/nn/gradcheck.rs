use alloc::vec::Vec;

use rand::Rng;

use super::layer::{LayerKind, LayerSpec};
use super::loss::cross_entropy_loss;
use super::network::{Mode, Network};
use crate::error::Result;
use crate::rng;
use crate::tensor::Tensor;

const EPSILON: f64 = 1e-5;
/// Denominator floor so that parameters with (near) zero gradient are judged
/// on absolute rather than relative error.
const DENOMINATOR_FLOOR: f64 = 1e-8;
const BATCH: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradError {
    pub layer: usize,
    pub kind: LayerKind,
    pub params_checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub layers: Vec<LayerGradError>,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub(crate) fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR)
}

/// Compares backpropagated gradients against central differences
/// `(f(p + e) - f(p - e)) / 2e` for every parameter, in 64-bit precision.
///
/// The network gets random parameters and a random batch of two inputs. When
/// the last layer is softmax the loss is cross-entropy against random labels;
/// otherwise it is a fixed random linear functional of the output. Dropout
/// layers run in training mode with a fixed mask.
pub fn gradient_check(
    input_shape: &[usize],
    specs: &[LayerSpec],
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut net = Network::<f64>::new(input_shape, specs)?;
    net.init_uniform(rng::derive(seed, 0), 0.5);
    let mut rng = rng::rng_for(seed, 1);

    let mut input_dims = Vec::with_capacity(input_shape.len() + 1);
    input_dims.push(BATCH);
    input_dims.extend_from_slice(input_shape);
    let input_len = input_dims.iter().product();
    let input = Tensor::new(
        input_dims,
        (0..input_len).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;

    let out_width: usize = net.output_shape().iter().product();
    let softmax_head = matches!(specs.last(), Some(LayerSpec::Softmax));
    let labels: Vec<usize> = (0..BATCH).map(|_| rng.random_range(0..out_width)).collect();
    let weights: Vec<f64> = (0..BATCH * out_width)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let mode = Mode::Train {
        seed: rng::derive(seed, 2),
    };

    let loss = |net: &Network<f64>| -> Result<f64> {
        let (out, _) = net.forward(&input, mode)?;
        if softmax_head {
            Ok(cross_entropy_loss(&out, &labels)?.0)
        } else {
            Ok(out.data().iter().zip(&weights).map(|(o, w)| o * w).sum())
        }
    };

    let (out, cache) = net.forward(&input, mode)?;
    let analytic = if softmax_head {
        let (_, grad) = cross_entropy_loss(&out, &labels)?;
        net.backward_from_logits(&cache, &grad)?
    } else {
        let grad = Tensor::new(out.shape().to_vec(), weights.clone())?;
        net.backward(&cache, &grad)?
    };
    drop(cache);

    let mut layers = Vec::new();
    let mut overall: f64 = 0.0;
    for index in 0..net.layers().len() {
        let n_params = net.layers()[index].params().len();
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        for p in 0..n_params {
            for e in 0..net.layers()[index].params()[p].len() {
                let original = net.layers()[index].params()[p].data()[e];
                net.params_mut(index)[p].data_mut()[e] = original + EPSILON;
                let plus = loss(&net)?;
                net.params_mut(index)[p].data_mut()[e] = original - EPSILON;
                let minus = loss(&net)?;
                net.params_mut(index)[p].data_mut()[e] = original;
                let numeric = (plus - minus) / (2.0 * EPSILON);
                let a = analytic.layer(index)[p].data()[e];
                worst = worst.max(relative_error(a, numeric));
                checked += 1;
            }
        }
        if checked > 0 {
            overall = overall.max(worst);
            layers.push(LayerGradError {
                layer: index,
                kind: specs[index].kind(),
                params_checked: checked,
                max_rel_error: worst,
            });
        }
    }
    Ok(GradCheckReport {
        layers,
        max_rel_error: overall,
        tolerance,
    })
}
