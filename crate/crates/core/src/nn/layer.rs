use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    Maxpool2d,
    Relu,
    Flatten,
    Dropout,
    Dense,
    Softmax,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::Maxpool2d => "maxpool2d",
            LayerKind::Relu => "relu",
            LayerKind::Flatten => "flatten",
            LayerKind::Dropout => "dropout",
            LayerKind::Dense => "dense",
            LayerKind::Softmax => "softmax",
        }
    }
}

/// One layer of a network description. Input shapes are inferred when the
/// network is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid padding, stride 1.
    Conv2d { filters: usize, kernel: usize },
    /// Window `size x size`, stride `size`.
    Maxpool2d { size: usize },
    Relu,
    Flatten,
    Dropout { rate: f64 },
    Dense { units: usize },
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv2d { .. } => LayerKind::Conv2d,
            LayerSpec::Maxpool2d { .. } => LayerKind::Maxpool2d,
            LayerSpec::Relu => LayerKind::Relu,
            LayerSpec::Flatten => LayerKind::Flatten,
            LayerSpec::Dropout { .. } => LayerKind::Dropout,
            LayerSpec::Dense { .. } => LayerKind::Dense,
            LayerSpec::Softmax => LayerKind::Softmax,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub(crate) fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let kind = self.kind().name();
        let invalid = |reason| Error::InvalidLayer {
            layer: index,
            kind,
            reason,
        };
        match *self {
            LayerSpec::Conv2d { filters, kernel } => {
                let &[_, h, w] = input else {
                    return Err(invalid("expects a [channels, height, width] input"));
                };
                if filters == 0 || kernel == 0 {
                    return Err(invalid("filters and kernel must be positive"));
                }
                if kernel > h || kernel > w {
                    return Err(invalid("kernel larger than input"));
                }
                Ok(vec![filters, h - kernel + 1, w - kernel + 1])
            }
            LayerSpec::Maxpool2d { size } => {
                let &[c, h, w] = input else {
                    return Err(invalid("expects a [channels, height, width] input"));
                };
                if size == 0 || size > h || size > w {
                    return Err(invalid("pool window must fit the input"));
                }
                Ok(vec![c, h / size, w / size])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(invalid("dropout rate must lie in [0, 1)"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Dense { units } => {
                if input.len() != 1 {
                    return Err(invalid("expects a flat input"));
                }
                if units == 0 {
                    return Err(invalid("units must be positive"));
                }
                Ok(vec![units])
            }
            LayerSpec::Softmax => {
                if input.len() != 1 {
                    return Err(invalid("expects a flat input"));
                }
                Ok(input.to_vec())
            }
        }
    }

    /// Shapes of the trainable tensors (weights first, then bias).
    pub(crate) fn param_shapes(&self, input: &[usize]) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d { filters, kernel } => {
                vec![vec![filters, input[0], kernel, kernel], vec![filters]]
            }
            LayerSpec::Dense { units } => vec![vec![units, input[0]], vec![units]],
            _ => Vec::new(),
        }
    }
}
