//! The numeral classifier: a two-block CNN over 56 x 56 glyphs.
//!
//! Feature block: conv 32@5x5, ReLU, 2x2 max-pool, conv 16@3x3, ReLU, 2x2
//! max-pool. Classification block: flatten (2304), 20 % dropout, dense 128,
//! ReLU, dense 64, ReLU, dense n, softmax.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{cross_entropy_loss, LayerSpec, Mode, Network, OptimizerConfig, Sgd};
use crate::raster::Glyph;
use crate::rng;
use crate::tensor::Tensor;
use crate::GLYPH_SIDE;

/// Index of the first classification-block layer with parameters.
const FIRST_DENSE_LAYER: usize = 8;
const INFERENCE_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub n_classes: usize,
    pub language_tag: String,
}

impl ClassifierConfig {
    pub fn new(n_classes: usize, language_tag: impl Into<String>) -> Result<Self> {
        let config = Self {
            n_classes,
            language_tag: language_tag.into(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn english_digits() -> Self {
        Self {
            n_classes: 10,
            language_tag: "english".into(),
        }
    }

    pub fn input_side(&self) -> usize {
        GLYPH_SIDE
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::InvalidConfig("n_classes must be >= 2".into()));
        }
        if self.n_classes > 256 {
            return Err(Error::InvalidConfig("n_classes must fit an 8-bit label".into()));
        }
        Ok(())
    }
}

/// The fixed layer sequence for `n_classes` outputs.
pub fn architecture(n_classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d {
            filters: 32,
            kernel: 5,
        },
        LayerSpec::Relu,
        LayerSpec::Maxpool2d { size: 2 },
        LayerSpec::Conv2d {
            filters: 16,
            kernel: 3,
        },
        LayerSpec::Relu,
        LayerSpec::Maxpool2d { size: 2 },
        LayerSpec::Flatten,
        LayerSpec::Dropout { rate: 0.2 },
        LayerSpec::Dense { units: 128 },
        LayerSpec::Relu,
        LayerSpec::Dense { units: 64 },
        LayerSpec::Relu,
        LayerSpec::Dense { units: n_classes },
        LayerSpec::Softmax,
    ]
}

/// One completed training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub regime: String,
    pub datasets: Vec<String>,
    pub epochs: usize,
    pub final_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub confidence: f32,
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Random shifts of up to two pixels per axis.
    pub augment: bool,
    /// Only update the classification block.
    pub freeze_features: bool,
    pub validation: Option<&'a LabeledDataset>,
    /// Label stored in the training history.
    pub stage: Option<String>,
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochMetrics)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    config: ClassifierConfig,
    network: Network<f32>,
    pub history: Vec<HistoryEntry>,
}

impl CnnModel {
    /// He-normal weights, zero biases; identical for identical seeds.
    pub fn build(config: ClassifierConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut network = Network::new(&[1, GLYPH_SIDE, GLYPH_SIDE], &architecture(config.n_classes))?;
        network.init_he(seed);
        Ok(Self {
            config,
            network,
            history: Vec::new(),
        })
    }

    pub(crate) fn from_parts(
        config: ClassifierConfig,
        network: Network<f32>,
        history: Vec<HistoryEntry>,
    ) -> Result<Self> {
        let model = Self {
            config,
            network,
            history,
        };
        model.verify_architecture()?;
        Ok(model)
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn param_count(&self) -> usize {
        self.network.param_count()
    }

    /// Checks the layer sequence and every per-sample shape.
    pub fn verify_architecture(&self) -> Result<()> {
        let expected = architecture(self.config.n_classes);
        if self.network.specs() != expected {
            return Err(Error::ConfigMismatch("layer sequence differs from the classifier architecture".into()));
        }
        let shapes: [&[usize]; 7] = [
            &[32, 52, 52],
            &[32, 52, 52],
            &[32, 26, 26],
            &[16, 24, 24],
            &[16, 24, 24],
            &[16, 12, 12],
            &[2304],
        ];
        for (layer, shape) in self.network.layers().iter().zip(shapes) {
            if layer.output_shape() != shape {
                return Err(Error::ConfigMismatch("feature block shapes differ".into()));
            }
        }
        Ok(())
    }

    fn batch_tensor(&self, images: &[&[u8]], shifts: Option<&[(i32, i32)]>) -> Result<Tensor<f32>> {
        let n = GLYPH_SIDE * GLYPH_SIDE;
        let mut data = vec![0.0f32; images.len() * n];
        for (i, img) in images.iter().enumerate() {
            let dst = &mut data[i * n..(i + 1) * n];
            match shifts.map(|s| s[i]) {
                Some((sx, sy)) if sx != 0 || sy != 0 => {
                    for y in 0..GLYPH_SIDE as i32 {
                        let src_y = y - sy;
                        if !(0..GLYPH_SIDE as i32).contains(&src_y) {
                            continue;
                        }
                        for x in 0..GLYPH_SIDE as i32 {
                            let src_x = x - sx;
                            if (0..GLYPH_SIDE as i32).contains(&src_x) {
                                dst[(y as usize) * GLYPH_SIDE + x as usize] =
                                    img[src_y as usize * GLYPH_SIDE + src_x as usize] as f32 / 255.0;
                            }
                        }
                    }
                }
                _ => {
                    for (d, &p) in dst.iter_mut().zip(img.iter()) {
                        *d = p as f32 / 255.0;
                    }
                }
            }
        }
        Tensor::new(vec![images.len(), 1, GLYPH_SIDE, GLYPH_SIDE], data)
    }

    fn check_dataset(&self, dataset: &LabeledDataset) -> Result<()> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if dataset.side() != GLYPH_SIDE {
            return Err(Error::GlyphSize {
                width: dataset.side(),
                height: dataset.side(),
            });
        }
        dataset.check_labels(self.config.n_classes)
    }

    /// Mini-batch SGD with momentum over `dataset`, reshuffled every epoch.
    pub fn train(
        &mut self,
        dataset: &LabeledDataset,
        opt: &OptimizerConfig,
        augment: bool,
    ) -> Result<Vec<EpochMetrics>> {
        self.train_with(
            dataset,
            opt,
            TrainOptions {
                augment,
                ..TrainOptions::default()
            },
        )
    }

    /// Continues training an already trained model. With `freeze_features`
    /// the convolutional block is left bit-for-bit unchanged.
    pub fn fine_tune(
        &mut self,
        dataset: &LabeledDataset,
        opt: &OptimizerConfig,
        freeze_features: bool,
    ) -> Result<Vec<EpochMetrics>> {
        self.train_with(
            dataset,
            opt,
            TrainOptions {
                freeze_features,
                stage: Some("fine_tune".into()),
                ..TrainOptions::default()
            },
        )
    }

    pub fn train_with(
        &mut self,
        dataset: &LabeledDataset,
        opt: &OptimizerConfig,
        mut options: TrainOptions<'_>,
    ) -> Result<Vec<EpochMetrics>> {
        opt.validate()?;
        self.check_dataset(dataset)?;
        if let Some(v) = options.validation {
            self.check_dataset(v)?;
        }
        let first_layer = if options.freeze_features {
            FIRST_DENSE_LAYER
        } else {
            0
        };
        let mut sgd = Sgd::new();
        let mut metrics = Vec::with_capacity(opt.epochs);
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        for epoch in 0..opt.epochs {
            let mut shuffle_rng = rng::rng_for(opt.seed, epoch as u64);
            order.shuffle(&mut shuffle_rng);
            let (mut loss_sum, mut correct) = (0.0, 0usize);
            for (b, batch) in order.chunks(opt.batch_size).enumerate() {
                let images: Vec<&[u8]> = batch.iter().map(|&i| dataset.image(i)).collect();
                let labels: Vec<usize> = batch.iter().map(|&i| dataset.label(i)).collect();
                let shifts: Option<Vec<(i32, i32)>> = options.augment.then(|| {
                    batch
                        .iter()
                        .map(|_| (shuffle_rng.random_range(-2..=2), shuffle_rng.random_range(-2..=2)))
                        .collect()
                });
                let input = self.batch_tensor(&images, shifts.as_deref())?;
                let step_seed = rng::derive(opt.seed, ((epoch as u64) << 32) | b as u64);
                let (probs, cache) = self.network.forward(&input, Mode::Train { seed: step_seed })?;
                let (loss, grad) = cross_entropy_loss(&probs, &labels)?;
                loss_sum += loss * batch.len() as f64;
                correct += argmax_rows(&probs)
                    .iter()
                    .zip(&labels)
                    .filter(|((p, _), l)| p == *l)
                    .count();
                let (grads, _) = self.network.backward_impl(&cache, &grad, true, first_layer, false)?;
                drop(cache);
                sgd.step(&mut self.network, &grads, opt)?;
            }
            let validation_accuracy = options
                .validation
                .map(|v| self.accuracy(v))
                .transpose()?;
            let m = EpochMetrics {
                epoch: epoch + 1,
                loss: loss_sum / dataset.len() as f64,
                train_accuracy: correct as f64 / dataset.len() as f64,
                validation_accuracy,
            };
            if let Some(cb) = options.on_epoch.as_deref_mut() {
                cb(&m);
            }
            metrics.push(m);
        }
        if opt.epochs > 0 {
            let last = metrics.last().copied();
            self.history.push(HistoryEntry {
                regime: options.stage.take().unwrap_or_else(|| "train".into()),
                datasets: vec![dataset.id()],
                epochs: opt.epochs,
                final_accuracy: last.map(|m| m.validation_accuracy.unwrap_or(m.train_accuracy)),
            });
        }
        Ok(metrics)
    }

    /// Class probabilities for a batch of 56 x 56 images, dropout disabled.
    pub fn probabilities(&self, images: &[&[u8]]) -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(INFERENCE_CHUNK) {
            for img in chunk {
                if img.len() != GLYPH_SIDE * GLYPH_SIDE {
                    return Err(Error::GlyphSize {
                        width: GLYPH_SIDE,
                        height: img.len() / GLYPH_SIDE,
                    });
                }
            }
            let probs = self.network.infer(&self.batch_tensor(chunk, None)?)?;
            let n = self.config.n_classes;
            out.extend(probs.data().chunks(n).map(<[f32]>::to_vec));
        }
        Ok(out)
    }

    /// Top-k classes with confidences, highest first (ties by class index).
    pub fn predict(&self, glyph: &Glyph, top_k: usize) -> Result<Vec<Prediction>> {
        let probs = self.probabilities(&[glyph.pixels()])?;
        Ok(rank(&probs[0], top_k))
    }

    /// Top-1 prediction for every item in the dataset.
    pub fn predict_dataset(&self, dataset: &LabeledDataset) -> Result<Vec<Prediction>> {
        if dataset.side() != GLYPH_SIDE {
            return Err(Error::GlyphSize {
                width: dataset.side(),
                height: dataset.side(),
            });
        }
        let images: Vec<&[u8]> = (0..dataset.len()).map(|i| dataset.image(i)).collect();
        Ok(self
            .probabilities(&images)?
            .iter()
            .map(|p| rank(p, 1)[0])
            .collect())
    }

    pub fn accuracy(&self, dataset: &LabeledDataset) -> Result<f64> {
        let preds = self.predict_dataset(dataset)?;
        let correct = preds
            .iter()
            .enumerate()
            .filter(|(i, p)| p.class == dataset.label(*i))
            .count();
        Ok(correct as f64 / dataset.len().max(1) as f64)
    }
}

pub fn rank(probs: &[f32], top_k: usize) -> Vec<Prediction> {
    let mut ranked: Vec<Prediction> = probs
        .iter()
        .enumerate()
        .map(|(class, &confidence)| Prediction { class, confidence })
        .collect();
    ranked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.class.cmp(&b.class)));
    ranked.truncate(top_k);
    ranked
}

fn argmax_rows(probs: &Tensor<f32>) -> Vec<(usize, f32)> {
    let n = probs.shape()[1];
    probs
        .data()
        .chunks(n)
        .map(|row| {
            let p = rank(row, 1)[0];
            (p.class, p.confidence)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_for_ten_classes() {
        let m = CnnModel::build(ClassifierConfig::english_digits(), 1).unwrap();
        // 832 + 4624 + 295040 + 8256 + 650
        assert_eq!(m.param_count(), 309_402);
        m.verify_architecture().unwrap();
    }

    #[test]
    fn output_has_one_entry_per_class() {
        let m = CnnModel::build(ClassifierConfig::new(10, "english").unwrap(), 2).unwrap();
        let p = m.probabilities(&[&[17u8; 56 * 56]]).unwrap();
        assert_eq!(p[0].len(), 10);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = CnnModel::build(ClassifierConfig::english_digits(), 9).unwrap();
        let b = CnnModel::build(ClassifierConfig::english_digits(), 9).unwrap();
        let c = CnnModel::build(ClassifierConfig::english_digits(), 10).unwrap();
        assert_eq!(a.network().layers(), b.network().layers());
        assert_ne!(a.network().layers(), c.network().layers());
    }

    #[test]
    fn blank_glyph_on_fresh_model_is_uniform() {
        let m = CnnModel::build(ClassifierConfig::english_digits(), 3).unwrap();
        let preds = m.predict(&Glyph::blank(), 10).unwrap();
        assert_eq!(preds.len(), 10);
        for p in &preds {
            assert!((p.confidence - 0.1).abs() < 1e-6);
        }
        // equal confidences rank by class index
        assert!(preds.iter().enumerate().all(|(i, p)| p.class == i));
    }

    #[test]
    fn config_validation() {
        assert!(ClassifierConfig::new(1, "x").is_err());
        assert!(ClassifierConfig::new(2, "x").is_ok());
    }

    #[test]
    fn rank_orders_descending() {
        let r = rank(&[0.1, 0.6, 0.3], 2);
        assert_eq!(r.iter().map(|p| p.class).collect::<Vec<_>>(), [1, 2]);
    }
}
