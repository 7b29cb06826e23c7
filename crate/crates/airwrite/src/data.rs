//! Assembles the dataset splits a regime needs from files or the generator.

use std::path::Path;

use airwrite_core::dataset::{LabeledDataset, SplitName};
use airwrite_core::eval::{RegimeSpec, Splits};
use airwrite_core::synth;

use crate::config::RunConfig;
use crate::error::{AppError, AppResult};
use crate::io;

/// Handwritten pretraining set: MNIST training images at glyph size.
pub fn load_ts_b(config: &RunConfig) -> AppResult<LabeledDataset> {
    let path = match &config.paths.ts_b {
        Some(p) => p.clone(),
        None => io::mnist_paths(&config.paths.mnist_dir).0,
    };
    Ok(io::read_idx_pair(&path, SplitName::TsB)?.to_glyph_size())
}

/// MNIST test images at glyph size.
pub fn load_mnist_test(dir: &Path) -> AppResult<LabeledDataset> {
    Ok(io::read_idx_pair(&io::mnist_paths(dir).1, SplitName::Custom("MNIST-test".into()))?.to_glyph_size())
}

/// An air-written split from its IDX file, or generated when none is set.
pub fn load_air(config: &RunConfig, split: SplitName) -> AppResult<LabeledDataset> {
    let (path, per_class) = match split {
        SplitName::TsA => (&config.paths.ts_a, config.data.ts_a_per_class),
        SplitName::Eval => (&config.paths.eval, config.data.eval_per_class),
        ref other => return Err(AppError::Config(format!("{other} is not an air-written split"))),
    };
    let dataset = match path {
        Some(p) => io::read_idx_pair(p, split)?,
        None => synth::air_split(split, per_class, &config.motion, config.data.synth_seed)?,
    };
    if dataset.side() != airwrite_core::GLYPH_SIDE {
        return Ok(dataset.to_glyph_size());
    }
    Ok(dataset)
}

/// Loads only the splits `spec` reads.
pub fn load_splits(config: &RunConfig, spec: &RegimeSpec) -> AppResult<Splits> {
    let mut splits = Splits::default();
    for name in spec.required_splits() {
        match name {
            SplitName::TsA => splits.ts_a = Some(load_air(config, SplitName::TsA)?),
            SplitName::TsB => splits.ts_b = Some(load_ts_b(config)?),
            SplitName::Eval => splits.eval = Some(load_air(config, SplitName::Eval)?),
            SplitName::Custom(_) => {}
        }
    }
    Ok(splits)
}
