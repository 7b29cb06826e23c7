//! Run configuration: a TOML file merged with command-line overrides.

use std::path::{Path, PathBuf};

use airwrite_core::dataset::{EVAL_DEFAULT_SIZE, TS_A_DEFAULT_SIZE};
use airwrite_core::model::ClassifierConfig;
use airwrite_core::motion::{MotionConfig, VelocityUnits};
use airwrite_core::nn::OptimizerConfig;
use airwrite_core::vision::{MarkerColorSpec, DEFAULT_MIN_AREA};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_MNIST_DIR: &str = "data/mnist";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkerSection {
    pub rgb: [u8; 3],
    pub hue_tolerance: f64,
    pub saturation_tolerance: f64,
    pub value_tolerance: f64,
    pub min_area: usize,
}

impl Default for MarkerSection {
    fn default() -> Self {
        let spec = MarkerColorSpec::default();
        Self {
            rgb: [0, 200, 0],
            hue_tolerance: spec.hue_tolerance,
            saturation_tolerance: spec.saturation_tolerance,
            value_tolerance: spec.value_tolerance,
            min_area: DEFAULT_MIN_AREA,
        }
    }
}

impl MarkerSection {
    pub fn spec(&self) -> MarkerColorSpec {
        MarkerColorSpec {
            hue_tolerance: self.hue_tolerance,
            saturation_tolerance: self.saturation_tolerance,
            value_tolerance: self.value_tolerance,
            ..MarkerColorSpec::from_rgb(self.rgb)
        }
    }
}

/// Where datasets live. Missing air-written splits are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Directory with the four standard MNIST files (TS-B).
    pub mnist_dir: PathBuf,
    /// IDX image files; labels are found by name.
    pub ts_a: Option<PathBuf>,
    pub ts_b: Option<PathBuf>,
    pub eval: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            mnist_dir: PathBuf::from(DEFAULT_MNIST_DIR),
            ts_a: None,
            ts_b: None,
            eval: None,
            out: PathBuf::from("out"),
        }
    }
}

/// Sizes and seed for generated air-written splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub ts_a_per_class: usize,
    pub eval_per_class: usize,
    pub synth_seed: u64,
    /// Random small shifts while pretraining.
    pub augment: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            ts_a_per_class: TS_A_DEFAULT_SIZE / 10,
            eval_per_class: EVAL_DEFAULT_SIZE / 10,
            synth_seed: 1,
            augment: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub marker: MarkerSection,
    pub motion: MotionConfig,
    pub optimizer: OptimizerConfig,
    pub classifier: ClassifierConfig,
    pub paths: PathsSection,
    pub data: DataSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            marker: MarkerSection::default(),
            motion: MotionConfig::default(),
            optimizer: OptimizerConfig::default(),
            classifier: ClassifierConfig::english_digits(),
            paths: PathsSection::default(),
            data: DataSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub velocity_units: Option<VelocityUnits>,
    pub v_threshold: Option<f64>,
    pub mnist_dir: Option<PathBuf>,
    pub epochs: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> AppResult<Self> {
        Self::parse(text).map(|(c, _)| c)
    }

    /// Also reports whether the text set `motion.v_threshold` explicitly.
    fn parse(text: &str) -> AppResult<(Self, bool)> {
        let table: toml::Table = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        let given = table
            .get("motion")
            .and_then(|m| m.as_table())
            .is_some_and(|m| m.contains_key("v_threshold"));
        let mut config: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| AppError::Config(e.to_string()))?;
        if !given {
            config.motion.v_threshold = config.motion.velocity_units.default_threshold();
        }
        Ok((config, given))
    }

    /// Reads `path` (or starts from defaults), applies `overrides` and
    /// validates the result.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> AppResult<Self> {
        let (mut config, threshold_in_file) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| AppError::Config(format!("{}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| match e {
                    AppError::Config(m) => AppError::Config(format!("{}: {m}", p.display())),
                    other => other,
                })?
            }
            None => (Self::default(), false),
        };
        config.apply(overrides, threshold_in_file);
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, o: &Overrides, threshold_in_file: bool) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.paths.out = out.clone();
        }
        if let Some(units) = o.velocity_units {
            self.motion.velocity_units = units;
            if !threshold_in_file {
                self.motion.v_threshold = units.default_threshold();
            }
        }
        if let Some(v) = o.v_threshold {
            self.motion.v_threshold = v;
        }
        if let Some(dir) = &o.mnist_dir {
            self.paths.mnist_dir = dir.clone();
        }
        if let Some(epochs) = o.epochs {
            self.optimizer.epochs = epochs;
        }
        self.optimizer.seed = self.seed;
    }

    pub fn validate(&self) -> AppResult<()> {
        let config = |e: airwrite_core::Error| AppError::Config(e.to_string());
        self.marker.spec().validate().map_err(config)?;
        self.motion.validate().map_err(config)?;
        self.optimizer.validate().map_err(config)?;
        self.classifier.validate().map_err(config)?;
        if self.optimizer.epochs == 0 {
            return Err(AppError::Config("optimizer.epochs must be >= 1".into()));
        }
        if self.data.ts_a_per_class == 0 || self.data.eval_per_class == 0 {
            return Err(AppError::Config("per-class sizes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(RunConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn units_pick_their_own_default_threshold() {
        let c = RunConfig::from_toml("[motion]\nvelocity_units = \"per_frame_avg\"\n").unwrap();
        assert_eq!(c.motion.v_threshold, VelocityUnits::PerFrameAvg.default_threshold());
        let c = RunConfig::from_toml("[motion]\nvelocity_units = \"per_frame_avg\"\nv_threshold = 0.5\n").unwrap();
        assert_eq!(c.motion.v_threshold, 0.5);
    }

    #[test]
    fn flags_override_and_are_validated() {
        let o = Overrides {
            seed: Some(3),
            v_threshold: Some(0.05),
            ..Overrides::default()
        };
        let c = RunConfig::load(None, &o).unwrap();
        assert_eq!((c.seed, c.optimizer.seed, c.motion.v_threshold), (3, 3, 0.05));
        let bad = Overrides {
            v_threshold: Some(-1.0),
            ..Overrides::default()
        };
        assert!(matches!(RunConfig::load(None, &bad), Err(AppError::Config(_))));
    }

    #[test]
    fn typos_are_config_errors() {
        assert!(RunConfig::from_toml("[motion]\nv_treshold = 0.1\n").is_err());
        assert!(RunConfig::from_toml("[optimizer]\nlearning_rate = -0.1\n").unwrap().validate().is_err());
    }
}
