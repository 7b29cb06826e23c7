//! Labelled glyph collections and the named training/test splits.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::resize_bilinear;
use crate::rng;
use crate::GLYPH_SIDE;

/// Air-written training split.
pub const TS_A_DEFAULT_SIZE: usize = 6000;
/// Air-written evaluation split.
pub const EVAL_DEFAULT_SIZE: usize = 4000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitName {
    /// Air-written training set.
    #[serde(rename = "TS-A")]
    TsA,
    /// Handwritten pretraining set.
    #[serde(rename = "TS-B")]
    TsB,
    /// Air-written test set.
    #[serde(rename = "EVAL")]
    Eval,
    #[serde(untagged)]
    Custom(String),
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitName::TsA => f.write_str("TS-A"),
            SplitName::TsB => f.write_str("TS-B"),
            SplitName::Eval => f.write_str("EVAL"),
            SplitName::Custom(name) => f.write_str(name),
        }
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "TS-A" | "TSA" => SplitName::TsA,
            "TS-B" | "TSB" => SplitName::TsB,
            "EVAL" => SplitName::Eval,
            _ if !s.is_empty() => SplitName::Custom(s.to_string()),
            _ => return Err(Error::InvalidConfig("empty split name".into())),
        })
    }
}

/// Square 8-bit images with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    side: usize,
    images: Vec<u8>,
    labels: Vec<u8>,
    pub split: SplitName,
    pub source: String,
}

impl LabeledDataset {
    pub fn new(
        side: usize,
        images: Vec<u8>,
        labels: Vec<u8>,
        split: SplitName,
        source: impl Into<String>,
    ) -> Result<Self> {
        if side == 0 || images.len() != labels.len() * side * side {
            return Err(Error::LengthMismatch {
                what: "image bytes vs labels * side^2",
                left: images.len(),
                right: labels.len() * side * side,
            });
        }
        Ok(Self {
            side,
            images,
            labels,
            split,
            source: source.into(),
        })
    }

    pub fn empty(side: usize, split: SplitName, source: impl Into<String>) -> Self {
        Self {
            side,
            images: Vec::new(),
            labels: Vec::new(),
            split,
            source: source.into(),
        }
    }

    pub fn push(&mut self, image: &[u8], label: u8) -> Result<()> {
        if image.len() != self.side * self.side {
            return Err(Error::GlyphSize {
                width: self.side,
                height: image.len() / self.side.max(1),
            });
        }
        self.images.extend_from_slice(image);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.side * self.side;
        &self.images[i * n..(i + 1) * n]
    }

    pub fn images(&self) -> &[u8] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// Short identifier used in training histories, e.g. `TS-A:synthetic`.
    pub fn id(&self) -> String {
        format!("{}:{}", self.split, self.source)
    }

    /// Per-class counts for labels `0..n_classes`.
    pub fn class_counts(&self, n_classes: usize) -> Result<Vec<usize>> {
        let mut counts = vec![0; n_classes];
        for &l in &self.labels {
            *counts
                .get_mut(l as usize)
                .ok_or(Error::LabelOutOfRange {
                    label: l as usize,
                    n_classes,
                })? += 1;
        }
        Ok(counts)
    }

    pub fn check_labels(&self, n_classes: usize) -> Result<()> {
        self.class_counts(n_classes).map(|_| ())
    }

    /// Bilinear resize of every image to `side x side`.
    pub fn resized(&self, side: usize) -> Self {
        if side == self.side {
            return self.clone();
        }
        let n = self.side * self.side;
        let images = self
            .images
            .chunks(n)
            .flat_map(|img| resize_bilinear(img, self.side, self.side, side, side))
            .collect();
        Self {
            side,
            images,
            labels: self.labels.clone(),
            split: self.split.clone(),
            source: self.source.clone(),
        }
    }

    /// Upscales 28x28 sources (MNIST style) to glyph size; glyph-sized data
    /// passes through.
    pub fn to_glyph_size(&self) -> Self {
        self.resized(GLYPH_SIDE)
    }

    /// Concatenation of several datasets of equal image size.
    pub fn concat(parts: &[&LabeledDataset], split: SplitName) -> Result<Self> {
        let side = parts.first().ok_or(Error::EmptyDataset)?.side;
        let mut out = Self::empty(
            side,
            split,
            parts.iter().map(|p| p.id()).collect::<Vec<_>>().join("+"),
        );
        for p in parts {
            if p.side != side {
                return Err(Error::LengthMismatch {
                    what: "image side in concatenation",
                    left: side,
                    right: p.side,
                });
            }
            out.images.extend_from_slice(&p.images);
            out.labels.extend_from_slice(&p.labels);
        }
        Ok(out)
    }

    /// Items at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], split: SplitName) -> Self {
        let mut out = Self::empty(self.side, split, self.source.clone());
        for &i in indices {
            out.images.extend_from_slice(self.image(i));
            out.labels.push(self.labels[i]);
        }
        out
    }

    /// Class-balanced random subset of `per_class` items per label.
    pub fn balanced_subset(&self, n_classes: usize, per_class: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::rng(seed));
        let mut taken = vec![0; n_classes];
        let picked: Vec<usize> = order
            .into_iter()
            .filter(|&i| {
                let l = self.label(i);
                if l < n_classes && taken[l] < per_class {
                    taken[l] += 1;
                    true
                } else {
                    false
                }
            })
            .collect();
        self.subset(&picked, self.split.clone())
    }
}
