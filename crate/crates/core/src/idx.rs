//! IDX containers as used by MNIST: big-endian magic and dimensions followed
//! by raw unsigned bytes.

use alloc::vec::Vec;

use crate::dataset::{LabeledDataset, SplitName};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, what: &'static str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Truncated(what))
}

/// Parsed rank-3 u8 image block.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn decode_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0, "idx image header")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4, "idx image header")? as usize;
    let rows = be_u32(bytes, 8, "idx image header")? as usize;
    let cols = be_u32(bytes, 12, "idx image header")? as usize;
    let len = count * rows * cols;
    let pixels = bytes
        .get(16..16 + len)
        .ok_or(Error::Truncated("idx image data"))?
        .to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "idx label header")?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4, "idx label header")? as usize;
    Ok(bytes
        .get(8..8 + count)
        .ok_or(Error::Truncated("idx label data"))?
        .to_vec())
}

pub fn encode_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), count * rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Pairs an image block with its labels. Images must be square.
pub fn decode_dataset(
    image_bytes: &[u8],
    label_bytes: &[u8],
    split: SplitName,
    source: &str,
) -> Result<LabeledDataset> {
    let images = decode_images(image_bytes)?;
    let labels = decode_labels(label_bytes)?;
    if labels.len() != images.count {
        return Err(Error::LengthMismatch {
            what: "idx label count vs image count",
            left: labels.len(),
            right: images.count,
        });
    }
    if images.rows != images.cols {
        return Err(Error::LengthMismatch {
            what: "idx image rows vs cols",
            left: images.rows,
            right: images.cols,
        });
    }
    LabeledDataset::new(images.rows, images.pixels, labels, split, source)
}

/// `(images, labels)` IDX byte streams for a dataset.
pub fn encode_dataset(dataset: &LabeledDataset) -> (Vec<u8>, Vec<u8>) {
    (
        encode_images(dataset.len(), dataset.side(), dataset.side(), dataset.images()),
        encode_labels(dataset.labels()),
    )
}
