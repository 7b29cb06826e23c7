//! Binary weight file (`.awnn`), little-endian:
//!
//! ```text
//! "AWNN"                      4 bytes
//! version                     u32
//! metadata length             u32, then UTF-8 JSON
//!                             {n_classes, language_tag, training_history}
//! tensor count                u32
//! per tensor:                 name length u16, UTF-8 name, rank u8,
//!                             dims (u32 each), raw f32 values
//! CRC32 of everything above   u32
//! ```

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{architecture, ClassifierConfig, CnnModel, HistoryEntry};
use crate::nn::{LayerSpec, Network};
use crate::tensor::Tensor;
use crate::GLYPH_SIDE;

pub const MAGIC: [u8; 4] = *b"AWNN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Metadata {
    n_classes: usize,
    language_tag: String,
    training_history: Vec<HistoryEntry>,
}

/// Parameter tensor names in file order.
pub fn tensor_names(specs: &[LayerSpec]) -> Vec<(usize, String)> {
    let (mut conv, mut dense) = (0, 0);
    let mut names = Vec::new();
    for (index, spec) in specs.iter().enumerate() {
        let prefix = match spec {
            LayerSpec::Conv2d { .. } => {
                conv += 1;
                format!("conv{conv}")
            }
            LayerSpec::Dense { .. } => {
                dense += 1;
                format!("dense{dense}")
            }
            _ => continue,
        };
        names.push((index, format!("{prefix}.weight")));
        names.push((index, format!("{prefix}.bias")));
    }
    names
}

pub fn encode(model: &CnnModel) -> Vec<u8> {
    let meta = Metadata {
        n_classes: model.config().n_classes,
        language_tag: model.config().language_tag.clone(),
        training_history: model.history.clone(),
    };
    let meta = serde_json::to_vec(&meta).expect("metadata serializes");
    let network = model.network();
    let names = tensor_names(&network.specs());

    let mut out = Vec::with_capacity(16 + meta.len() + model.param_count() * 4 + 256);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(names.len() as u32).to_le_bytes());
    let tensors = network.layers().iter().flat_map(|l| l.params());
    for ((_, name), tensor) in names.iter().zip(tensors) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(tensor.shape().len() as u8);
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated(what))?;
        let s = self.bytes.get(self.pos..end).ok_or(Error::Truncated(what))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
}

/// Parses and verifies a weight file.
pub fn decode(bytes: &[u8]) -> Result<CnnModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: u32::from_be_bytes(MAGIC),
            found: u32::from_be_bytes([magic[0], magic[1], magic[2], magic[3]]),
        });
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let meta_len = r.u32("metadata length")? as usize;
    let meta_bytes = r.take(meta_len, "metadata")?;
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let name_len = r.u16("tensor name length")? as usize;
        let name = r.take(name_len, "tensor name")?;
        let rank = r.u8("tensor rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("tensor dims")? as usize);
        }
        let n: usize = dims.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or(Error::Truncated("tensor data"))?, "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.push((name, dims, data));
    }
    let body_end = r.pos;
    let stored = r.u32("checksum")?;
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    if r.pos != bytes.len() {
        return Err(Error::Metadata("trailing bytes after checksum".into()));
    }

    let meta: Metadata =
        serde_json::from_slice(meta_bytes).map_err(|e| Error::Metadata(e.to_string()))?;
    let config = ClassifierConfig::new(meta.n_classes, meta.language_tag)?;
    let specs = architecture(config.n_classes);
    let mut network = Network::<f32>::new(&[1, GLYPH_SIDE, GLYPH_SIDE], &specs)?;
    let names = tensor_names(&specs);
    if names.len() != tensors.len() {
        return Err(Error::ConfigMismatch(format!(
            "expected {} tensors, file has {}",
            names.len(),
            tensors.len()
        )));
    }
    let mut slot = 0;
    let mut last_layer = usize::MAX;
    for ((layer, expected_name), (name, dims, data)) in names.iter().zip(tensors) {
        if name != expected_name.as_bytes() {
            return Err(Error::ConfigMismatch(format!(
                "expected tensor {expected_name}, found {}",
                String::from_utf8_lossy(name)
            )));
        }
        if *layer != last_layer {
            slot = 0;
            last_layer = *layer;
        }
        let target = &mut network.params_mut(*layer)[slot];
        if target.shape() != dims.as_slice() {
            return Err(Error::ConfigMismatch(format!(
                "tensor {expected_name} has shape {dims:?}, expected {:?}",
                target.shape()
            )));
        }
        *target = Tensor::new(dims, data)?;
        slot += 1;
    }
    CnnModel::from_parts(config, network, meta.training_history)
}

/// Decodes and checks the file against the configuration the caller expects.
pub fn decode_expecting(bytes: &[u8], expected: &ClassifierConfig) -> Result<CnnModel> {
    let model = decode(bytes)?;
    if model.config().n_classes != expected.n_classes {
        return Err(Error::ConfigMismatch(format!(
            "file has {} classes, expected {}",
            model.config().n_classes,
            expected.n_classes
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn model() -> CnnModel {
        let mut m = CnnModel::build(ClassifierConfig::new(3, "bengali").unwrap(), 4).unwrap();
        m.history.push(HistoryEntry {
            regime: "train".into(),
            datasets: vec!["TS-B:test".into()],
            epochs: 2,
            final_accuracy: Some(0.5),
        });
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let bytes = encode(&m);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.network().layers(), m.network().layers());
        assert_eq!(back.config(), m.config());
        assert_eq!(back.history, m.history);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn distinct_errors() {
        let bytes = encode(&model());

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::BadMagic { .. })));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode(&bad), Err(Error::VersionMismatch { found: 9, .. })));

        assert!(matches!(decode(&bytes[..bytes.len() - 100]), Err(Error::Truncated(_))));
        assert!(matches!(decode(&bytes[..2]), Err(Error::Truncated(_))));

        let mut bad = bytes.clone();
        let mid = bytes.len() / 2;
        bad[mid] ^= 0x40;
        assert!(matches!(decode(&bad), Err(Error::Checksum { .. })));

        let ten = ClassifierConfig::english_digits();
        assert!(matches!(decode_expecting(&bytes, &ten), Err(Error::ConfigMismatch(_))));
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&model());
        assert_eq!(&bytes[..4], b"AWNN");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let meta: serde_json::Value = serde_json::from_slice(&bytes[12..12 + meta_len]).unwrap();
        assert_eq!(meta["n_classes"], 3);
        assert_eq!(meta["language_tag"], "bengali");
        let count = u32::from_le_bytes(bytes[12 + meta_len..16 + meta_len].try_into().unwrap());
        assert_eq!(count, 10);
        let first_name_len = u16::from_le_bytes(bytes[16 + meta_len..18 + meta_len].try_into().unwrap());
        assert_eq!(&bytes[18 + meta_len..18 + meta_len + first_name_len as usize], b"conv1.weight");
    }
}
