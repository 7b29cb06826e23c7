//! On-disk formats: IDX pairs, model files, PPM/PGM/PNG images, frame
//! manifests and JSON-lines point streams.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use airwrite_core::dataset::{LabeledDataset, SplitName};
use airwrite_core::model::{ClassifierConfig, CnnModel};
use airwrite_core::motion::ReplayPoint;
use airwrite_core::vision::Frame;
use airwrite_core::{idx, weights, Error};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub fn read_file(path: &Path) -> AppResult<Vec<u8>> {
    fs::read(path).map_err(|e| AppError::data(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| AppError::Runtime(format!("{}: {e}", path.display())))
}

/// `foo-images-idx3-ubyte` pairs with `foo-labels-idx1-ubyte`.
pub fn labels_path(images: &Path) -> PathBuf {
    let name = images.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    images.with_file_name(name.replace("images-idx3", "labels-idx1"))
}

pub fn idx_images_name(prefix: &str) -> String {
    format!("{prefix}-images-idx3-ubyte")
}

pub fn read_idx_pair(images: &Path, split: SplitName) -> AppResult<LabeledDataset> {
    let labels = labels_path(images);
    if labels == images {
        return Err(AppError::data(images, "file name must contain \"images-idx3\""));
    }
    let image_bytes = read_file(images)?;
    let label_bytes = read_file(&labels)?;
    idx::decode_dataset(&image_bytes, &label_bytes, split, &images.display().to_string())
        .map_err(|e| AppError::data(images, e))
}

/// Writes `images` and the matching labels file next to it.
pub fn write_idx_pair(images: &Path, dataset: &LabeledDataset) -> AppResult<PathBuf> {
    let labels = labels_path(images);
    if labels == images {
        return Err(AppError::Config(format!(
            "{}: file name must contain \"images-idx3\"",
            images.display()
        )));
    }
    let (image_bytes, label_bytes) = idx::encode_dataset(dataset);
    write_file(images, &image_bytes)?;
    write_file(&labels, &label_bytes)?;
    Ok(labels)
}

/// Standard MNIST file names inside `dir`: (train, test) image paths.
pub fn mnist_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join("train-images-idx3-ubyte"), dir.join("t10k-images-idx3-ubyte"))
}

pub fn save_model(path: &Path, model: &CnnModel) -> AppResult<()> {
    write_file(path, &weights::encode(model))
}

pub fn load_model(path: &Path) -> AppResult<CnnModel> {
    weights::decode(&read_file(path)?).map_err(|e| AppError::data(path, e))
}

/// Loads a model and checks it against the expected classifier settings.
pub fn load_model_expecting(path: &Path, expected: &ClassifierConfig) -> AppResult<CnnModel> {
    match weights::decode_expecting(&read_file(path)?, expected) {
        Err(Error::ConfigMismatch(m)) => Err(AppError::Config(format!("{}: {m}", path.display()))),
        other => other.map_err(|e| AppError::data(path, e)),
    }
}

fn ppm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while bytes.get(*pos).is_some_and(|b| b.is_ascii_whitespace()) {
            *pos += 1;
        }
        if bytes.get(*pos) == Some(&b'#') {
            while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

/// Parses a binary netpbm header, returning (magic, width, height, data offset).
fn netpbm_header(bytes: &[u8]) -> Result<(&[u8], usize, usize, usize), String> {
    let mut pos = 0;
    let magic = ppm_token(bytes, &mut pos).ok_or("empty file")?;
    let mut num = |what: &str| -> Result<usize, String> {
        ppm_token(bytes, &mut pos)
            .and_then(|t| std::str::from_utf8(t).ok())
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad {what} in header"))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval != 255 {
        return Err(format!("only 8-bit images are supported (maxval {maxval})"));
    }
    if width == 0 || height == 0 {
        return Err("zero image dimension".into());
    }
    // exactly one whitespace byte separates the header from the raster
    Ok((magic, width, height, pos + 1))
}

pub fn decode_ppm(bytes: &[u8], timestamp_ms: u64) -> Result<Frame, String> {
    let (magic, width, height, offset) = netpbm_header(bytes)?;
    if magic != b"P6" {
        return Err("not a binary PPM (P6)".into());
    }
    let len = width * height * 3;
    let pixels = bytes.get(offset..offset + len).ok_or("truncated pixel data")?.to_vec();
    Frame::new(width, height, pixels, timestamp_ms).map_err(|e| e.to_string())
}

pub fn encode_ppm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// (width, height, pixels) of a binary PGM.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), String> {
    let (magic, width, height, offset) = netpbm_header(bytes)?;
    if magic != b"P5" {
        return Err("not a binary PGM (P5)".into());
    }
    let pixels = bytes.get(offset..offset + width * height).ok_or("truncated pixel data")?;
    Ok((width, height, pixels.to_vec()))
}

pub fn encode_png_gray(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("in-memory png header");
        writer.write_image_data(pixels).expect("in-memory png data");
    }
    out
}

/// 8-bit PNG decoded to (width, height, channels, pixels).
fn decode_png(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>), String> {
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    buf.truncate(info.buffer_size());
    let channels = info.color_type.samples();
    Ok((info.width as usize, info.height as usize, channels, buf))
}

/// Grayscale view of a PNG; colour channels are averaged, alpha dropped.
pub fn decode_png_gray(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), String> {
    let (w, h, c, buf) = decode_png(bytes)?;
    let pixels = match c {
        1 | 2 => buf.chunks(c).map(|p| p[0]).collect(),
        3 | 4 => buf
            .chunks(c)
            .map(|p| ((p[0] as u16 + p[1] as u16 + p[2] as u16 + 1) / 3) as u8)
            .collect(),
        _ => return Err(format!("unsupported channel count {c}")),
    };
    Ok((w, h, pixels))
}

pub fn decode_png_frame(bytes: &[u8], timestamp_ms: u64) -> Result<Frame, String> {
    let (w, h, c, buf) = decode_png(bytes)?;
    let pixels = match c {
        1 | 2 => buf.chunks(c).flat_map(|p| [p[0]; 3]).collect(),
        3 | 4 => buf.chunks(c).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        _ => return Err(format!("unsupported channel count {c}")),
    };
    Frame::new(w, h, pixels, timestamp_ms).map_err(|e| e.to_string())
}

/// Reads a PPM or PNG frame, chosen by extension.
pub fn read_frame(path: &Path, timestamp_ms: u64) -> AppResult<Frame> {
    let bytes = read_file(path)?;
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let frame = if is_png {
        decode_png_frame(&bytes, timestamp_ms)
    } else {
        decode_ppm(&bytes, timestamp_ms)
    };
    frame.map_err(|m| AppError::data(path, m))
}

pub const MANIFEST_NAME: &str = "manifest.csv";

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.ppm")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub index: usize,
    pub file: String,
    pub timestamp_ms: u64,
}

pub fn read_manifest(path: &Path) -> AppResult<Vec<ManifestRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| AppError::data(path, e))?;
    let headers = reader.headers().map_err(|e| AppError::data(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["index", "file", "timestamp_ms"] {
        return Err(AppError::data(path, "manifest header must be index,file,timestamp_ms"));
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| AppError::Line {
                path: path.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> AppResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| AppError::Runtime(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(["index", "file", "timestamp_ms"])
            .map_err(|e| AppError::Runtime(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::Runtime(e.to_string()))?;
    write_file(path, &bytes)
}

/// Parses JSON-lines point records. Blank lines are skipped; errors carry
/// the 1-based line number.
pub fn parse_replay(text: &str, path: &Path) -> AppResult<Vec<ReplayPoint>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| AppError::Line {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_replay(path: &Path) -> AppResult<Vec<ReplayPoint>> {
    let file = fs::File::open(path).map_err(|e| AppError::data(path, e))?;
    let mut text = String::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AppError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        text.push_str(&line);
        text.push('\n');
    }
    parse_replay(&text, path)
}

pub fn write_replay(path: &Path, points: &[ReplayPoint]) -> AppResult<()> {
    let mut out = Vec::new();
    {
        let mut w = BufWriter::new(&mut out);
        for p in points {
            serde_json::to_writer(&mut w, p).map_err(|e| AppError::Runtime(e.to_string()))?;
            w.write_all(b"\n").map_err(|e| AppError::Runtime(e.to_string()))?;
        }
    }
    write_file(path, &out)
}
