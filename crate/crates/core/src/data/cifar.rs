//! CIFAR-10 binary version: each record is one label byte followed by 3072
//! pixel bytes (1024 red, 1024 green, 1024 blue, each row-major 32x32).

use std::path::{Path, PathBuf};

use super::{Dataset, Split};
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

pub const IMAGE_SIDE: usize = 32;
pub const PIXELS: usize = 3 * IMAGE_SIDE * IMAGE_SIDE;
pub const RECORD_LEN: usize = 1 + PIXELS;
pub const NUM_CLASSES: u8 = 10;

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

fn ingestion(path: &Path, offset: u64, reason: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        offset,
        reason: reason.into(),
    }
}

/// Parses raw record bytes; `path` is only used in error reports.
pub fn decode_records(bytes: &[u8], path: &Path, split: Split) -> Result<Dataset> {
    if bytes.is_empty() {
        return Err(ingestion(path, 0, "file holds no records"));
    }
    if bytes.len() % RECORD_LEN != 0 {
        let whole = bytes.len() / RECORD_LEN * RECORD_LEN;
        return Err(ingestion(
            path,
            whole as u64,
            format!("truncated record: {} of {RECORD_LEN} bytes", bytes.len() - whole),
        ));
    }
    let n = bytes.len() / RECORD_LEN;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * PIXELS);
    for (record, chunk) in bytes.chunks_exact(RECORD_LEN).enumerate() {
        if chunk[0] >= NUM_CLASSES {
            return Err(Error::CorruptRecord {
                path: path.to_path_buf(),
                record,
                label: chunk[0],
            });
        }
        labels.push(chunk[0]);
        pixels.extend(chunk[1..].iter().map(|&b| b as f32 / 255.0));
    }
    let images = Tensor::new(&[n, 3, IMAGE_SIDE, IMAGE_SIDE], pixels)?;
    Dataset::new(images, labels, split)
}

pub fn load_cifar_file(path: &Path, split: Split) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| ingestion(path, 0, e.to_string()))?;
    decode_records(&bytes, path, split)
}

/// Loads the five training batches and the test batch from `dir`.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for name in TRAIN_FILES {
        let d = load_cifar_file(&dir.join(name), Split::Train)?;
        labels.extend(d.labels);
        images.push(d.images);
    }
    let train = Dataset::new(Tensor::concat(&images)?, labels, Split::Train)?;
    let test = load_cifar_file(&dir.join(TEST_FILE), Split::Test)?;
    Ok((train, test))
}

/// Serializes 3x32x32 images back to records; pixels are rounded to the nearest byte.
pub fn encode_records(ds: &Dataset) -> Result<Vec<u8>> {
    if ds.image_shape() != [3, IMAGE_SIDE, IMAGE_SIDE] {
        return Err(invalid(format!(
            "records hold 3x32x32 images, dataset has {:?}",
            ds.image_shape()
        )));
    }
    let mut out = Vec::with_capacity(ds.len() * RECORD_LEN);
    for (img, &label) in ds.images.data().chunks(PIXELS).zip(&ds.labels) {
        if label >= NUM_CLASSES {
            return Err(invalid(format!("label {label} does not fit the format")));
        }
        out.push(label);
        out.extend(img.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    Ok(out)
}

pub fn write_cifar_file(path: &Path, ds: &Dataset) -> Result<()> {
    std::fs::write(path, encode_records(ds)?)?;
    Ok(())
}

/// Writes `train` over the five training batch files and `test` as the test batch.
pub fn write_cifar_dir(dir: &Path, train: &Dataset, test: &Dataset) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let n = train.len();
    let mut written = Vec::new();
    for (k, name) in TRAIN_FILES.iter().enumerate() {
        let idx: Vec<usize> = (k * n / 5..(k + 1) * n / 5).collect();
        let path = dir.join(name);
        std::fs::write(&path, encode_records(&train.gather(&idx)?)?)?;
        written.push(path);
    }
    let path = dir.join(TEST_FILE);
    write_cifar_file(&path, test)?;
    written.push(path);
    Ok(written)
}
