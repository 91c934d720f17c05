//! Raw MNIST images and labels, and the canonical file table.

use std::env;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::idx::{read_idx_file, read_maybe_gzip, IdxTensor};
use crate::error::{Error, Result};

pub const DATA_DIR_ENV: &str = "DAM_DATA_DIR";

/// A canonical MNIST file: its stem and the SHA-256 of the decompressed content.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CanonicalFile {
    pub name: &'static str,
    pub sha256: &'static str,
}

pub const MNIST_FILES: [CanonicalFile; 4] = [
    CanonicalFile {
        name: "train-images-idx3-ubyte",
        sha256: "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
    },
    CanonicalFile {
        name: "train-labels-idx1-ubyte",
        sha256: "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
    },
    CanonicalFile {
        name: "t10k-images-idx3-ubyte",
        sha256: "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
    },
    CanonicalFile {
        name: "t10k-labels-idx1-ubyte",
        sha256: "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
    },
];

/// `DAM_DATA_DIR` when set, otherwise `configured`.
pub fn resolve_data_dir(configured: &Path) -> PathBuf {
    match env::var_os(DATA_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => configured.to_path_buf(),
    }
}

/// Finds `name` or `name.gz` inside `dir`.
pub fn locate(dir: &Path, name: &str) -> Result<PathBuf> {
    let plain = dir.join(name);
    if plain.is_file() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.is_file() {
        return Ok(gz);
    }
    Err(Error::Dataset(format!(
        "{name} not found in {} (run `dam fetch-data`)",
        dir.display()
    )))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Verifies the decompressed content of a raw or gzipped file.
pub fn verify_file(path: &Path, expected: &str) -> Result<()> {
    let actual = sha256_hex(&read_maybe_gzip(path)?);
    if actual != expected {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            actual,
        });
    }
    Ok(())
}

/// Checks all four canonical files; returns the paths found.
pub fn verify_mnist_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    MNIST_FILES
        .iter()
        .map(|f| {
            let path = locate(dir, f.name)?;
            verify_file(&path, f.sha256)?;
            Ok(path)
        })
        .collect()
}

/// Hash of a reader's content, for streaming downloads.
pub fn sha256_reader<R: Read>(mut reader: R) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let read = reader.read(&mut buf)?;
        if read == 0 {
            break;
        }
        hasher.update(&buf[..read]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImageSet {
    images: Vec<u8>,
    labels: Vec<u8>,
    rows: usize,
    cols: usize,
}

impl RawImageSet {
    pub fn new(images: Vec<u8>, labels: Vec<u8>, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || images.len() != labels.len() * rows * cols {
            return Err(Error::Dataset(format!(
                "{} image bytes do not hold {} images of {rows}x{cols}",
                images.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= 10) {
            return Err(Error::Dataset(format!("label {bad} out of range")));
        }
        Ok(Self {
            images,
            labels,
            rows,
            cols,
        })
    }

    pub fn from_idx(images: IdxTensor, labels: IdxTensor) -> Result<Self> {
        let &[count, rows, cols] = images.dims.as_slice() else {
            return Err(Error::Dataset(format!(
                "image tensor must be 3-dimensional, got {:?}",
                images.dims
            )));
        };
        if labels.dims != [count] {
            return Err(Error::Dataset(format!(
                "{count} images but label dims {:?}",
                labels.dims
            )));
        }
        Self::new(images.data, labels.data, rows, cols)
    }

    pub fn load(dir: &Path, images_name: &str, labels_name: &str) -> Result<Self> {
        let images = read_idx_file(&locate(dir, images_name)?)?;
        let labels = read_idx_file(&locate(dir, labels_name)?)?;
        Self::from_idx(images, labels)
    }

    /// The 60000-image MNIST training set.
    pub fn load_mnist_train(dir: &Path) -> Result<Self> {
        Self::load(dir, MNIST_FILES[0].name, MNIST_FILES[1].name)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let p = self.pixel_count();
        &self.images[index * p..(index + 1) * p]
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index] as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}
