//! MNIST IDX reader.
//!
//! Images (`magic 2051`): big-endian `u32` magic, count, rows, cols, then
//! `count · rows · cols` unsigned bytes. Labels (`magic 2049`): magic, count,
//! then `count` bytes.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Images as columns of a `pixels × N` matrix in `[0, 1]`, with labels.
#[derive(Debug, Clone)]
pub struct MnistSet {
    pub images: Matrix,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
}

impl MnistSet {
    pub fn len(&self) -> usize {
        self.images.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_owned(),
            offset: offset as u64,
            reason: "truncated header".into(),
        })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io { path: path.to_owned(), source })
}

/// Parses an image file, keeping at most `limit` images.
pub fn parse_images(bytes: &[u8], path: &Path, limit: Option<usize>) -> Result<(Matrix, usize, usize)> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format {
            path: path.to_owned(),
            offset: 0,
            reason: format!("magic {magic}, expected {IMAGE_MAGIC}"),
        });
    }
    let count = read_u32(bytes, 4, path)? as usize;
    let rows = read_u32(bytes, 8, path)? as usize;
    let cols = read_u32(bytes, 12, path)? as usize;
    let n = limit.map_or(count, |l| l.min(count));
    let pixels = rows * cols;
    let needed = 16 + n * pixels;
    if bytes.len() < needed {
        return Err(Error::Format {
            path: path.to_owned(),
            offset: bytes.len() as u64,
            reason: format!("truncated pixel data, need {needed} bytes"),
        });
    }
    let data = &bytes[16..needed];
    let images = Matrix::from_iterator(pixels, n, data.iter().map(|&p| p as f64 / 255.0));
    Ok((images, rows, cols))
}

pub fn parse_labels(bytes: &[u8], path: &Path, limit: Option<usize>) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format {
            path: path.to_owned(),
            offset: 0,
            reason: format!("magic {magic}, expected {LABEL_MAGIC}"),
        });
    }
    let count = read_u32(bytes, 4, path)? as usize;
    let n = limit.map_or(count, |l| l.min(count));
    let end = 8 + n;
    if bytes.len() < end {
        return Err(Error::Format {
            path: path.to_owned(),
            offset: bytes.len() as u64,
            reason: format!("truncated label data, need {end} bytes"),
        });
    }
    Ok(bytes[8..end].to_vec())
}

pub fn image_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}-images-idx3-ubyte", split.prefix()))
}

pub fn label_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}-labels-idx1-ubyte", split.prefix()))
}

/// Loads one split from `dir`. Labels are optional; a missing label file
/// yields an empty label vector.
pub fn load_mnist(dir: &Path, split: Split, limit: Option<usize>) -> Result<MnistSet> {
    let ipath = image_path(dir, split);
    let (images, rows, cols) = parse_images(&read_file(&ipath)?, &ipath, limit)?;
    let lpath = label_path(dir, split);
    let labels = if lpath.exists() {
        let l = parse_labels(&read_file(&lpath)?, &lpath, limit)?;
        if l.len() != images.ncols() {
            return Err(Error::Format {
                path: lpath,
                offset: 4,
                reason: format!("{} labels for {} images", l.len(), images.ncols()),
            });
        }
        l
    } else {
        Vec::new()
    };
    Ok(MnistSet { images, labels, rows, cols })
}

/// Encodes images in IDX format.
pub fn encode_images(rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() as u32 / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, count, rows, cols] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
