use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use limopt_core::Dataset;

use crate::error::{Error, Result};

const UBYTE: u8 = 0x08;

/// An unsigned-byte IDX tensor, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        if !matches!(dims.len(), 1 | 3) {
            return Err(Error::usage(format!(
                "IDX rank must be 1 or 3, got {}",
                dims.len()
            )));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::usage(format!(
                "dims {dims:?} need {n} bytes, payload has {}",
                data.len()
            )));
        }
        Ok(IdxTensor { dims, data })
    }
}

/// Big-endian magic (`0x0000 08 rank`), big-endian `u32` dims, raw bytes.
pub fn encode_idx(t: &IdxTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * t.dims.len() + t.data.len());
    out.extend_from_slice(&[0, 0, UBYTE, t.dims.len() as u8]);
    for &d in &t.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&t.data);
    out
}

fn read_header_word(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut buf[got..]) {
            Ok(0) => {
                return Err(Error::Format(format!(
                    "file ends inside the IDX header while reading {what}"
                )))
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Format(format!("read failed: {e}"))),
        }
    }
    Ok(u32::from_be_bytes(buf))
}

fn read_idx(r: &mut impl Read) -> Result<IdxTensor> {
    let magic = read_header_word(r, "the magic number")?;
    let [z0, z1, kind, rank] = magic.to_be_bytes();
    if z0 != 0 || z1 != 0 || kind != UBYTE || !matches!(rank, 1 | 3) {
        return Err(Error::Format(format!(
            "bad IDX magic 0x{magic:08x} (expected 0x00000801 or 0x00000803)"
        )));
    }
    let dims = (0..rank)
        .map(|i| read_header_word(r, &format!("dimension {i}")).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let expected: usize = dims.iter().product();
    let mut data = Vec::with_capacity(expected);
    r.take(expected as u64)
        .read_to_end(&mut data)
        .map_err(|e| Error::Format(format!("read failed: {e}")))?;
    if data.len() != expected {
        return Err(Error::Format(format!(
            "truncated payload: expected {expected} bytes, found {}",
            data.len()
        )));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)
        .map_err(|e| Error::Format(format!("read failed: {e}")))?
        != 0
    {
        return Err(Error::Format(format!(
            "trailing bytes after the declared {expected}-byte payload"
        )));
    }
    Ok(IdxTensor { dims, data })
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    let mut r = bytes;
    read_idx(&mut r)
}

/// Reads an uncompressed IDX file. Only the declared payload is read; a
/// file with bytes past it is rejected.
pub fn load_idx(path: &Path) -> Result<IdxTensor> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_idx(&mut BufReader::new(f)).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Flattens `[n, r, c]` images into `n x (r c)` features. The class count is
/// `max(label) + 1` (at least 2).
pub fn to_dataset(images: &IdxTensor, labels: &IdxTensor, normalize: bool) -> Result<Dataset> {
    let [n, rows, cols] = images.dims[..] else {
        return Err(Error::usage(format!(
            "images must be 3-D, got dims {:?}",
            images.dims
        )));
    };
    let [m] = labels.dims[..] else {
        return Err(Error::usage(format!(
            "labels must be 1-D, got dims {:?}",
            labels.dims
        )));
    };
    if n != m {
        return Err(Error::usage(format!("{n} images but {m} labels")));
    }
    let scale = if normalize { 1.0 / 255.0 } else { 1.0 };
    let features = images.data.iter().map(|&b| b as f64 * scale).collect();
    let labels: Vec<usize> = labels.data.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    Ok(Dataset::new(features, labels, rows * cols, classes)?)
}

/// Loads `train-images-idx3-ubyte` and `train-labels-idx1-ubyte` from `dir`,
/// normalized to `[0, 1]`.
pub fn load_mnist(dir: &Path) -> Result<Dataset> {
    let images = load_idx(&dir.join("train-images-idx3-ubyte"))?;
    let labels = load_idx(&dir.join("train-labels-idx1-ubyte"))?;
    to_dataset(&images, &labels, true)
}
