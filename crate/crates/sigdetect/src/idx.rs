//! MNIST IDX reader. Files are big-endian: a magic number whose third byte
//! is the element type (0x08 = u8) and fourth byte the rank, then one u32 per
//! dimension, then the raw data.

use std::path::Path;

use sigdetect_core::dataset::LabeledDataset;

use crate::error::{Error, Result};

const UBYTE: u8 = 0x08;

/// A decoded unsigned-byte IDX array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an in-memory IDX file of unsigned bytes with the expected rank.
pub fn parse_idx(bytes: &[u8], rank: usize, path: &Path) -> Result<IdxArray> {
    let fail = |detail: String| Error::Idx {
        path: path.to_path_buf(),
        detail,
    };
    if bytes.len() < 4 {
        return Err(fail(format!("{} bytes is too short for a header", bytes.len())));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(fail(format!("bad magic {:02x?}", &bytes[..4])));
    }
    if bytes[2] != UBYTE {
        return Err(fail(format!("element type 0x{:02x} is not unsigned byte", bytes[2])));
    }
    if bytes[3] as usize != rank {
        return Err(fail(format!("rank {} where {} was expected", bytes[3], rank)));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(fail("truncated dimension header".into()));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| fail(format!("dimensions {dims:?} overflow")))?;
    let body = &bytes[header..];
    if body.len() != expected {
        return Err(fail(format!(
            "dimensions {dims:?} need {expected} data bytes, found {}",
            body.len()
        )));
    }
    Ok(IdxArray {
        dims,
        data: body.to_vec(),
    })
}

pub fn read_idx(path: &Path, rank: usize) -> Result<IdxArray> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    parse_idx(&bytes, rank, path)
}

/// Loads an image file (rank 3) and its label file (rank 1) into a dataset
/// with pixels scaled to `[0, 1]` and shape `(1, rows, cols)`.
pub fn load_idx_pair(images: &Path, labels: &Path, num_classes: usize) -> Result<LabeledDataset> {
    let img = read_idx(images, 3)?;
    let lab = read_idx(labels, 1)?;
    if img.dims[0] != lab.dims[0] {
        return Err(Error::Idx {
            path: labels.to_path_buf(),
            detail: format!("{} labels for {} images", lab.dims[0], img.dims[0]),
        });
    }
    let pixels = img.data.iter().map(|&b| b as f32 / 255.0).collect();
    Ok(LabeledDataset::new(
        pixels,
        vec![1, img.dims[1], img.dims[2]],
        lab.data,
        num_classes,
    )?)
}

/// The four standard MNIST files in `dir`, as `(train, test)`.
pub fn load_mnist(dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    let train = load_idx_pair(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        10,
    )?;
    let test = load_idx_pair(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        10,
    )?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_file(values: &[u8]) -> Vec<u8> {
        let mut b = vec![0, 0, 8, 1];
        b.extend_from_slice(&(values.len() as u32).to_be_bytes());
        b.extend_from_slice(values);
        b
    }

    #[test]
    fn parses_labels() {
        let a = parse_idx(&labels_file(&[3, 1, 4]), 1, Path::new("x")).unwrap();
        assert_eq!(a.dims, vec![3]);
        assert_eq!(a.data, vec![3, 1, 4]);
    }

    #[test]
    fn rejects_corruption() {
        let good = labels_file(&[3, 1, 4]);
        let mut magic = good.clone();
        magic[1] = 1;
        let mut dtype = good.clone();
        dtype[2] = 0x0D;
        let mut count = good.clone();
        count[7] = 4;
        for bad in [&magic[..], &dtype[..], &count[..], &good[..6], &good[..good.len() - 1]] {
            assert!(matches!(parse_idx(bad, 1, Path::new("x")), Err(Error::Idx { .. })));
        }
        assert!(parse_idx(&good, 3, Path::new("x")).is_err());
    }
}
