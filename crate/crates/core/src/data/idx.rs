//! IDX container parsing (MNIST distribution format).

use std::path::Path;

use super::{DataError, DataSource, DigitSet};
use crate::numerics::Tensor;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let available = self.bytes.len() - self.offset;
        if n > available {
            return Err(DataError::Truncated {
                offset: self.bytes.len(),
                needed: n - available,
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u32_be(&mut self) -> Result<u32, DataError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn header<'a>(
    bytes: &'a [u8],
    expected: &'static str,
    magic: u32,
    dims: usize,
) -> Result<(Reader<'a>, Vec<usize>, usize), DataError> {
    let mut r = Reader { bytes, offset: 0 };
    let found = r.u32_be()?;
    if found != magic {
        return Err(DataError::BadMagic {
            expected,
            expected_magic: magic,
            found,
        });
    }
    let mut sizes = Vec::with_capacity(dims);
    let mut total: usize = 1;
    for _ in 0..dims {
        let offset = r.offset;
        let d = r.u32_be()? as usize;
        total = total.checked_mul(d).ok_or(DataError::DimensionOverflow { offset })?;
        sizes.push(d);
    }
    Ok((r, sizes, total))
}

/// Parses an image file into `[n, rows, cols]` with pixels scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor<f32>, DataError> {
    let (mut r, sizes, total) = header(bytes, "image", IMAGE_MAGIC, 3)?;
    let payload = r.take(total)?;
    let data = payload.iter().map(|&b| f32::from(b) / 255.0).collect();
    Tensor::new(sizes, data).map_err(|e| DataError::Param(e.to_string()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>, DataError> {
    let (mut r, _, total) = header(bytes, "label", LABEL_MAGIC, 1)?;
    Ok(r.take(total)?.iter().map(|&b| usize::from(b)).collect())
}

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|e| DataError::io(path, e))
}

/// Loads an image/label file pair.
pub fn load_idx(images: &Path, labels: &Path) -> Result<(Tensor<f32>, Vec<usize>), DataError> {
    let x = parse_idx_images(&read(images)?)?;
    let y = parse_idx_labels(&read(labels)?)?;
    if x.shape()[0] != y.len() {
        return Err(DataError::CountMismatch {
            images: x.shape()[0],
            labels: y.len(),
        });
    }
    Ok((x, y))
}

/// Loads the standard train and test pairs from a directory.
pub fn load_mnist_dir(dir: &Path) -> Result<(DigitSet, DigitSet), DataError> {
    let load = |images: &str, labels: &str| -> Result<DigitSet, DataError> {
        let (x, y) = load_idx(&dir.join(images), &dir.join(labels))?;
        let n = x.shape()[0];
        let side = x.len() / n.max(1);
        Ok(DigitSet {
            images: x.reshape(vec![n, side]).map_err(|e| DataError::Param(e.to_string()))?,
            labels: y,
            source: DataSource::Mnist,
        })
    };
    Ok((
        load("train-images-idx3-ubyte", "train-labels-idx1-ubyte")?,
        load("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_fixture() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        b.extend_from_slice(&[0, 255, 128, 0, 255, 0, 0, 64]);
        b
    }

    #[test]
    fn decodes_fixture() {
        let t = parse_idx_images(&image_fixture()).unwrap();
        assert_eq!(t.shape(), &[2, 2, 2]);
        assert_eq!(&t.data()[..4], &[0.0, 1.0, 128.0 / 255.0, 0.0]);
        assert_eq!(t.data()[7], 64.0 / 255.0);
    }

    #[test]
    fn label_magic_checked() {
        let err = parse_idx_labels(&image_fixture()).unwrap_err();
        assert!(err.to_string().contains("expected label magic"), "{err}");
        let labels = parse_idx_labels(&[0, 0, 8, 1, 0, 0, 0, 3, 7, 2, 9]).unwrap();
        assert_eq!(labels, vec![7, 2, 9]);
    }

    #[test]
    fn truncation_and_overflow_are_distinct() {
        let mut short = image_fixture();
        short.truncate(20);
        assert!(matches!(
            parse_idx_images(&short),
            Err(DataError::Truncated { offset: 20, needed: 4 })
        ));
        assert!(matches!(
            parse_idx_images(&[0, 0, 8]),
            Err(DataError::Truncated { offset: 3, needed: 1 })
        ));
        let huge = [0, 0, 8, 3, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255];
        if usize::BITS == 64 {
            assert!(matches!(
                parse_idx_images(&huge),
                Err(DataError::DimensionOverflow { offset: 12 })
            ));
        }
    }

    #[test]
    fn loads_pair_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        std::fs::write(&img, image_fixture()).unwrap();
        std::fs::write(&lab, [0, 0, 8, 1, 0, 0, 0, 2, 4, 5]).unwrap();
        let (x, y) = load_idx(&img, &lab).unwrap();
        assert_eq!(x.shape()[0], 2);
        assert_eq!(y, vec![4, 5]);
        assert!(matches!(
            load_idx(&dir.path().join("missing"), &lab),
            Err(DataError::Io { .. })
        ));
    }
}
