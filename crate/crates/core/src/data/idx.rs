//! IDX files: a big-endian `u32` magic (`0x00000803` for `u8` images with
//! three dimensions, `0x00000801` for `u8` labels with one), one big-endian
//! `u32` per dimension, then the raw bytes in row-major order. Files may be
//! gzip-compressed; offsets in errors refer to the decompressed stream.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::dataset::{DatasetSplit, Provenance};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn format_err(path: &Path, offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: Some(offset),
        message: message.into(),
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::Format {
                path: path.to_path_buf(),
                offset: None,
                message: format!("corrupt gzip stream: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(path, offset as u64, format!("truncated header while reading {what}")))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let magic = read_u32(bytes, 0, path, "magic number")?;
    if magic != expected {
        return Err(format_err(
            path,
            0,
            format!("bad magic number {magic:#010x}, expected {expected:#010x}"),
        ));
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], start: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    let end = start + len;
    if bytes.len() < end {
        return Err(format_err(
            path,
            bytes.len() as u64,
            format!("truncated data: expected {len} bytes after the header, found {}", bytes.len() - start),
        ));
    }
    if bytes.len() > end {
        return Err(format_err(
            path,
            end as u64,
            format!("{} trailing bytes after the data", bytes.len() - end),
        ));
    }
    Ok(&bytes[start..end])
}

/// Parses an image file into `[N x rows x cols]` with pixels scaled to
/// `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Tensor> {
    check_magic(bytes, IMAGES_MAGIC, path)?;
    let n = read_u32(bytes, 4, path, "image count")? as usize;
    let rows = read_u32(bytes, 8, path, "row count")? as usize;
    let cols = read_u32(bytes, 12, path, "column count")? as usize;
    let len = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| format_err(path, 4, "image dimensions overflow"))?;
    let data = payload(bytes, 16, len, path)?;
    Tensor::new(vec![n, rows, cols], data.iter().map(|&b| b as f64 / 255.0).collect())
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    check_magic(bytes, LABELS_MAGIC, path)?;
    let n = read_u32(bytes, 4, path, "label count")? as usize;
    Ok(payload(bytes, 8, n, path)?.iter().map(|&b| b as usize).collect())
}

/// Loads an image/label file pair. The class count is `max label + 1`, at
/// least 10.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<DatasetSplit> {
    let (ip, lp) = (images.as_ref(), labels.as_ref());
    let features = parse_idx_images(&read_maybe_gz(ip)?, ip)?;
    let labels = parse_idx_labels(&read_maybe_gz(lp)?, lp)?;
    if features.rows() != labels.len() {
        return Err(format_err(
            lp,
            4,
            format!("{} labels for {} images in {}", labels.len(), features.rows(), ip.display()),
        ));
    }
    let num_classes = labels.iter().max().map_or(10, |&m| (m + 1).max(10));
    DatasetSplit::new(
        features,
        labels,
        num_classes,
        Provenance {
            source: ip.display().to_string(),
            corruption: 0.0,
            seed: None,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_file(labels: &[u8]) -> Vec<u8> {
        let mut b = LABELS_MAGIC.to_be_bytes().to_vec();
        b.extend((labels.len() as u32).to_be_bytes());
        b.extend(labels);
        b
    }

    #[test]
    fn labels_round_trip() {
        let p = Path::new("mem");
        assert_eq!(parse_idx_labels(&labels_file(&[3, 1, 4]), p).unwrap(), vec![3, 1, 4]);
    }

    #[test]
    fn wrong_magic_reports_offset_zero() {
        let mut b = labels_file(&[1]);
        b[3] = 0x02;
        match parse_idx_labels(&b, Path::new("mem")) {
            Err(Error::Format { offset: Some(0), .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncation_and_trailing() {
        let p = Path::new("mem");
        let b = labels_file(&[1, 2, 3]);
        assert!(matches!(parse_idx_labels(&b[..9], p), Err(Error::Format { offset: Some(9), .. })));
        assert!(matches!(parse_idx_labels(&b[..6], p), Err(Error::Format { offset: Some(4), .. })));
        let mut long = b.clone();
        long.push(0);
        assert!(matches!(parse_idx_labels(&long, p), Err(Error::Format { offset: Some(11), .. })));
    }
}
