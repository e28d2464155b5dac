//! IDX image/label files, raw or gzip-compressed.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use otxai_core::data::{Dataset, DatasetMeta};
use otxai_core::Tensor;

use crate::error::{Error, IdxError, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// File contents, transparently gunzipped when they start with the gzip
/// magic bytes.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> std::result::Result<u32, IdxError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            needed: at + 4,
            have: bytes.len(),
        })
}

/// Header dims and payload of an unsigned-byte IDX buffer.
fn parse(bytes: &[u8], magic: u32, ndims: usize) -> std::result::Result<(Vec<usize>, &[u8]), IdxError> {
    let m = be_u32(bytes, 0)?;
    if m & 0xffff_ff00 != magic & 0xffff_ff00 {
        return Err(IdxError::BadMagic(m));
    }
    let found = (m & 0xff) as usize;
    if found != ndims {
        return Err(IdxError::Dimensions { expected: ndims, found });
    }
    let dims = (0..ndims)
        .map(|i| be_u32(bytes, 4 + 4 * i).map(|d| d as usize))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let start = 4 + 4 * ndims;
    let len: usize = dims.iter().product();
    let payload = bytes.get(start..start + len).ok_or(IdxError::Truncated {
        needed: start + len,
        have: bytes.len(),
    })?;
    Ok((dims, payload))
}

/// `(count, rows, cols, pixels)` from an image buffer.
pub fn parse_images(bytes: &[u8]) -> std::result::Result<(usize, usize, usize, &[u8]), IdxError> {
    let (dims, payload) = parse(bytes, IMAGES_MAGIC, 3)?;
    Ok((dims[0], dims[1], dims[2], payload))
}

pub fn parse_labels(bytes: &[u8]) -> std::result::Result<&[u8], IdxError> {
    Ok(parse(bytes, LABELS_MAGIC, 1)?.1)
}

/// Images scaled to `[0, 1]` with their labels; `q` is one more than the
/// largest label.
pub fn load_idx(images: &Path, labels: &Path, name: &str) -> Result<Dataset> {
    let ib = read_maybe_gz(images)?;
    let lb = read_maybe_gz(labels)?;
    let idx_err = |path: &Path| {
        let path = path.to_path_buf();
        move |kind| Error::Idx { path, kind }
    };
    let (n, h, w, px) = parse_images(&ib).map_err(idx_err(images))?;
    let ls = parse_labels(&lb).map_err(idx_err(labels))?;
    if ls.len() != n {
        return Err(Error::Idx {
            path: labels.to_path_buf(),
            kind: IdxError::CountMismatch {
                images: n,
                labels: ls.len(),
            },
        });
    }
    let q = ls.iter().copied().max().map_or(1, |m| m as usize + 1);
    let data = px.iter().map(|&p| f64::from(p) / 255.0).collect();
    let meta = DatasetMeta {
        name: name.to_string(),
        d: h * w,
        q,
        image_shape: Some((h, w)),
    };
    Ok(Dataset::new(
        Tensor::matrix(n, h * w, data)?,
        ls.iter().map(|&l| l as usize).collect(),
        meta,
    )?)
}

/// Encodes images and labels in IDX form (used for fixtures and exports).
pub fn encode(images: &[u8], n: usize, h: usize, w: usize, labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut ib = Vec::with_capacity(16 + images.len());
    for v in [IMAGES_MAGIC, n as u32, h as u32, w as u32] {
        ib.extend_from_slice(&v.to_be_bytes());
    }
    ib.extend_from_slice(images);
    let mut lb = Vec::with_capacity(8 + labels.len());
    for v in [LABELS_MAGIC, labels.len() as u32] {
        lb.extend_from_slice(&v.to_be_bytes());
    }
    lb.extend_from_slice(labels);
    (ib, lb)
}
