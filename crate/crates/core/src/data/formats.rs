use super::{standardize, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

const CIFAR_PIXELS: usize = 3 * 32 * 32;

fn be_u32(bytes: &[u8], at: usize, stream: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(bytes.len(), format!("{stream}: header truncated, needed 4 bytes at offset {at}")))
}

/// Parses an IDX image stream and label stream, keeping raw pixel values
/// (0–255) as features.
pub fn parse_idx_raw(image_bytes: &[u8], label_bytes: &[u8]) -> Result<LabeledDataset> {
    let magic = be_u32(image_bytes, 0, "image stream")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::format(0, format!("image stream: magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}")));
    }
    let count = be_u32(image_bytes, 4, "image stream")? as usize;
    let rows = be_u32(image_bytes, 8, "image stream")? as usize;
    let cols = be_u32(image_bytes, 12, "image stream")? as usize;
    let pixels = rows * cols;
    let payload = &image_bytes[16..];
    if payload.len() < count * pixels {
        let complete = if pixels == 0 { 0 } else { payload.len() / pixels };
        return Err(Error::format(
            image_bytes.len(),
            format!(
                "image stream: payload truncated inside image {complete} of {count} (expected {} bytes)",
                16 + count * pixels
            ),
        ));
    }
    if payload.len() > count * pixels {
        return Err(Error::format(16 + count * pixels, "image stream: trailing bytes after payload"));
    }

    let lmagic = be_u32(label_bytes, 0, "label stream")?;
    if lmagic != IDX_LABEL_MAGIC {
        return Err(Error::format(0, format!("label stream: magic {lmagic:#010x}, expected {IDX_LABEL_MAGIC:#010x}")));
    }
    let lcount = be_u32(label_bytes, 4, "label stream")? as usize;
    if lcount != count {
        return Err(Error::format(4, format!("label stream: {lcount} labels for {count} images")));
    }
    let labels_raw = &label_bytes[8..];
    if labels_raw.len() < count {
        return Err(Error::format(
            label_bytes.len(),
            format!("label stream: payload truncated, expected {} bytes", 8 + count),
        ));
    }
    if labels_raw.len() > count {
        return Err(Error::format(8 + count, "label stream: trailing bytes after payload"));
    }
    if count == 0 {
        return Err(Error::invalid("IDX streams contain no samples"));
    }

    let labels: Vec<usize> = labels_raw.iter().map(|b| *b as usize).collect();
    let class_count = labels.iter().max().map_or(10, |m| (m + 1).max(10));
    let inputs = DenseMatrix::from_vec_unchecked(count, pixels, payload.iter().map(|b| f64::from(*b)).collect());
    LabeledDataset::new(inputs, labels, class_count, Split::Train)
}

/// [`parse_idx_raw`] followed by per-feature standardization on the stream's
/// own statistics.
pub fn parse_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<LabeledDataset> {
    let mut ds = parse_idx_raw(image_bytes, label_bytes)?;
    standardize(&mut ds);
    Ok(ds)
}

/// Parses concatenated CIFAR binary records with raw pixel values.
///
/// `class_count` selects the layout: 10 for `<label><3072 pixels>`, 100 for
/// `<coarse><fine><3072 pixels>` (the fine label is used).
pub fn parse_cifar_raw(record_bytes: &[u8], class_count: usize) -> Result<LabeledDataset> {
    let header = match class_count {
        10 => 1,
        100 => 2,
        other => return Err(Error::invalid(format!("CIFAR class count must be 10 or 100, got {other}"))),
    };
    let record = header + CIFAR_PIXELS;
    if record_bytes.is_empty() {
        return Err(Error::invalid("CIFAR stream is empty"));
    }
    if record_bytes.len() % record != 0 {
        let partial = record_bytes.len() - record_bytes.len() % record;
        return Err(Error::format(
            partial,
            format!(
                "CIFAR stream length {} is not a multiple of the {record}-byte record",
                record_bytes.len()
            ),
        ));
    }
    let n = record_bytes.len() / record;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * CIFAR_PIXELS);
    for (i, rec) in record_bytes.chunks_exact(record).enumerate() {
        let label = rec[header - 1] as usize;
        if label >= class_count {
            return Err(Error::format(i * record + header - 1, format!("label {label} outside 0..{class_count}")));
        }
        labels.push(label);
        data.extend(rec[header..].iter().map(|b| f64::from(*b)));
    }
    LabeledDataset::new(
        DenseMatrix::from_vec_unchecked(n, CIFAR_PIXELS, data),
        labels,
        class_count,
        Split::Train,
    )
}

pub fn parse_cifar(record_bytes: &[u8], class_count: usize) -> Result<LabeledDataset> {
    let mut ds = parse_cifar_raw(record_bytes, class_count)?;
    standardize(&mut ds);
    Ok(ds)
}

fn to_byte(v: f64) -> Result<u8> {
    if v.fract() == 0.0 && (0.0..=255.0).contains(&v) {
        Ok(v as u8)
    } else {
        Err(Error::invalid(format!("value {v} is not a raw byte")))
    }
}

/// Writes a raw-valued dataset back to IDX image and label streams.
pub fn encode_idx(ds: &LabeledDataset, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != ds.dim() {
        return Err(Error::invalid(format!("{rows}x{cols} images do not match {} features", ds.dim())));
    }
    let mut images = Vec::with_capacity(16 + ds.len() * ds.dim());
    images.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    for v in [ds.len(), rows, cols] {
        images.extend_from_slice(&(v as u32).to_be_bytes());
    }
    for v in ds.inputs.as_slice() {
        images.push(to_byte(*v)?);
    }
    let mut labels = Vec::with_capacity(8 + ds.len());
    labels.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for l in &ds.labels {
        labels.push(u8::try_from(*l).map_err(|_| Error::invalid("label does not fit a byte"))?);
    }
    Ok((images, labels))
}

/// Writes a raw-valued dataset as CIFAR records (coarse label 0 for the
/// 100-class layout).
pub fn encode_cifar(ds: &LabeledDataset) -> Result<Vec<u8>> {
    if ds.dim() != CIFAR_PIXELS {
        return Err(Error::invalid("CIFAR records need 3072 features"));
    }
    let wide = match ds.class_count {
        10 => false,
        100 => true,
        other => return Err(Error::invalid(format!("CIFAR class count must be 10 or 100, got {other}"))),
    };
    let mut out = Vec::new();
    for (r, l) in ds.labels.iter().enumerate() {
        if wide {
            out.push(0);
        }
        out.push(*l as u8);
        for v in ds.inputs.row(r) {
            out.push(to_byte(*v)?);
        }
    }
    Ok(out)
}
