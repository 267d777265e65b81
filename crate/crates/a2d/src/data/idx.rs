//! IDX image/label files (the MNIST container format). Big-endian headers,
//! one byte per pixel, pixels scaled to `[0,1]` on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Dataset, Example};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn new(inner: R) -> Self {
        CountingReader { inner, offset: 0 }
    }

    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner
            .read_exact(buf)
            .map_err(|_| Error::format_at(at, format!("truncated file while reading {what}")))?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.read_exact(&mut buf, what)?;
        Ok(u32::from_be_bytes(buf))
    }
}

/// Loads an IDX image file plus its label file into a dataset. Verifies
/// both magics, that the counts match, and rescales pixels to `[0,1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut images = CountingReader::new(BufReader::new(File::open(images_path)?));
    let magic = images.read_u32("images magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format_at(
            0,
            format!("bad images magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = images.read_u32("image count")? as usize;
    let rows = images.read_u32("row count")? as usize;
    let cols = images.read_u32("column count")? as usize;
    let dim = rows * cols;
    if dim == 0 {
        return Err(Error::format_at(8, "zero-sized images".to_string()));
    }

    let mut labels = CountingReader::new(BufReader::new(File::open(labels_path)?));
    let magic = labels.read_u32("labels magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::format_at(
            0,
            format!("bad labels magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        ));
    }
    let label_count = labels.read_u32("label count")? as usize;
    if label_count != count {
        return Err(Error::format_at(
            4,
            format!("label count {label_count} does not match image count {count}"),
        ));
    }

    let mut raw_labels = vec![0u8; count];
    labels.read_exact(&mut raw_labels, "labels")?;

    let mut examples = Vec::with_capacity(count);
    let mut buf = vec![0u8; dim];
    for (i, &label) in raw_labels.iter().enumerate() {
        images.read_exact(&mut buf, &format!("image {i}"))?;
        let pixels: Vec<f64> = buf.iter().map(|&b| b as f64 / 255.0).collect();
        examples.push(Example::new(Tensor::new(vec![dim], pixels)?, label as usize)?);
    }

    let num_classes = raw_labels.iter().copied().max().map_or(1, |m| m as usize + 1);
    // MNIST-shaped corpora always carry all ten digits; keep 10 as the floor
    // so a sub-sampled file still produces a 10-class dataset.
    let num_classes = num_classes.max(if dim == 784 { 10 } else { 2 });
    Dataset::new(
        examples,
        num_classes,
        images_path.file_stem().and_then(|s| s.to_str()).unwrap_or("idx"),
    )
}

/// Loads just the images from an IDX image file (no labels needed), e.g.
/// for classifying a single unknown input.
pub fn load_idx_images(images_path: &Path) -> Result<Vec<Tensor>> {
    let mut images = CountingReader::new(BufReader::new(File::open(images_path)?));
    let magic = images.read_u32("images magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format_at(
            0,
            format!("bad images magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = images.read_u32("image count")? as usize;
    let rows = images.read_u32("row count")? as usize;
    let cols = images.read_u32("column count")? as usize;
    let dim = rows * cols;
    if dim == 0 {
        return Err(Error::format_at(8, "zero-sized images".to_string()));
    }
    let mut out = Vec::with_capacity(count);
    let mut buf = vec![0u8; dim];
    for i in 0..count {
        images.read_exact(&mut buf, &format!("image {i}"))?;
        out.push(Tensor::new(vec![dim], buf.iter().map(|&b| b as f64 / 255.0).collect())?);
    }
    Ok(out)
}

/// Writes a dataset as an IDX image/label file pair (inverse of
/// [`load_idx`]). Pixels are quantized back to bytes with rounding.
pub fn write_idx(data: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let dim = data.input_dim().unwrap_or(0);
    let (rows, cols) = if dim == 784 {
        (28, 28)
    } else {
        (1, dim) // non-image corpora are stored as 1 x dim rasters
    };
    if rows * cols != dim {
        return Err(Error::format(format!("cannot factor {dim} pixels into a raster")));
    }

    let mut images = BufWriter::new(File::create(images_path)?);
    images.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    images.write_all(&(data.len() as u32).to_be_bytes())?;
    images.write_all(&(rows as u32).to_be_bytes())?;
    images.write_all(&(cols as u32).to_be_bytes())?;
    let mut buf = Vec::with_capacity(dim);
    for ex in data.examples() {
        buf.clear();
        buf.extend(ex.pixels.data().iter().map(|&v| (v * 255.0).round() as u8));
        images.write_all(&buf)?;
    }
    images.flush()?;

    let mut labels = BufWriter::new(File::create(labels_path)?);
    labels.write_all(&LABELS_MAGIC.to_be_bytes())?;
    labels.write_all(&(data.len() as u32).to_be_bytes())?;
    for ex in data.examples() {
        labels.write_all(&[ex.label as u8])?;
    }
    labels.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn fixture_bytes() -> (Vec<u8>, Vec<u8>) {
        // Two 2x2 images with known bytes: endpoints 0 and 255 must map to
        // exactly 0.0 and 1.0.
        let mut images = Vec::new();
        images.extend(IMAGES_MAGIC.to_be_bytes());
        images.extend(2u32.to_be_bytes());
        images.extend(2u32.to_be_bytes());
        images.extend(2u32.to_be_bytes());
        images.extend([0u8, 255, 51, 102]);
        images.extend([255u8, 0, 204, 153]);
        let mut labels = Vec::new();
        labels.extend(LABELS_MAGIC.to_be_bytes());
        labels.extend(2u32.to_be_bytes());
        labels.extend([7u8, 3]);
        (images, labels)
    }

    #[test]
    fn loads_fixture_with_exact_scaling() {
        let dir = tempdir().unwrap();
        let (images, labels) = fixture_bytes();
        let ip = dir.path().join("imgs.idx");
        let lp = dir.path().join("lbls.idx");
        std::fs::write(&ip, images).unwrap();
        std::fs::write(&lp, labels).unwrap();
        let data = load_idx(&ip, &lp).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.examples()[0].pixels.data()[0], 0.0);
        assert_eq!(data.examples()[0].pixels.data()[1], 1.0);
        assert_eq!(data.examples()[0].label, 7);
        assert_eq!(data.examples()[1].label, 3);
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempdir().unwrap();
        let (images, labels) = fixture_bytes();
        let ip = dir.path().join("imgs.idx");
        let lp = dir.path().join("lbls.idx");
        // label file with the images magic
        let mut bad_labels = labels.clone();
        bad_labels[..4].copy_from_slice(&IMAGES_MAGIC.to_be_bytes());
        std::fs::write(&ip, &images).unwrap();
        std::fs::write(&lp, &bad_labels).unwrap();
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn rejects_truncation_with_offset() {
        let dir = tempdir().unwrap();
        let (images, labels) = fixture_bytes();
        let ip = dir.path().join("imgs.idx");
        let lp = dir.path().join("lbls.idx");
        std::fs::write(&ip, &images[..images.len() - 2]).unwrap();
        std::fs::write(&lp, &labels).unwrap();
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(err.to_string().contains("byte"), "{err}");
    }

    #[test]
    fn rejects_count_mismatch() {
        let dir = tempdir().unwrap();
        let (images, mut labels) = fixture_bytes();
        labels[4..8].copy_from_slice(&3u32.to_be_bytes());
        labels.push(1);
        let ip = dir.path().join("imgs.idx");
        let lp = dir.path().join("lbls.idx");
        std::fs::write(&ip, &images).unwrap();
        std::fs::write(&lp, &labels).unwrap();
        assert!(load_idx(&ip, &lp).is_err());
    }

    #[test]
    fn writer_round_trips_bit_exactly() {
        let dir = tempdir().unwrap();
        let data = super::super::synthetic_digits(3, 0.1, 42).unwrap();
        let ip = dir.path().join("d.images.idx");
        let lp = dir.path().join("d.labels.idx");
        write_idx(&data, &ip, &lp).unwrap();
        let reload = load_idx(&ip, &lp).unwrap();
        assert_eq!(reload.len(), data.len());
        // Quantization to bytes and back must be a fixed point: write the
        // reloaded set again and compare raw bytes.
        let ip2 = dir.path().join("d2.images.idx");
        let lp2 = dir.path().join("d2.labels.idx");
        write_idx(&reload, &ip2, &lp2).unwrap();
        assert_eq!(std::fs::read(&ip).unwrap(), std::fs::read(&ip2).unwrap());
        assert_eq!(std::fs::read(&lp).unwrap(), std::fs::read(&lp2).unwrap());
        for (a, b) in data.examples().iter().zip(reload.examples()) {
            assert_eq!(a.label, b.label);
        }
    }
}
