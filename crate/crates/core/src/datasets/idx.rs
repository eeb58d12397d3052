//! IDX binary format (the MNIST container): big-endian magic + dims header
//! followed by unsigned bytes. Image files carry magic 0x00000803 and dims
//! `[count, rows, cols]`; label files carry 0x00000801 and `[count]`.
//! Pixel bytes are scaled to `[0, 1]` by dividing by 255.

use std::path::Path;

use crate::datasets::{DatasetItem, DatasetKind, LabeledDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if end > bytes.len() {
        return Err(Error::UnexpectedEof(what.to_string()));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Loads a paired image/label IDX file set.
pub fn load_idx(images_path: &Path, labels_path: &Path, origin: &str) -> Result<LabeledDataset> {
    let image_bytes = std::fs::read(images_path)?;
    let label_bytes = std::fs::read(labels_path)?;

    let image_magic = be_u32(&image_bytes, 0, "image header")?;
    if image_magic != IMAGE_MAGIC {
        return Err(Error::NotIdx(format!(
            "{} has magic {image_magic:#010x}, expected {IMAGE_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let count = be_u32(&image_bytes, 4, "image dims")? as usize;
    let rows = be_u32(&image_bytes, 8, "image dims")? as usize;
    let cols = be_u32(&image_bytes, 12, "image dims")? as usize;

    let label_magic = be_u32(&label_bytes, 0, "label header")?;
    if label_magic != LABEL_MAGIC {
        return Err(Error::NotIdx(format!(
            "{} has magic {label_magic:#010x}, expected {LABEL_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let label_count = be_u32(&label_bytes, 4, "label dims")? as usize;
    if count != label_count {
        return Err(Error::IdxCountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let pixels = count * rows * cols;
    if image_bytes.len() < 16 + pixels {
        return Err(Error::UnexpectedEof("image payload".into()));
    }
    if image_bytes.len() > 16 + pixels {
        return Err(Error::invalid("image file has trailing bytes"));
    }
    if label_bytes.len() < 8 + count {
        return Err(Error::UnexpectedEof("label payload".into()));
    }
    if label_bytes.len() > 8 + count {
        return Err(Error::invalid("label file has trailing bytes"));
    }

    let mut max_label = 0u8;
    for &l in &label_bytes[8..] {
        max_label = max_label.max(l);
    }
    let class_names: Vec<String> = (0..=max_label).map(|c| c.to_string()).collect();

    let mut items = Vec::with_capacity(count);
    for n in 0..count {
        let start = 16 + n * rows * cols;
        let data: Vec<f64> = image_bytes[start..start + rows * cols]
            .iter()
            .map(|&b| f64::from(b) / 255.0)
            .collect();
        items.push(DatasetItem {
            sample: Tensor::new(vec![1, rows, cols], data)?,
            class_id: label_bytes[8 + n] as usize,
            origin: origin.to_string(),
        });
    }
    LabeledDataset::new(items, class_names, DatasetKind::Image)
}

/// Writes a dataset back out as a paired IDX file set. Values are clamped
/// to `[0, 1]` and quantized with round-to-nearest, the inverse of the
/// loader's scaling, so load -> write -> load is byte-identical.
pub fn write_idx(ds: &LabeledDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    if ds.kind() != DatasetKind::Image {
        return Err(Error::invalid("write_idx needs an image dataset"));
    }
    let (rows, cols) = match ds.sample_shape() {
        [1, r, c] => (*r, *c),
        other => {
            return Err(Error::invalid(format!(
                "write_idx needs [1, rows, cols] samples, got {other:?}"
            )))
        }
    };
    let mut image_bytes = Vec::with_capacity(16 + ds.len() * rows * cols);
    image_bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    image_bytes.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(cols as u32).to_be_bytes());

    let mut label_bytes = Vec::with_capacity(8 + ds.len());
    label_bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    label_bytes.extend_from_slice(&(ds.len() as u32).to_be_bytes());

    for item in ds.items() {
        for &v in item.sample.data() {
            image_bytes.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        if item.class_id > u8::MAX as usize {
            return Err(Error::invalid("IDX labels are single bytes"));
        }
        label_bytes.push(item.class_id as u8);
    }
    std::fs::write(images_path, image_bytes)?;
    std::fs::write(labels_path, label_bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        // three 2x2 images, labels 0, 1, 1
        let mut images = Vec::new();
        images.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        images.extend_from_slice(&3u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&[0, 255, 128, 7, 1, 2, 3, 4, 250, 251, 252, 253]);
        let mut labels = Vec::new();
        labels.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        labels.extend_from_slice(&3u32.to_be_bytes());
        labels.extend_from_slice(&[0, 1, 1]);
        let ip = dir.join("images.idx");
        let lp = dir.join("labels.idx");
        std::fs::write(&ip, images).unwrap();
        std::fs::write(&lp, labels).unwrap();
        (ip, lp)
    }

    #[test]
    fn loads_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        let ds = load_idx(&ip, &lp, "fixture").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.sample_shape(), &[1, 2, 2]);
        assert_eq!(ds.items()[0].sample.data()[1], 1.0); // byte 255 -> exactly 1.0
        assert_eq!(ds.items()[0].class_id, 0);
        assert_eq!(ds.items()[2].class_id, 1);
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        let ds = load_idx(&ip, &lp, "fixture").unwrap();
        let ip2 = dir.path().join("images2.idx");
        let lp2 = dir.path().join("labels2.idx");
        write_idx(&ds, &ip2, &lp2).unwrap();
        assert_eq!(std::fs::read(&ip).unwrap(), std::fs::read(&ip2).unwrap());
        assert_eq!(std::fs::read(&lp).unwrap(), std::fs::read(&lp2).unwrap());
    }

    #[test]
    fn rejects_bad_magic_count_mismatch_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());

        // every corrupted-magic mutation is rejected
        let original = std::fs::read(&ip).unwrap();
        for byte in 0..4 {
            for delta in [1u8, 0x80] {
                let mut corrupt = original.clone();
                corrupt[byte] = corrupt[byte].wrapping_add(delta);
                let bad_magic = dir.path().join("bad_magic.idx");
                std::fs::write(&bad_magic, &corrupt).unwrap();
                assert!(
                    matches!(load_idx(&bad_magic, &lp, "x"), Err(Error::NotIdx(_))),
                    "magic byte {byte} + {delta} accepted"
                );
            }
        }

        let mut labels = std::fs::read(&lp).unwrap();
        labels[7] = 2; // claim 2 labels for 3 images
        labels.truncate(8 + 2);
        let short = dir.path().join("short_labels.idx");
        std::fs::write(&short, &labels).unwrap();
        assert!(matches!(
            load_idx(&ip, &short, "x"),
            Err(Error::IdxCountMismatch { images: 3, labels: 2 })
        ));

        let mut truncated = std::fs::read(&ip).unwrap();
        truncated.truncate(truncated.len() - 4);
        let trunc = dir.path().join("truncated.idx");
        std::fs::write(&trunc, &truncated).unwrap();
        assert!(matches!(load_idx(&trunc, &lp, "x"), Err(Error::UnexpectedEof(_))));
    }
}
