use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Decoded IDX image file: `count` images of `rows × cols` unsigned bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, message: message.into() }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let chunk = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| format_err(offset, format!("file ends inside the header ({} bytes)", bytes.len())))?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("4-byte slice")))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(format_err(0, format!("expected image magic 0x{IMAGES_MAGIC:08x}, found 0x{magic:08x}")));
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(format_err(8, format!("degenerate image dimensions {rows}x{cols}")));
    }
    let expected = count * rows * cols;
    let body = &bytes[16..];
    if body.len() != expected {
        return Err(format_err(
            16,
            format!("header declares {count}x{rows}x{cols} = {expected} pixel bytes, body has {}", body.len()),
        ));
    }
    Ok(IdxImages { count, rows, cols, pixels: body.to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(format_err(0, format!("expected label magic 0x{LABELS_MAGIC:08x}, found 0x{magic:08x}")));
    }
    let count = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(format_err(8, format!("header declares {count} labels, body has {}", body.len())));
    }
    Ok(body.to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Class-stratified sample of `size` indices: per-class quotas are
/// proportional to class frequency, remainders handed out by largest
/// fractional part.
pub(crate) fn stratified_indices(labels: &[usize], classes: usize, size: usize, rng: &mut SeededRng) -> Vec<usize> {
    let n = labels.len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let exact: Vec<f64> = by_class.iter().map(|c| size as f64 * c.len() as f64 / n as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..classes).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = size - quota.iter().sum::<usize>();
    for &c in order.iter().cycle().take(classes * 2) {
        if left == 0 {
            break;
        }
        if quota[c] < by_class[c].len() {
            quota[c] += 1;
            left -= 1;
        }
    }
    let mut picked = Vec::with_capacity(size);
    for (members, q) in by_class.iter_mut().zip(quota) {
        rng.shuffle(members);
        picked.extend_from_slice(&members[..q]);
    }
    rng.shuffle(&mut picked);
    picked
}

/// Loads an IDX image/label pair with pixels scaled to `[0, 1]`, optionally
/// keeping a stratified subset.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    subset: Option<usize>,
    rng: &mut SeededRng,
) -> Result<Dataset> {
    let images = parse_idx_images(&std::fs::read(images_path)?)?;
    let raw_labels = parse_idx_labels(&std::fs::read(labels_path)?)?;
    if raw_labels.len() != images.count {
        return Err(Error::Dimension(format!("{} images but {} labels", images.count, raw_labels.len())));
    }
    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let dim = images.rows * images.cols;
    let features = Matrix::from_vec(images.count, dim, images.pixels.iter().map(|&p| p as f64 / 255.0).collect())?;
    let ds = Dataset::clean(features, labels, classes)?;
    match subset {
        None => Ok(ds),
        Some(size) if size > ds.len() => {
            Err(Error::InvalidArgument(format!("subset of {size} requested from {} examples", ds.len())))
        }
        Some(size) => Ok(ds.subset(&stratified_indices(&ds.clean_labels, classes, size, rng))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(count: usize) -> IdxImages {
        IdxImages { count, rows: 28, cols: 28, pixels: (0..count * 784).map(|i| (i % 256) as u8).collect() }
    }

    #[test]
    fn parses_synthetic_header() {
        let img = parse_idx_images(&encode_idx_images(&fixture(4))).unwrap();
        assert_eq!((img.count, img.rows, img.cols), (4, 28, 28));
        let labels = parse_idx_labels(&encode_idx_labels(&[3, 1, 4, 1])).unwrap();
        assert_eq!(labels, vec![3, 1, 4, 1]);
    }

    #[test]
    fn bad_magic_reports_offset() {
        let mut bytes = encode_idx_images(&fixture(1));
        bytes[3] = 0x01;
        match parse_idx_images(&bytes).unwrap_err() {
            Error::Format { offset, message } => {
                assert_eq!(offset, 0);
                assert!(message.contains("0x00000801"));
            }
            e => panic!("{e}"),
        }
        let short = encode_idx_images(&fixture(2));
        assert!(matches!(parse_idx_images(&short[..short.len() - 1]), Err(Error::Format { offset: 16, .. })));
        assert!(matches!(parse_idx_images(&short[..10]), Err(Error::Format { offset: 8, .. })));
        assert!(parse_idx_labels(&short).is_err());
    }

    #[test]
    fn loads_scaled_pixels_and_stratifies() {
        let dir = tempfile::tempdir().unwrap();
        let n = 2000;
        let img = IdxImages { count: n, rows: 2, cols: 2, pixels: (0..n * 4).map(|i| (i * 7 % 256) as u8).collect() };
        let labels: Vec<u8> = (0..n).map(|i| (i * 3 % 10) as u8).collect();
        std::fs::write(dir.path().join("img"), encode_idx_images(&img)).unwrap();
        std::fs::write(dir.path().join("lbl"), encode_idx_labels(&labels)).unwrap();
        let mut rng = SeededRng::new(4);
        let full = load_idx(dir.path().join("img"), dir.path().join("lbl"), None, &mut rng).unwrap();
        assert_eq!(full.len(), n);
        assert!(full.features.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let sub = load_idx(dir.path().join("img"), dir.path().join("lbl"), Some(1000), &mut rng).unwrap();
        assert_eq!(sub.len(), 1000);
        for c in sub.class_counts(&sub.clean_labels) {
            assert!((99..=101).contains(&c), "{c}");
        }
    }

    #[test]
    fn stratified_quotas_on_imbalanced_labels() {
        let labels: Vec<usize> = (0..1000).map(|i| usize::from(i % 4 == 0)).collect();
        let picked = stratified_indices(&labels, 2, 101, &mut SeededRng::new(0));
        let ones = picked.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(picked.len(), 101);
        assert!((25..=26).contains(&ones));
    }
}
