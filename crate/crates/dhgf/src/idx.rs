//! IDX files (the MNIST family distribution format), optionally gzip-wrapped.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use dhgf_core::data::Dataset;
use flate2::read::GzDecoder;

use crate::error::DataError;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Standard file names inside a FashionMNIST directory.
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte.gz";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte.gz";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte.gz";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte.gz";

/// Official download location of the FashionMNIST files.
pub const FASHION_MNIST_URL: &str = "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/";

fn read_bytes(path: &Path) -> Result<Vec<u8>, DataError> {
    let raw = fs::read(path).map_err(|e| DataError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| DataError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Header {
    count: usize,
    dims: Vec<usize>,
    payload: usize,
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, DataError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::parse(path, offset, "unexpected end of header"))
}

fn parse_header(bytes: &[u8], magic: u32, path: &Path) -> Result<Header, DataError> {
    let found = be_u32(bytes, 0, path)?;
    if found != magic {
        return Err(DataError::parse(
            path,
            0,
            format!("bad magic 0x{found:08x}, expected 0x{magic:08x}"),
        ));
    }
    let ndim = (magic & 0xff) as usize;
    let count = be_u32(bytes, 4, path)? as usize;
    let mut dims = Vec::with_capacity(ndim - 1);
    for k in 1..ndim {
        dims.push(be_u32(bytes, 4 + 4 * k, path)? as usize);
    }
    let payload = 4 + 4 * ndim;
    let expected = payload + count * dims.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(DataError::parse(
            path,
            bytes.len(),
            format!("truncated payload: {} bytes, expected {expected}", bytes.len()),
        ));
    }
    Ok(Header { count, dims, payload })
}

/// Reads an image/label file pair into a dataset with pixels scaled to `[0, 1]`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset, DataError> {
    let img = read_bytes(images)?;
    let lab = read_bytes(labels)?;
    let ih = parse_header(&img, IMAGES_MAGIC, images)?;
    let lh = parse_header(&lab, LABELS_MAGIC, labels)?;
    if ih.count != lh.count {
        return Err(DataError::parse(
            labels,
            4,
            format!("{} labels for {} images", lh.count, ih.count),
        ));
    }
    let dim: usize = ih.dims.iter().product();
    let features = img[ih.payload..ih.payload + ih.count * dim]
        .iter()
        .map(|&b| b as f32 / 255.0)
        .collect();
    let label_bytes = &lab[lh.payload..lh.payload + lh.count];
    let classes = label_bytes.iter().copied().max().map_or(0, |m| m as usize + 1);
    let name = images
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, features, label_bytes.to_vec(), dim, classes.max(10))
        .map_err(|e| DataError::parse(labels, lh.payload, e.to_string()))
}

/// Data directory: `override_dir`, else `$DHGF_DATA_DIR`, else `data/fashion-mnist`.
pub fn data_dir(override_dir: Option<&Path>) -> PathBuf {
    if let Some(d) = override_dir {
        return d.to_path_buf();
    }
    match std::env::var_os("DHGF_DATA_DIR") {
        Some(d) => PathBuf::from(d),
        None => PathBuf::from("data/fashion-mnist"),
    }
}

/// Loads the FashionMNIST train and test sets from `dir`.
pub fn load_fashion_mnist(dir: &Path) -> Result<(Dataset, Dataset), DataError> {
    let mut train = load_idx(&dir.join(TRAIN_IMAGES), &dir.join(TRAIN_LABELS))?;
    let mut test = load_idx(&dir.join(TEST_IMAGES), &dir.join(TEST_LABELS))?;
    train.name = "fashion-mnist-train".into();
    test.name = "fashion-mnist-test".into();
    Ok((train, test))
}

/// Serialises a dataset as an uncompressed IDX pair (pixels rounded to bytes).
pub fn write_idx(ds: &Dataset, images: &Path, labels: &Path, side: [u32; 2]) -> std::io::Result<()> {
    let mut img = Vec::with_capacity(16 + ds.features.len());
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    img.extend_from_slice(&side[0].to_be_bytes());
    img.extend_from_slice(&side[1].to_be_bytes());
    img.extend(ds.features.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    lab.extend_from_slice(&ds.labels);
    fs::write(images, img)?;
    fs::write(labels, lab)
}
