use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{resize_and_normalize, Image, ProtocolSplit, SplitItem, SplitMetadata};
use crate::batch::Label;
use crate::error::{Error, Result};
use crate::model::InputShape;

const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Decoded IDX images and labels of one MNIST split.
#[derive(Debug, Clone)]
pub struct MnistSplit {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
    pub source: String,
}

impl MnistSplit {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> Result<Image> {
        let n = self.rows * self.cols;
        Image::from_u8(1, self.rows, self.cols, &self.pixels[i * n..(i + 1) * n])
    }
}

#[derive(Debug, Clone)]
pub struct MnistData {
    pub train: MnistSplit,
    pub test: MnistSplit,
}

impl MnistData {
    /// Loads the four standard IDX files from `dir`, gzipped (`.gz`) or raw.
    pub fn load(dir: &Path) -> Result<Self> {
        let split = |images: &str, labels: &str| -> Result<MnistSplit> {
            let ip = find_idx(dir, images)?;
            let (rows, cols, pixels) = read_idx_images(&ip)?;
            let labels = read_idx_labels(&find_idx(dir, labels)?)?;
            if labels.len() * rows * cols != pixels.len() {
                return Err(Error::arg(format!(
                    "{} labels for {} images in {}",
                    labels.len(),
                    pixels.len() / (rows * cols).max(1),
                    ip.display()
                )));
            }
            Ok(MnistSplit {
                rows,
                cols,
                pixels,
                labels,
                source: ip
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
            })
        };
        Ok(MnistData {
            train: split(TRAIN_IMAGES, TRAIN_LABELS)?,
            test: split(TEST_IMAGES, TEST_LABELS)?,
        })
    }
}

fn find_idx(dir: &Path, stem: &str) -> Result<PathBuf> {
    let gz = dir.join(format!("{stem}.gz"));
    if gz.is_file() {
        return Ok(gz);
    }
    let raw = dir.join(stem);
    if raw.is_file() {
        return Ok(raw);
    }
    Err(Error::arg(format!(
        "{stem}[.gz] not found in {}",
        dir.display()
    )))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    let res = if path.extension().is_some_and(|e| e == "gz") {
        flate2::read::GzDecoder::new(BufReader::new(file)).read_to_end(&mut buf)
    } else {
        BufReader::new(file).read_to_end(&mut buf)
    };
    res.map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn be_u32(b: &[u8], at: usize) -> usize {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]]) as usize
}

/// Returns `(rows, cols, pixels)` of an IDX3 unsigned-byte file.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let b = read_all(path)?;
    if b.len() < 16 || be_u32(&b, 0) != 0x0803 {
        return Err(Error::arg(format!(
            "{} is not an IDX3 image file",
            path.display()
        )));
    }
    let (n, rows, cols) = (be_u32(&b, 4), be_u32(&b, 8), be_u32(&b, 12));
    if b.len() != 16 + n * rows * cols {
        return Err(Error::arg(format!("{} is truncated", path.display())));
    }
    Ok((rows, cols, b[16..].to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let b = read_all(path)?;
    if b.len() < 8 || be_u32(&b, 0) != 0x0801 {
        return Err(Error::arg(format!(
            "{} is not an IDX1 label file",
            path.display()
        )));
    }
    let n = be_u32(&b, 4);
    if b.len() != 8 + n {
        return Err(Error::arg(format!("{} is truncated", path.display())));
    }
    Ok(b[8..].to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MnistOptions {
    pub image_shape: InputShape,
    /// Random subset of the inlier training images, for reduced runs.
    pub max_train: Option<usize>,
    /// Random subset of the inlier test images, for reduced runs.
    pub max_test_inliers: Option<usize>,
}

impl Default for MnistOptions {
    fn default() -> Self {
        MnistOptions {
            image_shape: InputShape::new(1, 28, 28),
            max_train: None,
            max_test_inliers: None,
        }
    }
}

/// Train: every training image of `inlier_digit`. Test: every test image of
/// that digit plus `round(r · n / (1 - r))` test images of other digits, so
/// that outliers make up fraction `r` of the test set.
pub fn build_mnist_protocol(
    data: &MnistData,
    inlier_digit: u8,
    outlier_ratio: f64,
    seed: u64,
    opts: &MnistOptions,
) -> Result<ProtocolSplit> {
    if inlier_digit > 9 {
        return Err(Error::arg(format!("digit {inlier_digit} not in 0..=9")));
    }
    if !(0.1..=0.5).contains(&outlier_ratio) {
        return Err(Error::arg(format!(
            "outlier ratio {outlier_ratio} not in [0.1, 0.5]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let of_digit = |s: &MnistSplit, inlier: bool| -> Vec<usize> {
        (0..s.len())
            .filter(|&i| (s.labels[i] == inlier_digit) == inlier)
            .collect()
    };
    let mut train_idx = cap(of_digit(&data.train, true), opts.max_train, &mut rng);
    let mut test_in = cap(of_digit(&data.test, true), opts.max_test_inliers, &mut rng);
    train_idx.sort_unstable();
    test_in.sort_unstable();
    if train_idx.is_empty() || test_in.is_empty() {
        return Err(Error::arg(format!("no images of digit {inlier_digit}")));
    }
    let n_out = (outlier_ratio * test_in.len() as f64 / (1.0 - outlier_ratio)).round() as usize;
    let pool = of_digit(&data.test, false);
    if n_out > pool.len() {
        return Err(Error::arg(format!(
            "{n_out} outliers requested but only {} available",
            pool.len()
        )));
    }
    let mut test_out: Vec<usize> = index::sample(&mut rng, pool.len(), n_out)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    test_out.sort_unstable();

    let item = |s: &MnistSplit, tag: &str, i: usize, label: Label| -> Result<SplitItem> {
        Ok(SplitItem {
            id: format!("{tag}_{i:05}"),
            class: s.labels[i].to_string(),
            source: format!("{}#{i}", s.source),
            label,
            image: resize_and_normalize(&s.image(i)?, opts.image_shape)?,
        })
    };
    let train = train_idx
        .iter()
        .map(|&i| item(&data.train, "train", i, Label::Inlier))
        .collect::<Result<Vec<_>>>()?;
    let test = test_in
        .iter()
        .map(|&i| item(&data.test, "test", i, Label::Inlier))
        .chain(
            test_out
                .iter()
                .map(|&i| item(&data.test, "test", i, Label::Outlier)),
        )
        .collect::<Result<Vec<_>>>()?;
    let split = ProtocolSplit {
        train,
        test,
        metadata: SplitMetadata {
            protocol: "mnist".into(),
            inlier_classes: vec![inlier_digit.to_string()],
            outlier_ratio: n_out as f64 / (n_out + test_in.len()) as f64,
            seed,
            image_shape: opts.image_shape.dims(),
        },
    };
    split.check()?;
    Ok(split)
}

fn cap(mut v: Vec<usize>, max: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match max {
        Some(m) if m < v.len() => {
            let keep = index::sample(rng, v.len(), m);
            keep.into_iter().map(|k| v[k]).collect()
        }
        _ => {
            v.shrink_to_fit();
            v
        }
    }
}
