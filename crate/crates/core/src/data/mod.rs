//! Evaluation protocols: MNIST digit-as-inlier, class-folder image trees and
//! video patches with a frame-difference motion filter.

mod folder;
mod image;
mod mnist;
mod video;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::batch::Label;
use crate::error::{Error, Result};
use crate::model::InputShape;
use crate::tensor::Tensor;

pub use self::image::{load_image, resize_and_normalize, save_png, Image};
pub use folder::{build_folder_protocol, FolderOptions, DEFAULT_OUTLIER_CLASS};
pub use mnist::{
    build_mnist_protocol, read_idx_images, read_idx_labels, MnistData, MnistOptions, MnistSplit,
};
pub use video::{
    build_video_protocol, extract_patches, load_video, load_videos, motion_filter, Patch,
    PatchConfig, PatchGrid, Video, FRAME_LABELS_FILE,
};

pub const SPLIT_CSV: &str = "split.csv";
pub const SPLIT_META: &str = "split.json";

/// One member of a split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitItem {
    pub id: String,
    /// Source class (digit, directory name or video name).
    pub class: String,
    /// Where the pixels came from: a file path or `file#index`.
    pub source: String,
    pub label: Label,
    pub image: Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetadata {
    pub protocol: String,
    pub inlier_classes: Vec<String>,
    /// Fraction of outliers in the test set.
    pub outlier_ratio: f64,
    pub seed: u64,
    pub image_shape: [usize; 3],
}

/// Train (inliers only) and labelled test sets of one protocol instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSplit {
    pub train: Vec<SplitItem>,
    pub test: Vec<SplitItem>,
    pub metadata: SplitMetadata,
}

/// One line of the split manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub split: String,
    pub item_id: String,
    pub label: Label,
    pub class: String,
    pub source: String,
}

impl ProtocolSplit {
    pub fn image_shape(&self) -> InputShape {
        let [c, h, w] = self.metadata.image_shape;
        InputShape::new(c, h, w)
    }

    pub fn train_tensor(&self) -> Result<Tensor> {
        stack_items(&self.train, self.metadata.image_shape)
    }

    pub fn test_tensor(&self) -> Result<Tensor> {
        stack_items(&self.test, self.metadata.image_shape)
    }

    pub fn test_labels(&self) -> Vec<Label> {
        self.test.iter().map(|t| t.label).collect()
    }

    pub fn test_ids(&self) -> Vec<String> {
        self.test.iter().map(|t| t.id.clone()).collect()
    }

    pub fn num_outliers(&self) -> usize {
        self.test.iter().filter(|t| t.label.is_outlier()).count()
    }

    /// Checks that train holds inliers only and that every label agrees with
    /// the item's source class.
    pub fn check(&self) -> Result<()> {
        let inlier = |class: &str| self.metadata.inlier_classes.iter().any(|c| c == class);
        for item in &self.train {
            if item.label != Label::Inlier || !inlier(&item.class) {
                return Err(Error::config(format!(
                    "train item {} is not an inlier",
                    item.id
                )));
            }
        }
        for item in &self.test {
            if (item.label == Label::Inlier) != inlier(&item.class) {
                return Err(Error::config(format!(
                    "test item {} of class {} labelled {:?}",
                    item.id, item.class, item.label
                )));
            }
        }
        Ok(())
    }

    pub fn manifest_rows(&self) -> Vec<ManifestRow> {
        let row = |split: &str, item: &SplitItem| ManifestRow {
            split: split.into(),
            item_id: item.id.clone(),
            label: item.label,
            class: item.class.clone(),
            source: item.source.clone(),
        };
        self.train
            .iter()
            .map(|i| row("train", i))
            .chain(self.test.iter().map(|i| row("test", i)))
            .collect()
    }

    /// Writes `split.csv` (one row per member) and `split.json` (metadata).
    pub fn write_manifest(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut w = csv::Writer::from_path(dir.join(SPLIT_CSV))?;
        for row in self.manifest_rows() {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(dir.join(SPLIT_CSV), e))?;
        let meta = serde_json::to_string_pretty(&self.metadata)?;
        let path = dir.join(SPLIT_META);
        fs::write(&path, meta).map_err(|e| Error::io(&path, e))
    }
}

pub fn read_manifest(dir: &Path) -> Result<(SplitMetadata, Vec<ManifestRow>)> {
    let path = dir.join(SPLIT_META);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta = serde_json::from_str(&text)?;
    let mut r = csv::Reader::from_path(dir.join(SPLIT_CSV))?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<ManifestRow>, _>>()?;
    Ok((meta, rows))
}

fn stack_items(items: &[SplitItem], shape: [usize; 3]) -> Result<Tensor> {
    if let Some(bad) = items.iter().find(|i| i.image.dims() != shape) {
        return Err(Error::config(format!(
            "item {} has shape {:?}, expected {shape:?}",
            bad.id,
            bad.image.dims()
        )));
    }
    Tensor::stack(shape, items.iter().map(|i| i.image.data.as_slice()))
}
