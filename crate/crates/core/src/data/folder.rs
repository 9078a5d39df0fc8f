use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{load_image, resize_and_normalize, ProtocolSplit, SplitItem, SplitMetadata};
use crate::batch::Label;
use crate::error::{Error, Result};
use crate::model::InputShape;

pub const DEFAULT_OUTLIER_CLASS: &str = "257.clutter";

const IMAGE_EXTENSIONS: [&str; 7] = ["png", "jpg", "jpeg", "bmp", "gif", "tif", "tiff"];

#[derive(Debug, Clone, PartialEq)]
pub struct FolderOptions {
    pub max_per_class: usize,
    pub outlier_class: String,
    pub image_shape: InputShape,
}

impl Default for FolderOptions {
    fn default() -> Self {
        FolderOptions {
            max_per_class: 150,
            outlier_class: DEFAULT_OUTLIER_CLASS.into(),
            image_shape: InputShape::new(1, 32, 32),
        }
    }
}

/// Class-per-directory protocol. `n_inlier_classes` classes other than the
/// outlier directory are drawn at random and contribute at most
/// `max_per_class` images each. Those images form the training set and the
/// inlier part of the test set; the same number of images from the outlier
/// directory completes the test set, so it is exactly half outliers.
pub fn build_folder_protocol(
    root: &Path,
    n_inlier_classes: usize,
    seed: u64,
    opts: &FolderOptions,
) -> Result<ProtocolSplit> {
    if n_inlier_classes == 0 {
        return Err(Error::arg("at least one inlier class is required"));
    }
    let mut classes = list_sorted(root, |p| p.is_dir())?;
    let outlier_dir = root.join(&opts.outlier_class);
    if !classes.contains(&outlier_dir) {
        return Err(Error::arg(format!(
            "outlier directory {} not found",
            outlier_dir.display()
        )));
    }
    classes.retain(|c| *c != outlier_dir);
    if n_inlier_classes > classes.len() {
        return Err(Error::arg(format!(
            "{n_inlier_classes} inlier classes requested, {} available",
            classes.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<PathBuf> = index::sample(&mut rng, classes.len(), n_inlier_classes)
        .into_iter()
        .map(|k| classes[k].clone())
        .collect();
    chosen.sort();

    let name = |p: &Path| {
        p.file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned()
    };
    let load = |path: &Path, class: &str, label: Label, id: String| -> Result<SplitItem> {
        let img = load_image(path, opts.image_shape.channels)?;
        Ok(SplitItem {
            id,
            class: class.to_string(),
            source: path.display().to_string(),
            label,
            image: resize_and_normalize(&img, opts.image_shape)?,
        })
    };

    let mut train = Vec::new();
    for dir in &chosen {
        let class = name(dir);
        let files = list_images(dir)?;
        let take = files.len().min(opts.max_per_class);
        let mut picks = index::sample(&mut rng, files.len(), take).into_vec();
        picks.sort_unstable();
        for k in picks {
            train.push(load(
                &files[k],
                &class,
                Label::Inlier,
                format!("{class}/{}", name(&files[k])),
            )?);
        }
    }
    if train.is_empty() {
        return Err(Error::arg("chosen inlier classes contain no images"));
    }

    let outliers = list_images(&outlier_dir)?;
    let n_out = train.len();
    if outliers.len() < n_out {
        return Err(Error::arg(format!(
            "{n_out} outliers needed but {} has only {}",
            outlier_dir.display(),
            outliers.len()
        )));
    }
    let mut picks = index::sample(&mut rng, outliers.len(), n_out).into_vec();
    picks.sort_unstable();
    let mut test = train.clone();
    for k in picks {
        test.push(load(
            &outliers[k],
            &opts.outlier_class,
            Label::Outlier,
            format!("{}/{}", opts.outlier_class, name(&outliers[k])),
        )?);
    }

    let split = ProtocolSplit {
        train,
        test,
        metadata: SplitMetadata {
            protocol: "folder".into(),
            inlier_classes: chosen.iter().map(|c| name(c)).collect(),
            outlier_ratio: 0.5,
            seed,
            image_shape: opts.image_shape.dims(),
        },
    };
    split.check()?;
    Ok(split)
}

fn list_sorted(dir: &Path, keep: impl Fn(&Path) -> bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if keep(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub(crate) fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    list_sorted(dir, |p| {
        p.is_file()
            && p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
    })
}
