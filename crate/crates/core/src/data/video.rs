use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::folder::list_images;
use super::{load_image, resize_and_normalize, Image, ProtocolSplit, SplitItem, SplitMetadata};
use crate::batch::Label;
use crate::error::{Error, Result};
use crate::model::InputShape;

/// Per-frame ground truth inside a video directory: one label per line
/// (`0`/`inlier` or `1`/`outlier`), in frame order.
pub const FRAME_LABELS_FILE: &str = "frame_labels.txt";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchConfig {
    pub size: usize,
    pub stride: usize,
    /// A patch is kept when the mean absolute frame difference over it
    /// exceeds this value.
    pub motion_threshold: f64,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig {
            size: 45,
            stride: 25,
            motion_threshold: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub row: usize,
    pub col: usize,
    pub image: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub frame_index: usize,
    pub patch_size: usize,
    pub patches: Vec<Patch>,
    /// Motion verdict per patch.
    pub kept: Vec<bool>,
}

impl PatchGrid {
    pub fn kept_patches(&self) -> impl Iterator<Item = &Patch> {
        self.patches
            .iter()
            .zip(&self.kept)
            .filter(|(_, k)| **k)
            .map(|(p, _)| p)
    }

    pub fn num_kept(&self) -> usize {
        self.kept.iter().filter(|k| **k).count()
    }
}

/// Top-left offsets along one axis: multiples of `stride`, with the last one
/// snapped so the final patch ends at the border.
fn grid_positions(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let count = (extent - patch + 1).div_ceil(stride);
    let mut pos: Vec<usize> = (0..count - 1).map(|k| k * stride).collect();
    pos.push(extent - patch);
    pos
}

/// Regular grid of `patch`×`patch` crops; every patch starts kept.
pub fn extract_patches(
    frame: &Image,
    frame_index: usize,
    patch: usize,
    stride: usize,
) -> Result<PatchGrid> {
    if patch == 0 || stride == 0 {
        return Err(Error::arg("patch size and stride must be positive"));
    }
    if patch > frame.height || patch > frame.width {
        return Err(Error::arg(format!(
            "patch {patch} larger than frame {}x{}",
            frame.height, frame.width
        )));
    }
    let rows = grid_positions(frame.height, patch, stride);
    let cols = grid_positions(frame.width, patch, stride);
    let mut patches = Vec::with_capacity(rows.len() * cols.len());
    for &row in &rows {
        for &col in &cols {
            patches.push(Patch {
                row,
                col,
                image: frame.crop(row, col, patch, patch)?,
            });
        }
    }
    let kept = vec![true; patches.len()];
    Ok(PatchGrid {
        frame_index,
        patch_size: patch,
        patches,
        kept,
    })
}

/// Keeps a patch iff the mean absolute difference between `frame` and
/// `prev` over its region exceeds `threshold`. Without a previous frame
/// (first frame of a video) every patch is kept.
pub fn motion_filter(
    prev: Option<&Image>,
    frame: &Image,
    mut grid: PatchGrid,
    threshold: f64,
) -> Result<PatchGrid> {
    let Some(prev) = prev else {
        grid.kept.iter_mut().for_each(|k| *k = true);
        return Ok(grid);
    };
    if prev.dims() != frame.dims() {
        return Err(Error::arg(format!(
            "frame sizes differ: {:?} vs {:?}",
            prev.dims(),
            frame.dims()
        )));
    }
    let p = grid.patch_size;
    let n = (frame.channels * p * p) as f64;
    for (patch, kept) in grid.patches.iter().zip(grid.kept.iter_mut()) {
        let mut sum = 0.0;
        for c in 0..frame.channels {
            for y in patch.row..patch.row + p {
                for x in patch.col..patch.col + p {
                    sum += (frame.get(c, y, x) - prev.get(c, y, x)).abs();
                }
            }
        }
        *kept = sum / n > threshold;
    }
    Ok(grid)
}

/// Grayscale frames of one video in lexicographic file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub name: String,
    pub frames: Vec<Image>,
    pub labels: Option<Vec<Label>>,
}

impl Video {
    /// Patch grids of every frame, motion-filtered against the previous
    /// frame.
    pub fn patch_grids(&self, cfg: &PatchConfig) -> Result<Vec<PatchGrid>> {
        let mut out = Vec::with_capacity(self.frames.len());
        for (i, frame) in self.frames.iter().enumerate() {
            let grid = extract_patches(frame, i, cfg.size, cfg.stride)?;
            let prev = i.checked_sub(1).map(|j| &self.frames[j]);
            out.push(motion_filter(prev, frame, grid, cfg.motion_threshold)?);
        }
        Ok(out)
    }
}

pub fn load_video(dir: &Path) -> Result<Video> {
    let name = dir
        .file_name()
        .unwrap_or_default()
        .to_string_lossy()
        .into_owned();
    let frames = list_images(dir)?
        .iter()
        .map(|p| load_image(p, 1))
        .collect::<Result<Vec<_>>>()?;
    if frames.is_empty() {
        return Err(Error::arg(format!("no frames in {}", dir.display())));
    }
    let label_path = dir.join(FRAME_LABELS_FILE);
    let labels = if label_path.is_file() {
        let text = fs::read_to_string(&label_path).map_err(|e| Error::io(&label_path, e))?;
        let labels = text
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<Vec<Label>>>()?;
        if labels.len() != frames.len() {
            return Err(Error::arg(format!(
                "{} labels for {} frames in {}",
                labels.len(),
                frames.len(),
                dir.display()
            )));
        }
        Some(labels)
    } else {
        None
    };
    Ok(Video {
        name,
        frames,
        labels,
    })
}

/// Every video sub-directory of `root`, sorted by name.
pub fn load_videos(root: &Path) -> Result<Vec<Video>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    dirs.iter().map(|d| load_video(d)).collect()
}

/// Training split of motion-kept patches from normal videos, optionally
/// subsampled to `max_patches`. The test side of the video protocol is
/// frame-level and handled by video evaluation, so `test` is empty.
pub fn build_video_protocol(
    videos: &[Video],
    cfg: &PatchConfig,
    image_shape: InputShape,
    max_patches: Option<usize>,
    seed: u64,
) -> Result<ProtocolSplit> {
    let mut train = Vec::new();
    for video in videos {
        for grid in video.patch_grids(cfg)? {
            for patch in grid.kept_patches() {
                train.push(SplitItem {
                    id: format!(
                        "{}/{:05}/{}_{}",
                        video.name, grid.frame_index, patch.row, patch.col
                    ),
                    class: "normal".into(),
                    source: format!("{}#{}", video.name, grid.frame_index),
                    label: Label::Inlier,
                    image: resize_and_normalize(&patch.image, image_shape)?,
                });
            }
        }
    }
    if let Some(m) = max_patches.filter(|&m| m < train.len()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = index::sample(&mut rng, train.len(), m).into_vec();
        keep.sort_unstable();
        let mut all: Vec<Option<SplitItem>> = train.into_iter().map(Some).collect();
        train = keep.into_iter().filter_map(|k| all[k].take()).collect();
    }
    if train.is_empty() {
        return Err(Error::arg("no moving patches in the training videos"));
    }
    Ok(ProtocolSplit {
        train,
        test: Vec::new(),
        metadata: SplitMetadata {
            protocol: "video".into(),
            inlier_classes: vec!["normal".into()],
            outlier_ratio: 0.0,
            seed,
            image_shape: image_shape.dims(),
        },
    })
}
