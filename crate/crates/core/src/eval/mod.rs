//! Anomaly scoring `D(G(x))`, frame aggregation, metrics, report exports and
//! the per-epoch stability sweep.

mod metrics;
mod stability;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::batch::Label;
use crate::data::{resize_and_normalize, PatchConfig, ProtocolSplit, Video};
use crate::error::{Error, Result};
use crate::model::{discriminator_scores, generator_images, InputShape, ModelState};
use crate::tensor::Tensor;

pub use metrics::{compute_auc, compute_eer, compute_f1_best};
pub use stability::{
    baseline_and_final, read_stability_csv, stability_sweep, std_dev, write_stability_csv,
    StabilityOptions, StabilityRow,
};

/// Items scored per forward pass.
const SCORE_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub item_id: String,
    pub frame_index: Option<usize>,
    pub score: f64,
    pub label: Label,
}

impl ScoreRecord {
    pub fn new(item_id: impl Into<String>, score: f64, label: Label) -> Self {
        ScoreRecord {
            item_id: item_id.into(),
            frame_index: None,
            score,
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Normal,
    Anomaly,
}

/// Normal iff `score < tau`.
pub fn classify(score: f64, tau: f64) -> Verdict {
    if score < tau {
        Verdict::Normal
    } else {
        Verdict::Anomaly
    }
}

/// Maximum patch score; 0.0 (most normal) when no patch survived.
pub fn frame_score(patch_scores: &[f64]) -> f64 {
    patch_scores.iter().copied().fold(0.0, f64::max)
}

/// `D(G(x))` for a single clean input (batch of one).
pub fn anomaly_score(g: &ModelState, d: &ModelState, x: &Tensor) -> Result<f64> {
    if x.batch_size() != 1 {
        return Err(Error::config(format!(
            "anomaly_score takes one item, got {}",
            x.batch_size()
        )));
    }
    Ok(anomaly_scores(g, d, x)?[0])
}

/// `D(G(x))` for every item of a batch, in chunks.
pub fn anomaly_scores(g: &ModelState, d: &ModelState, x: &Tensor) -> Result<Vec<f64>> {
    let recon = reconstruct(g, x)?;
    scores_of(d, &recon)
}

/// Generator reconstructions of `x`, computed chunk-wise.
pub(crate) fn reconstruct(g: &ModelState, x: &Tensor) -> Result<Tensor> {
    let mut parts = Vec::new();
    for rows in chunks(x.batch_size()) {
        parts.push(generator_images(g, &x.select(&rows))?);
    }
    if parts.is_empty() {
        return Ok(x.clone());
    }
    Tensor::concat(&parts.iter().collect::<Vec<_>>())
}

pub(crate) fn scores_of(d: &ModelState, x: &Tensor) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(x.batch_size());
    for rows in chunks(x.batch_size()) {
        out.extend(discriminator_scores(d, &x.select(&rows))?);
    }
    Ok(out)
}

fn chunks(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n)
        .step_by(SCORE_CHUNK)
        .map(move |s| (s..(s + SCORE_CHUNK).min(n)).collect())
}

pub const HISTOGRAM_BINS: usize = 20;

/// Score counts per label over equal-width bins of `[0, 1]`; the last bin is
/// closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub edges: Vec<f64>,
    pub inlier: Vec<usize>,
    pub outlier: Vec<usize>,
}

impl ScoreHistogram {
    pub fn new(records: &[ScoreRecord], bins: usize) -> Self {
        let bins = bins.max(1);
        let mut h = ScoreHistogram {
            edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
            inlier: vec![0; bins],
            outlier: vec![0; bins],
        };
        for r in records {
            let b = ((r.score.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
            match r.label {
                Label::Inlier => h.inlier[b] += 1,
                Label::Outlier => h.outlier[b] += 1,
            }
        }
        h
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["bin_start", "bin_end", "inlier", "outlier"])?;
        for i in 0..self.inlier.len() {
            w.write_record([
                self.edges[i].to_string(),
                self.edges[i + 1].to_string(),
                self.inlier[i].to_string(),
                self.outlier[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub auc: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub f1_best: f64,
    pub f1_threshold: f64,
    pub n_inliers: usize,
    pub n_outliers: usize,
    pub histogram: ScoreHistogram,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<Vec<StabilityRow>>,
}

impl EvaluationReport {
    pub fn from_records(records: &[ScoreRecord]) -> Result<Self> {
        let (eer, eer_threshold) = compute_eer(records)?;
        let (f1_best, f1_threshold) = compute_f1_best(records)?;
        let n_outliers = records.iter().filter(|r| r.label.is_outlier()).count();
        Ok(EvaluationReport {
            auc: compute_auc(records)?,
            eer,
            eer_threshold,
            f1_best,
            f1_threshold,
            n_inliers: records.len() - n_outliers,
            n_outliers,
            histogram: ScoreHistogram::new(records, HISTOGRAM_BINS),
            stability: None,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// CSV with columns `item_id, frame_index, score, label`.
pub fn write_scores_csv(records: &[ScoreRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoreRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Items to score, grouped into the units that receive one score each: a
/// group is a single image for image protocols and the motion-kept patches
/// of one frame for video. A group's score is the maximum over its items
/// (0.0 when it has none).
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub items: Tensor,
    /// Group of each item, non-decreasing.
    pub group_of: Vec<usize>,
    pub ids: Vec<String>,
    pub labels: Vec<Label>,
    pub frame_index: Vec<Option<usize>>,
}

impl EvalSet {
    pub fn from_split(split: &ProtocolSplit) -> Result<Self> {
        let items = split.test_tensor()?;
        Ok(EvalSet {
            group_of: (0..items.batch_size()).collect(),
            items,
            ids: split.test_ids(),
            labels: split.test_labels(),
            frame_index: vec![None; split.test.len()],
        })
    }

    /// One group per frame: patches cut and motion-filtered per `cfg`, resized
    /// to `shape`.
    pub fn from_videos(videos: &[Video], cfg: &PatchConfig, shape: InputShape) -> Result<Self> {
        let mut data = Vec::new();
        let mut set = EvalSet {
            items: Tensor::zeros([0, shape.channels, shape.height, shape.width]),
            group_of: Vec::new(),
            ids: Vec::new(),
            labels: Vec::new(),
            frame_index: Vec::new(),
        };
        for video in videos {
            let labels = video.labels.as_ref().ok_or_else(|| {
                Error::arg(format!("video {} has no frame ground truth", video.name))
            })?;
            for grid in video.patch_grids(cfg)? {
                let group = set.ids.len();
                for p in grid.kept_patches() {
                    data.extend(resize_and_normalize(&p.image, shape)?.data);
                    set.group_of.push(group);
                }
                set.ids
                    .push(format!("{}/{:05}", video.name, grid.frame_index));
                set.labels.push(labels[grid.frame_index]);
                set.frame_index.push(Some(grid.frame_index));
            }
        }
        let n = set.group_of.len();
        set.items = Tensor::from_vec([n, shape.channels, shape.height, shape.width], data)?;
        Ok(set)
    }

    pub fn num_groups(&self) -> usize {
        self.ids.len()
    }

    /// Aggregates per-item scores into one record per group.
    pub fn records(&self, item_scores: &[f64]) -> Result<Vec<ScoreRecord>> {
        if item_scores.len() != self.group_of.len() {
            return Err(Error::arg(format!(
                "{} scores for {} items",
                item_scores.len(),
                self.group_of.len()
            )));
        }
        let mut per_group = vec![Vec::new(); self.num_groups()];
        for (&g, &s) in self.group_of.iter().zip(item_scores) {
            per_group[g].push(s);
        }
        Ok(per_group
            .iter()
            .enumerate()
            .map(|(g, scores)| ScoreRecord {
                item_id: self.ids[g].clone(),
                frame_index: self.frame_index[g],
                score: frame_score(scores),
                label: self.labels[g],
            })
            .collect())
    }

    pub fn score(&self, g: &ModelState, d: &ModelState) -> Result<Vec<ScoreRecord>> {
        self.records(&anomaly_scores(g, d, &self.items)?)
    }
}

/// Scores every test item of a split.
pub fn score_split(
    g: &ModelState,
    d: &ModelState,
    split: &ProtocolSplit,
) -> Result<Vec<ScoreRecord>> {
    EvalSet::from_split(split)?.score(g, d)
}

/// Frame-level evaluation: each frame is cut into patches, static patches
/// are dropped by the motion filter, the rest are scored with `D(G(·))` and
/// the frame takes the maximum patch score.
pub fn evaluate_video(
    g: &ModelState,
    d: &ModelState,
    videos: &[Video],
    cfg: &PatchConfig,
) -> Result<(EvaluationReport, Vec<ScoreRecord>)> {
    let [c, h, w] = g.arch.input.dims();
    let set = EvalSet::from_videos(videos, cfg, InputShape::new(c, h, w))?;
    let records = set.score(g, d)?;
    Ok((EvaluationReport::from_records(&records)?, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_score_examples() {
        assert_eq!(frame_score(&[0.2, 0.9, 0.5]), 0.9);
        assert_eq!(frame_score(&[0.4]), 0.4);
        assert_eq!(frame_score(&[]), 0.0);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(0.3, 0.5), Verdict::Normal);
        assert_eq!(classify(0.7, 0.5), Verdict::Anomaly);
        assert_eq!(classify(0.5, 0.5), Verdict::Anomaly);
    }

    #[test]
    fn histogram_counts_every_record() {
        let recs = vec![
            ScoreRecord::new("a", 0.0, Label::Inlier),
            ScoreRecord::new("b", 1.0, Label::Outlier),
            ScoreRecord::new("c", 0.5, Label::Outlier),
        ];
        let h = ScoreHistogram::new(&recs, 4);
        assert_eq!(h.inlier, vec![1, 0, 0, 0]);
        assert_eq!(h.outlier, vec![0, 0, 1, 1]);
    }
}
