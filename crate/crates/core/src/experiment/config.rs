use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{FolderOptions, MnistOptions, PatchConfig, DEFAULT_OUTLIER_CLASS};
use crate::error::{Error, Result};
use crate::model::{ArchitectureSpec, HyperParams, InputShape};
use crate::trainer::{AblationPreset, AblationVariant, GOldStrategy};

/// Environment variable naming the directory that holds the datasets.
pub const DATA_ROOT_ENV: &str = "ADVOCC_DATA_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Mnist,
    Folder,
    Video,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GOldKind {
    FixedEpoch,
    AverageAllPrevious,
}

/// Flat experiment configuration. Every key has a default, unknown keys are
/// rejected, and [`ExperimentConfig::resolved`] fills the protocol-dependent
/// defaults so the persisted copy is explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub protocol: ProtocolKind,
    /// Falls back to `$ADVOCC_DATA_ROOT`, then `data`.
    pub data_root: Option<PathBuf>,

    pub mnist_dir: String,
    pub inlier_digit: u8,
    pub outlier_ratio: f64,
    pub max_train: Option<usize>,
    pub max_test_inliers: Option<usize>,

    pub folder_dir: String,
    pub inlier_classes: usize,
    pub max_per_class: usize,
    pub outlier_class: String,

    pub video_train_dir: String,
    pub video_test_dir: String,
    pub patch_size: usize,
    pub patch_stride: usize,
    pub motion_threshold: f64,
    pub max_train_patches: Option<usize>,

    pub lambda_recon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub noise_sigma: f64,
    pub lr_g: f64,
    pub lr_d_phase1: f64,
    pub lr_d_phase2: f64,
    pub phase1_epochs: usize,
    pub phase2_iterations: usize,
    pub tau: f64,
    pub batch_size: usize,
    pub seed: u64,

    pub image_channels: Option<usize>,
    pub image_height: Option<usize>,
    pub image_width: Option<usize>,
    pub generator_widths: Option<Vec<usize>>,
    pub discriminator_widths: Option<Vec<usize>>,
    pub kernel: usize,

    pub g_old_strategy: GOldKind,
    pub g_old_epoch: usize,

    pub variant: AblationPreset,
    /// Explicit stream selection; overrides `variant` when set.
    pub streams: Option<AblationVariant>,

    pub out_dir: Option<PathBuf>,
    pub checkpoint_every: usize,
    pub deterministic: bool,

    pub stability_epoch_start: usize,
    pub stability_epoch_end: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let hp = HyperParams::default();
        let patch = PatchConfig::default();
        ExperimentConfig {
            protocol: ProtocolKind::Mnist,
            data_root: None,
            mnist_dir: "mnist".into(),
            inlier_digit: 0,
            outlier_ratio: 0.1,
            max_train: None,
            max_test_inliers: None,
            folder_dir: "caltech256".into(),
            inlier_classes: 1,
            max_per_class: 150,
            outlier_class: DEFAULT_OUTLIER_CLASS.into(),
            video_train_dir: "ped2/train".into(),
            video_test_dir: "ped2/test".into(),
            patch_size: patch.size,
            patch_stride: patch.stride,
            motion_threshold: patch.motion_threshold,
            max_train_patches: None,
            lambda_recon: hp.lambda_recon,
            alpha: hp.alpha,
            beta: hp.beta,
            noise_sigma: hp.noise_sigma,
            lr_g: hp.lr_g,
            lr_d_phase1: hp.lr_d_phase1,
            lr_d_phase2: hp.lr_d_phase2,
            phase1_epochs: hp.phase1_epochs,
            phase2_iterations: hp.phase2_iterations,
            tau: hp.tau,
            batch_size: hp.batch_size,
            seed: hp.seed,
            image_channels: None,
            image_height: None,
            image_width: None,
            generator_widths: None,
            discriminator_widths: None,
            kernel: 4,
            g_old_strategy: GOldKind::FixedEpoch,
            g_old_epoch: 1,
            variant: AblationPreset::Full,
            streams: None,
            out_dir: None,
            checkpoint_every: 5,
            deterministic: false,
            stability_epoch_start: 20,
            stability_epoch_end: 30,
        }
    }
}

fn parse_error(key: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        key: key.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses JSON text; an empty document means all defaults. The result is
    /// resolved and validated.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let text = if text.trim().is_empty() { "{}" } else { text };
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let message = e.inner().to_string();
            let key = unknown_field(&message).unwrap_or_else(|| e.path().to_string());
            parse_error(&key, message)
        })?;
        let cfg = cfg.resolved();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fills protocol-dependent defaults (image size and network widths).
    pub fn resolved(mut self) -> Self {
        let (shape, gen, disc): (InputShape, &[usize], &[usize]) = match self.protocol {
            ProtocolKind::Mnist => (InputShape::new(1, 28, 28), &[16, 32], &[16, 32]),
            ProtocolKind::Folder => (InputShape::new(1, 32, 32), &[16, 32, 64], &[16, 32, 64]),
            ProtocolKind::Video => {
                let s = self.patch_size;
                (
                    InputShape::new(1, s, s),
                    &[16, 32, 64, 128],
                    &[16, 32, 64, 128],
                )
            }
        };
        self.image_channels.get_or_insert(shape.channels);
        self.image_height.get_or_insert(shape.height);
        self.image_width.get_or_insert(shape.width);
        self.generator_widths.get_or_insert_with(|| gen.to_vec());
        self.discriminator_widths
            .get_or_insert_with(|| disc.to_vec());
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper_params().validate()?;
        let checks: [(&str, bool); 10] = [
            ("inlier_digit", self.inlier_digit <= 9),
            ("outlier_ratio", (0.1..=0.5).contains(&self.outlier_ratio)),
            ("inlier_classes", self.inlier_classes >= 1),
            ("max_per_class", self.max_per_class >= 1),
            ("patch_size", self.patch_size >= 1),
            ("patch_stride", self.patch_stride >= 1),
            ("checkpoint_every", self.checkpoint_every >= 1),
            (
                "g_old_epoch",
                self.g_old_epoch >= 1 && self.g_old_epoch <= self.phase1_epochs,
            ),
            ("stability_epoch_start", self.stability_epoch_start >= 1),
            (
                "stability_epoch_end",
                self.stability_epoch_end >= self.stability_epoch_start,
            ),
        ];
        if let Some((key, _)) = checks.iter().find(|(_, ok)| !ok) {
            return Err(parse_error(key, "value out of range"));
        }
        if self.g_old_strategy == GOldKind::AverageAllPrevious && self.phase1_epochs < 2 {
            return Err(parse_error(
                "g_old_strategy",
                "averaging previous generators needs at least two phase-one epochs",
            ));
        }
        if let Some(v) = &self.streams {
            v.validate()
                .map_err(|e| parse_error("streams", e.to_string()))?;
        }
        self.architecture()
            .map_err(|e| parse_error("generator_widths", e.to_string()))?;
        Ok(())
    }

    pub fn hyper_params(&self) -> HyperParams {
        HyperParams {
            lambda_recon: self.lambda_recon,
            alpha: self.alpha,
            beta: self.beta,
            noise_sigma: self.noise_sigma,
            lr_g: self.lr_g,
            lr_d_phase1: self.lr_d_phase1,
            lr_d_phase2: self.lr_d_phase2,
            phase1_epochs: self.phase1_epochs,
            phase2_iterations: self.phase2_iterations,
            tau: self.tau,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }

    pub fn image_shape(&self) -> InputShape {
        let r = self.clone().resolved();
        InputShape::new(
            r.image_channels.unwrap_or(1),
            r.image_height.unwrap_or(1),
            r.image_width.unwrap_or(1),
        )
    }

    pub fn architecture(&self) -> Result<ArchitectureSpec> {
        let r = self.clone().resolved();
        ArchitectureSpec::standard(
            self.image_shape(),
            r.generator_widths.as_deref().unwrap_or_default(),
            r.discriminator_widths.as_deref().unwrap_or_default(),
            self.kernel,
        )
    }

    pub fn g_old(&self) -> GOldStrategy {
        match self.g_old_strategy {
            GOldKind::FixedEpoch => GOldStrategy::FixedEpoch {
                epoch: self.g_old_epoch,
            },
            GOldKind::AverageAllPrevious => GOldStrategy::AverageAllPrevious,
        }
    }

    /// Phase-two streams, or `None` for the phase-one-only baseline.
    pub fn ablation_variant(&self) -> Option<AblationVariant> {
        self.streams.or_else(|| self.variant.variant())
    }

    pub fn data_root(&self) -> PathBuf {
        self.data_root
            .clone()
            .or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    pub fn mnist_options(&self) -> MnistOptions {
        MnistOptions {
            image_shape: self.image_shape(),
            max_train: self.max_train,
            max_test_inliers: self.max_test_inliers,
        }
    }

    pub fn folder_options(&self) -> FolderOptions {
        FolderOptions {
            max_per_class: self.max_per_class,
            outlier_class: self.outlier_class.clone(),
            image_shape: self.image_shape(),
        }
    }

    pub fn patch_config(&self) -> PatchConfig {
        PatchConfig {
            size: self.patch_size,
            stride: self.patch_stride,
            motion_threshold: self.motion_threshold,
        }
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_json_str(&text)
}

fn unknown_field(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_defaults() {
        let cfg = ExperimentConfig::from_json_str("  \n").unwrap();
        assert_eq!(cfg.lambda_recon, 0.2);
        assert_eq!(cfg.phase2_iterations, 75);
        assert_eq!(cfg.generator_widths.as_deref(), Some(&[16, 32][..]));
    }

    #[test]
    fn unknown_key_named() {
        match ExperimentConfig::from_json_str(r#"{"lamda": 0.3}"#) {
            Err(Error::Parse { key, .. }) => assert_eq!(key, "lamda"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn type_mismatch_and_range_named() {
        match ExperimentConfig::from_json_str(r#"{"alpha": "high"}"#) {
            Err(Error::Parse { key, .. }) => assert_eq!(key, "alpha"),
            other => panic!("unexpected {other:?}"),
        }
        match ExperimentConfig::from_json_str(r#"{"outlier_ratio": 0.7}"#) {
            Err(Error::Parse { key, .. }) => assert_eq!(key, "outlier_ratio"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig::from_json_str(r#"{"protocol": "video", "seed": 9}"#).unwrap();
        let again = ExperimentConfig::from_json_str(&cfg.to_json_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn no_bad_streams_rejected() {
        let text = r#"{"streams": {"use_real_x": true, "use_recon": true, "use_low": false,
                       "use_pseudo": false, "raw_mix_as_pseudo": false}}"#;
        match ExperimentConfig::from_json_str(text) {
            Err(Error::Parse { key, .. }) => assert_eq!(key, "streams"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
