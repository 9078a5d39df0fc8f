//! Image batches tagged with the stream they belong to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Training phase. Determines how stream roles map to discriminator targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    One,
    Two,
}

/// Which stream of the pipeline a batch of images came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Clean training images `X`.
    RealX,
    /// `X` plus clamped Gaussian noise.
    NoisyX,
    /// Current-generator reconstructions `G(X)` or `G(X̃)`.
    ReconXhat,
    /// Old-generator reconstructions `G_old(X)`.
    LowXhat,
    /// Pixel mean of two old-generator reconstructions.
    PseudoMixXbar,
    /// Current-generator reconstruction of a pseudo-anomaly mix.
    PseudoReconXpseudo,
}

impl Role {
    /// Discriminator target for this stream in the given phase, or `None`
    /// when the stream is never shown to the discriminator in that phase.
    ///
    /// Phase one: real → 0, reconstruction → 1.
    /// Phase two: real and reconstruction → 0, low-quality and
    /// pseudo-anomaly → 1. A raw pseudo-anomaly mix fed in place of its
    /// reconstruction (the raw-mix ablation) is a bad example as well.
    pub fn quasi_gt(self, phase: Phase) -> Option<u8> {
        match (phase, self) {
            (Phase::One, Role::RealX) => Some(0),
            (Phase::One, Role::ReconXhat) => Some(1),
            (Phase::One, _) => None,
            (Phase::Two, Role::RealX | Role::ReconXhat) => Some(0),
            (Phase::Two, Role::LowXhat | Role::PseudoReconXpseudo | Role::PseudoMixXbar) => Some(1),
            (Phase::Two, Role::NoisyX) => None,
        }
    }
}

/// Ground-truth class of an evaluation item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Inlier,
    Outlier,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Inlier => "inlier",
            Label::Outlier => "outlier",
        }
    }

    pub fn is_outlier(self) -> bool {
        self == Label::Outlier
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inlier" | "0" => Ok(Label::Inlier),
            "outlier" | "1" => Ok(Label::Outlier),
            _ => Err(Error::arg(format!("unknown label `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub images: Tensor,
    pub role: Role,
}

impl SampleBatch {
    pub fn new(images: Tensor, role: Role) -> Self {
        SampleBatch { images, role }
    }

    pub fn len(&self) -> usize {
        self.images.batch_size()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn quasi_gt(&self, phase: Phase) -> Option<u8> {
        self.role.quasi_gt(phase)
    }

    /// Errors unless every value lies in the image range `[0, 1]`.
    pub fn check_range(&self) -> Result<()> {
        match self
            .images
            .data()
            .iter()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            Some(v) => Err(Error::arg(format!(
                "{:?} batch has value {v} outside [0, 1]",
                self.role
            ))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_one_targets() {
        assert_eq!(Role::RealX.quasi_gt(Phase::One), Some(0));
        assert_eq!(Role::ReconXhat.quasi_gt(Phase::One), Some(1));
        assert_eq!(Role::LowXhat.quasi_gt(Phase::One), None);
        assert_eq!(Role::PseudoReconXpseudo.quasi_gt(Phase::One), None);
    }

    #[test]
    fn phase_two_targets() {
        assert_eq!(Role::RealX.quasi_gt(Phase::Two), Some(0));
        assert_eq!(Role::ReconXhat.quasi_gt(Phase::Two), Some(0));
        assert_eq!(Role::LowXhat.quasi_gt(Phase::Two), Some(1));
        assert_eq!(Role::PseudoReconXpseudo.quasi_gt(Phase::Two), Some(1));
        assert_eq!(Role::PseudoMixXbar.quasi_gt(Phase::Two), Some(1));
        assert_eq!(Role::NoisyX.quasi_gt(Phase::Two), None);
    }
}
