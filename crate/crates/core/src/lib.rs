//! Two-phase adversarial one-class classification.
//!
//! A denoising autoencoder (the generator) and a discriminator are first
//! trained adversarially on inlier data only. The discriminator is then
//! retargeted, with the generator frozen, to separate good reconstructions
//! (real images and current-generator reconstructions) from bad ones (an old
//! generator state and synthesized pseudo-anomalies). At test time the
//! anomaly score of an input `x` is `D(G(x))`.
//!
//! Module map:
//! - [`model`]: architectures, parameter states, forward/backward passes,
//!   snapshotting, averaging and the checkpoint archive format.
//! - [`trainer`]: phase-one adversarial training, pseudo-anomaly synthesis and
//!   phase-two discriminator retargeting, including ablation variants.
//! - [`data`]: MNIST, class-folder and video-patch evaluation protocols.
//! - [`eval`]: anomaly scoring, frame aggregation, AUC/EER/F1, stability sweeps.
//! - [`experiment`]: configuration, run manifests and the CLI commands.

pub mod batch;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod trainer;

pub use batch::{Label, Phase, Role, SampleBatch};
pub use error::{Error, Result};
pub use model::{ArchitectureSpec, HyperParams, ModelRole, ModelState, Provenance};
pub use tensor::Tensor;
