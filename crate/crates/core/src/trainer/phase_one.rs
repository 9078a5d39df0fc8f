//! Phase one: adversarial training of the denoising generator and the
//! real-vs-reconstruction discriminator.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss_log::{LossLog, LossRecord};
use super::losses::{phase_one_discriminator_grads, phase_one_generator_grads, PhaseOneLosses};
use super::rng_stream;
use crate::batch::{Phase, Role, SampleBatch};
use crate::error::{Error, Result};
use crate::model::{
    add_noise_in_place, average_parameters, checkpoint, generator_images, ArchitectureSpec,
    HyperParams, ModelRole, ModelState, Provenance,
};
use crate::optim::Adam;
use crate::tensor::Tensor;

/// One discriminator update toward real → 0 / reconstruction → 1, then one
/// generator update on `-log(1 - D(G(X̃))) + λ · L_R` against the updated
/// discriminator.
#[allow(clippy::too_many_arguments)]
pub fn phase_one_step<R: Rng + ?Sized>(
    g: &mut ModelState,
    d: &mut ModelState,
    batch: &SampleBatch,
    hp: &HyperParams,
    opt_g: &mut Adam,
    opt_d: &mut Adam,
    rng: &mut R,
) -> Result<PhaseOneLosses> {
    if batch.role != Role::RealX {
        return Err(Error::arg(format!(
            "phase one trains on real images, got {:?}",
            batch.role
        )));
    }
    let mut noisy = batch.images.clone();
    add_noise_in_place(&mut noisy, hp.noise_sigma, rng)?;

    let recon = SampleBatch::new(generator_images(g, &noisy)?, Role::ReconXhat);
    let (d_loss, d_grads) = phase_one_discriminator_grads(d, batch, &recon)?;
    if !d_loss.is_finite() {
        return Err(Error::Numeric(format!(
            "phase-one discriminator loss is {d_loss} (provenance {:?})",
            d.provenance
        )));
    }
    opt_d.step(d, &d_grads)?;

    let (g_adv, recon_loss, g_grads) =
        phase_one_generator_grads(g, d, &batch.images, &noisy, hp.lambda_recon)?;
    let losses = PhaseOneLosses {
        d_loss,
        g_adv,
        recon: recon_loss,
    };
    if !losses.all_finite() {
        return Err(Error::Numeric(format!(
            "phase-one losses not finite: {losses:?} (provenance {:?})",
            g.provenance
        )));
    }
    opt_g.step(g, &g_grads)?;
    Ok(losses)
}

/// Per-epoch generator and discriminator snapshots (index `e - 1` holds the
/// state after epoch `e`) and the per-step loss trace.
#[derive(Debug, Clone)]
pub struct PhaseOneResult {
    pub generators: Vec<ModelState>,
    pub discriminators: Vec<ModelState>,
    pub losses: Vec<LossRecord>,
    /// Checkpoint directories written, per epoch, when persistence was on.
    pub generator_paths: Vec<PathBuf>,
    pub discriminator_paths: Vec<PathBuf>,
}

impl PhaseOneResult {
    pub fn epochs(&self) -> usize {
        self.generators.len()
    }

    pub fn generator_at(&self, epoch: usize) -> Result<&ModelState> {
        epoch
            .checked_sub(1)
            .and_then(|i| self.generators.get(i))
            .ok_or_else(|| Error::arg(format!("no generator snapshot for epoch {epoch}")))
    }

    pub fn discriminator_at(&self, epoch: usize) -> Result<&ModelState> {
        epoch
            .checked_sub(1)
            .and_then(|i| self.discriminators.get(i))
            .ok_or_else(|| Error::arg(format!("no discriminator snapshot for epoch {epoch}")))
    }

    /// Mean reconstruction loss over the steps of one epoch.
    pub fn epoch_recon_loss(&self, epoch: usize) -> Option<f64> {
        let v: Vec<f64> = self
            .losses
            .iter()
            .filter(|r| r.epoch == epoch)
            .filter_map(|r| r.components.get("recon").copied())
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Debug, Clone, Default)]
pub struct PhaseOneOptions {
    /// Directory receiving `generator/epoch_NNN` and
    /// `discriminator/epoch_NNN` checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
    /// Line-delimited loss trace to append to.
    pub loss_log: Option<PathBuf>,
}

pub fn epoch_dir(root: &Path, role: ModelRole, epoch: usize) -> PathBuf {
    let role = match role {
        ModelRole::Generator => "generator",
        ModelRole::Discriminator => "discriminator",
    };
    root.join(role).join(format!("epoch_{epoch:03}"))
}

/// Trains both networks for `hp.phase1_epochs` epochs over `train` with
/// shuffled mini-batches. Initialization, shuffling and noise all derive
/// from `hp.seed`.
pub fn run_phase_one(
    arch: &ArchitectureSpec,
    train: &Tensor,
    hp: &HyperParams,
    opts: &PhaseOneOptions,
) -> Result<PhaseOneResult> {
    hp.validate()?;
    if train.batch_size() == 0 {
        return Err(Error::arg("phase one needs a non-empty training set"));
    }
    let mut rng = rng_stream(hp.seed, 1);
    let mut g = ModelState::init("generator", ModelRole::Generator, arch.clone(), &mut rng)?;
    let mut d = ModelState::init(
        "discriminator",
        ModelRole::Discriminator,
        arch.clone(),
        &mut rng,
    )?;
    let mut opt_g = Adam::new(hp.lr_g, &g);
    let mut opt_d = Adam::new(hp.lr_d_phase1, &d);
    let mut log = opts.loss_log.as_deref().map(LossLog::append).transpose()?;

    let mut result = PhaseOneResult {
        generators: Vec::with_capacity(hp.phase1_epochs),
        discriminators: Vec::with_capacity(hp.phase1_epochs),
        losses: Vec::new(),
        generator_paths: Vec::new(),
        discriminator_paths: Vec::new(),
    };
    let mut order: Vec<usize> = (0..train.batch_size()).collect();
    let mut iteration = 0;
    for epoch in 1..=hp.phase1_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(hp.batch_size) {
            iteration += 1;
            g.provenance = Provenance::new(Phase::One, epoch, iteration);
            d.provenance = g.provenance;
            let batch = SampleBatch::new(train.select(chunk), Role::RealX);
            let l = phase_one_step(&mut g, &mut d, &batch, hp, &mut opt_g, &mut opt_d, &mut rng)?;
            let record = LossRecord {
                iteration,
                phase: Phase::One,
                epoch,
                components: IndexMap::from([
                    ("d_loss".to_string(), l.d_loss),
                    ("g_adv".to_string(), l.g_adv),
                    ("recon".to_string(), l.recon),
                ]),
            };
            if let Some(log) = log.as_mut() {
                log.write(&record)?;
            }
            result.losses.push(record);
        }
        let tag = Provenance::new(Phase::One, epoch, iteration);
        let gs = g.snapshot(tag);
        let ds = d.snapshot(tag);
        if let Some(root) = &opts.checkpoint_dir {
            let gp = epoch_dir(root, ModelRole::Generator, epoch);
            let dp = epoch_dir(root, ModelRole::Discriminator, epoch);
            checkpoint::save(&gs, &gp)?;
            checkpoint::save(&ds, &dp)?;
            result.generator_paths.push(gp);
            result.discriminator_paths.push(dp);
        }
        log::debug!(
            "phase one epoch {epoch}: recon {:.5}",
            result.epoch_recon_loss(epoch).unwrap_or(f64::NAN)
        );
        result.generators.push(gs);
        result.discriminators.push(ds);
    }
    if let Some(log) = log.as_mut() {
        log.flush()?;
    }
    Ok(result)
}

/// How the old generator is obtained from phase-one snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum GOldStrategy {
    /// The generator snapshot after epoch `epoch` (1-based).
    FixedEpoch { epoch: usize },
    /// Uniform parameter mean of every snapshot before the current epoch.
    AverageAllPrevious,
}

impl Default for GOldStrategy {
    fn default() -> Self {
        GOldStrategy::FixedEpoch { epoch: 1 }
    }
}

/// Builds `G_old` for a phase-two run whose current generator is the
/// snapshot of `current_epoch`.
pub fn build_g_old(
    generators: &[ModelState],
    strategy: GOldStrategy,
    current_epoch: usize,
) -> Result<ModelState> {
    let mut g_old = match strategy {
        GOldStrategy::FixedEpoch { epoch } => epoch
            .checked_sub(1)
            .and_then(|i| generators.get(i))
            .cloned()
            .ok_or_else(|| {
                Error::arg(format!(
                    "G_old epoch {epoch} not in 1..={}",
                    generators.len()
                ))
            })?,
        GOldStrategy::AverageAllPrevious => {
            if current_epoch < 2 || current_epoch - 1 > generators.len() {
                return Err(Error::arg(format!(
                    "averaging needs snapshots 1..{} but {} exist",
                    current_epoch.saturating_sub(1),
                    generators.len()
                )));
            }
            average_parameters(&generators[..current_epoch - 1])?
        }
    };
    g_old.name = "g_old".into();
    Ok(g_old)
}
