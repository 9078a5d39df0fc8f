//! Phase two: the generators are frozen and only the discriminator is
//! updated, toward good (real, current reconstruction) → 0 and bad
//! (old-generator reconstruction, pseudo-anomaly reconstruction) → 1.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss_log::{LossLog, LossRecord};
use super::losses::{phase_two_grads, PhaseTwoStreams};
use super::pseudo::{mix_pairs, sample_pairs};
use super::rng_stream;
use crate::batch::{Phase, Role, SampleBatch};
use crate::error::{Error, Result};
use crate::model::{checkpoint, generator_images, HyperParams, ModelRole, ModelState, Provenance};
use crate::optim::Adam;
use crate::tensor::Tensor;

/// Which streams feed the phase-two discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub use_real_x: bool,
    pub use_recon: bool,
    pub use_low: bool,
    pub use_pseudo: bool,
    /// Feed the raw mix `X̄` as the pseudo-anomaly stream instead of `G(X̄)`.
    pub raw_mix_as_pseudo: bool,
}

impl AblationVariant {
    pub const FULL: AblationVariant = AblationVariant {
        use_real_x: true,
        use_recon: true,
        use_low: true,
        use_pseudo: true,
        raw_mix_as_pseudo: false,
    };

    pub fn validate(&self) -> Result<()> {
        if self.use_pseudo && self.raw_mix_as_pseudo {
            return Err(Error::arg(
                "use_pseudo and raw_mix_as_pseudo both claim the pseudo-anomaly stream",
            ));
        }
        if !(self.use_real_x || self.use_recon) {
            return Err(Error::arg("variant has no good-example stream"));
        }
        if !(self.use_low || self.use_pseudo || self.raw_mix_as_pseudo) {
            return Err(Error::arg("variant has no bad-example stream"));
        }
        Ok(())
    }

    fn needs_low(&self) -> bool {
        self.use_low || self.use_pseudo || self.raw_mix_as_pseudo
    }
}

impl Default for AblationVariant {
    fn default() -> Self {
        AblationVariant::FULL
    }
}

/// Named ablation configurations. `Baseline` is the phase-one model with no
/// phase two at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationPreset {
    Baseline,
    NoReal,
    NoPseudo,
    NoLow,
    RawMix,
    Full,
}

impl AblationPreset {
    pub const ALL: [AblationPreset; 6] = [
        AblationPreset::Baseline,
        AblationPreset::NoReal,
        AblationPreset::NoPseudo,
        AblationPreset::NoLow,
        AblationPreset::RawMix,
        AblationPreset::Full,
    ];

    pub fn variant(self) -> Option<AblationVariant> {
        let v = |use_real_x, use_recon, use_low, use_pseudo, raw_mix_as_pseudo| AblationVariant {
            use_real_x,
            use_recon,
            use_low,
            use_pseudo,
            raw_mix_as_pseudo,
        };
        match self {
            AblationPreset::Baseline => None,
            AblationPreset::NoReal => Some(v(false, true, true, false, false)),
            AblationPreset::NoPseudo => Some(v(true, true, true, false, false)),
            AblationPreset::NoLow => Some(v(true, true, false, true, false)),
            AblationPreset::RawMix => Some(v(true, true, true, false, true)),
            AblationPreset::Full => Some(AblationVariant::FULL),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AblationPreset::Baseline => "baseline",
            AblationPreset::NoReal => "no_real",
            AblationPreset::NoPseudo => "no_pseudo",
            AblationPreset::NoLow => "no_low",
            AblationPreset::RawMix => "raw_mix",
            AblationPreset::Full => "full",
        }
    }
}

impl fmt::Display for AblationPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown variant `{s}`")))
    }
}

/// One discriminator update on the given streams; the generators are not
/// touched (they are not even reachable from here).
pub fn phase_two_step(
    d: &mut ModelState,
    streams: &PhaseTwoStreams,
    hp: &HyperParams,
    opt_d: &mut Adam,
) -> Result<f64> {
    let (loss, grads) = phase_two_grads(d, streams, hp.alpha, hp.beta)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "phase-two loss is {loss} (provenance {:?})",
            d.provenance
        )));
    }
    opt_d.step(d, &grads)?;
    Ok(loss)
}

/// Builds the phase-two streams for one batch of real images.
pub fn build_streams<R: Rng + ?Sized>(
    g: &ModelState,
    g_old: &ModelState,
    real: &Tensor,
    variant: &AblationVariant,
    rng: &mut R,
) -> Result<PhaseTwoStreams> {
    variant.validate()?;
    let mut streams = PhaseTwoStreams::default();
    if variant.use_real_x {
        streams.real = Some(SampleBatch::new(real.clone(), Role::RealX));
    }
    if variant.use_recon {
        streams.recon = Some(SampleBatch::new(
            generator_images(g, real)?,
            Role::ReconXhat,
        ));
    }
    if variant.needs_low() {
        let low = generator_images(g_old, real)?;
        if variant.use_pseudo || variant.raw_mix_as_pseudo {
            let pairs = sample_pairs(real.batch_size(), rng)?;
            let xbar = mix_pairs(&low, &pairs)?;
            streams.pseudo = Some(if variant.raw_mix_as_pseudo {
                SampleBatch::new(xbar, Role::PseudoMixXbar)
            } else {
                SampleBatch::new(generator_images(g, &xbar)?, Role::PseudoReconXpseudo)
            });
        }
        if variant.use_low {
            streams.low = Some(SampleBatch::new(low, Role::LowXhat));
        }
    }
    Ok(streams)
}

#[derive(Debug, Clone)]
pub struct PhaseTwoResult {
    pub discriminator: ModelState,
    /// Discriminator at iteration 0 and then every checkpoint interval,
    /// always including the final iteration.
    pub checkpoints: Vec<ModelState>,
    pub checkpoint_paths: Vec<PathBuf>,
    pub losses: Vec<LossRecord>,
}

#[derive(Debug, Clone)]
pub struct PhaseTwoOptions {
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub loss_log: Option<PathBuf>,
}

impl Default for PhaseTwoOptions {
    fn default() -> Self {
        PhaseTwoOptions {
            checkpoint_every: 5,
            checkpoint_dir: None,
            loss_log: None,
        }
    }
}

pub fn iteration_dir(root: &Path, iteration: usize) -> PathBuf {
    root.join(format!("iter_{iteration:04}"))
}

/// Iterations at which a phase-two checkpoint is taken.
pub fn checkpoint_iterations(iterations: usize, every: usize) -> Vec<usize> {
    let every = every.max(1);
    let mut its: Vec<usize> = (0..=iterations).step_by(every).collect();
    if its.last() != Some(&iterations) {
        its.push(iterations);
    }
    its
}

/// Retargets `d` for `hp.phase2_iterations` iterations with learning rate
/// `hp.lr_d_phase2`. Each iteration draws `hp.batch_size` real images
/// without replacement and derives equally sized streams from them.
pub fn run_phase_two(
    g: &ModelState,
    g_old: &ModelState,
    d: &ModelState,
    train: &Tensor,
    hp: &HyperParams,
    variant: &AblationVariant,
    opts: &PhaseTwoOptions,
) -> Result<PhaseTwoResult> {
    variant.validate()?;
    hp.validate()?;
    if g.role != ModelRole::Generator || g_old.role != ModelRole::Generator {
        return Err(Error::config(
            "phase two needs a generator and an old generator",
        ));
    }
    if train.batch_size() < 2 {
        return Err(Error::arg("phase two needs at least two training images"));
    }
    let mut rng = rng_stream(hp.seed, 2);
    let mut d = d.clone();
    d.name = "discriminator".into();
    let epoch = g.provenance.epoch;
    let mut opt = Adam::new(hp.lr_d_phase2, &d);
    let mut log = opts.loss_log.as_deref().map(LossLog::append).transpose()?;
    let schedule = checkpoint_iterations(hp.phase2_iterations, opts.checkpoint_every);

    let mut result = PhaseTwoResult {
        discriminator: d.clone(),
        checkpoints: Vec::with_capacity(schedule.len()),
        checkpoint_paths: Vec::new(),
        losses: Vec::new(),
    };
    let take_checkpoint = |d: &ModelState, it: usize, result: &mut PhaseTwoResult| -> Result<()> {
        let snap = d.snapshot(Provenance::new(Phase::Two, epoch, it));
        if let Some(root) = &opts.checkpoint_dir {
            let path = iteration_dir(root, it);
            checkpoint::save(&snap, &path)?;
            result.checkpoint_paths.push(path);
        }
        result.checkpoints.push(snap);
        Ok(())
    };
    take_checkpoint(&d, 0, &mut result)?;

    let batch = hp.batch_size.min(train.batch_size());
    for it in 1..=hp.phase2_iterations {
        let rows = index::sample(&mut rng, train.batch_size(), batch).into_vec();
        let real = train.select(&rows);
        let streams = build_streams(g, g_old, &real, variant, &mut rng)?;
        d.provenance = Provenance::new(Phase::Two, epoch, it);
        let loss = phase_two_step(&mut d, &streams, hp, &mut opt)?;
        let record = LossRecord {
            iteration: it,
            phase: Phase::Two,
            epoch,
            components: IndexMap::from([("d_loss".to_string(), loss)]),
        };
        if let Some(log) = log.as_mut() {
            log.write(&record)?;
        }
        result.losses.push(record);
        if schedule.binary_search(&it).is_ok() {
            take_checkpoint(&d, it, &mut result)?;
        }
    }
    if let Some(log) = log.as_mut() {
        log.flush()?;
    }
    result.discriminator = d;
    Ok(result)
}
