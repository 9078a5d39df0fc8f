//! Loss terms of both phases with their parameter gradients.
//!
//! Discriminator targets follow the inverted convention: 0 for "real / good",
//! 1 for "reconstructed / bad". Every `log` argument is floored at
//! [`LOG_EPS`]; below the floor the term is constant and has zero gradient.

use serde::{Deserialize, Serialize};

use crate::batch::{Phase, Role, SampleBatch};
use crate::error::{Error, Result};
use crate::model::{zero_grads, ModelRole, ModelState, Network, ParamMap};
use crate::tensor::Tensor;

pub const LOG_EPS: f64 = 1e-7;

fn floored_log(p: f64) -> (f64, f64) {
    if p < LOG_EPS {
        (LOG_EPS.ln(), 0.0)
    } else {
        (p.ln(), 1.0 / p)
    }
}

/// `-weight · mean(log(s))` for target 1, `-weight · mean(log(1 - s))` for
/// target 0. Empty score lists contribute nothing.
pub fn stream_loss(scores: &[f64], target: u8, weight: f64) -> f64 {
    stream_loss_grad(scores, target, weight).0
}

/// Loss and its derivative w.r.t. each score.
pub(crate) fn stream_loss_grad(scores: &[f64], target: u8, weight: f64) -> (f64, Vec<f64>) {
    if scores.is_empty() {
        return (0.0, Vec::new());
    }
    let n = scores.len() as f64;
    let mut loss = 0.0;
    let grads = scores
        .iter()
        .map(|&s| {
            if target == 1 {
                let (l, d) = floored_log(s);
                loss -= l;
                -weight * d / n
            } else {
                let (l, d) = floored_log(1.0 - s);
                loss -= l;
                weight * d / n
            }
        })
        .collect();
    (weight * loss / n, grads)
}

/// Components reported by one phase-one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseOneLosses {
    /// Discriminator loss on real (target 0) and reconstructed (target 1)
    /// images.
    pub d_loss: f64,
    /// Non-saturating generator adversarial loss `-mean log(1 - D(G(X̃)))`.
    pub g_adv: f64,
    /// Reconstruction error `‖X - G(X̃)‖²`, batch mean of per-image sums.
    pub recon: f64,
}

impl PhaseOneLosses {
    /// Evaluates the phase-one terms from discriminator scores on real images
    /// and on reconstructions and a given reconstruction error.
    pub fn from_scores(real: &[f64], recon_scores: &[f64], recon: f64) -> Self {
        PhaseOneLosses {
            d_loss: stream_loss(real, 0, 1.0) + stream_loss(recon_scores, 1, 1.0),
            g_adv: stream_loss(recon_scores, 0, 1.0),
            recon,
        }
    }

    /// Generator objective `g_adv + λ · recon`.
    pub fn generator_total(&self, lambda_recon: f64) -> f64 {
        self.g_adv + lambda_recon * self.recon
    }

    pub fn all_finite(&self) -> bool {
        self.d_loss.is_finite() && self.g_adv.is_finite() && self.recon.is_finite()
    }
}

fn target_for(batch: &SampleBatch, phase: Phase) -> Result<u8> {
    batch.quasi_gt(phase).ok_or_else(|| {
        Error::arg(format!(
            "{:?} images are never shown to the discriminator in phase {phase:?}",
            batch.role
        ))
    })
}

/// Runs the discriminator over several labelled streams in one pass and
/// back-propagates `Σ_k weight_k · stream_loss_k`.
fn weighted_streams_grads(
    d: &ModelState,
    streams: &[(&Tensor, u8, f64)],
) -> Result<(f64, Vec<Vec<f64>>, ParamMap)> {
    let parts: Vec<&Tensor> = streams.iter().map(|(t, ..)| *t).collect();
    let all = Tensor::concat(&parts)?;
    let net = Network::for_model(d)?;
    let trace = net.forward_traced(&d.params, &all)?;
    let scores = trace.output().data();

    let mut loss = 0.0;
    let mut dscores = Vec::with_capacity(scores.len());
    let mut per_stream = Vec::with_capacity(streams.len());
    let mut offset = 0;
    for (t, target, weight) in streams {
        let s = &scores[offset..offset + t.batch_size()];
        let (l, g) = stream_loss_grad(s, *target, *weight);
        loss += l;
        dscores.extend(g);
        per_stream.push(s.to_vec());
        offset += t.batch_size();
    }
    let grad_out = Tensor::from_vec(trace.output().shape(), dscores)?;
    let mut grads = zero_grads(d);
    net.backward(&d.params, &trace, &grad_out, Some(&mut grads))?;
    Ok((loss, per_stream, grads))
}

/// Phase-one discriminator loss and gradient for a real batch and a batch of
/// (detached) reconstructions.
pub fn phase_one_discriminator_grads(
    d: &ModelState,
    real: &SampleBatch,
    recon: &SampleBatch,
) -> Result<(f64, ParamMap)> {
    check_discriminator(d)?;
    if real.role != Role::RealX || recon.role != Role::ReconXhat {
        return Err(Error::arg(
            "phase-one discriminator needs real and reconstruction batches",
        ));
    }
    let streams = [
        (&real.images, target_for(real, Phase::One)?, 1.0),
        (&recon.images, target_for(recon, Phase::One)?, 1.0),
    ];
    let (loss, _, grads) = weighted_streams_grads(d, &streams)?;
    Ok((loss, grads))
}

/// Phase-one generator objective `-mean log(1 - D(G(X̃))) + λ · mean ‖X - G(X̃)‖²`
/// and its gradient w.r.t. the generator parameters. Returns the adversarial
/// and reconstruction components separately.
pub fn phase_one_generator_grads(
    g: &ModelState,
    d: &ModelState,
    real: &Tensor,
    noisy: &Tensor,
    lambda_recon: f64,
) -> Result<(f64, f64, ParamMap)> {
    check_discriminator(d)?;
    if g.role != ModelRole::Generator {
        return Err(Error::config(format!("`{}` is not a generator", g.name)));
    }
    if real.shape() != noisy.shape() {
        return Err(Error::config("real and noisy batches differ in shape"));
    }
    let g_net = Network::for_model(g)?;
    let d_net = Network::for_model(d)?;
    let g_trace = g_net.forward_traced(&g.params, noisy)?;
    let xhat = g_trace.output();
    let d_trace = d_net.forward_traced(&d.params, xhat)?;
    let (adv, dscores) = stream_loss_grad(d_trace.output().data(), 0, 1.0);
    let dscores = Tensor::from_vec(d_trace.output().shape(), dscores)?;
    let mut dxhat = d_net.backward(&d.params, &d_trace, &dscores, None)?;

    // Squared L2 norm per image, averaged over the batch.
    let n = xhat.batch_size() as f64;
    let mut recon = 0.0;
    for ((gx, &y), &x) in dxhat
        .data_mut()
        .iter_mut()
        .zip(xhat.data())
        .zip(real.data())
    {
        let diff = y - x;
        recon += diff * diff;
        *gx += lambda_recon * 2.0 * diff / n;
    }
    recon /= n;

    let mut grads = zero_grads(g);
    g_net.backward(&g.params, &g_trace, &dxhat, Some(&mut grads))?;
    Ok((adv, recon, grads))
}

/// The four discriminator input streams of phase two. `None` (or an empty
/// batch) removes that term from the objective entirely.
#[derive(Debug, Clone, Default)]
pub struct PhaseTwoStreams {
    /// Real images `X` (target 0, weight α).
    pub real: Option<SampleBatch>,
    /// Current-generator reconstructions `G(X)` (target 0, weight 1 - α).
    pub recon: Option<SampleBatch>,
    /// Old-generator reconstructions `G_old(X)` (target 1, weight β).
    pub low: Option<SampleBatch>,
    /// Pseudo-anomaly reconstructions `G(X̄)`, or the raw mix `X̄` in the
    /// raw-mix ablation (target 1, weight 1 - β).
    pub pseudo: Option<SampleBatch>,
}

impl PhaseTwoStreams {
    fn weighted(&self, alpha: f64, beta: f64) -> Result<Vec<(&Tensor, u8, f64)>> {
        let slots: [(&Option<SampleBatch>, &[Role], f64); 4] = [
            (&self.real, &[Role::RealX], alpha),
            (&self.recon, &[Role::ReconXhat], 1.0 - alpha),
            (&self.low, &[Role::LowXhat], beta),
            (
                &self.pseudo,
                &[Role::PseudoReconXpseudo, Role::PseudoMixXbar],
                1.0 - beta,
            ),
        ];
        let mut out = Vec::new();
        for (slot, roles, weight) in slots {
            let Some(batch) = slot else { continue };
            if !roles.contains(&batch.role) {
                return Err(Error::arg(format!(
                    "{:?} batch placed in a phase-two slot expecting {roles:?}",
                    batch.role
                )));
            }
            if batch.is_empty() {
                continue;
            }
            out.push((&batch.images, target_for(batch, Phase::Two)?, weight));
        }
        if out.is_empty() {
            return Err(Error::arg("phase two needs at least one non-empty stream"));
        }
        Ok(out)
    }
}

/// Negated phase-two objective
/// `-(α·E log(1-D(X)) + (1-α)·E log(1-D(X̂)) + β·E log D(X̂_low) + (1-β)·E log D(X̂_pseudo))`
/// and its gradient w.r.t. the discriminator parameters.
pub fn phase_two_grads(
    d: &ModelState,
    streams: &PhaseTwoStreams,
    alpha: f64,
    beta: f64,
) -> Result<(f64, ParamMap)> {
    check_discriminator(d)?;
    let weighted = streams.weighted(alpha, beta)?;
    let (loss, _, grads) = weighted_streams_grads(d, &weighted)?;
    Ok((loss, grads))
}

/// Phase-two loss from per-stream discriminator scores.
pub fn phase_two_loss_from_scores(
    real: &[f64],
    recon: &[f64],
    low: &[f64],
    pseudo: &[f64],
    alpha: f64,
    beta: f64,
) -> f64 {
    stream_loss(real, 0, alpha)
        + stream_loss(recon, 0, 1.0 - alpha)
        + stream_loss(low, 1, beta)
        + stream_loss(pseudo, 1, 1.0 - beta)
}

fn check_discriminator(d: &ModelState) -> Result<()> {
    if d.role != ModelRole::Discriminator {
        return Err(Error::config(format!(
            "`{}` is not a discriminator",
            d.name
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn half_scores_give_two_ln_two() {
        let h = [0.5, 0.5, 0.5];
        let l = PhaseOneLosses::from_scores(&h, &h, 0.04);
        assert!((l.d_loss - 2.0 * LN2).abs() < 1e-12);
        assert!((l.generator_total(0.2) - (l.g_adv + 0.008)).abs() < 1e-12);
        for (a, b) in [(0.1, 0.001), (0.5, 0.5), (0.9, 0.3)] {
            let p2 = phase_two_loss_from_scores(&h, &h, &h, &h, a, b);
            assert!((p2 - 2.0 * LN2).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_scores_give_zero_loss() {
        let l = PhaseOneLosses::from_scores(&[0.0, 0.0], &[1.0], 0.0);
        assert_eq!(l.d_loss, 0.0);
        assert_eq!(l.recon, 0.0);
        assert_eq!(
            phase_two_loss_from_scores(&[0.0], &[0.0], &[1.0], &[1.0], 0.1, 0.001),
            0.0
        );
    }

    #[test]
    fn floor_caps_log() {
        let l = stream_loss(&[0.0], 1, 1.0);
        assert!((l + LOG_EPS.ln()).abs() < 1e-12);
        let (_, g) = stream_loss_grad(&[0.0], 1, 1.0);
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn empty_stream_is_removed_term() {
        let s = [0.3, 0.6];
        let with_empty = phase_two_loss_from_scores(&s, &s, &[], &s, 0.1, 0.001);
        let manual = stream_loss(&s, 0, 0.1) + stream_loss(&s, 0, 0.9) + stream_loss(&s, 1, 0.999);
        assert_eq!(with_empty, manual);
    }
}
