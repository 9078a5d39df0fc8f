use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{compute_auc, reconstruct, scores_of, EvalSet};
use crate::error::{Error, Result};
use crate::model::HyperParams;
use crate::tensor::Tensor;
use crate::trainer::{
    build_g_old, run_phase_two, AblationVariant, GOldStrategy, PhaseOneResult, PhaseTwoOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub epoch: usize,
    /// Phase-two iteration; 0 is the phase-one (baseline) discriminator.
    pub iteration: usize,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityOptions {
    pub epochs: RangeInclusive<usize>,
    pub checkpoint_every: usize,
    pub variant: AblationVariant,
    pub g_old: GOldStrategy,
}

/// For every phase-one epoch in range, runs phase two from that epoch's
/// generator and discriminator and records the test AUC at each phase-two
/// checkpoint. Iteration 0 rows are the baseline AUCs.
pub fn stability_sweep(
    phase_one: &PhaseOneResult,
    train: &Tensor,
    eval: &EvalSet,
    hp: &HyperParams,
    opts: &StabilityOptions,
) -> Result<Vec<StabilityRow>> {
    if opts.epochs.is_empty() {
        return Err(Error::arg("empty epoch range"));
    }
    let p2 = PhaseTwoOptions {
        checkpoint_every: opts.checkpoint_every,
        ..Default::default()
    };
    let mut rows = Vec::new();
    for epoch in opts.epochs.clone() {
        let g = phase_one.generator_at(epoch)?;
        let d = phase_one.discriminator_at(epoch)?;
        let g_old = build_g_old(&phase_one.generators, opts.g_old, epoch)?;
        // Test reconstructions depend on the generator only, which phase two
        // leaves untouched.
        let recon = reconstruct(g, &eval.items)?;
        let run = run_phase_two(g, &g_old, d, train, hp, &opts.variant, &p2)?;
        for ck in &run.checkpoints {
            let scores = scores_of(ck, &recon)?;
            rows.push(StabilityRow {
                epoch,
                iteration: ck.provenance.iteration,
                auc: compute_auc(&eval.records(&scores)?)?,
            });
        }
        log::info!(
            "stability epoch {epoch}: baseline {:.4}, final {:.4}",
            rows[rows.len() - run.checkpoints.len()].auc,
            rows[rows.len() - 1].auc
        );
    }
    Ok(rows)
}

/// Baseline (iteration 0) and final-iteration AUC per epoch, in epoch order.
pub fn baseline_and_final(rows: &[StabilityRow]) -> (Vec<f64>, Vec<f64>) {
    let mut epochs: Vec<usize> = rows.iter().map(|r| r.epoch).collect();
    epochs.dedup();
    let mut base = Vec::new();
    let mut last = Vec::new();
    for e in epochs {
        let of_epoch: Vec<&StabilityRow> = rows.iter().filter(|r| r.epoch == e).collect();
        if let Some(b) = of_epoch.iter().find(|r| r.iteration == 0) {
            base.push(b.auc);
        }
        if let Some(f) = of_epoch.iter().max_by_key(|r| r.iteration) {
            last.push(f.auc);
        }
    }
    (base, last)
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// CSV with columns `epoch, iteration, auc`.
pub fn write_stability_csv(rows: &[StabilityRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_stability_csv(path: &Path) -> Result<Vec<StabilityRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()?)
}
