//! Pseudo-anomaly synthesis: the pixel mean of two old-generator
//! reconstructions of distinct training images, optionally passed through the
//! current generator.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::batch::{Role, SampleBatch};
use crate::error::{Error, Result};
use crate::model::{generator_images, ModelState};
use crate::tensor::Tensor;

/// Averages rows `i` and `j` of `low` for every `(i, j)` pair.
pub fn mix_pairs(low: &Tensor, pairs: &[(usize, usize)]) -> Result<Tensor> {
    let n = low.batch_size();
    let mut out = Tensor::zeros([pairs.len(), low.shape()[1], low.shape()[2], low.shape()[3]]);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        if i == j {
            return Err(Error::arg(format!(
                "pseudo-anomaly pair uses index {i} twice"
            )));
        }
        if i >= n || j >= n {
            return Err(Error::arg(format!(
                "pair ({i}, {j}) out of range for {n} images"
            )));
        }
        let (a, b) = (low.item(i), low.item(j));
        for ((o, &x), &y) in out.item_mut(k).iter_mut().zip(a).zip(b) {
            *o = (x + y) / 2.0;
        }
    }
    Ok(out)
}

/// `X̄ = (G_old(x_i) + G_old(x_j)) / 2` for each pair of rows of `train`.
pub fn make_pseudo_anomaly(
    g_old: &ModelState,
    train: &Tensor,
    pairs: &[(usize, usize)],
) -> Result<SampleBatch> {
    if let Some(&(i, _)) = pairs.iter().find(|(i, j)| i == j) {
        return Err(Error::arg(format!(
            "pseudo-anomaly pair uses index {i} twice"
        )));
    }
    // Reconstruct only the rows that take part.
    let mut rows: Vec<usize> = pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
    rows.sort_unstable();
    rows.dedup();
    if let Some(&bad) = rows.iter().find(|&&r| r >= train.batch_size()) {
        return Err(Error::arg(format!("row {bad} out of range")));
    }
    let low = generator_images(g_old, &train.select(&rows))?;
    let local = |r: usize| rows.binary_search(&r).unwrap();
    let remapped: Vec<(usize, usize)> = pairs.iter().map(|&(i, j)| (local(i), local(j))).collect();
    Ok(SampleBatch::new(
        mix_pairs(&low, &remapped)?,
        Role::PseudoMixXbar,
    ))
}

/// `X̂_pseudo = G(X̄)`, without input noise.
pub fn reconstruct_pseudo(g: &ModelState, xbar: &SampleBatch) -> Result<SampleBatch> {
    if xbar.role != Role::PseudoMixXbar {
        return Err(Error::arg(format!(
            "expected a pseudo-anomaly mix, got {:?}",
            xbar.role
        )));
    }
    Ok(SampleBatch::new(
        generator_images(g, &xbar.images)?,
        Role::PseudoReconXpseudo,
    ))
}

/// `n` pairs over `0..n`: a uniform shuffle, each element paired with its
/// successor (cyclically). Every index appears once as `i` and once as `j`
/// and `i != j` always.
pub fn sample_pairs<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    if n < 2 {
        return Err(Error::arg("pseudo-anomalies need at least two images"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    Ok((0..n).map(|k| (perm[k], perm[(k + 1) % n])).collect())
}
