use std::path::Path;

use crate::data::{save_png, Image};
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::tensor::Tensor;
use crate::trainer::make_pseudo_anomaly;

const PAD: usize = 2;

/// `X`, `G(X)`, `G_old(X)`, the pseudo-anomaly mix and its reconstruction,
/// one tensor per stage. Item `i` is mixed with item `i + 1` (cyclically).
pub fn pseudo_stages(g: &ModelState, g_old: &ModelState, x: &Tensor) -> Result<Vec<Tensor>> {
    let n = x.batch_size();
    if n < 2 {
        return Err(Error::arg("the preview needs at least two images"));
    }
    let recon = crate::eval::reconstruct(g, x)?;
    let low = crate::eval::reconstruct(g_old, x)?;
    let pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let xbar = make_pseudo_anomaly(g_old, x, &pairs)?;
    let pseudo = crate::eval::reconstruct(g, &xbar.images)?;
    Ok(vec![x.clone(), recon, low, xbar.images, pseudo])
}

/// Lays stages out as rows and items as columns with a dark gutter.
pub fn save_grid(stages: &[Tensor], path: &Path) -> Result<()> {
    let first = stages
        .first()
        .ok_or_else(|| Error::arg("nothing to draw"))?;
    let [c, h, w] = first.item_shape();
    let cols = first.batch_size();
    let (gh, gw) = (stages.len() * (h + PAD) + PAD, cols * (w + PAD) + PAD);
    let mut grid = Image::filled(c, gh, gw, 0.0);
    for (r, stage) in stages.iter().enumerate() {
        if stage.item_shape() != [c, h, w] || stage.batch_size() != cols {
            return Err(Error::config("preview stages differ in shape"));
        }
        for k in 0..cols {
            let item = stage.item(k);
            let (top, left) = (PAD + r * (h + PAD), PAD + k * (w + PAD));
            for ch in 0..c {
                for y in 0..h {
                    let src = &item[(ch * h + y) * w..(ch * h + y + 1) * w];
                    let dst = (ch * gh + top + y) * gw + left;
                    grid.data[dst..dst + w].copy_from_slice(src);
                }
            }
        }
    }
    save_png(&grid, path)
}
