//! Generator and discriminator definitions, parameter states and the
//! operations used to build `G_old`.

mod arch;
pub mod checkpoint;
mod hyper;
pub(crate) mod layers;
mod network;
mod state;

use rand::Rng;
use rand_distr::{Distribution, Normal};

pub use arch::{Activation, ArchitectureSpec, ConvBlock, InputShape};
pub use hyper::HyperParams;
pub use network::{zero_grads, Network, Trace};
pub use state::{average_parameters, ModelRole, ModelState, ParamMap, ParamTensor, Provenance};

use crate::batch::{Role, SampleBatch};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn expect_role(m: &ModelState, role: ModelRole) -> Result<()> {
    if m.role != role {
        return Err(Error::config(format!(
            "`{}` is a {:?}, expected a {role:?}",
            m.name, m.role
        )));
    }
    Ok(())
}

/// Reconstructs a batch with the generator. The output carries role
/// [`Role::ReconXhat`].
pub fn generator_forward(g: &ModelState, batch: &SampleBatch) -> Result<SampleBatch> {
    Ok(SampleBatch::new(
        generator_images(g, &batch.images)?,
        Role::ReconXhat,
    ))
}

pub(crate) fn generator_images(g: &ModelState, images: &Tensor) -> Result<Tensor> {
    expect_role(g, ModelRole::Generator)?;
    Network::for_model(g)?.forward(&g.params, images)
}

/// One score in `[0, 1]` per batch item.
pub fn discriminator_forward(d: &ModelState, batch: &SampleBatch) -> Result<Vec<f64>> {
    discriminator_scores(d, &batch.images)
}

pub(crate) fn discriminator_scores(d: &ModelState, images: &Tensor) -> Result<Vec<f64>> {
    expect_role(d, ModelRole::Discriminator)?;
    Ok(Network::for_model(d)?
        .forward(&d.params, images)?
        .into_vec())
}

/// Deep copy of `m` tagged with `tag`.
pub fn snapshot_parameters(m: &ModelState, tag: Provenance) -> ModelState {
    m.snapshot(tag)
}

/// `clamp(x + N(0, sigma²), 0, 1)` per pixel; the result is marked noisy.
pub fn add_noise<R: Rng + ?Sized>(
    batch: &SampleBatch,
    sigma: f64,
    rng: &mut R,
) -> Result<SampleBatch> {
    let mut images = batch.images.clone();
    add_noise_in_place(&mut images, sigma, rng)?;
    Ok(SampleBatch::new(images, Role::NoisyX))
}

pub(crate) fn add_noise_in_place<R: Rng + ?Sized>(
    images: &mut Tensor,
    sigma: f64,
    rng: &mut R,
) -> Result<()> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::arg(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::arg(e.to_string()))?;
    for v in images.data_mut() {
        *v = (*v + normal.sample(rng)).clamp(0.0, 1.0);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(values: Vec<f64>, side: usize) -> SampleBatch {
        let n = values.len() / (side * side);
        SampleBatch::new(
            Tensor::from_vec([n, 1, side, side], values).unwrap(),
            Role::RealX,
        )
    }

    #[test]
    fn zero_sigma_is_identity() {
        let b = batch((0..64).map(|i| i as f64 / 64.0).collect(), 8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = add_noise(&b, 0.0, &mut rng).unwrap();
        assert_eq!(out.images, b.images);
        assert_eq!(out.role, Role::NoisyX);
    }

    #[test]
    fn noise_is_clamped_and_seeded() {
        let b = batch(vec![1.0; 64], 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = add_noise(&b, 0.5, &mut rng).unwrap();
        assert!(out.images.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(add_noise(&b, 0.5, &mut rng2).unwrap(), out);
    }

    #[test]
    fn negative_sigma_rejected() {
        let b = batch(vec![0.5; 64], 8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            add_noise(&b, -0.1, &mut rng),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn forward_checks_role_and_shape() {
        let arch = ArchitectureSpec::standard(InputShape::new(1, 8, 8), &[2], &[2], 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = ModelState::init("g", ModelRole::Generator, arch.clone(), &mut rng).unwrap();
        let d = ModelState::init("d", ModelRole::Discriminator, arch, &mut rng).unwrap();
        let b = batch(vec![0.5; 64], 8);
        assert!(matches!(
            discriminator_forward(&g, &b),
            Err(Error::Config(_))
        ));
        let wrong = batch(vec![0.5; 100], 10);
        assert!(matches!(
            generator_forward(&g, &wrong),
            Err(Error::Config(_))
        ));
        let mut bad = d.clone();
        *bad.scalar_mut(0).unwrap() = f64::NAN;
        assert!(matches!(
            discriminator_forward(&bad, &b),
            Err(Error::Numeric(_))
        ));
    }
}
