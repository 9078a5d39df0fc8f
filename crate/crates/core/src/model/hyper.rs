use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar knobs of both training phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Weight of the reconstruction term in the phase-one generator loss.
    pub lambda_recon: f64,
    /// Weight of real images among phase-two good examples; reconstructions
    /// get `1 - alpha`.
    pub alpha: f64,
    /// Weight of old-generator reconstructions among phase-two bad examples;
    /// pseudo-anomalies get `1 - beta`.
    pub beta: f64,
    /// Std-dev of the denoising input noise on `[0, 1]` images.
    pub noise_sigma: f64,
    pub lr_g: f64,
    pub lr_d_phase1: f64,
    pub lr_d_phase2: f64,
    pub phase1_epochs: usize,
    pub phase2_iterations: usize,
    /// Decision threshold on `D(G(x))`.
    pub tau: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lambda_recon: 0.2,
            alpha: 0.1,
            beta: 0.001,
            noise_sigma: 0.1,
            lr_g: 1e-3,
            lr_d_phase1: 1e-4,
            lr_d_phase2: 5e-5,
            phase1_epochs: 25,
            phase2_iterations: 75,
            tau: 0.5,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl HyperParams {
    /// Returns the name of the first field that violates its domain.
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let checks: [(&str, bool); 10] = [
            (
                "lambda_recon",
                self.lambda_recon >= 0.0 && self.lambda_recon.is_finite(),
            ),
            ("alpha", unit(self.alpha)),
            ("beta", unit(self.beta)),
            (
                "noise_sigma",
                self.noise_sigma >= 0.0 && self.noise_sigma.is_finite(),
            ),
            ("lr_g", positive(self.lr_g)),
            ("lr_d_phase1", positive(self.lr_d_phase1)),
            ("lr_d_phase2", positive(self.lr_d_phase2)),
            ("tau", unit(self.tau)),
            ("batch_size", self.batch_size >= 2),
            ("phase1_epochs", self.phase1_epochs >= 1),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((key, _)) => Err(Error::Parse {
                key: (*key).to_string(),
                message: "value outside its allowed range".into(),
            }),
            None => Ok(()),
        }
    }
}
