//! Adam with the usual defaults (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).

use crate::error::{Error, Result};
use crate::model::{ModelState, ParamMap};

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, model: &ModelState) -> Self {
        let zeros: Vec<Vec<f64>> = model
            .params
            .values()
            .map(|p| vec![0.0; p.data.len()])
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one descent step along `grads`.
    pub fn step(&mut self, model: &mut ModelState, grads: &ParamMap) -> Result<()> {
        if grads.len() != model.params.len() {
            return Err(Error::config("gradient map does not match the model"));
        }
        if grads
            .values()
            .any(|g| g.data.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Numeric(format!(
                "non-finite gradient for `{}`",
                model.name
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in model.params.values_mut().zip(grads.values()).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.data.len() {
                let gj = g.data[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                p.data[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{zero_grads, ArchitectureSpec, InputShape, ModelRole};

    #[test]
    fn first_step_moves_by_learning_rate() {
        let arch = ArchitectureSpec::standard(InputShape::new(1, 8, 8), &[2], &[2], 4).unwrap();
        let mut d = ModelState::zeros("d", ModelRole::Discriminator, arch).unwrap();
        let mut g = zero_grads(&d);
        g[0].data[0] = 3.0;
        g[0].data[1] = -0.5;
        let mut opt = Adam::new(0.01, &d);
        opt.step(&mut d, &g).unwrap();
        // Bias-corrected first step is lr * sign(g) up to eps.
        assert!((d.params[0].data[0] + 0.01).abs() < 1e-8);
        assert!((d.params[0].data[1] - 0.01).abs() < 1e-8);
        assert_eq!(d.params[0].data[2], 0.0);
    }
}
