use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::{ArchitectureSpec, LayerPlan};
use crate::batch::Phase;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Generator,
    Discriminator,
}

/// Where in training a state was captured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub phase: Phase,
    pub epoch: usize,
    pub iteration: usize,
}

impl Provenance {
    pub fn new(phase: Phase, epoch: usize, iteration: usize) -> Self {
        Provenance {
            phase,
            epoch,
            iteration,
        }
    }

    pub fn initial() -> Self {
        Provenance::new(Phase::One, 0, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamTensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        ParamTensor {
            shape,
            data: vec![0.0; n],
        }
    }
}

/// Parameters keyed by `<layer>.weight` / `<layer>.bias`, in layer order.
pub type ParamMap = IndexMap<String, ParamTensor>;

/// Parameters of one generator or discriminator plus the architecture they
/// instantiate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub name: String,
    pub role: ModelRole,
    pub arch: ArchitectureSpec,
    pub params: ParamMap,
    pub provenance: Provenance,
}

impl ModelState {
    pub(crate) fn layer_plans(arch: &ArchitectureSpec, role: ModelRole) -> Result<Vec<LayerPlan>> {
        match role {
            ModelRole::Generator => arch.generator_layers(),
            ModelRole::Discriminator => arch.discriminator_layers(),
        }
    }

    /// All-zero parameters with the declared names and shapes.
    pub fn zeros(name: impl Into<String>, role: ModelRole, arch: ArchitectureSpec) -> Result<Self> {
        arch.validate()?;
        let mut params = ParamMap::new();
        for layer in Self::layer_plans(&arch, role)? {
            params.insert(
                layer.weight_name(),
                ParamTensor::zeros(layer.weight_shape()),
            );
            params.insert(
                layer.bias_name(),
                ParamTensor::zeros(vec![layer.bias_len()]),
            );
        }
        Ok(ModelState {
            name: name.into(),
            role,
            arch,
            params,
            provenance: Provenance::initial(),
        })
    }

    /// Fan-in scaled uniform initialization, `U(-1/√fan_in, 1/√fan_in)` for
    /// weights and biases alike.
    pub fn init<R: Rng + ?Sized>(
        name: impl Into<String>,
        role: ModelRole,
        arch: ArchitectureSpec,
        rng: &mut R,
    ) -> Result<Self> {
        let mut state = Self::zeros(name, role, arch)?;
        for layer in Self::layer_plans(&state.arch, role)? {
            let bound = 1.0 / (layer.fan_in() as f64).sqrt();
            for key in [layer.weight_name(), layer.bias_name()] {
                for v in &mut state.params[&key].data {
                    *v = rng.random_range(-bound..bound);
                }
            }
        }
        Ok(state)
    }

    /// Parameter names and shapes must match the architecture exactly.
    pub fn validate(&self) -> Result<()> {
        let plans = Self::layer_plans(&self.arch, self.role)?;
        if self.params.len() != plans.len() * 2 {
            return Err(Error::config(format!(
                "{}: expected {} parameter arrays, found {}",
                self.name,
                plans.len() * 2,
                self.params.len()
            )));
        }
        for (layer, chunk) in plans
            .iter()
            .zip(self.params.iter().collect::<Vec<_>>().chunks(2))
        {
            let expected = [
                (layer.weight_name(), layer.weight_shape()),
                (layer.bias_name(), vec![layer.bias_len()]),
            ];
            for ((name, shape), (got_name, got)) in expected.iter().zip(chunk) {
                if name != *got_name || shape != &got.shape {
                    return Err(Error::config(format!(
                        "{}: parameter `{got_name}` {:?} does not match declared `{name}` {shape:?}",
                        self.name, got.shape
                    )));
                }
                if got.data.len() != shape.iter().product::<usize>() {
                    return Err(Error::config(format!(
                        "{}: `{name}` has {} values for shape {shape:?}",
                        self.name,
                        got.data.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.params.values().map(|p| p.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .values()
            .all(|p| p.data.iter().all(|v| v.is_finite()))
    }

    /// Deep copy tagged with new provenance.
    pub fn snapshot(&self, provenance: Provenance) -> ModelState {
        let mut copy = self.clone();
        copy.provenance = provenance;
        copy
    }

    /// SHA-256 over role, parameter names, shapes and little-endian values.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(match self.role {
            ModelRole::Generator => b"generator\0".as_slice(),
            ModelRole::Discriminator => b"discriminator\0".as_slice(),
        });
        for (name, p) in &self.params {
            h.update(name.as_bytes());
            h.update([0u8]);
            for &d in &p.shape {
                h.update((d as u64).to_le_bytes());
            }
            for &v in &p.data {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Flattened view of every parameter, in map order.
    pub fn flat(&self) -> Vec<f64> {
        self.params
            .values()
            .flat_map(|p| p.data.iter().copied())
            .collect()
    }

    /// Mutable access to the `index`-th scalar in flattened order.
    pub fn scalar_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        for p in self.params.values_mut() {
            if index < p.data.len() {
                return p.data.get_mut(index);
            }
            index -= p.data.len();
        }
        None
    }
}

/// Uniform element-wise mean of states sharing one architecture and role.
///
/// The result keeps the name and role of the first state; its provenance is
/// that of the latest (highest epoch, then iteration) input.
pub fn average_parameters(states: &[ModelState]) -> Result<ModelState> {
    let first = states
        .first()
        .ok_or_else(|| Error::arg("cannot average an empty list of states"))?;
    for s in &states[1..] {
        if s.arch != first.arch || s.role != first.role {
            return Err(Error::arg(format!(
                "cannot average `{}` with `{}`: architectures or roles differ",
                first.name, s.name
            )));
        }
    }
    let mut out = first.clone();
    let k = states.len() as f64;
    let mut column = Vec::with_capacity(states.len());
    for (key, p) in out.params.iter_mut() {
        let sources: Vec<&[f64]> = states
            .iter()
            .map(|s| s.params[key].data.as_slice())
            .collect();
        for (i, v) in p.data.iter_mut().enumerate() {
            // Offsets from the minimum, summed in sorted order: exact for
            // identical inputs and independent of list order.
            column.clear();
            column.extend(sources.iter().map(|s| s[i]));
            column.sort_by(f64::total_cmp);
            let base = column[0];
            let offset: f64 = column.iter().map(|x| x - base).sum();
            *v = base + offset / k;
        }
    }
    out.provenance = states
        .iter()
        .map(|s| s.provenance)
        .max_by_key(|p| (p.epoch, p.iteration))
        .unwrap_or(first.provenance);
    Ok(out)
}
