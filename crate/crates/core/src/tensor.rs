//! Dense NCHW `f64` tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A batch of `n` items, each `c × h × w`, stored contiguously in row-major
/// NCHW order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::config(format!(
                "tensor of shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Stacks equally sized `c × h × w` items into one batch.
    pub fn stack<'a, I>(item_shape: [usize; 3], items: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let len = item_shape.iter().product::<usize>();
        let mut data = Vec::new();
        let mut n = 0;
        for item in items {
            if item.len() != len {
                return Err(Error::config(format!(
                    "cannot stack item of {} values into shape {item_shape:?}",
                    item.len()
                )));
            }
            data.extend_from_slice(item);
            n += 1;
        }
        Ok(Tensor {
            shape: [n, item_shape[0], item_shape[1], item_shape[2]],
            data,
        })
    }

    /// Concatenates batches along the item axis.
    pub fn concat(parts: &[&Tensor]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::arg("cannot concatenate zero tensors"))?;
        let item = first.item_shape();
        let mut data = Vec::with_capacity(parts.iter().map(|t| t.data.len()).sum());
        let mut n = 0;
        for t in parts {
            if t.item_shape() != item {
                return Err(Error::config(format!(
                    "item shape mismatch in concat: {:?} vs {:?}",
                    t.item_shape(),
                    item
                )));
            }
            data.extend_from_slice(&t.data);
            n += t.shape[0];
        }
        Ok(Tensor {
            shape: [n, item[0], item[1], item[2]],
            data,
        })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn item_shape(&self) -> [usize; 3] {
        [self.shape[1], self.shape[2], self.shape[3]]
    }

    pub fn batch_size(&self) -> usize {
        self.shape[0]
    }

    pub fn item_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn item(&self, i: usize) -> &[f64] {
        let len = self.item_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [f64] {
        let len = self.item_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    /// Gathers the listed items into a new batch.
    pub fn select(&self, indices: &[usize]) -> Tensor {
        let len = self.item_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            data.extend_from_slice(self.item(i));
        }
        Tensor {
            shape: [indices.len(), self.shape[1], self.shape[2], self.shape[3]],
            data,
        }
    }

    /// Reinterprets the item layout without moving data.
    pub fn reshape_items(self, item_shape: [usize; 3]) -> Result<Tensor> {
        if item_shape.iter().product::<usize>() != self.item_len() {
            return Err(Error::config(format!(
                "cannot reshape items of {:?} into {item_shape:?}",
                self.item_shape()
            )));
        }
        Ok(Tensor {
            shape: [self.shape[0], item_shape[0], item_shape[1], item_shape[2]],
            data: self.data,
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.data.iter().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_and_concat_preserve_items() {
        let t = Tensor::from_vec([3, 1, 1, 2], vec![0., 1., 2., 3., 4., 5.]).unwrap();
        let s = t.select(&[2, 0]);
        assert_eq!(s.data(), &[4., 5., 0., 1.]);
        let c = Tensor::concat(&[&t, &s]).unwrap();
        assert_eq!(c.batch_size(), 5);
        assert_eq!(c.item(3), &[4., 5.]);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Tensor::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
    }
}
