//! Forward and backward passes over a [`ModelState`].

use super::arch::{LayerOp, LayerPlan};
use super::layers::{Conv, ConvTranspose, Linear};
use super::state::{ModelRole, ModelState, ParamMap, ParamTensor};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Resolved layer sequence for one model.
#[derive(Debug, Clone)]
pub struct Network {
    role: ModelRole,
    layers: Vec<LayerPlan>,
}

/// Activations recorded by [`Network::forward_traced`]: the input of every
/// layer followed by the network output.
#[derive(Debug, Clone)]
pub struct Trace {
    activations: Vec<Tensor>,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        self.activations
            .last()
            .expect("trace holds the input at least")
    }
}

impl Network {
    pub fn for_model(state: &ModelState) -> Result<Self> {
        Ok(Network {
            role: state.role,
            layers: ModelState::layer_plans(&state.arch, state.role)?,
        })
    }

    pub fn role(&self) -> ModelRole {
        self.role
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.layers[0].in_shape
    }

    pub fn output_shape(&self) -> [usize; 3] {
        self.layers.last().unwrap().out_shape
    }

    fn check_input(&self, params: &ParamMap, x: &Tensor) -> Result<()> {
        if x.item_shape() != self.input_shape() {
            return Err(Error::config(format!(
                "{:?} expects items of shape {:?}, got {:?}",
                self.role,
                self.input_shape(),
                x.item_shape()
            )));
        }
        for p in params.values() {
            if p.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "{:?} has non-finite parameters",
                    self.role
                )));
            }
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParamMap, x: &Tensor) -> Result<Tensor> {
        self.check_input(params, x)?;
        let mut cur = x.clone();
        let mut scratch = Vec::new();
        for layer in &self.layers {
            cur = layer_forward(layer, params, &cur, &mut scratch);
        }
        Ok(cur)
    }

    pub fn forward_traced(&self, params: &ParamMap, x: &Tensor) -> Result<Trace> {
        self.check_input(params, x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        let mut scratch = Vec::new();
        for layer in &self.layers {
            let next = layer_forward(layer, params, activations.last().unwrap(), &mut scratch);
            activations.push(next);
        }
        Ok(Trace { activations })
    }

    /// Back-propagates `grad_out` (gradient w.r.t. the network output) and
    /// returns the gradient w.r.t. the network input. Parameter gradients are
    /// accumulated into `grads` when given.
    pub fn backward(
        &self,
        params: &ParamMap,
        trace: &Trace,
        grad_out: &Tensor,
        mut grads: Option<&mut ParamMap>,
    ) -> Result<Tensor> {
        if grad_out.shape() != trace.output().shape() {
            return Err(Error::config(format!(
                "gradient shape {:?} does not match output {:?}",
                grad_out.shape(),
                trace.output().shape()
            )));
        }
        let mut grad = grad_out.clone();
        let mut scratch = Vec::new();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.activations[i];
            let output = &trace.activations[i + 1];
            // Through the activation.
            for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
                *g *= layer.activation.derivative_from_output(y);
            }
            let mut dx = Tensor::zeros([
                input.batch_size(),
                layer.in_shape[0],
                layer.in_shape[1],
                layer.in_shape[2],
            ]);
            let weight = &params[&layer.weight_name()].data;
            let bias = &params[&layer.bias_name()].data;
            let mut pair = grads
                .as_deref_mut()
                .map(|g| weight_bias_mut(g, &layer.weight_name(), &layer.bias_name()));
            for n in 0..input.batch_size() {
                let x = input.item(n);
                let dy = grad.item(n);
                let dxn = dx.item_mut(n);
                let g = pair.as_mut().map(|(w, b)| (&mut w[..], &mut b[..]));
                match layer.op {
                    LayerOp::Conv { .. } => Conv {
                        window: layer.window().unwrap(),
                        out_channels: layer.out_shape[0],
                        weight,
                        bias,
                    }
                    .backward(x, dy, g, dxn, &mut scratch),
                    LayerOp::ConvTranspose { .. } => ConvTranspose {
                        window: layer.window().unwrap(),
                        in_channels: layer.in_shape[0],
                        weight,
                        bias,
                    }
                    .backward(x, dy, g, dxn, &mut scratch),
                    LayerOp::Linear => Linear {
                        in_features: layer.in_shape.iter().product(),
                        out_features: layer.out_shape[0],
                        weight,
                        bias,
                    }
                    .backward(x, dy, g, dxn),
                }
            }
            grad = dx;
        }
        Ok(grad)
    }
}

fn weight_bias_mut<'a>(
    grads: &'a mut ParamMap,
    weight: &str,
    bias: &str,
) -> (&'a mut Vec<f64>, &'a mut Vec<f64>) {
    let wi = grads
        .get_index_of(weight)
        .expect("gradient map matches the model");
    let bi = grads
        .get_index_of(bias)
        .expect("gradient map matches the model");
    let [w, b] = grads
        .get_disjoint_indices_mut([wi, bi])
        .expect("weight and bias are distinct entries");
    (&mut w.1.data, &mut b.1.data)
}

fn layer_forward(
    layer: &LayerPlan,
    params: &ParamMap,
    input: &Tensor,
    scratch: &mut Vec<f64>,
) -> Tensor {
    let n = input.batch_size();
    let [c, h, w] = layer.out_shape;
    let mut out = Tensor::zeros([n, c, h, w]);
    let weight = &params[&layer.weight_name()].data;
    let bias = &params[&layer.bias_name()].data;
    for i in 0..n {
        let x = input.item(i);
        let y = out.item_mut(i);
        match layer.op {
            LayerOp::Conv { .. } => Conv {
                window: layer.window().unwrap(),
                out_channels: c,
                weight,
                bias,
            }
            .forward(x, y, scratch),
            LayerOp::ConvTranspose { .. } => ConvTranspose {
                window: layer.window().unwrap(),
                in_channels: layer.in_shape[0],
                weight,
                bias,
            }
            .forward(x, y, scratch),
            LayerOp::Linear => Linear {
                in_features: layer.in_shape.iter().product(),
                out_features: c,
                weight,
                bias,
            }
            .forward(x, y),
        }
    }
    for v in out.data_mut() {
        *v = layer.activation.apply(*v);
    }
    out
}

/// Zero-filled gradient map with the same keys and shapes as `state`.
pub fn zero_grads(state: &ModelState) -> ParamMap {
    state
        .params
        .iter()
        .map(|(k, p)| (k.clone(), ParamTensor::zeros(p.shape.clone())))
        .collect()
}
