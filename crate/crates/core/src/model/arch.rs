use serde::{Deserialize, Serialize};

use super::layers::Window;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu { slope: f64 },
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::LeakyRelu { slope } => {
                if v > 0.0 {
                    v
                } else {
                    slope * v
                }
            }
            Activation::Sigmoid => sigmoid(v),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if y > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }

    /// Whether every output lies in `[0, 1]`.
    pub fn is_unit_bounded(self) -> bool {
        matches!(self, Activation::Sigmoid)
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// One square-kernel convolution block. In the decoder the block is a
/// transposed convolution and `output_padding` resolves the size ambiguity of
/// strided upsampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    #[serde(default)]
    pub output_padding: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        InputShape {
            channels,
            height,
            width,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }
}

/// Layer layout of both networks. The generator is `encoder` followed by
/// `decoder`; the discriminator is `discriminator` followed by a single-unit
/// dense head with a sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input: InputShape,
    pub encoder: Vec<ConvBlock>,
    pub decoder: Vec<ConvBlock>,
    pub discriminator: Vec<ConvBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LayerOp {
    Conv {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ConvTranspose {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Linear,
}

/// A resolved layer: operation, parameter name prefix and item shapes.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerPlan {
    pub name: String,
    pub op: LayerOp,
    pub in_shape: [usize; 3],
    pub out_shape: [usize; 3],
    pub activation: Activation,
}

impl LayerPlan {
    pub fn weight_shape(&self) -> Vec<usize> {
        let [cin, ..] = self.in_shape;
        let [cout, ..] = self.out_shape;
        match self.op {
            LayerOp::Conv { kernel, .. } => vec![cout, cin, kernel, kernel],
            LayerOp::ConvTranspose { kernel, .. } => vec![cin, cout, kernel, kernel],
            LayerOp::Linear => vec![cout, self.in_shape.iter().product()],
        }
    }

    pub fn bias_len(&self) -> usize {
        self.out_shape[0]
    }

    /// Fan-in used for default initialization.
    pub fn fan_in(&self) -> usize {
        let w = self.weight_shape();
        match self.op {
            LayerOp::Conv { .. } | LayerOp::Linear => w[1..].iter().product(),
            LayerOp::ConvTranspose { kernel, .. } => w[1] * kernel * kernel,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    /// Window sweep that realizes this layer's convolution.
    pub fn window(&self) -> Option<Window> {
        match self.op {
            LayerOp::Conv {
                kernel,
                stride,
                padding,
            } => Window::new(self.in_shape, kernel, stride, padding),
            LayerOp::ConvTranspose {
                kernel,
                stride,
                padding,
            } => Window::new(self.out_shape, kernel, stride, padding),
            LayerOp::Linear => None,
        }
    }
}

const LEAKY: Activation = Activation::LeakyRelu { slope: 0.2 };

impl ArchitectureSpec {
    /// Stride-2 encoder with the given channel widths, a decoder mirroring it
    /// back to the input size (sigmoid output), and a stride-2 discriminator.
    pub fn standard(
        input: InputShape,
        generator_widths: &[usize],
        discriminator_widths: &[usize],
        kernel: usize,
    ) -> Result<Self> {
        if generator_widths.is_empty() || discriminator_widths.is_empty() {
            return Err(Error::config("network width lists must be non-empty"));
        }
        let padding = (kernel - 1) / 2;
        let block = |out_channels, activation| ConvBlock {
            out_channels,
            kernel,
            stride: 2,
            padding,
            output_padding: 0,
            activation,
        };
        let encoder: Vec<ConvBlock> = generator_widths.iter().map(|&w| block(w, LEAKY)).collect();

        // Spatial sizes entering each encoder block, used to undo the strides.
        let mut sizes = vec![(input.height, input.width)];
        for b in &encoder {
            let (h, w) = *sizes.last().unwrap();
            let win = Window::new([1, h, w], b.kernel, b.stride, b.padding).ok_or_else(|| {
                Error::config(format!(
                    "input {}x{} too small for {} stride-2 blocks",
                    input.height,
                    input.width,
                    encoder.len()
                ))
            })?;
            sizes.push((win.out_h, win.out_w));
        }

        let mut decoder = Vec::with_capacity(encoder.len());
        for i in (0..encoder.len()).rev() {
            let (in_h, in_w) = sizes[i + 1];
            let (target_h, target_w) = sizes[i];
            let last = i == 0;
            let out_channels = if last {
                input.channels
            } else {
                generator_widths[i - 1]
            };
            let base_h = (in_h - 1) * 2 + kernel;
            let base_w = (in_w - 1) * 2 + kernel;
            let op_h = (target_h + 2 * padding).checked_sub(base_h);
            let op_w = (target_w + 2 * padding).checked_sub(base_w);
            let output_padding = match (op_h, op_w) {
                (Some(a), Some(b)) if a == b && a < 2 => a,
                _ => {
                    return Err(Error::config(format!(
                        "cannot mirror {}x{} -> {}x{} with kernel {kernel}",
                        in_h, in_w, target_h, target_w
                    )))
                }
            };
            decoder.push(ConvBlock {
                out_channels,
                kernel,
                stride: 2,
                padding,
                output_padding,
                activation: if last {
                    Activation::Sigmoid
                } else {
                    Activation::Relu
                },
            });
        }

        let discriminator = discriminator_widths
            .iter()
            .map(|&w| block(w, LEAKY))
            .collect();
        let spec = ArchitectureSpec {
            input,
            encoder,
            decoder,
            discriminator,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Four-block layout for 45×45 grayscale patches.
    pub fn default_video() -> Self {
        Self::standard(
            InputShape::new(1, 45, 45),
            &[16, 32, 64, 128],
            &[16, 32, 64, 128],
            4,
        )
        .expect("default architecture is valid")
    }

    /// Checks that the generator is shape-preserving with a bounded output
    /// and the discriminator reduces to one unit.
    pub fn validate(&self) -> Result<()> {
        let g = self.generator_layers()?;
        let out = g.last().map(|l| l.out_shape).unwrap_or(self.input.dims());
        if out != self.input.dims() {
            return Err(Error::config(format!(
                "generator maps {:?} to {:?}; it must preserve the input shape",
                self.input.dims(),
                out
            )));
        }
        match g.last() {
            Some(l) if l.activation.is_unit_bounded() => {}
            _ => {
                return Err(Error::config(
                    "generator output activation must bound values to [0, 1]",
                ))
            }
        }
        self.discriminator_layers()?;
        Ok(())
    }

    pub(crate) fn generator_layers(&self) -> Result<Vec<LayerPlan>> {
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return Err(Error::config("generator needs encoder and decoder blocks"));
        }
        let mut layers = Vec::new();
        let mut shape = self.input.dims();
        for (i, b) in self.encoder.iter().enumerate() {
            let plan = conv_plan(format!("enc{i}"), shape, b)?;
            shape = plan.out_shape;
            layers.push(plan);
        }
        for (i, b) in self.decoder.iter().enumerate() {
            let plan = conv_transpose_plan(format!("dec{i}"), shape, b)?;
            shape = plan.out_shape;
            layers.push(plan);
        }
        Ok(layers)
    }

    pub(crate) fn discriminator_layers(&self) -> Result<Vec<LayerPlan>> {
        let mut layers = Vec::new();
        let mut shape = self.input.dims();
        for (i, b) in self.discriminator.iter().enumerate() {
            let plan = conv_plan(format!("disc{i}"), shape, b)?;
            shape = plan.out_shape;
            layers.push(plan);
        }
        layers.push(LayerPlan {
            name: "head".into(),
            op: LayerOp::Linear,
            in_shape: shape,
            out_shape: [1, 1, 1],
            activation: Activation::Sigmoid,
        });
        Ok(layers)
    }
}

fn conv_plan(name: String, in_shape: [usize; 3], b: &ConvBlock) -> Result<LayerPlan> {
    let win = Window::new(in_shape, b.kernel, b.stride, b.padding).ok_or_else(|| {
        Error::config(format!(
            "{name}: kernel {} does not fit input {in_shape:?}",
            b.kernel
        ))
    })?;
    if b.out_channels == 0 {
        return Err(Error::config(format!("{name}: zero output channels")));
    }
    Ok(LayerPlan {
        name,
        op: LayerOp::Conv {
            kernel: b.kernel,
            stride: b.stride,
            padding: b.padding,
        },
        in_shape,
        out_shape: [b.out_channels, win.out_h, win.out_w],
        activation: b.activation,
    })
}

fn conv_transpose_plan(name: String, in_shape: [usize; 3], b: &ConvBlock) -> Result<LayerPlan> {
    let [_, h, w] = in_shape;
    if b.stride == 0 || b.kernel == 0 || b.out_channels == 0 || b.output_padding >= b.stride {
        return Err(Error::config(format!(
            "{name}: invalid transposed block {b:?}"
        )));
    }
    let size =
        |n: usize| ((n - 1) * b.stride + b.kernel + b.output_padding).checked_sub(2 * b.padding);
    let (oh, ow) = match (size(h), size(w)) {
        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => (oh, ow),
        _ => return Err(Error::config(format!("{name}: padding too large"))),
    };
    let plan = LayerPlan {
        name,
        op: LayerOp::ConvTranspose {
            kernel: b.kernel,
            stride: b.stride,
            padding: b.padding,
        },
        in_shape,
        out_shape: [b.out_channels, oh, ow],
        activation: b.activation,
    };
    // The adjoint convolution must land exactly on the input grid.
    match plan.window() {
        Some(win) if win.out_h == h && win.out_w == w => Ok(plan),
        _ => Err(Error::config(format!(
            "{}: transposed geometry inconsistent",
            plan.name
        ))),
    }
}
