//! Per-item layer kernels: strided convolution, transposed convolution and a
//! dense head. All buffers are row-major `f64`; convolutions go through
//! im2col + GEMM.

/// Row-major `c = op(a) · op(b) + beta · c` for an `m × k` by `k × n` product.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of one strided, zero-padded square-kernel window sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Window {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window {
    pub fn new(
        [channels, height, width]: [usize; 3],
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Option<Self> {
        let span_h = height + 2 * padding;
        let span_w = width + 2 * padding;
        if kernel == 0 || stride == 0 || span_h < kernel || span_w < kernel {
            return None;
        }
        Some(Window {
            channels,
            height,
            width,
            kernel,
            stride,
            padding,
            out_h: (span_h - kernel) / stride + 1,
            out_w: (span_w - kernel) / stride + 1,
        })
    }

    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source pixel for window position `(oy, ox)` and kernel tap `(ki, kj)`.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ki: usize, kj: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ki).checked_sub(self.padding)?;
        let x = (ox * self.stride + kj).checked_sub(self.padding)?;
        (y < self.height && x < self.width).then_some((y, x))
    }

    pub fn im2col(&self, image: &[f64], cols: &mut [f64]) {
        let ncols = self.cols();
        for c in 0..self.channels {
            for ki in 0..self.kernel {
                for kj in 0..self.kernel {
                    let row = (c * self.kernel + ki) * self.kernel + kj;
                    let dst = &mut cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            dst[oy * self.out_w + ox] = match self.source(oy, ox, ki, kj) {
                                Some((y, x)) => image[(c * self.height + y) * self.width + x],
                                None => 0.0,
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Window::im2col`]: scatter-adds columns back into `image`.
    pub fn col2im(&self, cols: &[f64], image: &mut [f64]) {
        let ncols = self.cols();
        for c in 0..self.channels {
            for ki in 0..self.kernel {
                for kj in 0..self.kernel {
                    let row = (c * self.kernel + ki) * self.kernel + kj;
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            if let Some((y, x)) = self.source(oy, ox, ki, kj) {
                                image[(c * self.height + y) * self.width + x] +=
                                    src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Strided convolution. Weight layout `[out, in, k, k]`, input window over
/// the layer input.
pub(crate) struct Conv<'a> {
    pub window: Window,
    pub out_channels: usize,
    pub weight: &'a [f64],
    pub bias: &'a [f64],
}

impl Conv<'_> {
    pub fn forward(&self, x: &[f64], y: &mut [f64], scratch: &mut Vec<f64>) {
        let w = &self.window;
        scratch.resize(w.rows() * w.cols(), 0.0);
        w.im2col(x, scratch);
        for (o, chunk) in y.chunks_mut(w.cols()).enumerate() {
            chunk.fill(self.bias[o]);
        }
        gemm(
            self.out_channels,
            w.rows(),
            w.cols(),
            self.weight,
            false,
            scratch,
            false,
            1.0,
            y,
        );
    }

    pub fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        grads: Option<(&mut [f64], &mut [f64])>,
        dx: &mut [f64],
        scratch: &mut Vec<f64>,
    ) {
        let w = &self.window;
        let (rows, ncols) = (w.rows(), w.cols());
        if let Some((dw, db)) = grads {
            scratch.resize(rows * ncols, 0.0);
            w.im2col(x, scratch);
            gemm(
                self.out_channels,
                ncols,
                rows,
                dy,
                false,
                scratch,
                true,
                1.0,
                dw,
            );
            for (o, chunk) in dy.chunks(ncols).enumerate() {
                db[o] += chunk.iter().sum::<f64>();
            }
        }
        scratch.resize(rows * ncols, 0.0);
        gemm(
            rows,
            self.out_channels,
            ncols,
            self.weight,
            true,
            dy,
            false,
            0.0,
            scratch,
        );
        dx.fill(0.0);
        w.col2im(scratch, dx);
    }
}

/// Transposed convolution. Weight layout `[in, out, k, k]`; `window` is the
/// forward convolution that maps the *output* grid back onto the input grid.
pub(crate) struct ConvTranspose<'a> {
    pub window: Window,
    pub in_channels: usize,
    pub weight: &'a [f64],
    pub bias: &'a [f64],
}

impl ConvTranspose<'_> {
    pub fn forward(&self, x: &[f64], y: &mut [f64], scratch: &mut Vec<f64>) {
        let w = &self.window;
        let (rows, ncols) = (w.rows(), w.cols());
        scratch.resize(rows * ncols, 0.0);
        gemm(
            rows,
            self.in_channels,
            ncols,
            self.weight,
            true,
            x,
            false,
            0.0,
            scratch,
        );
        let plane = w.height * w.width;
        for (o, chunk) in y.chunks_mut(plane).enumerate() {
            chunk.fill(self.bias[o]);
        }
        w.col2im(scratch, y);
    }

    pub fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        grads: Option<(&mut [f64], &mut [f64])>,
        dx: &mut [f64],
        scratch: &mut Vec<f64>,
    ) {
        let w = &self.window;
        let (rows, ncols) = (w.rows(), w.cols());
        scratch.resize(rows * ncols, 0.0);
        w.im2col(dy, scratch);
        if let Some((dw, db)) = grads {
            gemm(
                self.in_channels,
                ncols,
                rows,
                x,
                false,
                scratch,
                true,
                1.0,
                dw,
            );
            let plane = w.height * w.width;
            for (o, chunk) in dy.chunks(plane).enumerate() {
                db[o] += chunk.iter().sum::<f64>();
            }
        }
        gemm(
            self.in_channels,
            rows,
            ncols,
            self.weight,
            false,
            scratch,
            false,
            0.0,
            dx,
        );
    }
}

/// Dense layer. Weight layout `[out, in]`.
pub(crate) struct Linear<'a> {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: &'a [f64],
    pub bias: &'a [f64],
}

impl Linear<'_> {
    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(self.bias);
        gemm(
            self.out_features,
            self.in_features,
            1,
            self.weight,
            false,
            x,
            false,
            1.0,
            y,
        );
    }

    pub fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        grads: Option<(&mut [f64], &mut [f64])>,
        dx: &mut [f64],
    ) {
        if let Some((dw, db)) = grads {
            gemm(
                self.out_features,
                1,
                self.in_features,
                dy,
                false,
                x,
                false,
                1.0,
                dw,
            );
            for (b, g) in db.iter_mut().zip(dy) {
                *b += g;
            }
        }
        gemm(
            self.in_features,
            self.out_features,
            1,
            self.weight,
            true,
            dy,
            false,
            0.0,
            dx,
        );
    }
}
