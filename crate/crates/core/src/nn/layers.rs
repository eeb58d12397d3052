//! Layer kinds and their per-sample forward/backward kernels.
//!
//! All math runs on flat `f64` slices; shapes are validated once at network
//! construction so the kernels only carry the dims they need. Convolutions
//! are fixed at kernel 3x3, stride 1, zero padding 1, which keeps spatial
//! dims unchanged.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Declarative layer description used to build networks and checkpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Dense { in_dim: usize, out_dim: usize },
    Relu,
    Conv2d { in_channels: usize, out_channels: usize },
    Flatten,
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Softmax => "softmax",
        }
    }

    /// Output sample shape for a given input sample shape, or an error when
    /// the layer cannot consume that shape. Dim checks here are what
    /// enforces "consecutive layer dims compose" at construction time.
    pub fn out_shape(&self, name: &str, in_shape: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: String| Error::ShapeMismatch {
            layer: name.to_string(),
            expected,
            actual: format!("{in_shape:?}"),
        };
        match self {
            LayerSpec::Dense { in_dim, out_dim } => {
                if in_shape == [*in_dim] {
                    Ok(vec![*out_dim])
                } else {
                    Err(mismatch(format!("[{in_dim}]")))
                }
            }
            LayerSpec::Relu | LayerSpec::Softmax => Ok(in_shape.to_vec()),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
            } => match in_shape {
                [c, h, w] if c == in_channels => Ok(vec![*out_channels, *h, *w]),
                _ => Err(mismatch(format!("[{in_channels}, H, W]"))),
            },
            LayerSpec::Flatten => {
                if in_shape.is_empty() {
                    Err(mismatch("non-scalar".into()))
                } else {
                    Ok(vec![in_shape.iter().product()])
                }
            }
        }
    }
}

/// Weight initialization scheme. Glorot-uniform bounds with zero biases
/// are the default; zeros exist for analytical tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightInit {
    Zeros,
    XavierUniform,
}

fn init_weights(n: usize, fan_in: usize, fan_out: usize, init: WeightInit, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match init {
        WeightInit::Zeros => vec![0.0; n],
        WeightInit::XavierUniform => {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| rng.random_range(-limit..limit)).collect()
        }
    }
}

/// Dense affine layer, weights row-major `(out_dim, in_dim)`, biases zero-init.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, init: WeightInit, rng: &mut ChaCha8Rng) -> Self {
        Dense {
            in_dim,
            out_dim,
            weights: init_weights(in_dim * out_dim, in_dim, out_dim, init, rng),
            biases: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.biases[o];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            y[o] = acc;
        }
    }

    /// Accumulates parameter gradients and writes the input gradient.
    pub fn backward(
        &self,
        x: &[f64],
        d_out: &[f64],
        d_weights: &mut [f64],
        d_biases: &mut [f64],
        d_in: &mut [f64],
    ) {
        d_in.fill(0.0);
        for o in 0..self.out_dim {
            let g = d_out[o];
            d_biases[o] += g;
            let row = o * self.in_dim;
            for i in 0..self.in_dim {
                d_weights[row + i] += g * x[i];
                d_in[i] += g * self.weights[row + i];
            }
        }
    }
}

/// 3x3 convolution, stride 1, zero padding 1. Weights are laid out
/// `(out_c, in_c, 3, 3)`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, init: WeightInit, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = in_channels * 9;
        let fan_out = out_channels * 9;
        Conv2d {
            in_channels,
            out_channels,
            weights: init_weights(in_channels * out_channels * 9, fan_in, fan_out, init, rng),
            biases: vec![0.0; out_channels],
        }
    }

    fn widx(&self, oc: usize, ic: usize, u: usize, v: usize) -> usize {
        ((oc * self.in_channels + ic) * 3 + u) * 3 + v
    }

    pub fn forward(&self, x: &[f64], h: usize, w: usize, y: &mut [f64]) {
        for oc in 0..self.out_channels {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = self.biases[oc];
                    for ic in 0..self.in_channels {
                        let plane = &x[ic * h * w..(ic + 1) * h * w];
                        for u in 0..3 {
                            let ii = i + u;
                            if ii < 1 || ii > h {
                                continue;
                            }
                            let ii = ii - 1;
                            for v in 0..3 {
                                let jj = j + v;
                                if jj < 1 || jj > w {
                                    continue;
                                }
                                let jj = jj - 1;
                                acc += self.weights[self.widx(oc, ic, u, v)] * plane[ii * w + jj];
                            }
                        }
                    }
                    y[(oc * h + i) * w + j] = acc;
                }
            }
        }
    }

    pub fn backward(
        &self,
        x: &[f64],
        h: usize,
        w: usize,
        d_out: &[f64],
        d_weights: &mut [f64],
        d_biases: &mut [f64],
        d_in: &mut [f64],
    ) {
        d_in.fill(0.0);
        for oc in 0..self.out_channels {
            for i in 0..h {
                for j in 0..w {
                    let g = d_out[(oc * h + i) * w + j];
                    d_biases[oc] += g;
                    for ic in 0..self.in_channels {
                        for u in 0..3 {
                            let ii = i + u;
                            if ii < 1 || ii > h {
                                continue;
                            }
                            let ii = ii - 1;
                            for v in 0..3 {
                                let jj = j + v;
                                if jj < 1 || jj > w {
                                    continue;
                                }
                                let jj = jj - 1;
                                let wi = self.widx(oc, ic, u, v);
                                let xi = (ic * h + ii) * w + jj;
                                d_weights[wi] += g * x[xi];
                                d_in[xi] += g * self.weights[wi];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// A materialized layer (spec + parameters where applicable).
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Layer {
    Dense(Dense),
    Relu,
    Conv2d(Conv2d),
    Flatten,
    Softmax,
}

impl Layer {
    pub fn from_spec(spec: &LayerSpec, init: WeightInit, rng: &mut ChaCha8Rng) -> Layer {
        match spec {
            LayerSpec::Dense { in_dim, out_dim } => Layer::Dense(Dense::new(*in_dim, *out_dim, init, rng)),
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
            } => Layer::Conv2d(Conv2d::new(*in_channels, *out_channels, init, rng)),
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Softmax => Layer::Softmax,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(d) => LayerSpec::Dense {
                in_dim: d.in_dim,
                out_dim: d.out_dim,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::Conv2d(c) => LayerSpec::Conv2d {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
            },
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Softmax => LayerSpec::Softmax,
        }
    }

    /// Forward for one sample. `in_shape`/`out_shape` come from the
    /// construction-time shape walk.
    pub fn forward(&self, x: &[f64], in_shape: &[usize], out: &mut [f64]) {
        match self {
            Layer::Dense(d) => d.forward(x, out),
            Layer::Relu => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = if *v > 0.0 { *v } else { 0.0 };
                }
            }
            Layer::Conv2d(c) => c.forward(x, in_shape[1], in_shape[2], out),
            Layer::Flatten => out.copy_from_slice(x),
            Layer::Softmax => softmax_row(x, out),
        }
    }

    /// Backward for one sample: writes `d_in`, accumulates parameter grads
    /// into `d_params` (weights then biases) when the layer has any.
    pub fn backward(
        &self,
        x: &[f64],
        in_shape: &[usize],
        y: &[f64],
        d_out: &[f64],
        d_params: Option<(&mut [f64], &mut [f64])>,
        d_in: &mut [f64],
    ) {
        match self {
            Layer::Dense(d) => {
                let (dw, db) = d_params.expect("dense gradients");
                d.backward(x, d_out, dw, db, d_in);
            }
            Layer::Relu => {
                for i in 0..d_in.len() {
                    d_in[i] = if x[i] > 0.0 { d_out[i] } else { 0.0 };
                }
            }
            Layer::Conv2d(c) => {
                let (dw, db) = d_params.expect("conv gradients");
                c.backward(x, in_shape[1], in_shape[2], d_out, dw, db, d_in);
            }
            Layer::Flatten => d_in.copy_from_slice(d_out),
            Layer::Softmax => {
                // dx_i = y_i * (dy_i - sum_j y_j dy_j)
                let dot: f64 = y.iter().zip(d_out).map(|(a, b)| a * b).sum();
                for i in 0..d_in.len() {
                    d_in[i] = y[i] * (d_out[i] - dot);
                }
            }
        }
    }

    pub fn param_len(&self) -> Option<(usize, usize)> {
        match self {
            Layer::Dense(d) => Some((d.weights.len(), d.biases.len())),
            Layer::Conv2d(c) => Some((c.weights.len(), c.biases.len())),
            _ => None,
        }
    }
}

/// Numerically stable softmax of one row.
pub(crate) fn softmax_row(z: &[f64], out: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, v) in out.iter_mut().zip(z) {
        let e = (v - m).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}
