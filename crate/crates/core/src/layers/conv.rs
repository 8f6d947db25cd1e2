use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{glorot_uniform, shape_error, Activation, ParamMut, ParamRef};

/// 1-D convolution over the time axis of a `[T x C]` sequence.
///
/// Valid (no-padding) cross-correlation with stride 1: the output has
/// `T - k + 1` timesteps and one channel per filter.
#[derive(Debug, Clone)]
pub struct Conv1d {
    in_channels: usize,
    filters: usize,
    kernel: usize,
    activation: Activation,
    /// Shape `(kernel * in_channels, filters)`: each output is a dot product
    /// of a flattened input window with one filter column.
    weight: Tensor,
    bias: Tensor,
    dweight: Tensor,
    dbias: Tensor,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    input: Tensor,
    output: Tensor,
}

impl Conv1d {
    pub fn new(
        in_channels: usize,
        filters: usize,
        kernel: usize,
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let rows = kernel * in_channels;
        Conv1d {
            in_channels,
            filters,
            kernel,
            activation,
            weight: glorot_uniform(rng, vec![rows, filters], rows, filters),
            bias: Tensor::zeros(&[filters]),
            dweight: Tensor::zeros(&[rows, filters]),
            dbias: Tensor::zeros(&[filters]),
            cache: None,
        }
    }

    pub fn set_params(&mut self, weight: Tensor, bias: Tensor) {
        debug_assert_eq!(weight.shape(), self.weight.shape());
        debug_assert_eq!(bias.shape(), self.bias.shape());
        self.weight = weight;
        self.bias = bias;
    }

    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            [t, c] if *c == self.in_channels => {
                if *t < self.kernel {
                    Err(Error::InvalidArgument(format!(
                        "conv1d window: input has {t} timesteps, kernel needs {}",
                        self.kernel
                    )))
                } else {
                    Ok(vec![t - self.kernel + 1, self.filters])
                }
            }
            _ => Err(shape_error("conv1d", input, vec![self.kernel, self.in_channels])),
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.out_shape(x.shape())?;
        let (t_out, c) = (out_shape[0], self.in_channels);
        let (k, f) = (self.kernel, self.filters);

        let mut out = vec![0.0; t_out * f];
        for t in 0..t_out {
            let out_row = &mut out[t * f..(t + 1) * f];
            out_row.copy_from_slice(self.bias.data());
            for dt in 0..k {
                let x_row = x.row(t + dt);
                for (ci, &xv) in x_row.iter().enumerate().take(c) {
                    let w_row = self.weight.row(dt * c + ci);
                    for (o, &w) in out_row.iter_mut().zip(w_row) {
                        *o += xv * w;
                    }
                }
            }
            for o in out_row.iter_mut() {
                *o = self.activation.apply(*o);
            }
        }
        let output = Tensor::new(out_shape, out)?;
        self.cache = Some(ConvCache {
            input: x.clone(),
            output: output.clone(),
        });
        Ok(output)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().expect("backward before forward");
        let x = &cache.input;
        let (t_out, f) = (cache.output.rows(), self.filters);
        let (k, c) = (self.kernel, self.in_channels);
        debug_assert_eq!(grad.len(), t_out * f);

        let mut dx = vec![0.0; x.len()];
        let mut dz = vec![0.0; f];
        for t in 0..t_out {
            let g_row = &grad.data()[t * f..(t + 1) * f];
            let y_row = cache.output.row(t);
            for ((d, &g), &y) in dz.iter_mut().zip(g_row).zip(y_row) {
                *d = g * self.activation.grad_from_output(y);
            }
            for (k_i, &d) in dz.iter().enumerate() {
                self.dbias.data_mut()[k_i] += d;
            }
            for dt in 0..k {
                let x_row = x.row(t + dt);
                let dx_row = &mut dx[(t + dt) * c..(t + dt + 1) * c];
                for ci in 0..c {
                    let w_row = self.weight.row(dt * c + ci);
                    let dw_row = self.dweight.row_mut(dt * c + ci);
                    let mut acc = 0.0;
                    for fi in 0..f {
                        dw_row[fi] += x_row[ci] * dz[fi];
                        acc += w_row[fi] * dz[fi];
                    }
                    dx_row[ci] += acc;
                }
            }
        }
        Tensor::new(x.shape().to_vec(), dx)
    }

    pub fn params(&self) -> Vec<ParamRef<'_>> {
        vec![
            ParamRef {
                name: "weight",
                value: &self.weight,
                grad: &self.dweight,
                is_weight: true,
            },
            ParamRef {
                name: "bias",
                value: &self.bias,
                grad: &self.dbias,
                is_weight: false,
            },
        ]
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        vec![
            ParamMut {
                name: "weight",
                value: &mut self.weight,
                grad: &mut self.dweight,
                is_weight: true,
            },
            ParamMut {
                name: "bias",
                value: &mut self.bias,
                grad: &mut self.dbias,
                is_weight: false,
            },
        ]
    }
}

/// Per-channel max pooling over non-overlapping windows (stride = size).
///
/// A trailing remainder shorter than the pool size is dropped. Gradient is
/// routed to the first maximum of each window.
#[derive(Debug, Clone)]
pub struct MaxPool1d {
    size: usize,
    cache: Option<PoolCache>,
}

#[derive(Debug, Clone)]
struct PoolCache {
    in_shape: Vec<usize>,
    /// Flat input index of the argmax for every output element.
    argmax: Vec<usize>,
}

impl MaxPool1d {
    pub fn new(size: usize) -> Self {
        MaxPool1d { size, cache: None }
    }

    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            [t, c] => {
                if *t < self.size {
                    Err(Error::InvalidArgument(format!(
                        "maxpool1d window: input has {t} timesteps, pool needs {}",
                        self.size
                    )))
                } else {
                    Ok(vec![t / self.size, *c])
                }
            }
            _ => Err(shape_error("maxpool1d", input, vec![self.size, 0])),
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.out_shape(x.shape())?;
        let (t_out, c) = (out_shape[0], out_shape[1]);
        let mut out = vec![0.0; t_out * c];
        let mut argmax = vec![0usize; t_out * c];
        for t in 0..t_out {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dt in 0..self.size {
                    let idx = (t * self.size + dt) * c + ch;
                    let v = x.data()[idx];
                    if v > best {
                        best = v;
                        best_idx = idx;
                    }
                }
                out[t * c + ch] = best;
                argmax[t * c + ch] = best_idx;
            }
        }
        self.cache = Some(PoolCache {
            in_shape: x.shape().to_vec(),
            argmax,
        });
        Tensor::new(out_shape, out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().expect("backward before forward");
        let mut dx = Tensor::zeros(&cache.in_shape);
        for (g, &idx) in grad.data().iter().zip(&cache.argmax) {
            dx.data_mut()[idx] += g;
        }
        Ok(dx)
    }
}
