use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::Tensor;

use super::{glorot_uniform, shape_error, Activation, ParamMut, ParamRef};

/// Fully connected layer `y = activation(x W + b)`.
///
/// A 1-D input is a single sample; a 2-D input `[T x n]` is treated as a
/// sequence and the same affine map is applied to every timestep
/// (time-distributed).
#[derive(Debug, Clone)]
pub struct Dense {
    in_size: usize,
    out_size: usize,
    activation: Activation,
    /// Shape `(in_size, out_size)`, row-major.
    weight: Tensor,
    bias: Tensor,
    dweight: Tensor,
    dbias: Tensor,
    cache: Option<DenseCache>,
}

#[derive(Debug, Clone)]
struct DenseCache {
    input: Tensor,
    /// Post-activation output, flattened to `[T x out]`.
    output: Tensor,
}

impl Dense {
    pub fn new(
        in_size: usize,
        out_size: usize,
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Dense {
            in_size,
            out_size,
            activation,
            weight: glorot_uniform(rng, vec![in_size, out_size], in_size, out_size),
            bias: Tensor::zeros(&[out_size]),
            dweight: Tensor::zeros(&[in_size, out_size]),
            dbias: Tensor::zeros(&[out_size]),
            cache: None,
        }
    }

    /// Overrides parameters; used by tests and deserialization.
    pub fn set_params(&mut self, weight: Tensor, bias: Tensor) {
        debug_assert_eq!(weight.shape(), &[self.in_size, self.out_size]);
        debug_assert_eq!(bias.shape(), &[self.out_size]);
        self.weight = weight;
        self.bias = bias;
    }

    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            [n] if *n == self.in_size => Ok(vec![self.out_size]),
            [t, n] if *n == self.in_size => Ok(vec![*t, self.out_size]),
            _ => Err(shape_error("dense", input, vec![self.in_size])),
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.out_shape(x.shape())?;
        let t = if x.rank() == 2 { x.shape()[0] } else { 1 };
        let n = self.in_size;
        let m = self.out_size;

        let mut out = vec![0.0; t * m];
        for ti in 0..t {
            let row = &x.data()[ti * n..(ti + 1) * n];
            let out_row = &mut out[ti * m..(ti + 1) * m];
            out_row.copy_from_slice(self.bias.data());
            for (j, &xj) in row.iter().enumerate() {
                let w_row = self.weight.row(j);
                for (o, &w) in out_row.iter_mut().zip(w_row) {
                    *o += xj * w;
                }
            }
            for o in out_row.iter_mut() {
                *o = self.activation.apply(*o);
            }
        }
        let output = Tensor::new(vec![t, m], out)?;
        self.cache = Some(DenseCache {
            input: x.clone(),
            output: output.clone(),
        });
        output.reshape(out_shape)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().expect("backward before forward");
        let x = &cache.input;
        let t = if x.rank() == 2 { x.shape()[0] } else { 1 };
        let n = self.in_size;
        let m = self.out_size;
        debug_assert_eq!(grad.len(), t * m);

        let mut dx = vec![0.0; t * n];
        for ti in 0..t {
            let g_row = &grad.data()[ti * m..(ti + 1) * m];
            let y_row = cache.output.row(ti);
            let x_row = &x.data()[ti * n..(ti + 1) * n];
            // dz = grad * act'(y)
            let mut dz = [0.0; 0].to_vec();
            dz.extend(
                g_row
                    .iter()
                    .zip(y_row)
                    .map(|(&g, &y)| g * self.activation.grad_from_output(y)),
            );
            for (k, &d) in dz.iter().enumerate() {
                self.dbias.data_mut()[k] += d;
            }
            let dx_row = &mut dx[ti * n..(ti + 1) * n];
            for (j, &xj) in x_row.iter().enumerate() {
                let w_row = self.weight.row(j);
                let dw_row = self.dweight.row_mut(j);
                let mut acc = 0.0;
                for k in 0..m {
                    dw_row[k] += xj * dz[k];
                    acc += w_row[k] * dz[k];
                }
                dx_row[j] += acc;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{checks, Layer, Mode};
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn hand_example() {
        let mut d = Dense::new(2, 2, Activation::Linear, &mut rng());
        d.set_params(
            Tensor::matrix(2, 2, vec![1.0, 3.0, 2.0, 4.0]).unwrap(),
            Tensor::vector(vec![0.0, 0.0]),
        );
        let y = d.forward(&Tensor::vector(vec![1.0, 1.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 7.0]);
    }

    #[test]
    fn identity_weights_pass_through() {
        let mut d = Dense::new(3, 3, Activation::Linear, &mut rng());
        d.set_params(
            Tensor::matrix(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap(),
            Tensor::vector(vec![0.0; 3]),
        );
        let x = Tensor::vector(vec![0.5, -2.0, 7.0]);
        assert_eq!(d.forward(&x).unwrap(), x);
    }

    #[test]
    fn param_count_formula() {
        let d = Dense::new(3, 2, Activation::Linear, &mut rng());
        let l = Layer::Dense(d);
        assert_eq!(l.param_count(), 8); // 3*2 + 2
    }

    #[test]
    fn rejects_wrong_input_width() {
        let mut d = Dense::new(3, 2, Activation::Linear, &mut rng());
        assert!(d.forward(&Tensor::vector(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rng();
        for &(t, relu) in &[(1usize, false), (4, true)] {
            let act = if relu {
                Activation::Relu
            } else {
                Activation::Linear
            };
            let mut layer = Layer::Dense(Dense::new(3, 2, act, &mut rng));
            let x = if t == 1 {
                Tensor::vector(vec![0.3, -0.7, 0.4])
            } else {
                Tensor::matrix(t, 3, (0..t * 3).map(|i| 0.17 * i as f64 - 0.9).collect()).unwrap()
            };
            let mut dummy = ChaCha8Rng::seed_from_u64(0);
            checks::check_layer_gradients(
                &mut layer,
                &x,
                |l, x| l.forward(x, Mode::Eval, &mut dummy).unwrap(),
                1e-4,
            );
        }
    }

    #[test]
    fn time_distributed_matches_per_row() {
        let mut d = Dense::new(2, 3, Activation::Relu, &mut rng());
        let seq = Tensor::matrix(3, 2, vec![1.0, -1.0, 0.5, 2.0, -0.3, 0.9]).unwrap();
        let out = d.forward(&seq).unwrap();
        for t in 0..3 {
            let single = d
                .forward(&Tensor::vector(seq.row(t).to_vec()))
                .unwrap();
            assert_eq!(out.row(t), single.data());
        }
    }
}
