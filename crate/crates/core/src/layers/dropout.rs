use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{shape_error, Mode};

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Inverted dropout: in training mode each element is zeroed with
/// probability `rate` and survivors are scaled by `1/(1-rate)`, so the
/// expected output equals the input. Evaluation mode is the identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Dropout { rate, mask: None })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let keep = 1.0 - self.rate;
        let mask: Vec<f64> = (0..x.len())
            .map(|_| {
                if rng.gen_range(0.0..1.0) < self.rate {
                    0.0
                } else {
                    1.0 / keep
                }
            })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        self.mask = Some(mask);
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match &self.mask {
            None => Ok(grad.clone()),
            Some(mask) => {
                let data = grad.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
                Tensor::new(grad.shape().to_vec(), data)
            }
        }
    }
}

/// Spatial dropout over a `[T x C]` sequence: whole channels are zeroed
/// across all timesteps, with the same inverted scaling as `Dropout`.
#[derive(Debug, Clone)]
pub struct SpatialDropout {
    rate: f64,
    /// Per-channel scale factors of the last training forward.
    mask: Option<Vec<f64>>,
}

impl SpatialDropout {
    pub fn new(rate: f64) -> Result<Self> {
        check_rate(rate)?;
        Ok(SpatialDropout { rate, mask: None })
    }

    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            [_, _] => Ok(input.to_vec()),
            _ => Err(shape_error("spatial_dropout", input, vec![0, 0])),
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        self.out_shape(x.shape())?;
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let keep = 1.0 - self.rate;
        let c = x.cols();
        let mask: Vec<f64> = (0..c)
            .map(|_| {
                if rng.gen_range(0.0..1.0) < self.rate {
                    0.0
                } else {
                    1.0 / keep
                }
            })
            .collect();
        let mut out = x.clone();
        for t in 0..x.rows() {
            for (v, &m) in out.row_mut(t).iter_mut().zip(&mask) {
                *v *= m;
            }
        }
        self.mask = Some(mask);
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match &self.mask {
            None => Ok(grad.clone()),
            Some(mask) => {
                let mut out = grad.clone();
                for t in 0..grad.rows() {
                    for (g, &m) in out.row_mut(t).iter_mut().zip(mask) {
                        *g *= m;
                    }
                }
                Ok(out)
            }
        }
    }
}
