use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::shape_error;

/// Collapses a `[T x C]` sequence into a flat vector of length `T*C`.
#[derive(Debug, Clone)]
pub struct Flatten {
    in_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Flatten { in_shape: None }
    }

    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            [t, c] => Ok(vec![t * c]),
            _ => Err(shape_error("flatten", input, vec![0, 0])),
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = self.out_shape(x.shape())?;
        self.in_shape = Some(x.shape().to_vec());
        x.reshape(out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = self.in_shape.as_ref().expect("backward before forward");
        grad.reshape(shape.clone())
    }
}

impl Default for Flatten {
    fn default() -> Self {
        Self::new()
    }
}

/// Tiles a vector `P` times into a `[P x n]` sequence. The backward pass
/// sums the gradients of the copies.
#[derive(Debug, Clone)]
pub struct RepeatVector {
    repeats: usize,
}

impl RepeatVector {
    pub fn new(repeats: usize) -> Self {
        RepeatVector { repeats }
    }

    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            [n] => Ok(vec![self.repeats, *n]),
            _ => Err(shape_error("repeat_vector", input, vec![0])),
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.out_shape(x.shape())?;
        let mut data = Vec::with_capacity(x.len() * self.repeats);
        for _ in 0..self.repeats {
            data.extend_from_slice(x.data());
        }
        Tensor::new(out_shape, data)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let n = grad.cols();
        let mut out = vec![0.0; n];
        for t in 0..grad.rows() {
            for (o, &g) in out.iter_mut().zip(grad.row(t)) {
                *o += g;
            }
        }
        Ok(Tensor::vector(out))
    }
}

/// Reinterprets the data under a fixed target shape.
#[derive(Debug, Clone)]
pub struct Reshape {
    target: Vec<usize>,
    in_shape: Option<Vec<usize>>,
}

impl Reshape {
    pub fn new(target: Vec<usize>) -> Self {
        Reshape {
            target,
            in_shape: None,
        }
    }

    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let have: usize = input.iter().product();
        let want: usize = self.target.iter().product();
        if have != want {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: input.to_vec(),
                rhs: self.target.clone(),
            });
        }
        Ok(self.target.clone())
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = self.out_shape(x.shape())?;
        self.in_shape = Some(x.shape().to_vec());
        x.reshape(out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = self.in_shape.as_ref().expect("backward before forward");
        grad.reshape(shape.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_row_major_order() {
        let mut f = Flatten::new();
        let x = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = f.forward(&x).unwrap();
        assert_eq!(y.shape(), &[4]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
        let dx = f.backward(&Tensor::vector(vec![1.0, 0.0, 0.0, 2.0])).unwrap();
        assert_eq!(dx.shape(), &[2, 2]);
    }

    #[test]
    fn repeat_tiles_and_sums_gradient() {
        let mut r = RepeatVector::new(3);
        let y = r.forward(&Tensor::vector(vec![5.0, 6.0])).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(y.data(), &[5.0, 6.0, 5.0, 6.0, 5.0, 6.0]);
        let dx = r
            .backward(&Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap())
            .unwrap();
        assert_eq!(dx.data(), &[9.0, 12.0]);
    }

    #[test]
    fn reshape_checks_counts() {
        let mut r = Reshape::new(vec![2, 3]);
        let x = Tensor::vector(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = r.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        assert_eq!(y.row(1), &[4.0, 5.0, 6.0]);

        let mut bad = Reshape::new(vec![4]);
        assert!(bad.forward(&x).is_err());
    }
}
