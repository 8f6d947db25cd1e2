//! Dense row-major tensors and the few numeric primitives everything else
//! builds on.
//!
//! All values are `f64`; gradient checking needs the precision headroom.
//! Operations validate shapes and reject non-finite results instead of
//! propagating them.

use crate::error::{Error, Result};

/// A dense tensor: a shape plus row-major `f64` storage.
///
/// Tensors are treated as immutable values once an operation has produced
/// them; mutation is confined to parameter and gradient buffers owned by a
/// single training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that the data length matches the shape.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    /// 1-D tensor from a plain vector.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// 2-D tensor from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Total number of elements.
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

    /// Number of rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[0]
    }

    /// Number of columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[1]
    }

    /// Row `i` of a 2-D tensor as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Element of a 2-D tensor.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    /// Same data under a new shape; element counts must agree.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape,
            });
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Matrix product of two 2-D tensors.
///
/// The `[m x 0] * [0 x n]` case follows the empty-sum convention and yields
/// all zeros. Overflow to a non-finite value is an error.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows() {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = a.row(i);
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate().take(k) {
            let b_row = b.row(p);
            for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * b_pj;
            }
        }
    }
    if !out.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite {
            context: "matmul".to_string(),
        });
    }
    Tensor::new(vec![m, n], out)
}

/// Scalar activation functions paired with their exact derivatives.
pub mod scalar {
    pub fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    pub fn sigmoid_prime(x: f64) -> f64 {
        let s = sigmoid(x);
        s * (1.0 - s)
    }

    pub fn tanh(x: f64) -> f64 {
        x.tanh()
    }

    pub fn tanh_prime(x: f64) -> f64 {
        let t = x.tanh();
        1.0 - t * t
    }

    pub fn relu(x: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            0.0
        }
    }

    pub fn relu_prime(x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(scalar::sigmoid)
}

pub fn tanh(x: &Tensor) -> Tensor {
    x.map(scalar::tanh)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(scalar::relu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::matrix(rows, cols, data).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matmul(&eye, &a).unwrap(), a);
    }

    #[test]
    fn matmul_hand_example() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_empty_reduction_is_zero() {
        let a = Tensor::new(vec![1, 0], vec![]).unwrap();
        let b = Tensor::new(vec![0, 1], vec![]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.data(), &[0.0]);
    }

    #[test]
    fn matmul_rejects_mismatched_shapes() {
        let a = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        let b = Tensor::matrix(2, 2, vec![0.0; 4]).unwrap();
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn matmul_associative_with_identity_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_matrix(&mut rng, 10, 10);
        let b = random_matrix(&mut rng, 10, 10);
        let c = random_matrix(&mut rng, 10, 10);
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        for (l, r) in left.data().iter().zip(right.data()) {
            assert!((l - r).abs() < 1e-12, "assoc mismatch {l} vs {r}");
        }
    }

    #[test]
    fn activation_fixed_points() {
        assert_eq!(scalar::sigmoid(0.0), 0.5);
        assert_eq!(scalar::tanh(0.0), 0.0);
        assert_eq!(scalar::relu(-3.0), 0.0);
        assert_eq!(scalar::relu(3.0), 3.0);
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        let h = 1e-5;
        let cases: [(fn(f64) -> f64, fn(f64) -> f64, &str); 3] = [
            (scalar::sigmoid, scalar::sigmoid_prime, "sigmoid"),
            (scalar::tanh, scalar::tanh_prime, "tanh"),
            (scalar::relu, scalar::relu_prime, "relu"),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (f, fp, name) in cases {
            for _ in 0..200 {
                let x: f64 = rng.gen_range(-5.0..5.0);
                if name == "relu" && x.abs() < 1e-3 {
                    continue; // not differentiable at the kink
                }
                let numeric = (f(x + h) - f(x - h)) / (2.0 * h);
                let analytic = fp(x);
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-6,
                    "{name} derivative mismatch at {x}: {analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn reshape_checks_element_count() {
        let t = Tensor::vector(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = t.reshape(vec![2, 3]).unwrap();
        assert_eq!(r.row(1), &[4.0, 5.0, 6.0]);
        assert!(t.reshape(vec![4]).is_err());
    }
}
