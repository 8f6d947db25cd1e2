use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean squared error over all elements, with its gradient
/// `2 (pred - target) / n`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "mse_loss",
            lhs: pred.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    let n = pred.len() as f64;
    let mut sum = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for ((g, &p), &t) in grad.iter_mut().zip(pred.data()).zip(target.data()) {
        let e = p - t;
        sum += e * e;
        *g = 2.0 * e / n;
    }
    Ok((sum / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_for_perfect_prediction() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (loss, grad) = mse_loss(&a, &a).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn worked_example() {
        let pred = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        let target = Tensor::matrix(1, 1, vec![3.0]).unwrap();
        let (loss, grad) = mse_loss(&pred, &target).unwrap();
        assert_eq!(loss, 4.0);
        // d/dpred (pred - target)^2 = 2 (pred - target) = -4, confirmed by
        // central differences below.
        assert_eq!(grad.data(), &[-4.0]);
        let h = 1e-6;
        let up = (1.0 + h - 3.0_f64).powi(2);
        let down = (1.0 - h - 3.0_f64).powi(2);
        assert!(((up - down) / (2.0 * h) - grad.data()[0]).abs() < 1e-6);
    }

    #[test]
    fn doubling_errors_quadruples_the_loss() {
        let target = Tensor::vector(vec![0.0, 0.0, 0.0]);
        let (l1, _) = mse_loss(&Tensor::vector(vec![1.0, 2.0, 2.0]), &target).unwrap();
        let (l2, _) = mse_loss(&Tensor::vector(vec![2.0, 4.0, 4.0]), &target).unwrap();
        assert!((l2 - 4.0 * l1).abs() < 1e-12);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert!(mse_loss(&a, &b).is_err());
    }
}
