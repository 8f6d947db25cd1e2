use crate::error::{Error, Result};
use crate::layers::ParamMut;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update on a flat parameter slice.
///
/// `m` and `v` are the running first/second moments for the same slice and
/// `t` is the 1-based step count used for bias correction.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &AdamParams,
) -> Result<()> {
    debug_assert!(t >= 1);
    debug_assert_eq!(params.len(), grads.len());
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        if !g.is_finite() {
            return Err(Error::NonFinite {
                context: "gradient".to_string(),
            });
        }
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Adam optimizer state for a whole model (one `m`/`v` entry per
/// parameter, walked in graph order).
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamParams,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, cfg: AdamParams) -> Self {
        Adam {
            cfg,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// Applies one update across every parameter tensor of a model.
    pub fn step(&mut self, params: Vec<ParamMut<'_>>) -> Result<()> {
        self.t += 1;
        let mut offset = 0;
        for p in params {
            let len = p.value.len();
            adam_update(
                p.value.data_mut(),
                p.grad.data(),
                &mut self.m[offset..offset + len],
                &mut self.v[offset..offset + len],
                self.t,
                &self.cfg,
            )?;
            offset += len;
        }
        debug_assert_eq!(offset, self.m.len());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_single_step() {
        // theta = 1.0, g = 0.5, eta = 0.01, defaults, t = 1:
        // m = 0.05, v = 0.00025, m_hat = 0.5, v_hat = 0.25,
        // theta' = 1 - 0.01 * 0.5 / (0.5 + 1e-8) ~ 0.99000.
        let mut p = [1.0];
        let mut m = [0.0];
        let mut v = [0.0];
        let cfg = AdamParams {
            learning_rate: 0.01,
            ..AdamParams::default()
        };
        adam_update(&mut p, &[0.5], &mut m, &mut v, 1, &cfg).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-9, "{}", p[0]);
    }

    #[test]
    fn zero_gradient_with_zero_state_leaves_parameter_unchanged() {
        let mut p = [3.25];
        let mut m = [0.0];
        let mut v = [0.0];
        adam_update(&mut p, &[0.0], &mut m, &mut v, 1, &AdamParams::default()).unwrap();
        assert_eq!(p[0], 3.25);
    }

    #[test]
    fn equal_histories_update_identically() {
        let mut p = [1.0, 1.0];
        let mut m = [0.0; 2];
        let mut v = [0.0; 2];
        let cfg = AdamParams::default();
        for t in 1..=10 {
            adam_update(&mut p, &[0.3, 0.3], &mut m, &mut v, t, &cfg).unwrap();
            assert_eq!(p[0], p[1]);
        }
    }

    #[test]
    fn non_finite_gradient_is_a_divergence_error() {
        let mut p = [1.0];
        let mut m = [0.0];
        let mut v = [0.0];
        let err =
            adam_update(&mut p, &[f64::NAN], &mut m, &mut v, 1, &AdamParams::default()).unwrap_err();
        assert!(err.is_divergence());
    }
}
