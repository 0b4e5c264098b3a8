use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{shape_err, Result};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
    pub params: AdamParams,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, params: AdamParams) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
            params,
        }
    }

    /// Bias-corrected Adam update of `param` in place.
    pub fn step(&mut self, param: &mut [T], grad: &[T], lr: f64) -> Result<()> {
        if param.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(shape_err(format!(
                "adam: param {}, grad {}, state {}",
                param.len(),
                grad.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let b1 = T::lit(self.params.beta1);
        let b2 = T::lit(self.params.beta2);
        let eps = T::lit(self.params.eps);
        let c1 = T::one() - T::lit(self.params.beta1.powi(self.t as i32));
        let c2 = T::one() - T::lit(self.params.beta2.powi(self.t as i32));
        let lr = T::lit(lr);
        for ((p, g), (m, v)) in param
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + (T::one() - b1) * *g;
            *v = b2 * *v + (T::one() - b2) * *g * *g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
