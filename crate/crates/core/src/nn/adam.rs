//! Adam with decoupled weight decay.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled decay: p <- p * (1 - lr * wd) before the Adam update.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 2e-4,
        }
    }
}

/// Per-parameter first/second moment accumulators.
#[derive(Debug, Clone)]
pub struct AdamState<R: Real> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Array2<R>>,
    pub v: Vec<Array2<R>>,
}

impl<R: Real> AdamState<R> {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    /// One optimizer step. `names` is used only for diagnostics.
    pub fn step(
        &mut self,
        params: Vec<&mut Array2<R>>,
        grads: &[Array2<R>],
        names: &[String],
    ) -> Result<()> {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        for (i, g) in grads.iter().enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(
                    names.get(i).cloned().unwrap_or_else(|| format!("param {i}")),
                ));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c = &self.config;
        let lr = R::from_f64(c.learning_rate);
        let b1 = R::from_f64(c.beta1);
        let b2 = R::from_f64(c.beta2);
        let eps = R::from_f64(c.epsilon);
        let one = R::one();
        let shrink = R::from_f64(1.0 - c.learning_rate * c.weight_decay);
        let bc1 = one - R::from_f64(c.beta1.powi(t));
        let bc2 = one - R::from_f64(c.beta2.powi(t));
        for ((p, g), (m, v)) in
            params.into_iter().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            p.mapv_inplace(|x| x * shrink);
            m.zip_mut_with(g, |mv, &gv| *mv = b1 * *mv + (one - b1) * gv);
            v.zip_mut_with(g, |vv, &gv| *vv = b2 * *vv + (one - b2) * gv * gv);
            ndarray::Zip::from(&mut **p).and(&*m).and(&*v).for_each(|pv, &mv, &vv| {
                let m_hat = mv / bc1;
                let v_hat = vv / bc2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
        Ok(())
    }
}
