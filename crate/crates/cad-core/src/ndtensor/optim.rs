//! Adam and LAMB with decoupled weight decay. LAMB is the training
//! default; Adam is kept as a control.

use super::params::Params;
use super::tensor::Tensor;
use crate::error::{CadError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Lamb,
}

#[derive(Clone, Copy, Debug)]
pub struct OptimizerHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerHyper {
    fn default() -> Self {
        OptimizerHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

const TRUST_RATIO_MIN: f64 = 0.01;
const TRUST_RATIO_MAX: f64 = 10.0;

/// Per-parameter first/second moment accumulators plus step counter.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    kind: OptimizerKind,
    hyper: OptimizerHyper,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl OptimizerState {
    pub fn new(params: &Params, kind: OptimizerKind, hyper: OptimizerHyper) -> Self {
        let m = (0..params.len())
            .map(|i| Tensor::zeros_like(params.tensor(i)))
            .collect();
        let v = (0..params.len())
            .map(|i| Tensor::zeros_like(params.tensor(i)))
            .collect();
        OptimizerState {
            kind,
            hyper,
            m,
            v,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update. Gradients must align with `params` by index; any
    /// non-finite gradient rejects the whole step.
    pub fn step(&mut self, params: &mut Params, grads: &[Tensor], lr: f64) -> Result<()> {
        assert_eq!(grads.len(), params.len(), "gradient count mismatch");
        for (i, g) in grads.iter().enumerate() {
            assert_eq!(
                g.shape(),
                params.tensor(i).shape(),
                "gradient shape mismatch for `{}`",
                params.name(i)
            );
            if !g.all_finite() {
                return Err(CadError::NonFiniteGradient {
                    param: params.name(i).to_string(),
                    step: self.step + 1,
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let OptimizerHyper {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.hyper;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for i in 0..params.len() {
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params.tensor_mut(i).data_mut();

            // Adam direction with bias correction, plus decoupled decay.
            let mut update = vec![0.0; p.len()];
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                update[j] = m_hat / (v_hat.sqrt() + eps) + weight_decay * p[j];
            }

            let scale = match self.kind {
                OptimizerKind::Adam => lr,
                OptimizerKind::Lamb => {
                    let p_norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let u_norm = update.iter().map(|x| x * x).sum::<f64>().sqrt();
                    // Ratio is 1 when either norm vanishes.
                    let trust = if p_norm == 0.0 || u_norm == 0.0 {
                        1.0
                    } else {
                        (p_norm / u_norm).clamp(TRUST_RATIO_MIN, TRUST_RATIO_MAX)
                    };
                    lr * trust
                }
            };
            for j in 0..p.len() {
                p[j] -= scale * update[j];
            }
        }
        Ok(())
    }
}
