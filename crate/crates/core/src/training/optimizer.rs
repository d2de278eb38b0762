use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::partition::ParameterPartition;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::pipeline::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// One decoupled-weight-decay Adam update of `theta` in place; `step` is
/// the 1-based step count used for bias correction.
pub fn adamw_update(
    theta: &mut [f64],
    grad: &[f64],
    moments: &mut Moments,
    step: u64,
    cfg: &AdamConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..theta.len() {
        theta[i] *= 1.0 - cfg.learning_rate * cfg.weight_decay;
        let g = grad[i];
        moments.m[i] = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * g;
        moments.v[i] = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = moments.m[i] / bc1;
        let v_hat = moments.v[i] / bc2;
        theta[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// AdamW over the trainable subset of a model.
#[derive(Clone, Debug)]
pub struct AdamW {
    cfg: AdamConfig,
    step: u64,
    state: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(
        cfg: AdamConfig,
        params: &ModelParams,
        partition: &ParameterPartition,
    ) -> Result<Self> {
        cfg.validate()?;
        partition.check_covers(params)?;
        let state = params
            .named()
            .into_iter()
            .filter(|(n, _)| partition.is_trainable(n))
            .map(|(n, t)| {
                let zeros = vec![0.0; t.len()];
                (
                    n,
                    Moments {
                        m: zeros.clone(),
                        v: zeros,
                    },
                )
            })
            .collect();
        Ok(Self {
            cfg,
            step: 0,
            state,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn state(&self) -> &BTreeMap<String, Moments> {
        &self.state
    }

    pub fn state_names(&self) -> Vec<&str> {
        self.state.keys().map(String::as_str).collect()
    }

    /// Applies one update. A gradient for anything outside the optimizer
    /// state is a partition breach; trainable parameters without a
    /// gradient see a zero gradient.
    pub fn step(
        &mut self,
        params: &mut ModelParams,
        grads: &BTreeMap<String, Tensor>,
    ) -> Result<()> {
        if let Some(name) = grads.keys().find(|n| !self.state.contains_key(*n)) {
            return Err(Error::PartitionBreach(format!(
                "gradient supplied for frozen parameter {name}"
            )));
        }
        self.step += 1;
        let (step, cfg) = (self.step, self.cfg);
        let mut err = None;
        params.for_each_mut(|name, theta| {
            let Some(moments) = self.state.get_mut(name) else {
                return;
            };
            let zeros;
            let grad = match grads.get(name) {
                Some(g) if g.shape() == theta.shape() => g.data(),
                Some(g) => {
                    err.get_or_insert(Error::Shape {
                        op: "optimizer step",
                        lhs: g.shape().to_vec(),
                        rhs: theta.shape().to_vec(),
                    });
                    return;
                }
                None => {
                    zeros = vec![0.0; theta.len()];
                    &zeros
                }
            };
            adamw_update(theta.data_mut(), grad, moments, step, &cfg);
            if !theta.is_finite() {
                err.get_or_insert(Error::NonFinite {
                    op: format!("optimizer update of {name}"),
                });
            }
        });
        err.map_or(Ok(()), Err)
    }
}
