use serde::{Deserialize, Serialize};

use super::Layer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!(
                "invalid optimizer hyperparameters {self:?}"
            )))
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer hyperparameters plus its running state. Moments exist only for Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step_count: u64,
    pub first_moments: Option<Vec<Layer>>,
    pub second_moments: Option<Vec<Layer>>,
}

impl OptimizerState {
    pub(crate) fn fresh(config: OptimizerConfig, params: &[Layer]) -> Self {
        let zeros = || params.iter().map(Layer::zeros_like).collect::<Vec<_>>();
        let (first_moments, second_moments) = match config.kind {
            OptimizerKind::Sgd => (None, None),
            OptimizerKind::Adam => (Some(zeros()), Some(zeros())),
        };
        Self {
            config,
            step_count: 0,
            first_moments,
            second_moments,
        }
    }

    /// Applies one update to `params` in place. Shapes are checked by the caller.
    pub(crate) fn apply(&mut self, params: &mut [Layer], grads: &[Layer]) {
        self.step_count += 1;
        let lr = self.config.learning_rate;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pv, gv) in p.values_mut().zip(g.values()) {
                        *pv -= lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let OptimizerConfig {
                    beta1, beta2, epsilon, ..
                } = self.config;
                let t = self.step_count as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                let m = self.first_moments.as_mut().expect("adam keeps first moments");
                let v = self.second_moments.as_mut().expect("adam keeps second moments");
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
                    for (((pv, &gv), mv), vv) in p.values_mut().zip(g.values()).zip(m.values_mut()).zip(v.values_mut())
                    {
                        *mv = beta1 * *mv + (1.0 - beta1) * gv;
                        *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                        let m_hat = *mv / bc1;
                        let v_hat = *vv / bc2;
                        *pv -= lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
    }
}
