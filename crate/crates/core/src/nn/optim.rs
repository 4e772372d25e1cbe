use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const RMSPROP_DECAY: f64 = 0.99;
const RMSPROP_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Rmsprop,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Rmsprop => "rmsprop",
        }
    }
}

/// First-order optimizer driven by an *ascent* direction.
///
/// DQI produces `δ ∇Q`, which points downhill on the squared TD error, so
/// SGD adds it directly and Adam/RMSprop treat its negation as the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    step_size: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, step_size: f64, n_params: usize) -> Self {
        let (m, v) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam => (vec![0.0; n_params], vec![0.0; n_params]),
            OptimizerKind::Rmsprop => (Vec::new(), vec![0.0; n_params]),
        };
        Self {
            kind,
            step_size,
            first_moment: m,
            second_moment: v,
            steps: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// Applies one update in place. A non-finite direction is rejected before
    /// any state changes.
    pub fn step(&mut self, params: &mut [f64], direction: &[f64]) -> Result<()> {
        if direction.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                got: direction.len(),
            });
        }
        if direction.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFinite("update direction"));
        }
        self.steps += 1;
        let lr = self.step_size;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, d) in params.iter_mut().zip(direction) {
                    *p += lr * d;
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let bias1 = 1.0 - ADAM_BETA1.powi(t);
                let bias2 = 1.0 - ADAM_BETA2.powi(t);
                for (((p, d), m), v) in params
                    .iter_mut()
                    .zip(direction)
                    .zip(self.first_moment.iter_mut())
                    .zip(self.second_moment.iter_mut())
                {
                    let g = -d;
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
            OptimizerKind::Rmsprop => {
                for ((p, d), v) in params
                    .iter_mut()
                    .zip(direction)
                    .zip(self.second_moment.iter_mut())
                {
                    let g = -d;
                    *v = RMSPROP_DECAY * *v + (1.0 - RMSPROP_DECAY) * g * g;
                    *p -= lr * g / (v.sqrt() + RMSPROP_EPS);
                }
            }
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("parameters"));
        }
        Ok(())
    }
}
