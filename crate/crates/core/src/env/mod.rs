//! Episodic environments behind one value-typed stepping interface.
//!
//! All dynamics are deterministic given `(state, action)`; randomness enters
//! only through `reset`.

mod acrobot;
mod cartpole;
mod tworoom;

pub use acrobot::AcrobotState;
pub use cartpole::CartPoleState;
pub use tworoom::{TwoRoomState, GRID_SIZE};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GAMMA: f64 = 0.99;
pub const DEFAULT_MAX_EPISODE_STEPS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Cartpole,
    Acrobot,
    Tworoom,
}

impl EnvId {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Cartpole => "cartpole",
            EnvId::Acrobot => "acrobot",
            EnvId::Tworoom => "tworoom",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cartpole" => Ok(EnvId::Cartpole),
            "acrobot" => Ok(EnvId::Acrobot),
            "tworoom" => Ok(EnvId::Tworoom),
            other => Err(Error::Config(format!("unknown environment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSpec {
    pub id: EnvId,
    pub obs_dim: usize,
    pub action_count: usize,
    pub gamma: f64,
    pub max_episode_steps: usize,
    /// Two-Room only: which room `reset` starts in (0 or 1).
    pub room: u8,
}

impl EnvSpec {
    pub fn new(id: EnvId) -> Self {
        let (obs_dim, action_count) = match id {
            EnvId::Cartpole => (4, 2),
            EnvId::Acrobot => (6, 3),
            EnvId::Tworoom => (3, 4),
        };
        Self {
            id,
            obs_dim,
            action_count,
            gamma: DEFAULT_GAMMA,
            max_episode_steps: DEFAULT_MAX_EPISODE_STEPS,
            room: 0,
        }
    }

    pub fn with_room(mut self, room: u8) -> Self {
        self.room = room;
        self
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let physical = match self.id {
            EnvId::Cartpole => Physical::CartPole(CartPoleState::reset(rng)),
            EnvId::Acrobot => Physical::Acrobot(AcrobotState::reset(rng)),
            EnvId::Tworoom => Physical::TwoRoom(TwoRoomState::start(self.room)),
        };
        EnvState {
            physical,
            steps_elapsed: 0,
        }
    }

    pub fn step(&self, state: &EnvState, action: usize) -> Result<(EnvState, StepResult)> {
        if action >= self.action_count {
            return Err(Error::InvalidAction {
                action,
                count: self.action_count,
            });
        }
        let (physical, reward, terminal) = match &state.physical {
            Physical::CartPole(s) => {
                let (n, r, t) = s.step(action);
                (Physical::CartPole(n), r, t)
            }
            Physical::Acrobot(s) => {
                let (n, r, t) = s.step(action);
                (Physical::Acrobot(n), r, t)
            }
            Physical::TwoRoom(s) => {
                let (n, r, t) = s.step(action);
                (Physical::TwoRoom(n), r, t)
            }
        };
        let steps_elapsed = state.steps_elapsed + 1;
        let next = EnvState {
            physical,
            steps_elapsed,
        };
        let result = StepResult {
            next_observation: next.observation(),
            reward,
            terminal,
            truncated: !terminal && steps_elapsed >= self.max_episode_steps,
        };
        Ok((next, result))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Physical {
    CartPole(CartPoleState),
    Acrobot(AcrobotState),
    TwoRoom(TwoRoomState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    physical: Physical,
    pub steps_elapsed: usize,
}

impl EnvState {
    pub fn observation(&self) -> Vec<f64> {
        match &self.physical {
            Physical::CartPole(s) => s.observation().to_vec(),
            Physical::Acrobot(s) => s.observation().to_vec(),
            Physical::TwoRoom(s) => s.observation().to_vec(),
        }
    }

    pub fn as_cartpole(&self) -> Option<&CartPoleState> {
        match &self.physical {
            Physical::CartPole(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_acrobot(&self) -> Option<&AcrobotState> {
        match &self.physical {
            Physical::Acrobot(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_tworoom(&self) -> Option<&TwoRoomState> {
        match &self.physical {
            Physical::TwoRoom(s) => Some(s),
            _ => None,
        }
    }

    pub fn from_tworoom(state: TwoRoomState) -> Self {
        Self {
            physical: Physical::TwoRoom(state),
            steps_elapsed: 0,
        }
    }

    pub fn from_acrobot(state: AcrobotState) -> Self {
        Self {
            physical: Physical::Acrobot(state),
            steps_elapsed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_observation: Vec<f64>,
    pub reward: f64,
    /// True termination; drops the bootstrap.
    pub terminal: bool,
    /// Time-limit cutoff; still bootstraps.
    pub truncated: bool,
}

/// A deterministic map from observations to actions, evaluated in batches.
pub trait Policy {
    fn act_batch(&self, observations: ArrayView2<'_, f64>) -> Vec<usize>;
}

/// Adapts a per-observation closure into a [`Policy`].
pub struct FnPolicy<F>(pub F);

impl<F: Fn(&[f64]) -> usize> Policy for FnPolicy<F> {
    fn act_batch(&self, observations: ArrayView2<'_, f64>) -> Vec<usize> {
        observations
            .rows()
            .into_iter()
            .map(|row| (self.0)(row.as_slice().expect("standard layout")))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReturn {
    pub discounted: f64,
    pub undiscounted: f64,
}

/// Monte-Carlo estimate of the policy's return from the start distribution.
///
/// Rollouts run in lockstep so the policy sees one batch per time step. With
/// `random_first_action` the first action of each rollout is uniform.
pub fn evaluate_policy<P, R>(
    spec: &EnvSpec,
    policy: &P,
    n_rollouts: usize,
    gamma: f64,
    random_first_action: bool,
    rng: &mut R,
) -> Result<EvalReturn>
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    if n_rollouts == 0 {
        return Err(Error::InvalidArgument("n_rollouts must be at least 1".into()));
    }
    let mut states: Vec<EnvState> = (0..n_rollouts).map(|_| spec.reset(rng)).collect();
    let mut alive = vec![true; n_rollouts];
    let mut disc = vec![0.0; n_rollouts];
    let mut undisc = vec![0.0; n_rollouts];
    let mut discount = 1.0;
    for t in 0..spec.max_episode_steps {
        let live: Vec<usize> = (0..n_rollouts).filter(|&i| alive[i]).collect();
        if live.is_empty() {
            break;
        }
        let actions: Vec<usize> = if t == 0 && random_first_action {
            live.iter().map(|_| rng.random_range(0..spec.action_count)).collect()
        } else {
            let mut obs = Array2::zeros((live.len(), spec.obs_dim));
            for (row, &i) in live.iter().enumerate() {
                for (j, v) in states[i].observation().into_iter().enumerate() {
                    obs[[row, j]] = v;
                }
            }
            policy.act_batch(obs.view())
        };
        for (&i, &a) in live.iter().zip(&actions) {
            let (next, step) = spec.step(&states[i], a)?;
            disc[i] += discount * step.reward;
            undisc[i] += step.reward;
            if step.terminal || step.truncated {
                alive[i] = false;
            }
            states[i] = next;
        }
        discount *= gamma;
    }
    let n = n_rollouts as f64;
    Ok(EvalReturn {
        discounted: disc.iter().sum::<f64>() / n,
        undiscounted: undisc.iter().sum::<f64>() / n,
    })
}
