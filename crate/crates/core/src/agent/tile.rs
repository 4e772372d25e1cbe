//! Tile coding over Two-Room observations and the linear Q-learning agent.
//!
//! Each room owns a disjoint block of features, so updates in one room can
//! never change values in the other.

use rand::Rng;

use super::{epsilon_greedy, greedy_action, Transition};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileCoder {
    tilings: usize,
    tiles_per_dim: usize,
}

pub const ROOMS: usize = 2;

impl TileCoder {
    pub fn new(tilings: usize, tiles_per_dim: usize) -> Result<Self> {
        if tilings == 0 || tiles_per_dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "tile coder needs >= 1 tiling and >= 2 tiles per dim, got {tilings}/{tiles_per_dim}"
            )));
        }
        Ok(Self {
            tilings,
            tiles_per_dim,
        })
    }

    pub fn tilings(&self) -> usize {
        self.tilings
    }

    pub fn tiles_per_dim(&self) -> usize {
        self.tiles_per_dim
    }

    pub fn features_per_room(&self) -> usize {
        self.tilings * self.tiles_per_dim * self.tiles_per_dim
    }

    pub fn feature_count(&self) -> usize {
        ROOMS * self.features_per_room()
    }

    /// Index range owned by `room`.
    pub fn room_block(&self, room: usize) -> std::ops::Range<usize> {
        let n = self.features_per_room();
        room * n..(room + 1) * n
    }

    /// Width of one tile measured in grid cells (the grid spans 19 cell steps).
    pub fn tile_width_cells(&self) -> f64 {
        19.0 / (self.tiles_per_dim - 1) as f64
    }

    /// One active feature per tiling, all inside the observation's room block.
    pub fn active(&self, obs: &[f64]) -> Result<Vec<usize>> {
        if obs.len() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: obs.len(),
            });
        }
        let room = obs[2];
        if !(room == 0.0 || room == 1.0) || !(0.0..=1.0).contains(&obs[0]) || !(0.0..=1.0).contains(&obs[1]) {
            return Err(Error::InvalidArgument(format!("not a Two-Room observation: {obs:?}")));
        }
        let base = room as usize * self.features_per_room();
        let span = (self.tiles_per_dim - 1) as f64;
        let per_tiling = self.tiles_per_dim * self.tiles_per_dim;
        let last = self.tiles_per_dim - 1;
        Ok((0..self.tilings)
            .map(|t| {
                let offset = t as f64 / self.tilings as f64;
                let ix = ((obs[0] * span + offset).floor() as usize).min(last);
                let iy = ((obs[1] * span + offset).floor() as usize).min(last);
                base + t * per_tiling + ix * self.tiles_per_dim + iy
            })
            .collect())
    }
}

/// Online Q-learning with one weight vector per action over tile features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearQAgent {
    pub coder: TileCoder,
    pub weights: Vec<f64>,
    pub n_actions: usize,
    pub step_size: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl LinearQAgent {
    pub fn new(coder: TileCoder, n_actions: usize, step_size: f64, gamma: f64, epsilon: f64) -> Self {
        Self {
            coder,
            weights: vec![0.0; n_actions * coder.feature_count()],
            n_actions,
            step_size,
            gamma,
            epsilon,
        }
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let active = self.coder.active(obs)?;
        Ok(q_from_weights(&self.weights, self.coder.feature_count(), self.n_actions, &active))
    }

    pub fn greedy(&self, obs: &[f64]) -> Result<usize> {
        Ok(greedy_action(&self.q_values(obs)?))
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<usize> {
        Ok(epsilon_greedy(self.greedy(obs)?, self.n_actions, self.epsilon, rng))
    }

    /// `δ = r + γ max_a' Q(s', a') - Q(s, a)` under the current weights.
    pub fn td_error(&self, t: &Transition) -> Result<f64> {
        td_error_with(&self.weights, &self.coder, self.n_actions, self.gamma, t)
    }

    /// Q-learning update: every active feature of `(s, a)` moves by `α δ`.
    pub fn update(&mut self, t: &Transition) -> Result<f64> {
        linear_q_update(&mut self.weights, &self.coder, self.n_actions, t, self.step_size, self.gamma)
    }
}

fn q_from_weights(weights: &[f64], n_features: usize, n_actions: usize, active: &[usize]) -> Vec<f64> {
    (0..n_actions)
        .map(|a| active.iter().map(|&f| weights[a * n_features + f]).sum())
        .collect()
}

/// TD error of a linear Q-function stored as `weights[a * n_features + f]`.
pub fn td_error_with(weights: &[f64], coder: &TileCoder, n_actions: usize, gamma: f64, t: &Transition) -> Result<f64> {
    let n = coder.feature_count();
    let q = q_from_weights(weights, n, n_actions, &coder.active(&t.s)?)[t.a];
    let boot = if t.terminal {
        0.0
    } else {
        let q_next = q_from_weights(weights, n, n_actions, &coder.active(&t.s_next)?);
        gamma * q_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(t.r + boot - q)
}

/// Applies `w ← w + α δ φ(s, a)` and returns δ.
pub fn linear_q_update(
    weights: &mut [f64],
    coder: &TileCoder,
    n_actions: usize,
    t: &Transition,
    step_size: f64,
    gamma: f64,
) -> Result<f64> {
    let delta = td_error_with(weights, coder, n_actions, gamma, t)?;
    if delta != 0.0 {
        let n = coder.feature_count();
        for f in coder.active(&t.s)? {
            weights[t.a * n + f] += step_size * delta;
        }
    }
    Ok(delta)
}
