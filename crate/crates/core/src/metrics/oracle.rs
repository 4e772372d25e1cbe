//! Exact Accuracy Change on small enumerable MDPs.
//!
//! Expected TD errors are computed by summing over every outcome of every
//! state-action pair, so the result carries no sampling noise.

use crate::agent::{IterationContext, TdVariant, Transition};
use crate::error::{Error, Result};
use crate::nn::NetworkParams;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    pub reward: f64,
    pub next_state: usize,
    pub terminal: bool,
}

/// A finite MDP with explicit observations and outcome lists per `(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumerableMdp {
    pub observations: Vec<Vec<f64>>,
    pub n_actions: usize,
    /// Indexed by `s * n_actions + a`.
    pub outcomes: Vec<Vec<Outcome>>,
}

pub const MAX_PAIRS: usize = 100;

impl EnumerableMdp {
    pub fn new(observations: Vec<Vec<f64>>, n_actions: usize, outcomes: Vec<Vec<Outcome>>) -> Result<Self> {
        let n_states = observations.len();
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidArgument("MDP needs states and actions".into()));
        }
        if n_states * n_actions > MAX_PAIRS {
            return Err(Error::InvalidArgument(format!(
                "{} state-action pairs exceed the enumeration limit of {MAX_PAIRS}",
                n_states * n_actions
            )));
        }
        if outcomes.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                expected: n_states * n_actions,
                got: outcomes.len(),
            });
        }
        for (i, list) in outcomes.iter().enumerate() {
            let total: f64 = list.iter().map(|o| o.prob).sum();
            if list.is_empty() || (total - 1.0).abs() > 1e-12 || list.iter().any(|o| o.prob < 0.0) {
                return Err(Error::InvalidArgument(format!("pair {i}: outcome probabilities must sum to 1")));
            }
            if list.iter().any(|o| o.next_state >= n_states) {
                return Err(Error::InvalidArgument(format!("pair {i}: next state out of range")));
            }
        }
        Ok(Self {
            observations,
            n_actions,
            outcomes,
        })
    }

    /// Chain of `n` states with one-hot observations. Action 0 moves left
    /// (staying put at the left end), action 1 moves right; moving right from
    /// the last state ends the episode with reward 1. All other rewards are 0.
    pub fn chain(n: usize) -> Result<Self> {
        Self::noisy_chain(n, 0.0)
    }

    /// The chain with every reward replaced by `r ± noise`, each w.p. 1/2.
    pub fn noisy_chain(n: usize, noise: f64) -> Result<Self> {
        let observations = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut outcomes = Vec::with_capacity(2 * n);
        for s in 0..n {
            for a in 0..2 {
                let (next, reward, terminal) = match a {
                    0 => (s.saturating_sub(1), 0.0, false),
                    _ if s + 1 == n => (s, 1.0, true),
                    _ => (s + 1, 0.0, false),
                };
                let list = if noise == 0.0 {
                    vec![Outcome { prob: 1.0, reward, next_state: next, terminal }]
                } else {
                    [-noise, noise]
                        .iter()
                        .map(|e| Outcome { prob: 0.5, reward: reward + e, next_state: next, terminal })
                        .collect()
                };
                outcomes.push(list);
            }
        }
        Self::new(observations, 2, outcomes)
    }

    pub fn n_states(&self) -> usize {
        self.observations.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.outcomes.len()
    }

    /// Every possible transition with probability `d(s, a) p(r, s' | s, a)`.
    pub fn support(&self, d: &[f64]) -> Result<Vec<(Transition, f64)>> {
        self.check_weights(d)?;
        let mut out = Vec::new();
        for (pair, list) in self.outcomes.iter().enumerate() {
            let (s, a) = (pair / self.n_actions, pair % self.n_actions);
            for o in list {
                out.push((
                    Transition {
                        s: self.observations[s].clone(),
                        a,
                        r: o.reward,
                        s_next: self.observations[o.next_state].clone(),
                        terminal: o.terminal,
                    },
                    d[pair] * o.prob,
                ));
            }
        }
        Ok(out)
    }

    fn check_weights(&self, d: &[f64]) -> Result<()> {
        if d.len() != self.n_pairs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_pairs(),
                got: d.len(),
            });
        }
        let total: f64 = d.iter().sum();
        if (total - 1.0).abs() > 1e-9 || d.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidArgument("state-action weights must form a distribution".into()));
        }
        Ok(())
    }

    /// `E[δ | s, a]` under `params`, with the bootstrap fixed by Q_k.
    pub fn expected_td_error(
        &self,
        params: &NetworkParams,
        ctx: &IterationContext,
        pair: usize,
        variant: TdVariant,
    ) -> Result<f64> {
        let (s, a) = (pair / self.n_actions, pair % self.n_actions);
        let q = params.forward(&self.observations[s])?[a];
        let mut expected = 0.0;
        for o in &self.outcomes[pair] {
            let boot = if o.terminal {
                0.0
            } else {
                let obs = &self.observations[o.next_state];
                let q_k = ctx.target.forward(obs)?;
                // lowest index wins ties
                let mut best = 0;
                for (i, &v) in q_k.iter().enumerate() {
                    if v > q_k[best] {
                        best = i;
                    }
                }
                match variant {
                    TdVariant::Target => q_k[best],
                    TdVariant::NoTarget => params.forward(obs)?[best],
                }
            };
            expected += o.prob * (o.reward + ctx.gamma * boot - q);
        }
        Ok(expected)
    }
}

/// `Σ_{s,a} d(s, a) [E[δ_after | s, a]² - E[δ_before | s, a]²]`, unclipped.
pub fn exact_mean_accuracy_change(
    mdp: &EnumerableMdp,
    before: &NetworkParams,
    after: &NetworkParams,
    ctx: &IterationContext,
    d: &[f64],
    variant: TdVariant,
) -> Result<f64> {
    mdp.check_weights(d)?;
    let mut total = 0.0;
    for (pair, &w) in d.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let b = mdp.expected_td_error(before, ctx, pair, variant)?;
        let a = mdp.expected_td_error(after, ctx, pair, variant)?;
        total += w * (a * a - b * b);
    }
    Ok(total)
}

/// Exact Update Interference: the expected Accuracy Change clipped at zero.
pub fn exact_update_interference_oracle(
    mdp: &EnumerableMdp,
    before: &NetworkParams,
    after: &NetworkParams,
    ctx: &IterationContext,
    d: &[f64],
    variant: TdVariant,
) -> Result<f64> {
    Ok(exact_mean_accuracy_change(mdp, before, after, ctx, d, variant)?.max(0.0))
}
