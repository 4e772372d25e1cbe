//! Deep Q-iteration: a frozen target policy and behavior per iteration,
//! one replay mini-batch update per environment step.

mod replay;
mod tile;

pub use replay::ReplayBuffer;
pub use tile::{linear_q_update, td_error_with, LinearQAgent, TileCoder};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, EnvState, Policy};
use crate::error::{Error, Result};
use crate::metrics::InterferenceMeter;
use crate::nn::{grad_td_loss, NetworkParams, Optimizer};

pub const DEFAULT_EPSILON: f64 = 0.1;

/// One environment step `(s, a, r, s', terminal)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: usize,
    pub r: f64,
    pub s_next: Vec<f64>,
    /// True termination only; time-limit cutoffs keep the bootstrap.
    pub terminal: bool,
}

/// Where the bootstrap value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TdVariant {
    /// `r + γ Q_θ(s', π_k(s')) - Q_θ(s, a)`
    #[serde(rename = "no-target")]
    NoTarget,
    /// `r + γ Q_k(s', π_k(s')) - Q_θ(s, a)`
    #[serde(rename = "target")]
    Target,
}

impl fmt::Display for TdVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TdVariant::NoTarget => "no-target",
            TdVariant::Target => "target",
        })
    }
}

impl FromStr for TdVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-target" => Ok(TdVariant::NoTarget),
            "target" => Ok(TdVariant::Target),
            other => Err(Error::Config(format!("unknown TD variant `{other}`"))),
        }
    }
}

/// Column-stacked transitions for batched network evaluation.
#[derive(Debug, Clone)]
pub struct TransitionBatch {
    pub states: Array2<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
    pub terminal: Vec<bool>,
}

impl TransitionBatch {
    pub fn from_transitions<'a, I>(transitions: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Transition>,
    {
        let items: Vec<&Transition> = transitions.into_iter().collect();
        let first = items.first().ok_or(Error::EmptyBatch)?;
        let dim = first.s.len();
        let n = items.len();
        let mut states = Vec::with_capacity(n * dim);
        let mut next_states = Vec::with_capacity(n * dim);
        for t in &items {
            if t.s.len() != dim || t.s_next.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.s.len().max(t.s_next.len()),
                });
            }
            states.extend_from_slice(&t.s);
            next_states.extend_from_slice(&t.s_next);
        }
        Ok(Self {
            states: Array2::from_shape_vec((n, dim), states).expect("sized"),
            actions: items.iter().map(|t| t.a).collect(),
            rewards: items.iter().map(|t| t.r).collect(),
            next_states: Array2::from_shape_vec((n, dim), next_states).expect("sized"),
            terminal: items.iter().map(|t| t.terminal).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn greedy_action(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Greedy policy w.r.t. a borrowed network.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy<'a> {
    params: &'a NetworkParams,
}

pub fn greedify(params: &NetworkParams) -> GreedyPolicy<'_> {
    GreedyPolicy { params }
}

impl GreedyPolicy<'_> {
    pub fn action(&self, state: &[f64]) -> Result<usize> {
        Ok(greedy_action(&self.params.forward(state)?))
    }
}

impl Policy for GreedyPolicy<'_> {
    fn act_batch(&self, observations: ArrayView2<'_, f64>) -> Vec<usize> {
        let q = self
            .params
            .forward_batch(observations)
            .expect("observation width matches network input");
        q.rows()
            .into_iter()
            .map(|row| greedy_action(row.as_slice().expect("standard layout")))
            .collect()
    }
}

/// With probability `epsilon` a uniform action, otherwise `greedy`.
pub fn epsilon_greedy<R: Rng + ?Sized>(greedy: usize, n_actions: usize, epsilon: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..n_actions)
    } else {
        greedy
    }
}

/// State frozen for the length of one iteration: Q_k and the policies
/// derived from it.
#[derive(Debug, Clone)]
pub struct IterationContext {
    pub k: usize,
    pub target: NetworkParams,
    pub gamma: f64,
    pub epsilon: f64,
}

impl IterationContext {
    pub fn new(k: usize, params: &NetworkParams, gamma: f64, epsilon: f64) -> Self {
        Self {
            k,
            target: params.clone(),
            gamma,
            epsilon,
        }
    }

    /// π_k(s)
    pub fn target_action(&self, state: &[f64]) -> Result<usize> {
        greedify(&self.target).action(state)
    }

    /// Action from the ε-greedy behavior b_k.
    pub fn behavior_action<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<usize> {
        let greedy = self.target_action(state)?;
        Ok(epsilon_greedy(greedy, self.target.spec().action_count(), self.epsilon, rng))
    }

    /// `(π_k(s'), Q_k(s', π_k(s')))` for every row of `next_states`.
    pub fn bootstrap(&self, next_states: ArrayView2<'_, f64>) -> Result<(Vec<usize>, Vec<f64>)> {
        let q_next = self.target.forward_batch(next_states)?;
        let mut actions = Vec::with_capacity(q_next.nrows());
        let mut values = Vec::with_capacity(q_next.nrows());
        for row in q_next.rows() {
            let row = row.as_slice().expect("standard layout");
            let a = greedy_action(row);
            actions.push(a);
            values.push(row[a]);
        }
        Ok((actions, values))
    }
}

/// Sampled TD errors for a batch under the given variant.
pub fn td_errors(
    params: &NetworkParams,
    ctx: &IterationContext,
    batch: &TransitionBatch,
    variant: TdVariant,
) -> Result<Vec<f64>> {
    let (boot_actions, boot_target) = ctx.bootstrap(batch.next_states.view())?;
    let boot: Vec<f64> = match variant {
        TdVariant::Target => boot_target,
        TdVariant::NoTarget => {
            let q_next = params.forward_batch(batch.next_states.view())?;
            boot_actions
                .iter()
                .enumerate()
                .map(|(i, &a)| q_next[[i, a]])
                .collect()
        }
    };
    let q = params.forward_batch(batch.states.view())?;
    Ok((0..batch.len())
        .map(|i| {
            let bootstrap = if batch.terminal[i] { 0.0 } else { ctx.gamma * boot[i] };
            batch.rewards[i] + bootstrap - q[[i, batch.actions[i]]]
        })
        .collect())
}

pub fn td_error(params: &NetworkParams, ctx: &IterationContext, t: &Transition, variant: TdVariant) -> Result<f64> {
    let batch = TransitionBatch::from_transitions([t])?;
    Ok(td_errors(params, ctx, &batch, variant)?[0])
}

/// The DQI ascent direction `(1/|B|) Σ δ ∇Q(s, a)` for one batch.
pub fn dqi_direction(
    params: &NetworkParams,
    ctx: &IterationContext,
    batch: &TransitionBatch,
    variant: TdVariant,
) -> Result<Vec<f64>> {
    let deltas = td_errors(params, ctx, batch, variant)?;
    grad_td_loss(params, batch.states.view(), &batch.actions, &deltas)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Updated,
    /// Not enough data yet for one batch.
    Skipped,
}

/// One mini-batch DQI update. Skips (warm-up) until the buffer holds a batch.
pub fn dqi_step<R: Rng + ?Sized>(
    params: &mut NetworkParams,
    opt: &mut Optimizer,
    ctx: &IterationContext,
    replay: &ReplayBuffer,
    batch_size: usize,
    variant: TdVariant,
    rng: &mut R,
) -> Result<UpdateOutcome> {
    if batch_size == 0 || replay.len() < batch_size {
        return Ok(UpdateOutcome::Skipped);
    }
    let batch = TransitionBatch::from_transitions(replay.sample(batch_size, rng))?;
    let direction = dqi_direction(params, ctx, &batch, variant)?;
    opt.step(params.as_flat_mut(), &direction)?;
    Ok(UpdateOutcome::Updated)
}

/// A rule that performs at most one parameter update per environment step.
pub trait Updater {
    fn update(
        &mut self,
        params: &mut NetworkParams,
        replay: &ReplayBuffer,
        ctx: &IterationContext,
        variant: TdVariant,
        rng: &mut ChaCha8Rng,
    ) -> Result<UpdateOutcome>;
}

/// Plain DQI with any optimizer; also the "Large" baseline with a big batch.
#[derive(Debug, Clone)]
pub struct DqiUpdater {
    pub optimizer: Optimizer,
    pub batch_size: usize,
}

impl Updater for DqiUpdater {
    fn update(
        &mut self,
        params: &mut NetworkParams,
        replay: &ReplayBuffer,
        ctx: &IterationContext,
        variant: TdVariant,
        rng: &mut ChaCha8Rng,
    ) -> Result<UpdateOutcome> {
        dqi_step(params, &mut self.optimizer, ctx, replay, self.batch_size, variant, rng)
    }
}

/// Steps an environment, resetting after termination or truncation.
#[derive(Debug, Clone)]
pub struct EnvRunner {
    spec: EnvSpec,
    state: EnvState,
    rng: ChaCha8Rng,
    episodes: usize,
}

impl EnvRunner {
    pub fn new(spec: EnvSpec, mut rng: ChaCha8Rng) -> Self {
        let state = spec.reset(&mut rng);
        Self {
            spec,
            state,
            rng,
            episodes: 0,
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn observation(&self) -> Vec<f64> {
        self.state.observation()
    }

    pub fn episodes_finished(&self) -> usize {
        self.episodes
    }

    /// Replaces the spec (e.g. a different Two-Room room) and starts a new episode.
    pub fn switch_spec(&mut self, spec: EnvSpec) {
        self.spec = spec;
        self.state = self.spec.reset(&mut self.rng);
    }

    pub fn step(&mut self, action: usize) -> Result<Transition> {
        let s = self.state.observation();
        let (next, result) = self.spec.step(&self.state, action)?;
        let transition = Transition {
            s,
            a: action,
            r: result.reward,
            s_next: result.next_observation,
            terminal: result.terminal,
        };
        if result.terminal || result.truncated {
            self.episodes += 1;
            self.state = self.spec.reset(&mut self.rng);
        } else {
            self.state = next;
        }
        Ok(transition)
    }
}

/// Network, update rule, replay and the per-purpose random streams.
#[derive(Debug, Clone)]
pub struct NeuralAgent<U> {
    pub params: NetworkParams,
    pub updater: U,
    pub replay: ReplayBuffer,
    pub variant: TdVariant,
    pub gamma: f64,
    pub epsilon: f64,
    pub replay_rng: ChaCha8Rng,
    pub behavior_rng: ChaCha8Rng,
}

impl<U> NeuralAgent<U> {
    /// Snapshots Q_k ← Q_θ for iteration `k`.
    pub fn begin_iteration(&self, k: usize) -> IterationContext {
        IterationContext::new(k, &self.params, self.gamma, self.epsilon)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationReport {
    pub transitions: usize,
    pub updates: usize,
    pub skipped: usize,
    /// Update Interference at each measured step.
    pub interference: Vec<f64>,
    pub diverged: bool,
}

/// Runs `t_eval` environment steps of one DQI iteration.
///
/// Every step adds the transition to replay (and to the meter's evaluation
/// reservoir), attempts one update, and, on measured steps, records the
/// Update Interference of that update. A non-finite update stops the
/// iteration with `diverged` set.
pub fn run_iteration<U: Updater>(
    ctx: &IterationContext,
    agent: &mut NeuralAgent<U>,
    env: &mut EnvRunner,
    t_eval: usize,
    mut meter: Option<&mut InterferenceMeter>,
    measure_stride: usize,
) -> Result<IterationReport> {
    if t_eval == 0 {
        return Err(Error::InvalidArgument("T_eval must be at least 1".into()));
    }
    let stride = measure_stride.max(1);
    let mut report = IterationReport::default();
    for step in 0..t_eval {
        let obs = env.observation();
        let action = ctx.behavior_action(&obs, &mut agent.behavior_rng)?;
        let transition = env.step(action)?;
        if let Some(m) = meter.as_deref_mut() {
            m.observe(&transition);
        }
        agent.replay.push(transition);
        report.transitions += 1;

        let measure = meter.is_some() && step % stride == 0;
        let before = measure.then(|| agent.params.clone());
        let outcome = agent.updater.update(
            &mut agent.params,
            &agent.replay,
            ctx,
            agent.variant,
            &mut agent.replay_rng,
        );
        match outcome {
            Ok(UpdateOutcome::Updated) => report.updates += 1,
            Ok(UpdateOutcome::Skipped) => report.skipped += 1,
            Err(Error::NonFinite(_)) => {
                report.diverged = true;
                return Ok(report);
            }
            Err(e) => return Err(e),
        }
        if !agent.params.is_finite() {
            report.diverged = true;
            return Ok(report);
        }
        if let (Some(m), Some(before)) = (meter.as_deref_mut(), before) {
            let ui = m.measure(&before, &agent.params, ctx, agent.variant)?;
            report.interference.push(ui);
        }
    }
    Ok(report)
}
