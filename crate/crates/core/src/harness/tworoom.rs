//! Two-Room forgetting diagnostic.
//!
//! The agent trains in room 1 for the first third of its steps and is then
//! teleported to room 2 for the rest. Every `eval_every` steps the greedy
//! policy is rolled out in room 1, and interference is measured on a
//! reservoir holding only room-1 transitions.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::seeding::{init_seed, stream, Stream};
use crate::agent::{
    greedify, td_error_with, DqiUpdater, EnvRunner, LinearQAgent, NeuralAgent, ReplayBuffer, TdVariant, TileCoder,
    Transition, UpdateOutcome, Updater, DEFAULT_EPSILON,
};
use crate::env::{evaluate_policy, EnvId, EnvSpec, EvalReturn, FnPolicy};
use crate::error::{Error, Result};
use crate::metrics::{InterferenceMeter, Reservoir, DEFAULT_EVAL_CAPACITY};
use crate::nn::{NetworkParams, NetworkSpec, Optimizer, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoRoomAgent {
    DqiTarget,
    TilecodeLinear,
}

impl TwoRoomAgent {
    pub fn as_str(self) -> &'static str {
        match self {
            TwoRoomAgent::DqiTarget => "dqi-target",
            TwoRoomAgent::TilecodeLinear => "tilecode-linear",
        }
    }
}

impl fmt::Display for TwoRoomAgent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TwoRoomAgent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqi-target" => Ok(TwoRoomAgent::DqiTarget),
            "tilecode-linear" => Ok(TwoRoomAgent::TilecodeLinear),
            _ => Err(Error::Config(format!(
                "unknown two-room agent {s:?}; expected dqi-target or tilecode-linear"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoRoomConfig {
    pub agent: TwoRoomAgent,
    pub steps: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Empty the replay buffer at the teleport.
    pub clear_replay: bool,
    pub epsilon: f64,
    pub hidden: usize,
    pub buffer: usize,
    /// Steps per iteration, i.e. the target refresh period.
    pub t_eval: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub measure_stride: usize,
    pub tilings: usize,
    pub tiles_per_dim: usize,
    /// Step size per active feature.
    pub tile_step_size: f64,
}

impl TwoRoomConfig {
    pub fn new(agent: TwoRoomAgent, steps: usize, seed: u64) -> Self {
        Self {
            agent,
            steps,
            seed,
            eval_every: 500,
            clear_replay: false,
            epsilon: DEFAULT_EPSILON,
            hidden: 64,
            buffer: 10_000,
            t_eval: 200,
            batch_size: 64,
            step_size: 1e-3,
            measure_stride: 5,
            tilings: 8,
            tiles_per_dim: 5,
            tile_step_size: 0.25 / 8.0,
        }
    }

    /// Step at which the agent moves to room 2.
    pub fn switch_step(&self) -> usize {
        self.steps / 3
    }

    fn validate(&self) -> Result<()> {
        if self.steps < 3 || self.eval_every == 0 || self.t_eval == 0 {
            return Err(Error::Config("steps >= 3, eval_every >= 1 and t_eval >= 1 are required".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        Ok(())
    }

    pub fn file_name(&self) -> String {
        format!("{}-seed{}.csv", self.agent, self.seed)
    }
}

/// One evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoRoomRecord {
    pub agent: String,
    pub seed: u64,
    /// Environment steps taken so far.
    pub step: usize,
    /// Room the agent trained in during the preceding window (1 or 2).
    pub room: u8,
    pub switch_step: usize,
    pub return_room1_disc: f64,
    pub return_room1_undisc: f64,
    /// Mean Update Interference on room-1 transitions over the preceding
    /// window; NaN when nothing was measured.
    pub interference_room1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoRoomOutcome {
    pub records: Vec<TwoRoomRecord>,
    pub path: Option<PathBuf>,
}

impl TwoRoomOutcome {
    /// Room-1 return at the last evaluation before the teleport.
    pub fn pre_switch_return(&self) -> Option<f64> {
        self.records.iter().filter(|r| r.room == 1).last().map(|r| r.return_room1_undisc)
    }

    fn post(&self, within: usize) -> impl Iterator<Item = &TwoRoomRecord> {
        self.records
            .iter()
            .filter(move |r| r.room == 2 && r.step <= r.switch_step + within)
    }

    /// Largest relative drop `(pre - post) / |pre|` over evaluations within
    /// `within` steps after the teleport.
    pub fn max_relative_drop(&self, within: usize) -> Option<f64> {
        let pre = self.pre_switch_return()?;
        if pre == 0.0 {
            return None;
        }
        self.post(within)
            .map(|r| (pre - r.return_room1_undisc) / pre.abs())
            .reduce(f64::max)
    }

    /// Largest `|post - pre| / |pre|` after the teleport.
    pub fn max_relative_deviation(&self) -> Option<f64> {
        let pre = self.pre_switch_return()?;
        if pre == 0.0 {
            return None;
        }
        self.post(usize::MAX - self.records.first()?.switch_step)
            .map(|r| (r.return_room1_undisc - pre).abs() / pre.abs())
            .reduce(f64::max)
    }

    /// Measured room-1 interference values after the teleport.
    pub fn post_switch_interference(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.room == 2 && r.interference_room1.is_finite())
            .map(|r| r.interference_room1)
            .collect()
    }
}

fn room_spec(room: u8) -> EnvSpec {
    EnvSpec::new(EnvId::Tworoom).with_room(room)
}

#[derive(Default)]
struct Window {
    sum: f64,
    count: usize,
}

impl Window {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    fn take(&mut self) -> f64 {
        let mean = if self.count == 0 { f64::NAN } else { self.sum / self.count as f64 };
        *self = Window::default();
        mean
    }
}

fn record(cfg: &TwoRoomConfig, step: usize, ret: EvalReturn, interference: f64) -> TwoRoomRecord {
    TwoRoomRecord {
        agent: cfg.agent.to_string(),
        seed: cfg.seed,
        step,
        room: if step <= cfg.switch_step() { 1 } else { 2 },
        switch_step: cfg.switch_step(),
        return_room1_disc: ret.discounted,
        return_room1_undisc: ret.undiscounted,
        interference_room1: interference,
    }
}

fn run_neural(cfg: &TwoRoomConfig, mut emit: impl FnMut(TwoRoomRecord) -> Result<()>) -> Result<()> {
    let spec1 = room_spec(0);
    let net = NetworkSpec::mlp(spec1.obs_dim, &[cfg.hidden; super::config::HIDDEN_LAYERS], spec1.action_count)?;
    let params = NetworkParams::init(&net, init_seed(cfg.seed));
    let n = params.len();
    let mut agent = NeuralAgent {
        params,
        updater: DqiUpdater {
            optimizer: Optimizer::new(OptimizerKind::Adam, cfg.step_size, n),
            batch_size: cfg.batch_size,
        },
        replay: ReplayBuffer::new(cfg.buffer),
        variant: TdVariant::Target,
        gamma: spec1.gamma,
        epsilon: cfg.epsilon,
        replay_rng: stream(cfg.seed, Stream::Replay),
        behavior_rng: stream(cfg.seed, Stream::Behavior),
    };
    let mut env = EnvRunner::new(spec1, stream(cfg.seed, Stream::Env));
    let mut meter = InterferenceMeter::new(DEFAULT_EVAL_CAPACITY, stream(cfg.seed, Stream::Reservoir));
    let mut eval_rng = stream(cfg.seed, Stream::Eval);
    let mut window = Window::default();
    let mut ctx = agent.begin_iteration(0);
    for step in 0..cfg.steps {
        if step == cfg.switch_step() {
            env.switch_spec(room_spec(1));
            if cfg.clear_replay {
                agent.replay.clear();
            }
        }
        if step % cfg.t_eval == 0 {
            ctx = agent.begin_iteration(step / cfg.t_eval);
        }
        let obs = env.observation();
        let action = ctx.behavior_action(&obs, &mut agent.behavior_rng)?;
        let t = env.step(action)?;
        if step < cfg.switch_step() {
            meter.observe(&t);
        }
        agent.replay.push(t);
        let measure = step % cfg.measure_stride.max(1) == 0 && !meter.is_empty();
        let before = measure.then(|| agent.params.clone());
        let outcome = agent.updater.update(
            &mut agent.params,
            &agent.replay,
            &ctx,
            agent.variant,
            &mut agent.replay_rng,
        )?;
        if !agent.params.is_finite() {
            return Err(Error::NonFinite("two-room network parameters"));
        }
        if let (Some(before), UpdateOutcome::Updated) = (before, outcome) {
            window.push(meter.measure(&before, &agent.params, &ctx, agent.variant)?);
        }
        if (step + 1) % cfg.eval_every == 0 {
            let ret = evaluate_policy(&spec1, &greedify(&agent.params), 1, spec1.gamma, false, &mut eval_rng)?;
            emit(record(cfg, step + 1, ret, window.take()))?;
        }
    }
    Ok(())
}

fn linear_interference(before: &[f64], agent: &LinearQAgent, reservoir: &Reservoir<Transition>) -> Result<f64> {
    let mut total = 0.0;
    for t in reservoir.items() {
        let d0 = td_error_with(before, &agent.coder, agent.n_actions, agent.gamma, t)?;
        let d1 = agent.td_error(t)?;
        total += d1 * d1 - d0 * d0;
    }
    Ok((total / reservoir.len() as f64).max(0.0))
}

fn run_linear(cfg: &TwoRoomConfig, mut emit: impl FnMut(TwoRoomRecord) -> Result<()>) -> Result<()> {
    let spec1 = room_spec(0);
    let coder = TileCoder::new(cfg.tilings, cfg.tiles_per_dim)?;
    let mut agent = LinearQAgent::new(coder, spec1.action_count, cfg.tile_step_size, spec1.gamma, cfg.epsilon);
    let mut env = EnvRunner::new(spec1, stream(cfg.seed, Stream::Env));
    let mut behavior_rng = stream(cfg.seed, Stream::Behavior);
    let mut reservoir_rng = stream(cfg.seed, Stream::Reservoir);
    let mut eval_rng = stream(cfg.seed, Stream::Eval);
    let mut reservoir = Reservoir::new(DEFAULT_EVAL_CAPACITY);
    let mut window = Window::default();
    for step in 0..cfg.steps {
        if step == cfg.switch_step() {
            env.switch_spec(room_spec(1));
        }
        let obs = env.observation();
        let action = agent.act(&obs, &mut behavior_rng)?;
        let t = env.step(action)?;
        if step < cfg.switch_step() {
            reservoir.insert(t.clone(), &mut reservoir_rng);
        }
        if step % cfg.measure_stride.max(1) == 0 && !reservoir.is_empty() {
            let before = agent.weights.clone();
            agent.update(&t)?;
            window.push(linear_interference(&before, &agent, &reservoir)?);
        } else {
            agent.update(&t)?;
        }
        if (step + 1) % cfg.eval_every == 0 {
            let policy = FnPolicy(|s: &[f64]| agent.greedy(s).expect("two-room observation"));
            let ret = evaluate_policy(&spec1, &policy, 1, spec1.gamma, false, &mut eval_rng)?;
            emit(record(cfg, step + 1, ret, window.take()))?;
        }
    }
    Ok(())
}

/// Runs the diagnostic. With `out`, rows are appended to
/// `<out>/<agent>-seed<N>.csv` as they are produced.
pub fn run_tworoom(cfg: &TwoRoomConfig, out: Option<&Path>) -> Result<TwoRoomOutcome> {
    cfg.validate()?;
    let path = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(dir.join(cfg.file_name()))
        }
        None => None,
    };
    let mut writer = path.as_ref().map(csv::Writer::from_path).transpose()?;
    let mut records = Vec::new();
    let emit = |r: TwoRoomRecord| -> Result<()> {
        if let Some(w) = writer.as_mut() {
            w.serialize(&r)?;
            w.flush()?;
        }
        records.push(r);
        Ok(())
    };
    match cfg.agent {
        TwoRoomAgent::DqiTarget => run_neural(cfg, emit)?,
        TwoRoomAgent::TilecodeLinear => run_linear(cfg, emit)?,
    }
    Ok(TwoRoomOutcome { records, path })
}
