use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig, HIDDEN_LAYERS};
use super::seeding::{init_seed, stream, Stream};
use crate::agent::{
    greedify, run_iteration, DqiUpdater, EnvRunner, IterationContext, NeuralAgent, ReplayBuffer, TdVariant,
    UpdateOutcome, Updater,
};
use crate::env::{evaluate_policy, EnvSpec};
use crate::error::{Error, Result};
use crate::metrics::{iteration_interference, tail_expectation, InterferenceMeter, PerformanceSeries};
use crate::nn::{NetworkParams, NetworkSpec, Optimizer};
use crate::online_aware::{large_batch_config, GaUpdater, OaUpdater};

pub const ITERATIONS_FILE: &str = "iterations.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_FILE: &str = "config.json";

pub const STATUS_OK: &str = "ok";
pub const STATUS_DIVERGED: &str = "diverged";

/// One row of `iterations.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub run_id: String,
    pub seed: u64,
    pub env: String,
    pub variant: String,
    pub hidden: usize,
    pub buffer: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub iter: usize,
    pub return_disc: f64,
    pub return_undisc: f64,
    pub iter_interference: f64,
    pub iter_degradation: f64,
    pub status: String,
}

pub const ITERATION_HEADER: [&str; 13] = [
    "run_id",
    "seed",
    "env",
    "variant",
    "hidden",
    "buffer",
    "M",
    "iter",
    "return_disc",
    "return_undisc",
    "iter_interference",
    "iter_degradation",
    "status",
];

/// One row of `summary.csv`: the run's scalars followed by its config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub run_id: String,
    pub interference_across_iters: f64,
    pub degradation: f64,
    pub mean_return_last: f64,
    pub initial_return: f64,
    pub iterations_completed: usize,
    pub status: String,
    pub env: String,
    pub variant: String,
    pub hidden: usize,
    pub buffer: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub optimizer: String,
    pub step_size: f64,
    pub epsilon: f64,
    pub window: usize,
    pub measure_stride: usize,
    pub oa_n: usize,
    pub oa_alpha_inner: f64,
    pub oa_alpha_meta: f64,
    pub ga_lambda: f64,
    pub large_factor: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run_id: String,
    pub records: Vec<IterationRecord>,
    pub summary: SummaryRecord,
    pub dir: Option<PathBuf>,
}

impl RunResult {
    pub fn diverged(&self) -> bool {
        self.summary.status == STATUS_DIVERGED
    }
}

enum AnyUpdater {
    Dqi(DqiUpdater),
    Oa(OaUpdater),
    Ga(GaUpdater),
}

impl Updater for AnyUpdater {
    fn update(
        &mut self,
        params: &mut NetworkParams,
        replay: &ReplayBuffer,
        ctx: &IterationContext,
        variant: TdVariant,
        rng: &mut ChaCha8Rng,
    ) -> Result<UpdateOutcome> {
        match self {
            AnyUpdater::Dqi(u) => u.update(params, replay, ctx, variant, rng),
            AnyUpdater::Oa(u) => u.update(params, replay, ctx, variant, rng),
            AnyUpdater::Ga(u) => u.update(params, replay, ctx, variant, rng),
        }
    }
}

fn build_updater(cfg: &ExperimentConfig, n_params: usize) -> AnyUpdater {
    let optimizer = || Optimizer::new(cfg.optimizer, cfg.step_size, n_params);
    match cfg.variant.algorithm {
        Algorithm::Dqi => AnyUpdater::Dqi(DqiUpdater {
            optimizer: optimizer(),
            batch_size: cfg.batch_size,
        }),
        Algorithm::Large => AnyUpdater::Dqi(DqiUpdater {
            optimizer: optimizer(),
            batch_size: large_batch_config(cfg.batch_size, cfg.large_factor),
        }),
        Algorithm::Oa => AnyUpdater::Oa(OaUpdater { config: cfg.oa }),
        Algorithm::Ga => AnyUpdater::Ga(GaUpdater {
            optimizer: optimizer(),
            config: cfg.ga,
        }),
    }
}

/// Network architecture for a config.
pub fn network_spec(cfg: &ExperimentConfig) -> Result<NetworkSpec> {
    let env = EnvSpec::new(cfg.env);
    NetworkSpec::mlp(env.obs_dim, &[cfg.hidden; HIDDEN_LAYERS], env.action_count)
}

/// Summary scalars from per-iteration records.
///
/// Uses the trailing `window` completed iterations, or all completed ones
/// when a diverged run stopped earlier; NaN when none completed.
pub fn summarize(cfg: &ExperimentConfig, run_id: &str, initial_return: f64, records: &[IterationRecord]) -> Result<SummaryRecord> {
    let ok: Vec<&IterationRecord> = records.iter().filter(|r| r.status == STATUS_OK).collect();
    let diverged = records.iter().any(|r| r.status == STATUS_DIVERGED);
    let w = cfg.window.min(ok.len());
    let tail = &ok[ok.len() - w..];
    let (interference, degradation, mean_return) = if w == 0 {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let ii: Vec<f64> = tail.iter().map(|r| r.iter_interference).collect();
        let dd: Vec<f64> = tail.iter().map(|r| r.iter_degradation).collect();
        let mean = tail.iter().map(|r| r.return_disc).sum::<f64>() / w as f64;
        (tail_expectation(&ii, cfg.percentile)?, tail_expectation(&dd, cfg.percentile)?, mean)
    };
    Ok(SummaryRecord {
        run_id: run_id.to_string(),
        interference_across_iters: interference,
        degradation,
        mean_return_last: mean_return,
        initial_return,
        iterations_completed: ok.len(),
        status: if diverged { STATUS_DIVERGED } else { STATUS_OK }.to_string(),
        env: cfg.env.to_string(),
        variant: cfg.variant.to_string(),
        hidden: cfg.hidden,
        buffer: cfg.buffer,
        m: cfg.m,
        iterations: cfg.iterations,
        batch_size: cfg.batch_size,
        optimizer: cfg.optimizer.as_str().to_string(),
        step_size: cfg.step_size,
        epsilon: cfg.epsilon,
        window: cfg.window,
        measure_stride: cfg.measure_stride,
        oa_n: cfg.oa.n,
        oa_alpha_inner: cfg.oa.alpha_inner,
        oa_alpha_meta: cfg.oa.alpha_meta,
        ga_lambda: cfg.ga.lambda,
        large_factor: cfg.large_factor,
        seed: cfg.seed,
    })
}

/// Runs the instrumented DQI loop for one config.
///
/// With `out_root`, writes `<out_root>/<run_id>/` containing the config,
/// per-iteration rows (flushed as each iteration ends) and the summary.
pub fn run_experiment(cfg: &ExperimentConfig, out_root: Option<&Path>) -> Result<RunResult> {
    cfg.validate()?;
    let run_id = cfg.run_id();
    let env_spec = EnvSpec::new(cfg.env);
    let net = network_spec(cfg)?;
    let params = NetworkParams::init(&net, init_seed(cfg.seed));
    let n_params = params.len();
    let mut agent = NeuralAgent {
        params,
        updater: build_updater(cfg, n_params),
        replay: ReplayBuffer::new(cfg.buffer),
        variant: cfg.variant.td,
        gamma: env_spec.gamma,
        epsilon: cfg.epsilon,
        replay_rng: stream(cfg.seed, Stream::Replay),
        behavior_rng: stream(cfg.seed, Stream::Behavior),
    };
    let mut env = EnvRunner::new(env_spec.clone(), stream(cfg.seed, Stream::Env));
    let mut meter = InterferenceMeter::new(cfg.eval_buffer, stream(cfg.seed, Stream::Reservoir));
    let mut eval_rng = stream(cfg.seed, Stream::Eval);

    let dir = match out_root {
        Some(root) => {
            let dir = root.join(&run_id);
            fs::create_dir_all(&dir)?;
            fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(cfg)? + "\n")?;
            Some(dir)
        }
        None => None,
    };
    let mut writer = match &dir {
        Some(d) => Some(csv::WriterBuilder::new().has_headers(false).from_path(d.join(ITERATIONS_FILE))?),
        None => None,
    };
    if let Some(w) = writer.as_mut() {
        w.write_record(ITERATION_HEADER)?;
        w.flush()?;
    }

    let evaluate = |params: &NetworkParams, rng: &mut ChaCha8Rng| {
        evaluate_policy(&env_spec, &greedify(params), cfg.eval_rollouts, env_spec.gamma, false, rng)
    };
    let initial = evaluate(&agent.params, &mut eval_rng)?;
    let mut perf = PerformanceSeries::new(initial.discounted);
    let mut records = Vec::with_capacity(cfg.iterations);
    let record = |iter: usize, disc: f64, undisc: f64, ii: f64, deg: f64, status: &str| IterationRecord {
        run_id: run_id.clone(),
        seed: cfg.seed,
        env: cfg.env.to_string(),
        variant: cfg.variant.to_string(),
        hidden: cfg.hidden,
        buffer: cfg.buffer,
        m: cfg.m,
        iter,
        return_disc: disc,
        return_undisc: undisc,
        iter_interference: ii,
        iter_degradation: deg,
        status: status.to_string(),
    };

    for k in 0..cfg.iterations {
        let ctx = agent.begin_iteration(k);
        let report = run_iteration(&ctx, &mut agent, &mut env, cfg.m, Some(&mut meter), cfg.measure_stride)?;
        let row = if report.diverged {
            record(k, f64::NAN, f64::NAN, f64::NAN, f64::NAN, STATUS_DIVERGED)
        } else {
            let ii = iteration_interference(&report.interference)?;
            let ret = evaluate(&agent.params, &mut eval_rng)?;
            let deg = perf.push(ret.discounted);
            record(k, ret.discounted, ret.undiscounted, ii, deg, STATUS_OK)
        };
        if let Some(w) = writer.as_mut() {
            w.serialize(&row)?;
            w.flush()?;
        }
        records.push(row);
        if report.diverged {
            break;
        }
    }
    let summary = summarize(cfg, &run_id, initial.discounted, &records)?;
    if let Some(d) = &dir {
        write_summary(&d.join(SUMMARY_FILE), std::slice::from_ref(&summary))?;
    }
    Ok(RunResult {
        run_id,
        records,
        summary,
        dir,
    })
}

pub fn write_summary(path: &Path, rows: &[SummaryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("no summary rows to write"));
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn read_iterations(path: &Path) -> Result<Vec<IterationRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != ITERATION_HEADER {
        return Err(Error::Schema(format!("{}: unexpected header {header:?}", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn same(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Recomputes the degradation column and every summary scalar of a run
/// directory from its per-iteration rows.
pub fn verify_run(dir: &Path) -> Result<SummaryRecord> {
    let cfg = ExperimentConfig::load(&dir.join(CONFIG_FILE))?;
    let records = read_iterations(&dir.join(ITERATIONS_FILE))?;
    let stored = read_summary(&dir.join(SUMMARY_FILE))?;
    let [stored] = stored.as_slice() else {
        return Err(Error::Verify(format!("{}: expected one summary row", dir.display())));
    };
    if stored.run_id != cfg.run_id() {
        return Err(Error::Verify(format!(
            "run id {} does not match config hash {}",
            stored.run_id,
            cfg.run_id()
        )));
    }
    let mut perf = PerformanceSeries::new(stored.initial_return);
    for (i, r) in records.iter().enumerate() {
        if r.iter != i || r.run_id != stored.run_id {
            return Err(Error::Verify(format!("row {i}: out of order or foreign run id")));
        }
        if r.status == STATUS_OK {
            let deg = perf.push(r.return_disc);
            if !same(deg, r.iter_degradation) {
                return Err(Error::Verify(format!(
                    "iteration {i}: degradation {} recomputes to {deg}",
                    r.iter_degradation
                )));
            }
        }
    }
    let recomputed = summarize(&cfg, &stored.run_id, stored.initial_return, &records)?;
    let checks = [
        ("interference_across_iters", stored.interference_across_iters, recomputed.interference_across_iters),
        ("degradation", stored.degradation, recomputed.degradation),
        ("mean_return_last", stored.mean_return_last, recomputed.mean_return_last),
    ];
    for (name, s, r) in checks {
        if !same(s, r) {
            return Err(Error::Verify(format!("{name}: stored {s}, recomputed {r}")));
        }
    }
    if stored.status != recomputed.status || stored.iterations_completed != recomputed.iterations_completed {
        return Err(Error::Verify("status or completed-iteration count differs".into()));
    }
    Ok(recomputed)
}
