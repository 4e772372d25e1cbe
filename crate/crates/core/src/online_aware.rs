//! Online-aware meta-learning with a first-order Reptile meta update, and
//! the gradient-alignment (GA) and large-batch baselines.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{
    dqi_direction, dqi_step, IterationContext, ReplayBuffer, TdVariant, TransitionBatch, UpdateOutcome, Updater,
};
use crate::error::{Error, Result};
use crate::nn::{hvp_fd, NetworkParams, Optimizer, OptimizerKind};

/// How the meta parameters move toward the inner-loop result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaUpdate {
    #[default]
    Reptile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OaConfig {
    /// Inner SGD updates per meta update.
    pub n: usize,
    pub alpha_inner: f64,
    pub alpha_meta: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub meta_update: MetaUpdate,
}

impl Default for OaConfig {
    fn default() -> Self {
        Self {
            n: 5,
            alpha_inner: 1e-3,
            alpha_meta: 0.3,
            batch_size: 64,
            meta_update: MetaUpdate::Reptile,
        }
    }
}

/// `n` sequential SGD DQI updates on independently sampled mini-batches.
/// Q_k, π_k and the replay buffer are read only.
pub fn inner_loop<R: Rng + ?Sized>(
    params: &NetworkParams,
    replay: &ReplayBuffer,
    oa: &OaConfig,
    ctx: &IterationContext,
    variant: TdVariant,
    rng: &mut R,
) -> Result<NetworkParams> {
    if replay.len() < oa.batch_size {
        return Err(Error::InvalidArgument(format!(
            "inner loop needs {} transitions, replay holds {}",
            oa.batch_size,
            replay.len()
        )));
    }
    let mut theta = params.clone();
    let mut sgd = Optimizer::new(OptimizerKind::Sgd, oa.alpha_inner, theta.len());
    for _ in 0..oa.n {
        dqi_step(&mut theta, &mut sgd, ctx, replay, oa.batch_size, variant, rng)?;
    }
    Ok(theta)
}

/// `θ' = (1 - α) θ + α θ_n`; exact at α = 0 and α = 1.
pub fn reptile_meta_step(theta: &[f64], theta_n: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if theta.len() != theta_n.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: theta_n.len(),
        });
    }
    Ok(theta
        .iter()
        .zip(theta_n)
        .map(|(t, n)| (1.0 - alpha) * t + alpha * n)
        .collect())
}

/// One online-aware update: inner loop, then the meta step toward its end point.
pub fn oa_step<R: Rng + ?Sized>(
    params: &mut NetworkParams,
    replay: &ReplayBuffer,
    oa: &OaConfig,
    ctx: &IterationContext,
    variant: TdVariant,
    rng: &mut R,
) -> Result<UpdateOutcome> {
    if oa.batch_size == 0 || replay.len() < oa.batch_size {
        return Ok(UpdateOutcome::Skipped);
    }
    let theta_n = inner_loop(params, replay, oa, ctx, variant, rng)?;
    let next = match oa.meta_update {
        MetaUpdate::Reptile => reptile_meta_step(params.as_flat(), theta_n.as_flat(), oa.alpha_meta)?,
    };
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("parameters"));
    }
    params.as_flat_mut().copy_from_slice(&next);
    Ok(UpdateOutcome::Updated)
}

#[derive(Debug, Clone)]
pub struct OaUpdater {
    pub config: OaConfig,
}

impl Updater for OaUpdater {
    fn update(
        &mut self,
        params: &mut NetworkParams,
        replay: &ReplayBuffer,
        ctx: &IterationContext,
        variant: TdVariant,
        rng: &mut ChaCha8Rng,
    ) -> Result<UpdateOutcome> {
        oa_step(params, replay, &self.config, ctx, variant, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaConfig {
    pub lambda: f64,
    /// Size of each of the two mini-batches; together they form one
    /// baseline-sized batch.
    pub half_batch: usize,
    /// Relative HVP step; the absolute step is `eps · (1 + ‖θ‖∞)`.
    pub hvp_eps: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            half_batch: 32,
            hvp_eps: 1e-4,
        }
    }
}

/// `∇_θ (g₁ᵀ g₂) = H₁ g₂ + H₂ g₁` from two gradient oracles via central
/// differences. Each direction is normalized before differencing and the
/// product rescaled, so the step is relative to a unit vector.
pub fn alignment_gradient<F1, F2>(theta: &[f64], mut grad1: F1, mut grad2: F2, eps: f64) -> Result<Vec<f64>>
where
    F1: FnMut(&[f64]) -> Result<Vec<f64>>,
    F2: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let g1 = grad1(theta)?;
    let g2 = grad2(theta)?;
    let h1g2 = scaled_hvp(theta, &mut grad1, &g2, eps)?;
    let h2g1 = scaled_hvp(theta, &mut grad2, &g1, eps)?;
    Ok(h1g2.iter().zip(&h2g1).map(|(a, b)| a + b).collect())
}

fn scaled_hvp<F>(theta: &[f64], grad: &mut F, v: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite("hvp direction"));
    }
    if norm == 0.0 {
        return Ok(vec![0.0; theta.len()]);
    }
    let unit: Vec<f64> = v.iter().map(|x| x / norm).collect();
    let hv = hvp_fd(theta, |p| grad(p), &unit, eps)?;
    Ok(hv.into_iter().map(|x| x * norm).collect())
}

/// Mean semi-gradient of δ² over a batch: `-(2/|B|) Σ δ ∇Q(s, a)`.
fn sq_td_grad(params: &NetworkParams, ctx: &IterationContext, batch: &TransitionBatch, variant: TdVariant) -> Result<Vec<f64>> {
    Ok(dqi_direction(params, ctx, batch, variant)?
        .into_iter()
        .map(|d| -2.0 * d)
        .collect())
}

/// `g₁ᵀ g₂ / P`, the alignment term the GA loss subtracts (times λ).
pub fn alignment_value(
    params: &NetworkParams,
    ctx: &IterationContext,
    b1: &TransitionBatch,
    b2: &TransitionBatch,
    variant: TdVariant,
) -> Result<f64> {
    let g1 = sq_td_grad(params, ctx, b1, variant)?;
    let g2 = sq_td_grad(params, ctx, b2, variant)?;
    Ok(g1.iter().zip(&g2).map(|(a, b)| a * b).sum::<f64>() / params.len() as f64)
}

/// One optimizer step on the TD loss over `B₁ ∪ B₂` minus `λ g₁ᵀg₂ / P`.
///
/// The TD part is the usual DQI direction, so with λ = 0 (the regularizer
/// is then skipped) the update equals DQI on one batch of `2 · half_batch`.
pub fn ga_step<R: Rng + ?Sized>(
    params: &mut NetworkParams,
    opt: &mut Optimizer,
    replay: &ReplayBuffer,
    ga: &GaConfig,
    ctx: &IterationContext,
    variant: TdVariant,
    rng: &mut R,
) -> Result<UpdateOutcome> {
    let total = 2 * ga.half_batch;
    if ga.half_batch == 0 || replay.len() < total {
        return Ok(UpdateOutcome::Skipped);
    }
    let first = replay.sample(ga.half_batch, rng);
    let second = replay.sample(ga.half_batch, rng);
    let union = TransitionBatch::from_transitions(first.iter().chain(second.iter()).copied())?;
    let mut direction = dqi_direction(params, ctx, &union, variant)?;
    if ga.lambda != 0.0 {
        let b1 = TransitionBatch::from_transitions(first)?;
        let b2 = TransitionBatch::from_transitions(second)?;
        let theta = params.as_flat();
        let inf_norm = theta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let eps = ga.hvp_eps * (1.0 + inf_norm);
        let oracle = |batch: TransitionBatch| {
            let base = params.clone();
            move |p: &[f64]| sq_td_grad(&base.with_values(p.to_vec())?, ctx, &batch, variant)
        };
        let reg = alignment_gradient(theta, oracle(b1), oracle(b2), eps)?;
        let scale = ga.lambda / params.len() as f64;
        for (d, r) in direction.iter_mut().zip(&reg) {
            *d += scale * r;
        }
    }
    opt.step(params.as_flat_mut(), &direction)?;
    Ok(UpdateOutcome::Updated)
}

#[derive(Debug, Clone)]
pub struct GaUpdater {
    pub optimizer: Optimizer,
    pub config: GaConfig,
}

impl Updater for GaUpdater {
    fn update(
        &mut self,
        params: &mut NetworkParams,
        replay: &ReplayBuffer,
        ctx: &IterationContext,
        variant: TdVariant,
        rng: &mut ChaCha8Rng,
    ) -> Result<UpdateOutcome> {
        ga_step(params, &mut self.optimizer, replay, &self.config, ctx, variant, rng)
    }
}

/// Batch size of the "Large" baseline: plain DQI with a multiplied batch.
pub fn large_batch_config(base_batch: usize, factor: usize) -> usize {
    base_batch * factor
}
