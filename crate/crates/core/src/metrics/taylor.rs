//! First-order (gradient alignment) view of the squared-TD-error change.

use ndarray::Array2;

use crate::agent::{td_error, IterationContext, TdVariant, Transition, TransitionBatch};
use crate::error::Result;
use crate::nn::NetworkParams;

/// Gradient of `δ²(θ; t)` and `δ` itself.
///
/// With `full` the gradient also flows through a bootstrap that depends on
/// θ (the no-target variant); otherwise it is the semi-gradient
/// `-2 δ ∇Q(s, a)` used by the DQI update.
pub fn td_sq_gradient(
    params: &NetworkParams,
    ctx: &IterationContext,
    t: &Transition,
    variant: TdVariant,
    full: bool,
) -> Result<(f64, Vec<f64>)> {
    let delta = td_error(params, ctx, t, variant)?;
    let through_bootstrap = full && variant == TdVariant::NoTarget && !t.terminal;
    let n_actions = params.spec().action_count();
    let batch = if through_bootstrap {
        let mut next = t.clone();
        next.s = t.s_next.clone();
        TransitionBatch::from_transitions([t, &next])?
    } else {
        TransitionBatch::from_transitions([t])?
    };
    let mut out_grad = Array2::zeros((batch.len(), n_actions));
    out_grad[[0, t.a]] = -2.0 * delta;
    if through_bootstrap {
        let a_next = ctx.target_action(&t.s_next)?;
        out_grad[[1, a_next]] = 2.0 * delta * ctx.gamma;
    }
    let grad = params.vjp(batch.states.view(), out_grad.view())?;
    Ok((delta, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorCheck {
    /// `δ²(θ'; probe) - δ²(θ; probe)` after the update on `update`.
    pub exact_change: f64,
    /// `-α ∇δ²(θ; probe) · g`, where `g` is the update's semi-gradient.
    pub first_order: f64,
}

impl TaylorCheck {
    pub fn relative_error(&self) -> f64 {
        (self.exact_change - self.first_order).abs() / self.first_order.abs().max(f64::MIN_POSITIVE)
    }
}

/// Applies `θ' = θ - α g` with `g` the semi-gradient of `δ²(θ; update)` and
/// compares the resulting change in the probe's squared TD error with its
/// first-order prediction.
pub fn taylor_alignment_check(
    params: &NetworkParams,
    ctx: &IterationContext,
    update: &Transition,
    probe: &Transition,
    alpha: f64,
    variant: TdVariant,
) -> Result<TaylorCheck> {
    let (_, g_update) = td_sq_gradient(params, ctx, update, variant, false)?;
    let (delta_probe, g_probe) = td_sq_gradient(params, ctx, probe, variant, true)?;
    let stepped: Vec<f64> = params
        .as_flat()
        .iter()
        .zip(&g_update)
        .map(|(p, g)| p - alpha * g)
        .collect();
    let stepped = params.with_values(stepped)?;
    let delta_after = td_error(&stepped, ctx, probe, variant)?;
    let dot: f64 = g_probe.iter().zip(&g_update).map(|(a, b)| a * b).sum();
    Ok(TaylorCheck {
        exact_change: delta_after * delta_after - delta_probe * delta_probe,
        first_order: -alpha * dot,
    })
}
