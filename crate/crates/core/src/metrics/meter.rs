use ndarray::{ArrayView1, Axis};
use rand_chacha::ChaCha8Rng;

use super::reservoir::{EvalBuffer, ReservoirInsert};
use crate::agent::{IterationContext, TdVariant, Transition, TransitionBatch};
use crate::error::{Error, Result};
use crate::nn::NetworkParams;

/// Update Interference over a reservoir-sampled evaluation set.
///
/// Produces the same numbers as [`super::update_interference`] on the
/// reservoir contents, but reuses work between consecutive calls: the
/// bootstrap targets are cached per Q_k, and the squared errors computed
/// for `after` are reused as the next call's `before` when the parameters
/// match. Only slots replaced since the last call are recomputed.
#[derive(Debug, Clone)]
pub struct InterferenceMeter {
    reservoir: EvalBuffer,
    rng: ChaCha8Rng,
    batch: Option<TransitionBatch>,
    dirty: Vec<usize>,
    boot: Option<BootCache>,
    sq: Option<SqCache>,
}

#[derive(Debug, Clone)]
struct BootCache {
    target: Vec<f64>,
    actions: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Clone)]
struct SqCache {
    params: Vec<f64>,
    variant: TdVariant,
    gamma: f64,
    values: Vec<f64>,
}

impl InterferenceMeter {
    pub fn new(capacity: usize, rng: ChaCha8Rng) -> Self {
        Self {
            reservoir: EvalBuffer::new(capacity),
            rng,
            batch: None,
            dirty: Vec::new(),
            boot: None,
            sq: None,
        }
    }

    pub fn len(&self) -> usize {
        self.reservoir.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reservoir.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        self.reservoir.items()
    }

    /// Offers a transition to the evaluation reservoir.
    pub fn observe(&mut self, t: &Transition) -> ReservoirInsert {
        let outcome = self.reservoir.insert(t.clone(), &mut self.rng);
        match outcome {
            ReservoirInsert::Appended(_) => self.invalidate_all(),
            ReservoirInsert::Replaced(slot) => {
                if let Some(batch) = self.batch.as_mut() {
                    batch.states.row_mut(slot).assign(&ArrayView1::from(&t.s[..]));
                    batch.next_states.row_mut(slot).assign(&ArrayView1::from(&t.s_next[..]));
                    batch.actions[slot] = t.a;
                    batch.rewards[slot] = t.r;
                    batch.terminal[slot] = t.terminal;
                    self.dirty.push(slot);
                }
            }
            ReservoirInsert::Discarded => {}
        }
        outcome
    }

    fn invalidate_all(&mut self) {
        self.batch = None;
        self.boot = None;
        self.sq = None;
        self.dirty.clear();
    }

    /// Update Interference of the update `before → after`, clipped at zero.
    pub fn measure(
        &mut self,
        before: &NetworkParams,
        after: &NetworkParams,
        ctx: &IterationContext,
        variant: TdVariant,
    ) -> Result<f64> {
        if self.reservoir.is_empty() {
            return Err(Error::EmptyInput("evaluation reservoir is empty"));
        }
        if self.batch.is_none() {
            self.batch = Some(TransitionBatch::from_transitions(self.reservoir.items())?);
            self.boot = None;
            self.sq = None;
            self.dirty.clear();
        }
        self.dirty.sort_unstable();
        self.dirty.dedup();
        let dirty = std::mem::take(&mut self.dirty);
        let batch = self.batch.as_ref().expect("built above");

        let boot_valid = self
            .boot
            .as_ref()
            .is_some_and(|b| b.target == ctx.target.as_flat());
        if boot_valid {
            if !dirty.is_empty() {
                let next = batch.next_states.select(Axis(0), &dirty);
                let (actions, values) = ctx.bootstrap(next.view())?;
                let boot = self.boot.as_mut().expect("valid");
                for (j, &slot) in dirty.iter().enumerate() {
                    boot.actions[slot] = actions[j];
                    boot.values[slot] = values[j];
                }
            }
        } else {
            let (actions, values) = ctx.bootstrap(batch.next_states.view())?;
            self.boot = Some(BootCache {
                target: ctx.target.as_flat().to_vec(),
                actions,
                values,
            });
            self.sq = None;
        }
        let boot = self.boot.as_ref().expect("set above");

        let reuse = self.sq.as_ref().is_some_and(|c| {
            c.variant == variant && c.gamma == ctx.gamma && c.params == before.as_flat()
        });
        let before_sq = if reuse {
            let mut values = self.sq.take().expect("checked").values;
            if !dirty.is_empty() {
                let fresh = squared_errors(before, batch, boot, ctx.gamma, variant, Some(&dirty))?;
                for (j, &slot) in dirty.iter().enumerate() {
                    values[slot] = fresh[j];
                }
            }
            values
        } else {
            squared_errors(before, batch, boot, ctx.gamma, variant, None)?
        };
        let after_sq = squared_errors(after, batch, boot, ctx.gamma, variant, None)?;
        let total: f64 = after_sq.iter().zip(&before_sq).map(|(a, b)| a - b).sum();
        self.sq = Some(SqCache {
            params: after.as_flat().to_vec(),
            variant,
            gamma: ctx.gamma,
            values: after_sq,
        });
        Ok((total / batch.len() as f64).max(0.0))
    }
}

/// δ² for all rows, or for the listed rows in order.
fn squared_errors(
    params: &NetworkParams,
    batch: &TransitionBatch,
    boot: &BootCache,
    gamma: f64,
    variant: TdVariant,
    rows: Option<&[usize]>,
) -> Result<Vec<f64>> {
    let idx: Vec<usize> = match rows {
        Some(r) => r.to_vec(),
        None => (0..batch.len()).collect(),
    };
    let (states, next_states) = match rows {
        Some(r) => (batch.states.select(Axis(0), r), batch.next_states.select(Axis(0), r)),
        None => (batch.states.clone(), batch.next_states.clone()),
    };
    let q = params.forward_batch(states.view())?;
    let q_next = match variant {
        TdVariant::NoTarget => Some(params.forward_batch(next_states.view())?),
        TdVariant::Target => None,
    };
    Ok(idx
        .iter()
        .enumerate()
        .map(|(j, &i)| {
            let b = match &q_next {
                Some(qn) => qn[[j, boot.actions[i]]],
                None => boot.values[i],
            };
            let bootstrap = if batch.terminal[i] { 0.0 } else { gamma * b };
            let delta = batch.rewards[i] + bootstrap - q[[j, batch.actions[i]]];
            delta * delta
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{dqi_direction, IterationContext};
    use crate::metrics::update_interference;
    use crate::nn::NetworkSpec;
    use rand::{Rng, SeedableRng};

    fn random_transition(rng: &mut ChaCha8Rng) -> Transition {
        Transition {
            s: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            a: rng.random_range(0..2),
            r: rng.random_range(-1.0..1.0),
            s_next: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            terminal: rng.random_bool(0.1),
        }
    }

    fn check_against_direct(variant: TdVariant) {
        let spec = NetworkSpec::mlp(3, &[16, 16], 2).unwrap();
        let mut params = NetworkParams::init(&spec, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut meter = InterferenceMeter::new(40, ChaCha8Rng::seed_from_u64(10));
        let mut ctx = IterationContext::new(0, &params, 0.9, 0.1);
        let mut checked = 0;
        for step in 0..300 {
            if step % 50 == 0 {
                ctx = IterationContext::new(step / 50, &params, 0.9, 0.1);
            }
            meter.observe(&random_transition(&mut rng));
            let before = params.clone();
            // every fifth step skips the update, leaving parameters unchanged
            if step % 5 != 4 {
                let batch = TransitionBatch::from_transitions(meter.transitions()).unwrap();
                let d = dqi_direction(&params, &ctx, &batch, variant).unwrap();
                for (p, g) in params.as_flat_mut().iter_mut().zip(&d) {
                    *p += 0.05 * g;
                }
            }
            // skip some measurements so stale caches must be detected
            if step % 7 == 3 {
                continue;
            }
            let got = meter.measure(&before, &params, &ctx, variant).unwrap();
            let batch = TransitionBatch::from_transitions(meter.transitions()).unwrap();
            let want = update_interference(&before, &params, &ctx, &batch, variant).unwrap();
            assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "step {step}: {got} vs {want}");
            checked += 1;
        }
        assert!(checked > 200);
    }

    #[test]
    fn matches_direct_computation_without_target() {
        check_against_direct(TdVariant::NoTarget);
    }

    #[test]
    fn matches_direct_computation_with_target() {
        check_against_direct(TdVariant::Target);
    }

    #[test]
    fn zero_update_gives_zero() {
        let spec = NetworkSpec::mlp(3, &[4], 2).unwrap();
        let params = NetworkParams::init(&spec, 1);
        let ctx = IterationContext::new(0, &params, 0.99, 0.1);
        let mut meter = InterferenceMeter::new(10, ChaCha8Rng::seed_from_u64(0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..15 {
            meter.observe(&random_transition(&mut rng));
        }
        assert_eq!(meter.measure(&params, &params, &ctx, TdVariant::NoTarget).unwrap(), 0.0);
    }

    #[test]
    fn empty_reservoir_is_an_error() {
        let spec = NetworkSpec::mlp(3, &[4], 2).unwrap();
        let params = NetworkParams::init(&spec, 1);
        let ctx = IterationContext::new(0, &params, 0.99, 0.1);
        let mut meter = InterferenceMeter::new(10, ChaCha8Rng::seed_from_u64(0));
        assert!(meter.measure(&params, &params, &ctx, TdVariant::Target).is_err());
    }
}
