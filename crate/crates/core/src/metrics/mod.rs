//! Interference and degradation measures.
//!
//! Update Interference is approximated by the clipped mean increase in
//! squared TD error over an evaluation set; iterations aggregate it by the
//! mean, and runs aggregate iterations by the upper-tail expectation.

mod meter;
mod oracle;
mod reservoir;
mod taylor;

pub use meter::InterferenceMeter;
pub use oracle::{exact_mean_accuracy_change, exact_update_interference_oracle, EnumerableMdp, Outcome};
pub use reservoir::{EvalBuffer, Reservoir, ReservoirInsert};
pub use taylor::{taylor_alignment_check, td_sq_gradient, TaylorCheck};

use crate::agent::{td_errors, IterationContext, TdVariant, TransitionBatch};
use crate::error::{Error, Result};
use crate::nn::NetworkParams;

pub const DEFAULT_PERCENTILE: f64 = 0.9;
pub const DEFAULT_EVAL_CAPACITY: usize = 1000;

/// `mean_i δ²(θ_after; i) - δ²(θ_before; i)`, unclipped.
pub fn mean_sq_td_change(
    before: &NetworkParams,
    after: &NetworkParams,
    ctx: &IterationContext,
    batch: &TransitionBatch,
    variant: TdVariant,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let d_before = td_errors(before, ctx, batch, variant)?;
    let d_after = td_errors(after, ctx, batch, variant)?;
    let total: f64 = d_after
        .iter()
        .zip(&d_before)
        .map(|(a, b)| a * a - b * b)
        .sum();
    Ok(total / batch.len() as f64)
}

/// Squared-TD-error approximation of Update Interference, clipped at zero.
pub fn update_interference(
    before: &NetworkParams,
    after: &NetworkParams,
    ctx: &IterationContext,
    batch: &TransitionBatch,
    variant: TdVariant,
) -> Result<f64> {
    Ok(mean_sq_td_change(before, after, ctx, batch, variant)?.max(0.0))
}

/// Iteration Interference: the mean over the iteration's measured steps,
/// i.e. the expectation under a uniformly drawn step.
pub fn iteration_interference(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("iteration interference needs at least one step"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Nearest-rank percentile: the `ceil(p n)`-th smallest value.
pub fn nearest_rank_percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("percentile of an empty series"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("percentile level must be in (0, 1), got {p}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("percentile input"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // guard against p * n landing a hair above an integer
    let rank = ((p * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    Ok(sorted[rank - 1])
}

/// `E[X | X >= Percentile_p(X)]` over the empirical distribution of `values`.
pub fn tail_expectation(values: &[f64], p: f64) -> Result<f64> {
    let threshold = nearest_rank_percentile(values, p)?;
    let (sum, count) = values
        .iter()
        .filter(|&&v| v >= threshold)
        .fold((0.0, 0usize), |(s, c), &v| (s + (v - threshold), c + 1));
    Ok(threshold + sum / count as f64)
}

/// Best earlier performance minus current performance; negative when the
/// current policy is a new best.
pub fn iteration_degradation(history: &[f64], current: f64) -> Result<f64> {
    let best = history
        .iter()
        .cloned()
        .reduce(f64::max)
        .ok_or(Error::EmptyInput("degradation needs earlier performance"))?;
    Ok(best - current)
}

/// Tail expectation of the last `window` Iteration Interference values.
pub fn interference_across_iterations(series: &[f64], window: usize, p: f64) -> Result<f64> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    if window > series.len() {
        return Err(Error::WindowTooLarge {
            window,
            len: series.len(),
        });
    }
    tail_expectation(&series[series.len() - window..], p)
}

/// Degradation across iterations: same tail form over the last `window`
/// Iteration Degradation values.
pub fn degradation(series: &[f64], window: usize, p: f64) -> Result<f64> {
    interference_across_iterations(series, window, p)
}

/// Per-iteration Iteration Interference values.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceSeries {
    pub values: Vec<f64>,
    pub percentile: f64,
}

impl Default for InterferenceSeries {
    fn default() -> Self {
        Self {
            values: Vec::new(),
            percentile: DEFAULT_PERCENTILE,
        }
    }
}

impl InterferenceSeries {
    pub fn push(&mut self, v: f64) {
        debug_assert!(v >= 0.0);
        self.values.push(v);
    }

    pub fn across_iterations(&self, window: usize) -> Result<f64> {
        interference_across_iterations(&self.values, window, self.percentile)
    }
}

/// Evaluated performance per iteration with its running best.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerformanceSeries {
    pub performance: Vec<f64>,
    pub degradation: Vec<f64>,
    best: Option<f64>,
}

impl PerformanceSeries {
    /// Starts from the performance of the initial policy.
    pub fn new(initial: f64) -> Self {
        Self {
            performance: Vec::new(),
            degradation: Vec::new(),
            best: Some(initial),
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Records the performance after an improvement step and returns that
    /// iteration's degradation.
    pub fn push(&mut self, current: f64) -> f64 {
        let deg = self.best.map_or(0.0, |b| b - current);
        self.best = Some(self.best.map_or(current, |b| b.max(current)));
        self.performance.push(current);
        self.degradation.push(deg);
        deg
    }
}
