use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{Map, Value};

use super::config::ExperimentConfig;
use super::run::{run_experiment, write_summary, SummaryRecord, SUMMARY_FILE};
use crate::error::{Error, Result};

/// A base config plus axes whose Cartesian product forms the grid.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub base: Map<String, Value>,
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<Value>>,
}

impl GridSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Grid points (axes vary fastest in reverse key order) crossed with
    /// seeds `first_seed .. first_seed + seeds`.
    pub fn expand(&self, seeds: usize, first_seed: u64) -> Result<Vec<ExperimentConfig>> {
        if seeds == 0 {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if let Some((k, _)) = self.axes.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::Config(format!("axis {k:?} has no values")));
        }
        let mut points = vec![self.base.clone()];
        for (key, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(key.clone(), v.clone());
                        q
                    })
                })
                .collect();
        }
        let mut out = Vec::with_capacity(points.len() * seeds);
        for point in points {
            for s in 0..seeds as u64 {
                let mut obj = point.clone();
                obj.insert("seed".into(), Value::from(first_seed + s));
                let cfg: ExperimentConfig =
                    serde_json::from_value(Value::Object(obj)).map_err(|e| Error::Config(e.to_string()))?;
                cfg.validate()?;
                out.push(cfg);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Cartpole, DQI with target network: hidden {64, 256} × buffer
    /// {1000, 10000}, M = 200, 150 iterations.
    Correlation,
    /// Acrobot, DQI without target network, hidden 128, M = 100.
    OaAcrobot,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correlation" => Ok(Preset::Correlation),
            "oa-acrobot" => Ok(Preset::OaAcrobot),
            _ => Err(Error::Config(format!("unknown preset {s:?}; expected correlation or oa-acrobot"))),
        }
    }
}

impl Preset {
    /// Desk-scale grid, or the full-size grid with `full_scale`.
    pub fn grid(self, full_scale: bool) -> GridSpec {
        let json = match (self, full_scale) {
            (Preset::Correlation, false) => serde_json::json!({
                "base": {"env": "cartpole", "variant": "dqi-target", "M": 200, "iterations": 150, "window": 75, "measure_stride": 10},
                "axes": {"hidden": [64, 256], "buffer": [1000, 10000]}
            }),
            (Preset::Correlation, true) => serde_json::json!({
                "base": {"env": "cartpole", "variant": "dqi-target"},
                "axes": {"hidden": [64, 128, 256, 512], "buffer": [1000, 5000, 10000], "M": [100, 200, 400]}
            }),
            (Preset::OaAcrobot, false) => serde_json::json!({
                "base": {"env": "acrobot", "hidden": 128, "buffer": 10000, "M": 100, "iterations": 200, "window": 100, "measure_stride": 10},
                "axes": {"variant": ["dqi-no-target", "oa-no-target"]}
            }),
            (Preset::OaAcrobot, true) => serde_json::json!({
                "base": {"env": "acrobot", "hidden": 128, "buffer": 10000, "M": 100},
                "axes": {"variant": ["dqi-no-target", "oa-no-target"]}
            }),
        };
        serde_json::from_value(json).expect("preset grids are valid")
    }
}

/// Outcome of one sweep: summaries in grid order plus any failed runs.
#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub summaries: Vec<SummaryRecord>,
    pub failures: Vec<(String, String)>,
}

/// Runs every config on a pool of `jobs` workers and writes
/// `<out>/summary.csv`. Rows follow the order of `configs`, so the output
/// does not depend on scheduling.
pub fn run_sweep(configs: &[ExperimentConfig], jobs: usize, out: &Path) -> Result<SweepResult> {
    if configs.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    std::fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let outcomes: Vec<Result<SummaryRecord>> = pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| run_experiment(cfg, Some(out)).map(|r| r.summary))
            .collect()
    });
    let mut result = SweepResult::default();
    for (cfg, outcome) in configs.iter().zip(outcomes) {
        match outcome {
            Ok(s) => result.summaries.push(s),
            Err(e) => result.failures.push((cfg.run_id(), e.to_string())),
        }
    }
    if !result.summaries.is_empty() {
        write_summary(&out.join(SUMMARY_FILE), &result.summaries)?;
    }
    Ok(result)
}
