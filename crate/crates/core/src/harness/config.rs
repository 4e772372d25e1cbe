use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::agent::{TdVariant, DEFAULT_EPSILON};
use crate::env::EnvId;
use crate::error::{Error, Result};
use crate::metrics::{DEFAULT_EVAL_CAPACITY, DEFAULT_PERCENTILE};
use crate::nn::OptimizerKind;
use crate::online_aware::{GaConfig, OaConfig};

/// Every Q-network has this many hidden layers of `hidden` units.
pub const HIDDEN_LAYERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Dqi,
    Oa,
    Ga,
    Large,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Dqi => "dqi",
            Algorithm::Oa => "oa",
            Algorithm::Ga => "ga",
            Algorithm::Large => "large",
        }
    }
}

/// Update rule plus TD-error variant, written `<algorithm>-<td variant>`
/// (e.g. `dqi-target`, `oa-no-target`). Bare `oa`, `ga` and `large` mean
/// the no-target variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub algorithm: Algorithm,
    pub td: TdVariant,
}

impl Variant {
    pub const fn new(algorithm: Algorithm, td: TdVariant) -> Self {
        Self { algorithm, td }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.algorithm.as_str(), self.td)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (alg, td) = match s.split_once('-') {
            Some((a, rest)) => (a, rest.parse::<TdVariant>()?),
            None => (s, TdVariant::NoTarget),
        };
        let algorithm = match alg {
            "dqi" if s.contains('-') => Algorithm::Dqi,
            "oa" => Algorithm::Oa,
            "ga" => Algorithm::Ga,
            "large" => Algorithm::Large,
            _ => {
                return Err(Error::Config(format!(
                    "unknown variant {s:?}; expected dqi-target, dqi-no-target, oa, ga or large (optionally -target/-no-target)"
                )))
            }
        };
        Ok(Self { algorithm, td })
    }
}

impl Serialize for Variant {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_iterations() -> usize {
    400
}
fn default_batch() -> usize {
    64
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}
fn default_step_size() -> f64 {
    3e-4
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_eval_rollouts() -> usize {
    50
}
fn default_eval_buffer() -> usize {
    DEFAULT_EVAL_CAPACITY
}
fn default_window() -> usize {
    200
}
fn default_stride() -> usize {
    1
}
fn default_percentile() -> f64 {
    DEFAULT_PERCENTILE
}
fn default_large_factor() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvId,
    pub variant: Variant,
    pub hidden: usize,
    pub buffer: usize,
    /// Environment steps per iteration (T_eval).
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_eval_rollouts")]
    pub eval_rollouts: usize,
    #[serde(default = "default_eval_buffer")]
    pub eval_buffer: usize,
    /// Trailing iterations used for the summary scalars.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Measure Update Interference every `measure_stride` steps; values
    /// above 1 estimate the per-iteration mean from a subsample.
    #[serde(default = "default_stride")]
    pub measure_stride: usize,
    #[serde(default = "default_percentile")]
    pub percentile: f64,
    #[serde(default = "default_large_factor")]
    pub large_factor: usize,
    #[serde(default)]
    pub oa: OaConfig,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(env: EnvId, variant: Variant, hidden: usize, buffer: usize, m: usize) -> Self {
        Self {
            env,
            variant,
            hidden,
            buffer,
            m,
            iterations: default_iterations(),
            batch_size: default_batch(),
            optimizer: default_optimizer(),
            step_size: default_step_size(),
            epsilon: default_epsilon(),
            eval_rollouts: default_eval_rollouts(),
            eval_buffer: default_eval_buffer(),
            window: default_window(),
            measure_stride: default_stride(),
            percentile: default_percentile(),
            large_factor: default_large_factor(),
            oa: OaConfig::default(),
            ga: GaConfig::default(),
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("buffer", self.buffer),
            ("M", self.m),
            ("iterations", self.iterations),
            ("batch_size", self.batch_size),
            ("eval_rollouts", self.eval_rollouts),
            ("eval_buffer", self.eval_buffer),
            ("window", self.window),
            ("measure_stride", self.measure_stride),
            ("large_factor", self.large_factor),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.window > self.iterations {
            return Err(Error::Config(format!(
                "window {} exceeds iterations {}",
                self.window, self.iterations
            )));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Config("step_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config("epsilon must be in [0, 1]".into()));
        }
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return Err(Error::Config("percentile must be in (0, 1)".into()));
        }
        if self.env == EnvId::Tworoom {
            return Err(Error::Config("tworoom runs through the tworoom experiment, not run".into()));
        }
        match self.variant.algorithm {
            Algorithm::Oa if self.oa.batch_size == 0 => Err(Error::Config("oa.batch_size must be positive".into())),
            Algorithm::Ga if self.ga.half_batch == 0 || !(self.ga.hvp_eps > 0.0) => {
                Err(Error::Config("ga.half_batch and ga.hvp_eps must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Serialized form used for hashing and for `config.json`.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of SHA-256 over the canonical config and the
    /// crate version.
    pub fn run_id(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical_json().as_bytes());
        h.update(b"\n");
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        hex::encode(h.finalize())[..16].to_string()
    }
}
