//! Run configuration, validation against the protocol fault bounds, and the
//! versioned sweep-grid file format.
//!
//! A grid file is TOML with a `version` and one or more `[[sweep]]` tables:
//!
//! ```toml
//! version = 1
//!
//! [[sweep]]
//! protocol = "rba-ts"
//! n = [8, 16, 32]
//! f = "minority"              # or "eps-bound", or a fixed integer
//! adversaries = ["passive", "crash"]
//! inputs = ["unanimous:0", "split"]
//! seeds = { start = 0, count = 100 }
//! ```
//!
//! Sweeps expand in declaration order: n, then adversary, then inputs, then
//! seed, so outputs are diffable across reruns.

use basim_core::rba::{Params, ProtocolKind};
use basim_core::types::{CorruptionMode, Value};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const GRID_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown protocol {0:?}")]
    UnknownProtocol(String),
    #[error("unknown adversary {0:?}")]
    UnknownAdversary(String),
    #[error("bad adversary parameter {0}")]
    BadAdversaryParam(String),
    #[error("n must be at least 1")]
    BadN,
    #[error("value domain must be at least 2")]
    BadDomain,
    #[error("base threshold must be at least 1")]
    BadM,
    #[error("epsilon must lie in (0, 1/4] for gossip protocols")]
    BadEpsilon,
    #[error("f={f} exceeds the bound {bound} for {protocol} at n={n}")]
    FaultBound {
        protocol: &'static str,
        f: u32,
        bound: u32,
        n: u32,
    },
    #[error("f={f} must be below n={n}")]
    FaultBudget { f: u32, n: u32 },
    #[error("bad input assignment: {0}")]
    BadInputs(String),
    #[error("grid version {0} unsupported (expected {GRID_VERSION})")]
    BadGridVersion(u32),
    #[error("grid parse error: {0}")]
    GridParse(String),
}

/// Named adversary strategy plus its string parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
}

impl AdversarySpec {
    pub fn named(name: &str) -> Self {
        AdversarySpec {
            name: name.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }
}

impl FromStr for AdversarySpec {
    type Err = ConfigError;

    /// `name` or `name:key=value,key=value`.
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => (s, None),
        };
        let mut params = BTreeMap::new();
        if let Some(rest) = rest {
            for kv in rest.split(',').filter(|kv| !kv.is_empty()) {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| ConfigError::BadAdversaryParam(kv.to_string()))?;
                params.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(AdversarySpec {
            name: name.trim().to_string(),
            params,
        })
    }
}

impl fmt::Display for AdversarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.params.is_empty() {
            let kv: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, ":{}", kv.join(","))?;
        }
        Ok(())
    }
}

/// How inputs are assigned across parties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputAssignment {
    /// Everyone gets the same value.
    Unanimous(Value),
    /// The first `ceil(n/2)` parties get value 0, the rest value 1.
    Split,
    /// Explicit per-party values.
    List(Vec<Value>),
}

impl InputAssignment {
    pub fn resolve(&self, n: u32) -> Vec<Value> {
        match self {
            InputAssignment::Unanimous(v) => vec![*v; n as usize],
            InputAssignment::Split => {
                let first = n.div_ceil(2);
                (0..n)
                    .map(|i| if i < first { Value(0) } else { Value(1) })
                    .collect()
            }
            InputAssignment::List(vs) => vs.clone(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            InputAssignment::Unanimous(v) => format!("unanimous:{}", v.0),
            InputAssignment::Split => "split".into(),
            InputAssignment::List(vs) => format!(
                "list:{}",
                vs.iter().map(|v| v.0.to_string()).collect::<Vec<_>>().join(",")
            ),
        }
    }
}

impl FromStr for InputAssignment {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        if s == "split" {
            return Ok(InputAssignment::Split);
        }
        if let Some(v) = s.strip_prefix("unanimous:") {
            let v: u32 = v
                .parse()
                .map_err(|_| ConfigError::BadInputs(s.to_string()))?;
            return Ok(InputAssignment::Unanimous(Value(v)));
        }
        if let Some(list) = s.strip_prefix("list:") {
            let vs: Result<Vec<Value>, _> = list
                .split(',')
                .map(|x| x.trim().parse::<u32>().map(Value))
                .collect();
            return Ok(InputAssignment::List(
                vs.map_err(|_| ConfigError::BadInputs(s.to_string()))?,
            ));
        }
        Err(ConfigError::BadInputs(s.to_string()))
    }
}

fn parse_protocol(s: &str) -> Result<ProtocolKind, ConfigError> {
    match s {
        "rba-ts" => Ok(ProtocolKind::RbaTs),
        "rba-exp" => Ok(ProtocolKind::RbaExp),
        "gba-ts" => Ok(ProtocolKind::GbaTs),
        "gba-exp" => Ok(ProtocolKind::GbaExp),
        "base-ba" => Ok(ProtocolKind::BaseBa),
        other => Err(ConfigError::UnknownProtocol(other.to_string())),
    }
}

/// One fully specified run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub protocol: ProtocolKind,
    pub n: u32,
    pub f: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub m: u32,
    pub domain: u32,
    pub seed: u64,
    pub adversary: AdversarySpec,
    pub inputs: InputAssignment,
    #[serde(default)]
    pub allow_over_bound: bool,
    #[serde(default)]
    pub corruption_mode: CorruptionMode,
}

impl RunConfig {
    /// Largest fault count the protocol is designed for at this size.
    pub fn fault_bound(&self) -> u32 {
        match self.protocol {
            ProtocolKind::RbaExp | ProtocolKind::GbaExp => {
                let eps = self.epsilon.unwrap_or(0.0);
                ((0.5 - eps) * self.n as f64).floor() as u32
            }
            _ => (self.n - 1) / 2,
        }
    }

    /// True when the corruption budget exceeds the protocol's design bound;
    /// such runs are only admitted with `allow_over_bound` and their
    /// property checks are recorded rather than enforced.
    pub fn over_bound(&self) -> bool {
        self.f > self.fault_bound()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::BadN);
        }
        if self.domain < 2 {
            return Err(ConfigError::BadDomain);
        }
        if self.m == 0 {
            return Err(ConfigError::BadM);
        }
        if matches!(self.protocol, ProtocolKind::RbaExp | ProtocolKind::GbaExp) {
            match self.epsilon {
                Some(e) if e > 0.0 && e <= 0.25 => {}
                _ => return Err(ConfigError::BadEpsilon),
            }
        }
        if self.f >= self.n {
            return Err(ConfigError::FaultBudget { f: self.f, n: self.n });
        }
        if !self.allow_over_bound && self.over_bound() {
            return Err(ConfigError::FaultBound {
                protocol: self.protocol.label(),
                f: self.f,
                bound: self.fault_bound(),
                n: self.n,
            });
        }
        match &self.inputs {
            InputAssignment::Unanimous(v) if v.0 >= self.domain => {
                Err(ConfigError::BadInputs("value outside domain".into()))
            }
            InputAssignment::List(vs) if vs.len() != self.n as usize => {
                Err(ConfigError::BadInputs(format!(
                    "{} inputs for {} parties",
                    vs.len(),
                    self.n
                )))
            }
            InputAssignment::List(vs) if vs.iter().any(|v| v.0 >= self.domain) => {
                Err(ConfigError::BadInputs("value outside domain".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn params(&self) -> Params {
        Params {
            protocol: self.protocol,
            n: self.n,
            f: self.f,
            epsilon: self.epsilon,
            m: self.m,
            domain: self.domain,
            corruption_mode: self.corruption_mode,
        }
    }
}

/// Grid-file rule for deriving `f` from `n`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum FaultRule {
    Fixed(u32),
    Named(String),
}

impl FaultRule {
    fn resolve(&self, n: u32, epsilon: Option<f64>) -> Result<u32, ConfigError> {
        match self {
            FaultRule::Fixed(f) => Ok(*f),
            FaultRule::Named(name) => match name.as_str() {
                "minority" => Ok((n - 1) / 2),
                "eps-bound" => {
                    let eps = epsilon.ok_or(ConfigError::BadEpsilon)?;
                    Ok(((0.5 - eps) * n as f64).floor() as u32)
                }
                other => Err(ConfigError::GridParse(format!("unknown f rule {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Deserialize)]
struct SeedRange {
    #[serde(default)]
    start: u64,
    count: u64,
}

#[derive(Debug, Deserialize)]
struct SweepTable {
    protocol: String,
    n: Vec<u32>,
    f: FaultRule,
    #[serde(default)]
    epsilon: Option<f64>,
    #[serde(default = "default_m")]
    m: u32,
    #[serde(default = "default_domain")]
    domain: u32,
    adversaries: Vec<String>,
    inputs: Vec<String>,
    seeds: SeedRange,
    #[serde(default)]
    allow_over_bound: bool,
}

fn default_m() -> u32 {
    4
}

fn default_domain() -> u32 {
    2
}

#[derive(Debug, Deserialize)]
struct GridFile {
    version: u32,
    #[serde(rename = "sweep")]
    sweeps: Vec<SweepTable>,
}

/// Expands a grid file into the ordered list of run configurations.
pub fn parse_grid(text: &str) -> Result<Vec<RunConfig>, ConfigError> {
    let grid: GridFile =
        toml::from_str(text).map_err(|e| ConfigError::GridParse(e.to_string()))?;
    if grid.version != GRID_VERSION {
        return Err(ConfigError::BadGridVersion(grid.version));
    }
    let mut configs = Vec::new();
    for sweep in &grid.sweeps {
        let protocol = parse_protocol(&sweep.protocol)?;
        for &n in &sweep.n {
            let f = sweep.f.resolve(n, sweep.epsilon)?;
            for adv in &sweep.adversaries {
                let adversary: AdversarySpec = adv.parse()?;
                for inp in &sweep.inputs {
                    let inputs: InputAssignment = inp.parse()?;
                    for seed in sweep.seeds.start..sweep.seeds.start + sweep.seeds.count {
                        let cfg = RunConfig {
                            protocol,
                            n,
                            f,
                            epsilon: sweep.epsilon,
                            m: sweep.m,
                            domain: sweep.domain,
                            seed,
                            adversary: adversary.clone(),
                            inputs: inputs.clone(),
                            allow_over_bound: sweep.allow_over_bound,
                            corruption_mode: CorruptionMode::OutboxStands,
                        };
                        cfg.validate()?;
                        configs.push(cfg);
                    }
                }
            }
        }
    }
    Ok(configs)
}
