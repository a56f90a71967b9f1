//! Run configuration: TOML on disk, dotted-key overrides on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bandit::{BanditAlgorithm, RateSchedule};
use crate::envs::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::market::BidAskPair;

/// Which market maker to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    /// `arms` defaults to `ceil(T^{1/3}) + 1` per horizon.
    M3 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        arms: Option<usize>,
    },
    FixedPair { bid: f64, ask: f64 },
    RandomPair,
}

impl LearnerSpec {
    pub fn id(&self) -> &'static str {
        match self {
            LearnerSpec::M3 { .. } => "m3",
            LearnerSpec::FixedPair { .. } => "fixed_pair",
            LearnerSpec::RandomPair => "random_pair",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LearnerSpec::M3 { arms: Some(k) } if k < 2 => Err(Error::TooFewArms(k)),
            LearnerSpec::FixedPair { bid, ask } => BidAskPair::new(bid, ask).map(|_| ()),
            _ => Ok(()),
        }
    }
}

fn default_points() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub environment: EnvironmentSpec,
    pub learner: LearnerSpec,
    pub horizons: Vec<u64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub bandit: BanditAlgorithm,
    #[serde(default)]
    pub schedule: RateSchedule,
    #[serde(default)]
    pub master_seed: u64,
    /// Rounds per run at which the hindsight benchmark is evaluated.
    #[serde(default = "default_points")]
    pub trajectory_points: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::InvalidConfig("no horizons".into()));
        }
        if self.horizons[0] == 0 {
            return Err(Error::InvalidConfig("horizons must be positive".into()));
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!("horizons must be strictly increasing: {:?}", self.horizons)));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("no seeds".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("duplicate seeds".into()));
        }
        if self.trajectory_points == 0 {
            return Err(Error::InvalidConfig("trajectory_points must be positive".into()));
        }
        self.environment.validate()?;
        self.learner.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Reads a TOML file and applies `key.path=value` overrides before parsing.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))
    }
}

/// Sets `a.b.c=value` in a TOML table. The value is read as a TOML literal
/// when it parses as one (numbers, booleans, arrays, quoted strings) and as a
/// bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::ConfigParse(format!("override `{assignment}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::ConfigParse(format!("bad override key `{key}`")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = path.split_last().expect("nonempty path");
    let mut node = table;
    for p in parents {
        let entry = node.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::ConfigParse(format!("override `{key}`: `{p}` is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
