//! Run configuration: one TOML document per experiment, with dotted
//! `key=value` overrides from the command line.

use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use hiquant::agents::{GridConfig, ScorerParams};
use hiquant::allocator::HyperParams;
use hiquant::backtest::AblationFlags;
use hiquant::data::{DataPanel, Day, PanelPaths, SynthConfig};
use hiquant::macro_agent::MacroParams;
use hiquant::risk::RiskParams;
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::CliError;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "HIQUANT_SEED";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Windows {
    pub train_start: Option<NaiveDate>,
    pub train_end: Option<NaiveDate>,
    pub test_start: Option<NaiveDate>,
    pub test_end: Option<NaiveDate>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Pre-scored payloads pass through; raw text is keyword-scored.
    #[default]
    Stub,
    /// Sub-scores from a `asset_id,date,kind,score` table.
    Precomputed,
    Remote,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextConfig {
    pub provider: ProviderKind,
    pub table: Option<PathBuf>,
    pub endpoint: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestSection {
    /// Cost per unit of turnover in basis points.
    pub cost_bps: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObfuscationConfig {
    /// Pseudonymize asset and industry identifiers with this key.
    pub salt: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub data: Option<PanelPaths>,
    pub synth: Option<SynthConfig>,
    pub windows: Windows,
    #[serde(rename = "macro")]
    pub macro_params: MacroParams,
    /// Explicit agent parameters; otherwise the output of `tune` is used.
    pub agents: Option<ScorerParams>,
    pub grid: GridConfig,
    pub allocator: HyperParams,
    pub risk: RiskParams,
    pub ablation: AblationFlags,
    pub backtest: BacktestSection,
    pub text: TextConfig,
    pub obfuscation: ObfuscationConfig,
}

/// Reads `path`, applies `--set` overrides and the seed variable, and validates.
pub fn load_config(path: &Path, overrides: &[String], seed_env: Option<&str>) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Precondition(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text, overrides, seed_env)
}

pub fn parse_config(text: &str, overrides: &[String], seed_env: Option<&str>) -> Result<RunConfig, CliError> {
    let mut doc: Value = toml::from_str(text).map_err(|e| CliError::Config(one_line(&e.to_string())))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let mut config: RunConfig = doc.try_into().map_err(|e: toml::de::Error| CliError::Config(one_line(&e.to_string())))?;
    if let Some(raw) = seed_env {
        let seed = raw
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}=`{raw}` is not an unsigned integer")))?;
        config.seed = Some(seed);
    }
    config.validate()?;
    Ok(config)
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Sets a dotted key, creating intermediate tables. The value is read as a
/// TOML literal, falling back to a bare string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    let mut node = doc;
    for part in &path[..path.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{part}` is not a table")))?;
        node = table.entry(part.to_string()).or_insert_with(|| Value::Table(Default::default()));
    }
    node.as_table_mut()
        .ok_or_else(|| CliError::Config(format!("override `{key}` does not address a table entry")))?
        .insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |r: hiquant::Result<()>| r.map_err(|e| CliError::Config(e.to_string()));
        wrap(self.macro_params.validate())?;
        wrap(self.risk.validate())?;
        wrap(self.ablation.validate())?;
        if let Some(s) = &self.synth {
            wrap(s.validate())?;
        }
        if let Some(a) = &self.agents {
            wrap(a.validate())?;
        }
        if !(self.backtest.cost_bps >= 0.0 && self.backtest.cost_bps.is_finite()) {
            return Err(CliError::Config(format!("backtest.cost_bps must be non-negative, got {}", self.backtest.cost_bps)));
        }
        if self.text.provider == ProviderKind::Precomputed && self.text.table.is_none() {
            return Err(CliError::Config("text.provider = \"precomputed\" needs text.table".into()));
        }
        if self.text.provider == ProviderKind::Remote && self.text.endpoint.is_none() {
            return Err(CliError::Config("text.provider = \"remote\" needs text.endpoint".into()));
        }
        let w = &self.windows;
        for (name, start, end) in [("train", w.train_start, w.train_end), ("test", w.test_start, w.test_end)] {
            if let (Some(s), Some(e)) = (start, end) {
                if s > e {
                    return Err(CliError::Config(format!("{name} window starts {s} after it ends {e}")));
                }
            }
        }
        if let (Some(train_end), Some(test_start)) = (w.train_end, w.test_start) {
            if test_start <= train_end {
                return Err(CliError::Config(format!(
                    "test window start {test_start} falls inside the train window ending {train_end}"
                )));
            }
        }
        if let (Some(train_start), Some(test_start)) = (w.train_start, w.test_start) {
            if test_start <= train_start {
                return Err(CliError::Config(format!(
                    "test window start {test_start} does not follow train window start {train_start}"
                )));
            }
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config(format!("a seed is required: set `seed` in the config or {SEED_ENV}")))
    }

    /// The config with every default written out, as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Train and test windows as day ranges of `panel`. Unset bounds default to a
/// 70/30 split of the calendar (day 0 only seeds the first return).
pub fn resolve_windows(windows: &Windows, panel: &DataPanel) -> Result<(Range<Day>, Range<Day>), CliError> {
    let n = panel.n_days();
    if n < 3 {
        return Err(CliError::Precondition(format!("panel has {n} days; at least 3 are needed")));
    }
    let split = ((n as f64 * 0.7) as usize).clamp(2, n - 1);
    let day_of = |d: NaiveDate| panel.day_on_or_after(d);
    let after = |d: NaiveDate| panel.calendar().partition_point(|c| *c <= d);
    let train_start = windows.train_start.map_or(1, day_of).max(1);
    let test_start = windows.test_start.map_or(split, day_of);
    let train_end = windows.train_end.map_or(test_start, after).min(test_start);
    let test_end = windows.test_end.map_or(n, after);
    if train_start >= train_end {
        return Err(CliError::Precondition("the train window holds no trading days of the panel".into()));
    }
    if test_start >= test_end {
        return Err(CliError::Precondition("the test window holds no trading days of the panel".into()));
    }
    Ok((train_start..train_end, test_start..test_end))
}
