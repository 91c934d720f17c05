//! Experiment configuration: one TOML file, every field defaulted.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::continual::MethodSpec;
use crate::dam::NetParams;
use crate::data::{SequenceSpec, TransformKind, DEFAULT_THRESHOLD, MNIST_FILES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dir: PathBuf,
    pub images: String,
    pub labels: String,
    pub kind: TransformKind,
    pub tasks: usize,
    pub items_per_task: usize,
    pub threshold: u8,
    pub master_seed: u64,
    pub rotation_step: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let seq = SequenceSpec::default();
        Self {
            dir: PathBuf::from("data/mnist"),
            images: MNIST_FILES[0].name.into(),
            labels: MNIST_FILES[1].name.into(),
            kind: seq.kind,
            tasks: seq.tasks,
            items_per_task: seq.items_per_task,
            threshold: DEFAULT_THRESHOLD,
            master_seed: seq.master_seed,
            rotation_step: seq.rotation_step,
        }
    }
}

impl DataConfig {
    pub fn sequence(&self) -> SequenceSpec {
        SequenceSpec {
            kind: self.kind,
            tasks: self.tasks,
            items_per_task: self.items_per_task,
            threshold: self.threshold,
            master_seed: self.master_seed,
            rotation_step: self.rotation_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Also score every task seen so far each `every_epochs` epochs (0 = only after each task).
    pub every_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// File stem; empty means one derived from method, n and seed.
    pub name: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            name: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Network preset the `[network]` table is layered on: "desk", "full" or "grid-optimum".
    pub preset: String,
    pub trial_seed: u64,
    pub data: DataConfig,
    pub network: NetParams,
    pub method: MethodSpec,
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: "desk".into(),
            trial_seed: 0,
            data: DataConfig::default(),
            network: NetParams::desk(),
            method: MethodSpec::default(),
            eval: EvalConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn parse_scalar(raw: &str) -> Value {
    // Anything TOML can read as a value is typed; the rest is a bare string.
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Writes `value` at a dotted `path`, creating intermediate tables.
pub fn set_path(root: &mut Table, path: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key path `{path}`")));
    }
    let (last, parents) = parts.split_last().expect("non-empty");
    let mut table = root;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `{path}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

pub fn get_path<'a>(root: &'a Table, path: &str) -> Option<&'a Value> {
    let mut parts = path.split('.');
    let mut value = root.get(parts.next()?)?;
    for p in parts {
        value = value.as_table()?.get(p)?;
    }
    Some(value)
}

/// Splits `key.path=value`.
pub fn parse_override(raw: &str) -> Result<(String, Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{raw}` is not key=value")))?;
    Ok((key.trim().to_string(), parse_scalar(value.trim())))
}

impl ExperimentConfig {
    /// Builds a config from a TOML table: the preset's network first, then explicit keys.
    pub fn from_table(mut table: Table) -> Result<Self> {
        let preset = match table.get("preset") {
            Some(Value::String(s)) => s.clone(),
            Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
            None => "desk".into(),
        };
        let base = NetParams::preset(&preset).map_err(|e| Error::Config(e.to_string()))?;
        let mut network = Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        match table.remove("network") {
            Some(Value::Table(user)) => network.extend(user),
            Some(_) => return Err(Error::Config("`network` must be a table".into())),
            None => {}
        }
        table.insert("network".into(), Value::Table(network));
        let config: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, Value)]) -> Result<Self> {
        let mut table: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for (key, value) in overrides {
            set_path(&mut table, key, value.clone())?;
        }
        Self::from_table(table)
    }

    pub fn load(path: &Path, overrides: &[(String, Value)]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with_overrides(&text, overrides)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// This config with `overrides` applied.
    pub fn with_overrides(&self, overrides: &[(String, Value)]) -> Result<Self> {
        let mut table = self.to_table()?;
        for (key, value) in overrides {
            if get_path(&table, key).is_none() {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
            set_path(&mut table, key, value.clone())?;
        }
        Self::from_table(table)
    }

    pub fn to_table(&self) -> Result<Table> {
        Table::try_from(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.network.validate().map_err(cfg)?;
        self.method.validate().map_err(cfg)?;
        if self.data.tasks == 0 || self.data.items_per_task < 5 {
            return Err(Error::Config(
                "data.tasks must be >= 1 and data.items_per_task >= 5".into(),
            ));
        }
        Ok(())
    }

    /// Default output stem, e.g. `rehearsal-n2-seed0`.
    pub fn run_name(&self) -> String {
        if !self.output.name.is_empty() {
            return self.output.name.clone();
        }
        format!("{}-n{}-seed{}", self.method.name, self.network.n, self.trial_seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dam::Similarity;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn round_trip_is_fixed_point() {
        let mut c = ExperimentConfig::default();
        c.method = MethodSpec::named("ewc");
        c.method.lambda = 5.1e-2;
        c.network.n = 20.0;
        c.network.lr_init = 0.08;
        c.network.t_init = 0.875;
        let text = c.to_toml_string().unwrap();
        let parsed = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(parsed, c);
        assert_eq!(parsed.to_toml_string().unwrap(), text);
    }

    #[test]
    fn preset_then_explicit_keys() {
        let c = ExperimentConfig::from_toml_str("preset = \"full\"\n[network]\nn = 10\n").unwrap();
        assert_eq!(c.network.memory_count, 512);
        assert_eq!(c.network.n, 10.0);
        let g = ExperimentConfig::from_toml_str("preset = \"grid-optimum\"").unwrap();
        assert_eq!((g.network.t_init, g.network.lr_init), (0.875, 0.1));
    }

    #[test]
    fn overrides_are_typed() {
        let overrides: Vec<_> = ["method.name=gem", "method.proportion=0.25", "network.similarity=raw", "trial_seed=7"]
            .iter()
            .map(|s| parse_override(s).unwrap())
            .collect();
        let c = ExperimentConfig::from_toml_with_overrides("", &overrides).unwrap();
        assert_eq!(c.method.name, "gem");
        assert_eq!(c.method.proportion, 0.25);
        assert_eq!(c.network.similarity, Similarity::Raw);
        assert_eq!(c.trial_seed, 7);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        for text in ["bogus = 1", "[network]\nn = -1", "[method]\nlambda = -2", "preset = \"huge\""] {
            let err = ExperimentConfig::from_toml_str(text).unwrap_err();
            assert_eq!(err.kind(), crate::error::ErrorKind::Config, "{text}");
        }
        let base = ExperimentConfig::default();
        assert!(base.with_overrides(&[parse_override("method.nope=1").unwrap()]).is_err());
    }
}
