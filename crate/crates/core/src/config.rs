//! Flat `dotted.key = value` configuration read from TOML with command-line overrides.
//!
//! Consumers take the keys they understand; [`FlatConfig::finish`] then rejects
//! anything left over, naming the offending key.

use std::collections::BTreeMap;
use std::path::Path;

use toml::Value;

use crate::error::{Error, Result};
use crate::losses::GlmLoss;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlatConfig {
    values: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

impl FlatConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut values = BTreeMap::new();
        flatten("", &table, &mut values);
        Ok(Self { values })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `key=value`; the value is read as a TOML literal, or as a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("override `{assignment}` has an empty key")));
        }
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    pub fn insert(&mut self, key: &str, value: Value) {
        self.values.insert(key.to_string(), value);
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Errors on the first key nobody consumed.
    pub fn finish(self) -> Result<()> {
        match self.values.into_keys().next() {
            Some(k) => Err(Error::UnknownKey(k)),
            None => Ok(()),
        }
    }

    fn type_error(key: &str, want: &str, got: &Value) -> Error {
        Error::Config(format!("`{key}` must be {want}, got {got}"))
    }

    pub fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.values.remove(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(f)),
            Some(Value::Integer(i)) => Ok(Some(i as f64)),
            Some(other) => Err(Self::type_error(key, "a number", &other)),
        }
    }

    pub fn take_usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.values.remove(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if i >= 0 => Ok(Some(i as usize)),
            Some(other) => Err(Self::type_error(key, "a nonnegative integer", &other)),
        }
    }

    pub fn take_u64(&mut self, key: &str) -> Result<Option<u64>> {
        Ok(self.take_usize(key)?.map(|v| v as u64))
    }

    pub fn take_str(&mut self, key: &str) -> Result<Option<String>> {
        match self.values.remove(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(Self::type_error(key, "a string", &other)),
        }
    }

    pub fn take_f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.values.remove(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Float(f) => Ok(*f),
                    Value::Integer(i) => Ok(*i as f64),
                    other => Err(Self::type_error(key, "a list of numbers", other)),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(Value::Float(f)) => Ok(Some(vec![f])),
            Some(Value::Integer(i)) => Ok(Some(vec![i as f64])),
            Some(other) => Err(Self::type_error(key, "a list of numbers", &other)),
        }
    }

    pub fn take_usize_list(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.values.remove(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    other => Err(Self::type_error(key, "a list of nonnegative integers", other)),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(Value::Integer(i)) if i >= 0 => Ok(Some(vec![i as usize])),
            Some(other) => Err(Self::type_error(key, "a list of nonnegative integers", &other)),
        }
    }

    /// Reads `loss.family` and its parameters; defaults to logistic.
    pub fn take_loss(&mut self) -> Result<GlmLoss> {
        let family = self.take_str("loss.family")?.unwrap_or_else(|| "logistic".into());
        let half_width = self.take_f64("loss.half_width")?;
        let max_pred = self.take_f64("loss.max_abs_prediction")?;
        let max_label = self.take_f64("loss.max_abs_label")?;
        match family.as_str() {
            "logistic" => Ok(GlmLoss::Logistic),
            "smoothed-hinge" => GlmLoss::smoothed_hinge(half_width.unwrap_or(0.5)),
            "quadratic" => GlmLoss::quadratic(max_pred.unwrap_or(1.0), max_label.unwrap_or(1.0)),
            other => Err(Error::Config(format!(
                "unknown loss `{other}` (expected logistic, smoothed-hinge or quadratic)"
            ))),
        }
    }
}

/// `key = value` lines describing a loss, in the keys [`FlatConfig::take_loss`] reads.
pub fn loss_echo(loss: &GlmLoss) -> Vec<(String, String)> {
    use crate::fmtnum::g9;
    let mut out = vec![("loss.family".to_string(), loss.name().to_string())];
    match *loss {
        GlmLoss::Logistic => {}
        GlmLoss::SmoothedHinge { half_width } => out.push(("loss.half_width".into(), g9(half_width))),
        GlmLoss::Quadratic {
            max_abs_prediction,
            max_abs_label,
        } => {
            out.push(("loss.max_abs_prediction".into(), g9(max_abs_prediction)));
            out.push(("loss.max_abs_label".into(), g9(max_abs_label)));
        }
    }
    out
}
