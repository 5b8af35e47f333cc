//! Flat `key = value` experiment files and flag/file/default resolution.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

/// Bad flags, bad config files or values the library rejects as parameters.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub type ConfigResult<T> = Result<T, ConfigError>;

pub const SEED_ENV: &str = "SENSILAB_SEED";

const KNOWN_KEYS: &[&str] = &[
    "map",
    "metric",
    "x",
    "seed",
    "min-precision",
    "horizon",
    "delta",
    "delta-grid",
    "centers",
    "ys-per-center",
    "adversarial",
    "pairs",
    "samples",
    "trials",
    "radii",
    "threshold",
    "isometry-tolerance",
    "isometry-pairs",
    "uniformity-radius",
    "uniformity-centers",
    "uniformity-samples",
    "report",
    "csv",
];

/// Parses a config file. Keys may use `-` or `_`; `#` starts a comment.
pub fn parse_config(text: &str) -> ConfigResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("config line {}: expected key = value", lineno + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError(format!("config line {}: unknown key `{key}`", lineno + 1)));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(ConfigError(format!("config line {}: duplicate key `{key}`", lineno + 1)));
        }
    }
    Ok(out)
}

pub fn load_config(path: Option<&Path>) -> ConfigResult<BTreeMap<String, String>> {
    match path {
        None => Ok(BTreeMap::new()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError(format!("cannot read config {}: {e}", p.display())))?;
            parse_config(&text)
        }
    }
}

/// Comma-separated list of floats.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct FloatList(pub Vec<f64>);

impl FromStr for FloatList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<_, _>>()
            .map(FloatList)
    }
}

/// Resolves each setting as flag, then config file, then default, and records
/// the outcome for the config echo.
pub struct Resolver {
    file: BTreeMap<String, String>,
    echo: BTreeMap<String, Value>,
}

impl Resolver {
    pub fn new(file: BTreeMap<String, String>) -> Self {
        Resolver {
            file,
            echo: BTreeMap::new(),
        }
    }

    fn file_value<T>(&self, key: &str) -> ConfigResult<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.file
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| ConfigError(format!("config key `{key}`: {e}"))))
            .transpose()
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).expect("config values serialize");
        self.echo.insert(key.to_string(), v);
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> ConfigResult<T>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.file_value(key)?.unwrap_or(default),
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> ConfigResult<T>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self
                .file_value(key)?
                .ok_or_else(|| ConfigError(format!("missing required setting `{key}`")))?,
        };
        self.record(key, &v);
        Ok(v)
    }

    /// Seed: flag, config file, `SENSILAB_SEED`, then 0.
    pub fn seed(&mut self, flag: Option<u64>) -> ConfigResult<u64> {
        let env = match std::env::var(SEED_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<u64>()
                    .map_err(|e| ConfigError(format!("{SEED_ENV}: {e}")))?,
            ),
            Err(_) => None,
        };
        let v = match flag {
            Some(v) => v,
            None => self.file_value("seed")?.or(env).unwrap_or(0),
        };
        self.record("seed", &v);
        Ok(v)
    }

    pub fn echo(&self) -> &BTreeMap<String, Value> {
        &self.echo
    }
}
