//! Settings from defaults, TOML files and the environment, in increasing
//! precedence.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub const ENV_API_BASE: &str = "SCENEGEN_API_BASE";
pub const ENV_API_KEY: &str = "SCENEGEN_API_KEY";
pub const ENV_MODEL: &str = "SCENEGEN_MODEL";
pub const ENV_BACKEND: &str = "SCENEGEN_BACKEND";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Scripted,
    Network,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "scripted" => Ok(BackendKind::Scripted),
            "network" => Ok(BackendKind::Network),
            other => Err(format!("unknown backend {other:?} (scripted or network)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub backend: BackendKind,
    pub api_base: String,
    pub api_key: String,
    pub model: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub seed: u64,
    pub temperature: f64,
    pub max_iters: u32,
    /// Injected error rate of the weak scripted backend.
    pub error_rate: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            backend: BackendKind::Scripted,
            api_base: "http://127.0.0.1:8000/v1".into(),
            api_key: String::new(),
            model: "default".into(),
            timeout_secs: 120,
            max_in_flight: 8,
            max_retries: 3,
            seed: 0,
            temperature: 1.0,
            max_iters: 3,
            error_rate: crate::llm::DEFAULT_ERROR_RATE,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Partial {
    backend: Option<BackendKind>,
    api_base: Option<String>,
    api_key: Option<String>,
    model: Option<String>,
    timeout_secs: Option<u64>,
    max_in_flight: Option<usize>,
    max_retries: Option<u32>,
    seed: Option<u64>,
    temperature: Option<f64>,
    max_iters: Option<u32>,
    error_rate: Option<f64>,
}

macro_rules! overlay {
    ($cfg:expr, $p:expr, $($f:ident),*) => {
        $(if let Some(v) = $p.$f { $cfg.$f = v; })*
    };
}

impl Config {
    fn apply(&mut self, p: Partial) {
        overlay!(self, p, backend, api_base, api_key, model, timeout_secs, max_in_flight, max_retries, seed, temperature, max_iters, error_rate);
    }

    fn check(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, message: &str| {
            Err(ConfigError::Value {
                key: key.into(),
                message: message.into(),
            })
        };
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature", "must be a finite number >= 0");
        }
        if !(0.0..=1.0).contains(&self.error_rate) {
            return bad("error_rate", "must be within [0, 1]");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight", "must be at least 1");
        }
        Ok(())
    }

    /// Parse one TOML document over the current values.
    pub fn merge_toml(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        let p: Partial = toml::from_str(text).map_err(|e| ConfigError::Malformed {
            path: origin.to_string(),
            message: e.message().to_string(),
        })?;
        self.apply(p);
        Ok(())
    }

    /// Defaults, then each existing file in order, then the environment.
    pub fn load<P: AsRef<Path>>(paths: &[P], env: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        for path in paths {
            let path = path.as_ref();
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.display().to_string(),
                source,
            })?;
            cfg.merge_toml(&text, &path.display().to_string())?;
        }
        if let Some(v) = env.get(ENV_API_BASE) {
            cfg.api_base = v.clone();
        }
        if let Some(v) = env.get(ENV_API_KEY) {
            cfg.api_key = v.clone();
        }
        if let Some(v) = env.get(ENV_MODEL) {
            cfg.model = v.clone();
        }
        if let Some(v) = env.get(ENV_BACKEND) {
            cfg.backend = v.parse().map_err(|message| ConfigError::Value {
                key: ENV_BACKEND.into(),
                message,
            })?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    /// The `SCENEGEN_*` variables of the process environment.
    pub fn process_env() -> BTreeMap<String, String> {
        std::env::vars().filter(|(k, _)| k.starts_with("SCENEGEN_")).collect()
    }
}
