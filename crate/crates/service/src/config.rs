//! Service configuration: a flat TOML file overlaid with `MESHFORGE_*`
//! environment variables.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use meshforge_core::field::{MAX_RESOLUTION, MIN_RESOLUTION};

pub const ENV_PREFIX: &str = "MESHFORGE_";

/// Wall-clock target for a full run; exceeding it only flags the manifest.
pub const DEFAULT_BUDGET_MS: f64 = 20_000.0;

/// Reference stage timings on a high-end GPU workstation, kept for comparison
/// in reports. Mock runs are orders of magnitude faster.
pub const REFERENCE_IMAGE_MS: f64 = 3_830.0;
pub const REFERENCE_MESH_MS: f64 = 12_390.0;

pub const MAX_CANDIDATES: u32 = 16;
pub const MAX_RETRY_LIMIT: u32 = 5;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// `mock` or an HTTP base URL.
    pub image_backend: String,
    pub recon_backend: String,
    /// Optional external matting service; built-in flood fill otherwise.
    pub matting_backend: Option<String>,
    /// Fall back to built-in matting when the external service fails.
    pub matting_fallback: bool,
    pub backend_timeout_ms: u64,
    pub retry_limit: u32,
    pub max_inflight: usize,
    pub resolution: usize,
    pub candidates: u32,
    pub raster_size: u32,
    pub thickness: f64,
    pub budget_ms: f64,
    pub persistence_dir: Option<PathBuf>,
    pub session_ttl_secs: u64,
    /// When set, API and backend requests carry/require this token.
    pub shared_token: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            image_backend: "mock".into(),
            recon_backend: "mock".into(),
            matting_backend: None,
            matting_fallback: true,
            backend_timeout_ms: 60_000,
            retry_limit: 1,
            max_inflight: 4,
            resolution: meshforge_core::field::DEFAULT_RESOLUTION,
            candidates: 4,
            raster_size: 512,
            thickness: meshforge_core::mock::DEFAULT_THICKNESS,
            budget_ms: DEFAULT_BUDGET_MS,
            persistence_dir: None,
            session_ttl_secs: 3600,
            shared_token: None,
        }
    }
}

const KEYS: [&str; 16] = [
    "bind",
    "image_backend",
    "recon_backend",
    "matting_backend",
    "matting_fallback",
    "backend_timeout_ms",
    "retry_limit",
    "max_inflight",
    "resolution",
    "candidates",
    "raster_size",
    "thickness",
    "budget_ms",
    "persistence_dir",
    "session_ttl_secs",
    "shared_token",
];

/// Interprets an environment value as a TOML scalar, falling back to a string.
fn env_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .filter(|v| !v.is_table() && !v.is_array())
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

impl ServiceConfig {
    /// Parses TOML text, then applies overrides from `env` (pairs of
    /// variable name and value). An empty value clears an optional key.
    pub fn from_sources(
        text: &str,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for (name, value) in env {
            let Some(key) = name.strip_prefix(ENV_PREFIX).map(str::to_ascii_lowercase) else {
                continue;
            };
            if !KEYS.contains(&key.as_str()) {
                continue;
            }
            if value.is_empty() {
                table.remove(&key);
            } else {
                table.insert(key, env_value(&value));
            }
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (if any) and the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.to_owned(),
                source,
            })?,
            None => String::new(),
        };
        Self::from_sources(&text, std::env::vars())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.backend_timeout_ms == 0 {
            return bad("backend_timeout_ms must be > 0".into());
        }
        if self.retry_limit > MAX_RETRY_LIMIT {
            return bad(format!("retry_limit {} exceeds {MAX_RETRY_LIMIT}", self.retry_limit));
        }
        if self.max_inflight == 0 {
            return bad("max_inflight must be >= 1".into());
        }
        if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&self.resolution) {
            return bad(format!("resolution {} outside [{MIN_RESOLUTION}, {MAX_RESOLUTION}]", self.resolution));
        }
        if !(1..=MAX_CANDIDATES).contains(&self.candidates) {
            return bad(format!("candidates {} outside [1, {MAX_CANDIDATES}]", self.candidates));
        }
        if self.raster_size < 64 {
            return bad(format!("raster_size {} below 64", self.raster_size));
        }
        if !(self.thickness > 0.0 && self.thickness <= 1.0) {
            return bad(format!("thickness {} outside (0, 1]", self.thickness));
        }
        if self.budget_ms.is_nan() || self.budget_ms <= 0.0 {
            return bad("budget_ms must be > 0".into());
        }
        Ok(())
    }

    pub fn backend_timeout(&self) -> Duration {
        Duration::from_millis(self.backend_timeout_ms)
    }

    pub fn session_ttl(&self) -> Duration {
        Duration::from_secs(self.session_ttl_secs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_sources_give_defaults() {
        assert_eq!(ServiceConfig::from_sources("", env(&[])).unwrap(), ServiceConfig::default());
    }

    #[test]
    fn file_then_environment() {
        let text = "bind = \"0.0.0.0:9000\"\nresolution = 64\nshared_token = \"abc\"\n";
        let cfg = ServiceConfig::from_sources(
            text,
            env(&[
                ("MESHFORGE_RESOLUTION", "32"),
                ("MESHFORGE_RECON_BACKEND", "http://gpu:7000"),
                ("MESHFORGE_SHARED_TOKEN", ""),
                ("MESHFORGE_THICKNESS", "0.5"),
                ("MESHFORGE_LOG", "debug"),
                ("OTHER", "x"),
            ]),
        )
        .unwrap();
        assert_eq!(cfg.bind, "0.0.0.0:9000");
        assert_eq!(cfg.resolution, 32);
        assert_eq!(cfg.recon_backend, "http://gpu:7000");
        assert_eq!(cfg.shared_token, None);
        assert_eq!(cfg.thickness, 0.5);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(ServiceConfig::from_sources("retry_limit = 6", env(&[])), Err(ConfigError::Invalid(_))));
        assert!(matches!(ServiceConfig::from_sources("nope = 1", env(&[])), Err(ConfigError::Parse(_))));
        assert!(matches!(
            ServiceConfig::from_sources("", env(&[("MESHFORGE_CANDIDATES", "0")])),
            Err(ConfigError::Invalid(_))
        ));
        assert!(ServiceConfig::from_sources("resolution = \"big\"", env(&[])).is_err());
    }
}
