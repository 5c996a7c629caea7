//! Configuration resolution: CLI flags > config file > environment >
//! built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use secureloop_core::promptgate::{BackendConfig, API_BASE_ENV, API_KEY_ENV};
use secureloop_core::scanhub::{AliasMatching, ScannerConfig, Tool};

use crate::UsageError;

/// Keys accepted in a `secureloop.toml` document.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub api_base: Option<String>,
    pub api_key_env: Option<String>,
    pub scanners: Option<String>,
    pub k: Option<u32>,
    pub parallelism: Option<usize>,
    pub alias_matching: Option<String>,
    pub max_regen: Option<u32>,
    pub requests_per_minute: Option<u32>,
    pub codeql_path: Option<PathBuf>,
    pub bandit_path: Option<PathBuf>,
    pub query_suite: Option<String>,
}

impl FileConfig {
    /// Load the explicit `--config` file, or `./secureloop.toml` when
    /// present, or defaults.
    pub fn load(explicit: Option<&Path>) -> Result<FileConfig> {
        let path = match explicit {
            Some(path) => {
                if !path.exists() {
                    return Err(
                        UsageError(format!("config file not found: {}", path.display())).into(),
                    );
                }
                Some(path.to_path_buf())
            }
            None => {
                let default = PathBuf::from("secureloop.toml");
                default.exists().then_some(default)
            }
        };
        match path {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let config: FileConfig =
                    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                Ok(config)
            }
            None => Ok(FileConfig::default()),
        }
    }
}

/// Resolve an effective value: flag beats file beats environment beats default.
fn pick<T>(flag: Option<T>, file: Option<T>, env: Option<T>, default: T) -> T {
    flag.or(file).or(env).unwrap_or(default)
}

/// Turn a backend spec (`replay` or an HTTP model name) into a config.
pub fn backend_config(
    spec: &str,
    fixtures: Option<&Path>,
    file: &FileConfig,
) -> Result<BackendConfig> {
    if spec.eq_ignore_ascii_case("replay") {
        let fixture = fixtures.ok_or_else(|| {
            UsageError("the replay backend requires --fixtures <FILE>".to_string())
        })?;
        return Ok(BackendConfig::replay(fixture.to_path_buf()));
    }
    let base = pick(
        None,
        file.api_base.clone(),
        std::env::var(API_BASE_ENV).ok().filter(|s| !s.is_empty()),
        String::new(),
    );
    if base.is_empty() {
        return Err(UsageError(format!(
            "backend {spec:?} needs an API base URL (set {API_BASE_ENV} or api_base in the config file)"
        ))
        .into());
    }
    let mut config = BackendConfig::http(base, spec);
    if let Some(key_env) = &file.api_key_env {
        config.api_key_env = key_env.clone();
    } else {
        config.api_key_env = API_KEY_ENV.to_string();
    }
    config.requests_per_minute = file.requests_per_minute;
    Ok(config)
}

/// Parse a comma-separated scanner list into a config.
pub fn scanner_config(
    flag: Option<&str>,
    alias_flag: Option<&str>,
    file: &FileConfig,
) -> Result<ScannerConfig> {
    let list = pick(
        flag.map(str::to_string),
        file.scanners.clone(),
        None,
        "builtin".to_string(),
    );
    let mut tools = Vec::new();
    for part in list.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let tool: Tool = part
            .parse()
            .map_err(|e| UsageError(format!("--scanners: {e}")))?;
        if !tools.contains(&tool) {
            tools.push(tool);
        }
    }
    if tools.is_empty() {
        return Err(UsageError("--scanners lists no tools".to_string()).into());
    }
    let alias = pick(
        alias_flag.map(str::to_string),
        file.alias_matching.clone(),
        None,
        "with_aliases".to_string(),
    );
    let alias_matching: AliasMatching = alias
        .parse()
        .map_err(|e| UsageError(format!("--alias-matching: {e}")))?;
    let mut config = ScannerConfig::builtin_only();
    config.enabled_tools = tools;
    config.alias_matching = alias_matching;
    config.codeql_cli_path = file.codeql_path.clone();
    config.bandit_cli_path = file.bandit_path.clone();
    if let Some(suite) = &file.query_suite {
        config.query_suite = suite.clone();
    }
    Ok(config)
}

pub fn effective_k(flag: Option<u32>, file: &FileConfig) -> u32 {
    pick(flag, file.k, None, 5)
}

pub fn effective_parallelism(flag: Option<usize>, file: &FileConfig) -> usize {
    pick(flag, file.parallelism, None, 1).max(1)
}

pub fn effective_max_regen(flag: Option<u32>, file: &FileConfig) -> u32 {
    pick(flag, file.max_regen, None, 3).max(1)
}
