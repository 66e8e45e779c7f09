//! Server configuration, read from a TOML file.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! journal_path = "var/journal.jsonl"
//!
//! [thresholds]
//! confidence = 0.7          # gate confidence threshold
//! sentinel_k = 3.0          # anomaly signal threshold
//! spot_check_rate = 0.05    # default review sampling rate
//! checkpoint_timeout_ms = 900000
//!
//! [[actors]]
//! id = "ops-1"
//! role = "operator"
//! token = "change-me"
//!
//! [[kinds]]
//! name = "group_email"
//! level = "Collaborative"
//! ```

use std::collections::HashSet;
use std::net::SocketAddr;
use std::path::PathBuf;

use agentgov_core::actor::SENTINEL_ID;
use agentgov_core::autonomy::PromotionCriteria;
use agentgov_core::hitl::{GatePolicy, DEFAULT_CHECKPOINT_TIMEOUT_MS, DEFAULT_CONFIDENCE_THRESHOLD};
use agentgov_core::sentinel::SentinelConfig;
use agentgov_core::{Actor, AgentKindPolicy, AutonomyLevel, KernelConfig, Role};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: String,
    /// Write-through journal file. Loaded and verified at startup when present.
    #[serde(default)]
    pub journal_path: Option<PathBuf>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub sentinel: SentinelSection,
    #[serde(default)]
    pub spot_check_seed: u64,
    /// How often pending checkpoints are checked for expiry.
    #[serde(default = "default_tick")]
    pub expiry_tick_ms: u64,
    /// Frames buffered per event subscriber before it is dropped with a gap.
    #[serde(default = "default_event_buffer")]
    pub event_buffer: usize,
    /// Remembered idempotency keys.
    #[serde(default = "default_idempotency_capacity")]
    pub idempotency_capacity: usize,
    #[serde(default)]
    pub actors: Vec<ActorEntry>,
    #[serde(default)]
    pub kinds: Vec<KindEntry>,
}

fn default_tick() -> u64 {
    1000
}

fn default_event_buffer() -> usize {
    1024
}

fn default_idempotency_capacity() -> usize {
    10_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "default_k")]
    pub sentinel_k: f64,
    #[serde(default)]
    pub spot_check_rate: f64,
    #[serde(default = "default_timeout")]
    pub checkpoint_timeout_ms: u64,
}

fn default_confidence() -> f64 {
    DEFAULT_CONFIDENCE_THRESHOLD
}

fn default_k() -> f64 {
    3.0
}

fn default_timeout() -> u64 {
    DEFAULT_CHECKPOINT_TIMEOUT_MS
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            confidence: default_confidence(),
            sentinel_k: default_k(),
            spot_check_rate: 0.0,
            checkpoint_timeout_ms: default_timeout(),
        }
    }
}

/// Overrides for the sentinel window; unset keys keep their defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentinelSection {
    pub baseline_size: Option<usize>,
    pub window: Option<usize>,
    pub min_baseline: Option<usize>,
    pub cadence: Option<u64>,
    pub abs_threshold: Option<f64>,
    pub block_launch_on_anomaly: Option<bool>,
    pub demote_on_anomaly: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorEntry {
    pub id: String,
    pub role: Role,
    pub token: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindEntry {
    pub name: String,
    pub level: AutonomyLevel,
    #[serde(default)]
    pub allowed_action_kinds: Option<Vec<String>>,
    #[serde(default)]
    pub confidence_threshold: Option<f64>,
    #[serde(default)]
    pub spot_check_rate: Option<f64>,
    #[serde(default)]
    pub checkpoint_timeout_ms: Option<u64>,
    #[serde(default)]
    pub promotion: Option<PromotionCriteria>,
}

impl ServerConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServerConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let failures = cfg.invariant_failures();
        if !failures.is_empty() {
            return Err(ConfigError::Invalid(failures));
        }
        Ok(cfg)
    }

    pub fn listen_addr(&self) -> Result<SocketAddr, ConfigError> {
        self.listen
            .parse()
            .map_err(|e| ConfigError::Invalid(vec![format!("listen '{}': {e}", self.listen)]))
    }

    pub fn invariant_failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(ConfigError::Invalid(mut f)) = self.listen_addr() {
            out.append(&mut f);
        }
        let t = &self.thresholds;
        if !(0.0..=1.0).contains(&t.confidence) {
            out.push("thresholds.confidence must be within [0, 1]".to_owned());
        }
        if !(0.0..=1.0).contains(&t.spot_check_rate) {
            out.push("thresholds.spot_check_rate must be within [0, 1]".to_owned());
        }
        if t.checkpoint_timeout_ms == 0 {
            out.push("thresholds.checkpoint_timeout_ms must be positive".to_owned());
        }
        if self.expiry_tick_ms == 0 {
            out.push("expiry_tick_ms must be positive".to_owned());
        }
        if self.event_buffer == 0 {
            out.push("event_buffer must be positive".to_owned());
        }
        out.extend(self.kernel_config().sentinel.invariant_failures());

        let mut ids = HashSet::new();
        let mut tokens = HashSet::new();
        for a in &self.actors {
            if a.id.trim().is_empty() {
                out.push("actor ids must be non-empty".to_owned());
            }
            if a.id == SENTINEL_ID || a.role == Role::Sentinel {
                out.push(format!("actor '{}': the sentinel is built in", a.id));
            }
            if !ids.insert(a.id.as_str()) {
                out.push(format!("duplicate actor '{}'", a.id));
            }
            if a.token.len() < 8 {
                out.push(format!("actor '{}': token must be at least 8 characters", a.id));
            }
            if !tokens.insert(a.token.as_str()) {
                out.push(format!("actor '{}': token is shared with another actor", a.id));
            }
        }
        let mut names = HashSet::new();
        for k in &self.kinds {
            if !names.insert(k.name.as_str()) {
                out.push(format!("duplicate kind '{}'", k.name));
            }
        }
        out
    }

    pub fn kernel_config(&self) -> KernelConfig {
        let d = SentinelConfig::default();
        let s = &self.sentinel;
        let base = KernelConfig::default();
        KernelConfig {
            sentinel: SentinelConfig {
                baseline_size: s.baseline_size.unwrap_or(d.baseline_size),
                window: s.window.unwrap_or(d.window),
                min_baseline: s.min_baseline.unwrap_or(d.min_baseline),
                cadence: s.cadence.unwrap_or(d.cadence),
                threshold: self.thresholds.sentinel_k,
                abs_threshold: s.abs_threshold.unwrap_or(d.abs_threshold),
            },
            spot_check_seed: self.spot_check_seed,
            block_launch_on_anomaly: s.block_launch_on_anomaly.unwrap_or(base.block_launch_on_anomaly),
            demote_on_anomaly: s.demote_on_anomaly.unwrap_or(base.demote_on_anomaly),
        }
    }

    pub fn actors(&self) -> Vec<Actor> {
        self.actors
            .iter()
            .map(|a| Actor::new(a.id.clone(), a.role, Some(a.token.clone())))
            .collect()
    }

    /// Kind policies with the global thresholds filled in.
    pub fn policies(&self) -> Vec<AgentKindPolicy> {
        let t = &self.thresholds;
        self.kinds
            .iter()
            .map(|k| AgentKindPolicy {
                name: k.name.clone(),
                level: k.level,
                criteria: k.promotion.clone().unwrap_or_default(),
                gate: GatePolicy {
                    confidence_threshold: k.confidence_threshold.unwrap_or(t.confidence),
                    allowed_action_kinds: k
                        .allowed_action_kinds
                        .as_ref()
                        .map(|v| v.iter().cloned().collect()),
                },
                checkpoint_timeout_ms: k.checkpoint_timeout_ms.unwrap_or(t.checkpoint_timeout_ms),
                spot_check_rate: k.spot_check_rate.unwrap_or(t.spot_check_rate),
            })
            .collect()
    }
}
