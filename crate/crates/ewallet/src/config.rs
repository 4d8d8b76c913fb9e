//! Service configuration: a JSON file, then `EWALLET_*` environment
//! overrides, then command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::TimeDelta;
use ewallet_core::engine::{EngineConfig, FeeSchedule};
use ewallet_core::{Currency, UssdConfig};
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "EWALLET_";
pub const AGENCY_COMPARISON: &str = "agency-comparison";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fsync {
    /// fsync after every journal line.
    #[default]
    Always,
    /// Flush to the OS only.
    Never,
}

/// Either a named preset or an explicit schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeeSetting {
    Preset(String),
    Schedule(FeeSchedule),
}

impl Default for FeeSetting {
    fn default() -> Self {
        FeeSetting::Preset("default".into())
    }
}

impl FeeSetting {
    pub fn schedule(&self) -> Result<FeeSchedule, String> {
        match self {
            FeeSetting::Preset(p) if p == "default" || p == "none" => Ok(FeeSchedule::default()),
            FeeSetting::Preset(p) if p == AGENCY_COMPARISON => Ok(FeeSchedule::agency_comparison()),
            FeeSetting::Preset(p) => Err(format!(
                "unknown fee preset {p:?} (expected \"default\" or \"{AGENCY_COMPARISON}\")"
            )),
            FeeSetting::Schedule(s) if s.is_valid() => Ok(s.clone()),
            FeeSetting::Schedule(_) => Err("fees.flat_minor must not be negative".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub currency: String,
    pub fees: FeeSetting,
    pub code_ttl_hours: i64,
    pub session_ttl_secs: i64,
    pub max_invalid_selections: u32,
    pub confirm_threshold_minor: i64,
    pub lock_threshold: u32,
    pub service_code: String,
    pub journal: PathBuf,
    pub listen: String,
    pub fsync: Fsync,
    pub token_ttl_secs: i64,
    pub seed: Option<PathBuf>,
    /// When set, `/admin/*` requires an `X-Admin-Token` header with this value.
    pub admin_token: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            currency: "ZAR".into(),
            fees: FeeSetting::default(),
            code_ttl_hours: 72,
            session_ttl_secs: 120,
            max_invalid_selections: 3,
            confirm_threshold_minor: 0,
            lock_threshold: 3,
            service_code: "#555*".into(),
            journal: PathBuf::from("ewallet.journal"),
            listen: "127.0.0.1:8080".into(),
            fsync: Fsync::Always,
            token_ttl_secs: 15 * 60,
            seed: None,
            admin_token: None,
        }
    }
}

impl Config {
    /// Reads `path` (if any), applies environment overrides and validates.
    pub fn load(path: Option<&Path>, env: &BTreeMap<String, String>) -> Result<Self, String> {
        let mut config = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
                serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", p.display()))?
            }
            None => Config::default(),
        };
        config.apply_env(env)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_process_env(path: Option<&Path>) -> Result<Self, String> {
        let env = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        Self::load(path, &env)
    }

    fn apply_env(&mut self, env: &BTreeMap<String, String>) -> Result<(), String> {
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, String> {
            v.trim()
                .parse()
                .map_err(|_| format!("{k}: expected a number, got {v:?}"))
        }
        for (k, v) in env {
            let Some(name) = k.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            match name {
                "CURRENCY" => self.currency = v.clone(),
                "FEES" | "FEE_PRESET" => self.fees = FeeSetting::Preset(v.clone()),
                "FEE_PERCENT_BP" => {
                    let mut s = self.fees.schedule()?;
                    s.percent_bp = num(k, v)?;
                    self.fees = FeeSetting::Schedule(s);
                }
                "FEE_FLAT_MINOR" => {
                    let mut s = self.fees.schedule()?;
                    s.flat_minor = num(k, v)?;
                    self.fees = FeeSetting::Schedule(s);
                }
                "CODE_TTL_HOURS" => self.code_ttl_hours = num(k, v)?,
                "SESSION_TTL_SECS" => self.session_ttl_secs = num(k, v)?,
                "MAX_INVALID_SELECTIONS" => self.max_invalid_selections = num(k, v)?,
                "CONFIRM_THRESHOLD_MINOR" => self.confirm_threshold_minor = num(k, v)?,
                "LOCK_THRESHOLD" => self.lock_threshold = num(k, v)?,
                "SERVICE_CODE" => self.service_code = v.clone(),
                "JOURNAL" => self.journal = PathBuf::from(v),
                "LISTEN" => self.listen = v.clone(),
                "FSYNC" => {
                    self.fsync = serde_json::from_value(serde_json::Value::String(v.to_lowercase()))
                        .map_err(|_| format!("{k}: expected \"always\" or \"never\", got {v:?}"))?
                }
                "TOKEN_TTL_SECS" => self.token_ttl_secs = num(k, v)?,
                "SEED" => self.seed = Some(PathBuf::from(v)),
                "ADMIN_TOKEN" => self.admin_token = Some(v.clone()),
                // EWALLET_CONFIG names the file itself; anything else is a typo
                "CONFIG" => {}
                _ => return Err(format!("unknown environment override {k}")),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut problems = Vec::new();
        if self.currency.parse::<Currency>().is_err() {
            problems.push(format!("currency {:?} is not a 3-letter code", self.currency));
        }
        if let Err(e) = self.fees.schedule() {
            problems.push(e);
        }
        if self.code_ttl_hours <= 0 {
            problems.push("code_ttl_hours must be positive".into());
        }
        if self.session_ttl_secs <= 0 {
            problems.push("session_ttl_secs must be positive".into());
        }
        if self.max_invalid_selections == 0 {
            problems.push("max_invalid_selections must be at least 1".into());
        }
        if self.confirm_threshold_minor < 0 {
            problems.push("confirm_threshold_minor must not be negative".into());
        }
        if self.lock_threshold == 0 {
            problems.push("lock_threshold must be at least 1".into());
        }
        if self.service_code.trim().is_empty() {
            problems.push("service_code must not be empty".into());
        }
        if self.listen.parse::<std::net::SocketAddr>().is_err() {
            problems.push(format!("listen {:?} is not an address:port", self.listen));
        }
        if self.token_ttl_secs <= 0 {
            problems.push("token_ttl_secs must be positive".into());
        }
        if self.journal.as_os_str().is_empty() {
            problems.push("journal path must not be empty".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(format!("invalid configuration: {}", problems.join("; ")))
        }
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            currency: self.currency.parse().expect("validated"),
            fees: self.fees.schedule().expect("validated"),
            code_ttl: TimeDelta::hours(self.code_ttl_hours),
            lock_threshold: self.lock_threshold,
            service_code: self.service_code.clone(),
        }
    }

    pub fn ussd_config(&self) -> UssdConfig {
        UssdConfig {
            service_code: self.service_code.clone(),
            session_ttl: TimeDelta::seconds(self.session_ttl_secs),
            max_invalid: self.max_invalid_selections,
            confirm_threshold_minor: self.confirm_threshold_minor,
        }
    }
}
