//! The running service: engine, USSD sessions and web tokens behind one
//! mutex, rebuilt from the journal at startup.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::TimeDelta;
use ewallet_core::identity::Channel;
use ewallet_core::ledger::NullSink;
use ewallet_core::providers::{Providers, SeedFixture, SimulatedTelco, SmsOutbox};
use ewallet_core::time::{Clock, Timestamp};
use ewallet_core::{Engine, Error, ErrorCode, Ussd};
use rand::rngs::StdRng;
use rand::{RngCore, SeedableRng};

use crate::config::Config;
use crate::journal::{self, FileSink, JournalError};
use crate::providers::LatentBank;

pub type LiveEngine = Engine<SimulatedTelco, LatentBank, SmsOutbox>;

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("journal {path} line {line}: {reason}")]
    Replay { path: PathBuf, line: usize, reason: String },
    #[error("cannot open journal {path} for writing: {source}")]
    Sink {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("seed fixture {path}: {reason}")]
    Seed { path: PathBuf, reason: String },
}

#[derive(Debug, Clone)]
pub struct WebSession {
    pub msisdn: String,
    pub channel: Channel,
    pub must_change_password: bool,
    pub expires_at: Timestamp,
}

pub struct State {
    pub engine: LiveEngine,
    pub ussd: Ussd,
    tokens: HashMap<String, WebSession>,
    rng: StdRng,
    snapshot_seq: std::cell::Cell<Option<u64>>,
}

pub struct Service {
    config: Config,
    clock: Arc<dyn Clock>,
    state: Mutex<State>,
}

/// Rebuilds an engine from journal lines without attaching a sink.
pub fn rebuild(config: &Config, clock: Arc<dyn Clock>, path: &Path, rng_seed: u64) -> Result<LiveEngine, StartupError> {
    let entries = journal::read(path)?;
    let mut engine = Engine::new(
        config.engine_config(),
        Providers::new(SimulatedTelco::default(), LatentBank::default(), SmsOutbox::default()),
        clock,
        Box::new(StdRng::seed_from_u64(rng_seed)),
        Box::new(NullSink),
    );
    for (line, entry) in entries {
        engine.restore(entry).map_err(|e| StartupError::Replay {
            path: path.to_path_buf(),
            line,
            reason: e.message,
        })?;
    }
    Ok(engine)
}

pub fn read_fixture(path: &Path) -> Result<SeedFixture, StartupError> {
    let seed_err = |reason: String| StartupError::Seed {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| seed_err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| seed_err(e.to_string()))
}

impl Service {
    /// Replays the configured journal, applies `config.seed` to an empty
    /// journal and starts appending. `rng_seed` pins randomness for tests.
    pub fn open(config: Config, clock: Arc<dyn Clock>, rng_seed: Option<u64>) -> Result<Self, StartupError> {
        let mut rng = match rng_seed {
            Some(s) => StdRng::seed_from_u64(s),
            None => StdRng::from_os_rng(),
        };
        let mut engine = rebuild(&config, clock.clone(), &config.journal, rng.next_u64())?;
        let sink = FileSink::open(&config.journal, config.fsync).map_err(|source| StartupError::Sink {
            path: config.journal.clone(),
            source,
        })?;
        engine.set_sink(Box::new(sink));
        if engine.ledger().entries().is_empty() {
            if let Some(path) = &config.seed {
                let fixture = read_fixture(path)?;
                engine.seed(&fixture).map_err(|e| StartupError::Seed {
                    path: path.clone(),
                    reason: e.message,
                })?;
            }
        }
        let ussd = Ussd::new(config.ussd_config());
        let service = Self {
            clock,
            state: Mutex::new(State {
                engine,
                ussd,
                tokens: HashMap::new(),
                rng,
                snapshot_seq: Default::default(),
            }),
            config,
        };
        service.write_snapshot();
        Ok(service)
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn lock(&self) -> MutexGuard<'_, State> {
        // a panic while holding the lock leaves state that was journaled
        // first, so continuing is safe
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn snapshot_path(&self) -> PathBuf {
        let mut p = self.config.journal.clone().into_os_string();
        p.push(".registry.json");
        PathBuf::from(p)
    }

    pub fn write_snapshot(&self) {
        let state = self.lock();
        self.snapshot(&state);
    }

    /// Writes the registry next to the journal when it moved since the last
    /// write. The journal stays the authority; the snapshot is for operators.
    pub fn snapshot(&self, state: &State) {
        let seq = state.engine.ledger().last_seq();
        if state.snapshot_seq.get() == Some(seq) {
            return;
        }
        let live: Vec<_> = state.engine.registry().subscribers().collect();
        let closed: Vec<_> = state.engine.registry().closed_subscribers().collect();
        let body = serde_json::json!({
            "last_seq": seq,
            "subscribers": live,
            "closed": closed,
        });
        let path = self.snapshot_path();
        let tmp = path.with_extension("tmp");
        let ok = std::fs::write(&tmp, body.to_string()).and_then(|_| std::fs::rename(&tmp, &path));
        match ok {
            Ok(()) => state.snapshot_seq.set(Some(seq)),
            Err(e) => eprintln!("warning: registry snapshot {} not written: {e}", path.display()),
        }
    }

    pub fn issue_token(
        &self,
        state: &mut State,
        msisdn: &str,
        channel: Channel,
        must_change_password: bool,
    ) -> (String, Timestamp) {
        let mut bytes = [0u8; 24];
        state.rng.fill_bytes(&mut bytes);
        let token = hex::encode(bytes);
        let expires_at = self.now() + TimeDelta::seconds(self.config.token_ttl_secs);
        state.tokens.retain(|_, s| s.expires_at > self.now());
        state.tokens.insert(
            token.clone(),
            WebSession {
                msisdn: msisdn.to_string(),
                channel,
                must_change_password,
                expires_at,
            },
        );
        (token, expires_at)
    }

    /// The session behind a bearer token. Unless `allow_temporary`, a
    /// session still holding a temporary password is refused.
    pub fn authorize(&self, state: &State, token: Option<&str>, allow_temporary: bool) -> Result<WebSession, Error> {
        let s = token
            .and_then(|t| state.tokens.get(t))
            .filter(|s| s.expires_at > self.now())
            .cloned()
            .ok_or_else(|| Error::new(ErrorCode::Unauthorized))?;
        if s.must_change_password && !allow_temporary {
            return Err(Error::new(ErrorCode::PasswordChangeRequired));
        }
        Ok(s)
    }

    pub fn password_changed(&self, state: &mut State, token: &str) {
        if let Some(s) = state.tokens.get_mut(token) {
            s.must_change_password = false;
        }
    }

    /// Drops tokens of a subscriber who left.
    pub fn revoke_tokens(&self, state: &mut State, msisdn: &str) {
        state.tokens.retain(|_, s| s.msisdn != msisdn);
    }

    /// Follows a subscriber to a new number.
    pub fn move_tokens(&self, state: &mut State, from: &str, to: &str) {
        for s in state.tokens.values_mut().filter(|s| s.msisdn == from) {
            s.msisdn = to.to_string();
        }
    }

    pub fn new_request_key(&self, state: &mut State) -> String {
        let mut bytes = [0u8; 16];
        state.rng.fill_bytes(&mut bytes);
        format!("srv-{}", hex::encode(bytes))
    }

    /// Expires codes and idle USSD sessions; returns (codes, sessions).
    pub fn sweep(&self) -> (usize, usize) {
        let now = self.now();
        let mut state = self.lock();
        let codes = state.engine.expire_codes(now);
        let sessions = state.ussd.expire_sessions(now);
        (codes, sessions)
    }
}
