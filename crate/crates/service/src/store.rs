//! In-memory sessions with optional JSON-lines persistence.
//!
//! Each session owns `<data_dir>/<id>.jsonl`, the run journal appended after
//! every action. On start-up the learner entries are replayed to rebuild the
//! run exactly.

use crate::ServiceError;
use pta_core::play::{journal_from_jsonl, JournalEntry, LearnerAction, Playthrough};
use pta_core::scenario::Scenario;
use pta_core::ClientView;
use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};
use tokio::sync::Mutex;

pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(3600);

#[derive(Debug, Clone)]
pub struct StoreConfig {
    pub data_dir: Option<PathBuf>,
    /// Wall-clock inactivity after which a session is dropped.
    pub session_ttl: Duration,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            data_dir: None,
            session_ttl: DEFAULT_SESSION_TTL,
        }
    }
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub play: Playthrough,
    last_active: Instant,
    persisted: usize,
}

impl Session {
    fn touch(&mut self) {
        self.last_active = Instant::now();
    }

    /// Wall time since the last action, in milliseconds.
    fn idle_ms(&self) -> u64 {
        u64::try_from(self.last_active.elapsed().as_millis()).unwrap_or(u64::MAX)
    }
}

pub struct SessionStore {
    scenarios: BTreeMap<String, Arc<Scenario>>,
    config: StoreConfig,
    sessions: std::sync::Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

fn new_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

impl SessionStore {
    pub fn new(scenarios: BTreeMap<String, Arc<Scenario>>, config: StoreConfig) -> Self {
        SessionStore {
            scenarios,
            config,
            sessions: std::sync::Mutex::new(HashMap::new()),
        }
    }

    pub fn scenario_names(&self) -> Vec<String> {
        self.scenarios.keys().cloned().collect()
    }

    fn path_of(&self, id: &str) -> Option<PathBuf> {
        self.config.data_dir.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    /// Rebuilds every persisted session under the data directory. Returns the
    /// number restored; unreadable files are skipped with a warning.
    pub fn recover(&self) -> Result<usize, ServiceError> {
        let Some(dir) = &self.config.data_dir else {
            return Ok(0);
        };
        std::fs::create_dir_all(dir)?;
        let mut restored = 0;
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "jsonl") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                continue;
            };
            match self.restore(&path) {
                Ok(play) => {
                    let persisted = play.journal().len();
                    let session = Session {
                        id: id.clone(),
                        play,
                        last_active: Instant::now(),
                        persisted,
                    };
                    self.lock().insert(id, Arc::new(Mutex::new(session)));
                    restored += 1;
                }
                Err(e) => tracing::warn!("skipping {}: {e}", path.display()),
            }
        }
        Ok(restored)
    }

    fn restore(&self, path: &Path) -> Result<Playthrough, ServiceError> {
        let doc = std::fs::read_to_string(path)?;
        let journal = journal_from_jsonl(&doc)?;
        let Some(JournalEntry::Session { scenario, seed, .. }) = journal.first() else {
            return Err(ServiceError::Internal(
                "journal does not start with a session entry".into(),
            ));
        };
        let sc = self
            .scenarios
            .get(scenario)
            .ok_or_else(|| ServiceError::UnknownScenario(scenario.clone()))?;
        let play = Playthrough::replay(sc.clone(), *seed, &journal)?;
        if play.journal() != journal.as_slice() {
            return Err(ServiceError::Internal("replay diverged from the stored journal".into()));
        }
        Ok(play)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Arc<Mutex<Session>>>> {
        self.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn create(&self, scenario: &str, seed: Option<u64>) -> Result<(String, ClientView), ServiceError> {
        let sc = self
            .scenarios
            .get(scenario)
            .ok_or_else(|| ServiceError::UnknownScenario(scenario.to_string()))?;
        let id = new_id();
        let play = Playthrough::start(sc.clone(), seed.unwrap_or_else(rand::random))?;
        let view = play.view();
        let mut session = Session {
            id: id.clone(),
            play,
            last_active: Instant::now(),
            persisted: 0,
        };
        self.persist(&mut session)?;
        self.lock().insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok((id, view))
    }

    /// Looks a session up, dropping it first if it has expired.
    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        let mut sessions = self.lock();
        let session = sessions
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))?;
        let expired = session
            .try_lock()
            .map(|s| s.last_active.elapsed() > self.config.session_ttl)
            .unwrap_or(false);
        if expired {
            sessions.remove(id);
            return Err(ServiceError::UnknownSession(id.to_string()));
        }
        Ok(session)
    }

    /// Drops every expired session. Returns how many were removed.
    pub fn sweep(&self) -> usize {
        let ttl = self.config.session_ttl;
        let mut sessions = self.lock();
        let before = sessions.len();
        sessions.retain(|_, s| s.try_lock().map(|s| s.last_active.elapsed() <= ttl).unwrap_or(true));
        before - sessions.len()
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies a learner action. The logical clock moves by `elapsed_ms`, or
    /// by the wall time since the previous action when it is absent.
    pub async fn act(
        &self,
        id: &str,
        action: LearnerAction,
        elapsed_ms: Option<u64>,
    ) -> Result<ClientView, ServiceError> {
        let session = self.get(id)?;
        let mut s = session.lock().await;
        let now = s.play.now().saturating_add(elapsed_ms.unwrap_or_else(|| s.idle_ms()));
        let view = s.play.apply(action, now)?;
        s.touch();
        self.persist(&mut s)?;
        Ok(view)
    }

    pub async fn view(&self, id: &str) -> Result<ClientView, ServiceError> {
        let session = self.get(id)?;
        let s = session.lock().await;
        Ok(s.play.view())
    }

    pub async fn export(&self, id: &str, csv: bool) -> Result<String, ServiceError> {
        let session = self.get(id)?;
        let s = session.lock().await;
        Ok(if csv { s.play.to_csv() } else { s.play.to_jsonl() })
    }

    fn persist(&self, s: &mut Session) -> Result<(), ServiceError> {
        let Some(path) = self.path_of(&s.id) else {
            return Ok(());
        };
        let doc = s.play.to_jsonl();
        let fresh: Vec<&str> = doc.lines().skip(s.persisted).collect();
        if fresh.is_empty() {
            return Ok(());
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        for line in &fresh {
            writeln!(file, "{line}")?;
        }
        file.flush()?;
        s.persisted += fresh.len();
        Ok(())
    }
}
