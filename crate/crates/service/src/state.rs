use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use wireoff_core::data as io;
use wireoff_core::decision::Recommendation;
use wireoff_core::pipeline::{FittedModels, PipelineConfig, PipelineInputs, WiredOffSource};
use wireoff_core::wiredon::WiredOnForecast;

use crate::error::{ApiError, ApiResult};

/// Raw session inputs, kept verbatim so a snapshot can rebuild them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSource {
    pub volumes_csv: String,
    pub availability_csv: String,
    pub events_csv: String,
    pub wiredoff_history_csv: Option<String>,
    pub problematic_vendor: Option<String>,
    pub now_epoch_minute: Option<i64>,
}

impl SessionSource {
    /// Parses everything; errors name the offending payload.
    pub fn parse(&self) -> ApiResult<PipelineInputs> {
        fn tag(field: &'static str) -> impl Fn(wireoff_core::Error) -> ApiError {
            move |e| ApiError::field(field, e.to_string())
        }
        let volumes = io::parse_volumes(&self.volumes_csv).map_err(tag("volumes"))?;
        let availability = io::parse_availability(&self.availability_csv, io::MAX_AVAILABILITY_GAP).map_err(tag("availability"))?;
        let availability = PipelineInputs::availability_from(availability, self.problematic_vendor.as_deref())
            .map_err(tag("problematic_vendor"))?;
        let events = io::parse_events(&self.events_csv).map_err(tag("events"))?;
        let wiredoff = match &self.wiredoff_history_csv {
            Some(text) => Some(WiredOffSource::History(
                io::parse_wiredoff_history(text).map_err(tag("wiredoff_history"))?,
            )),
            None => None,
        };
        let inputs = PipelineInputs { volumes, availability, events, wiredoff, now_epoch_minute: self.now_epoch_minute };
        inputs.validate()?;
        Ok(inputs)
    }
}

/// One immutable version of a session. Fitting or simulating publishes a
/// new version; readers keep whichever `Arc` they already hold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub created_at_unix: u64,
    pub version: u64,
    pub source: Arc<SessionSource>,
    pub config: Option<PipelineConfig>,
    pub fitted: Option<Arc<FittedModels>>,
    pub wiredon: Option<Arc<WiredOnForecast>>,
    pub recommendation: Option<Arc<Recommendation>>,
}

pub struct Session {
    pub inputs: Arc<PipelineInputs>,
    /// Serializes fits and simulations on this session.
    pub write: tokio::sync::Mutex<()>,
    current: RwLock<Arc<SessionState>>,
}

impl Session {
    pub fn new(inputs: PipelineInputs, state: SessionState) -> Self {
        Self { inputs: Arc::new(inputs), write: tokio::sync::Mutex::new(()), current: RwLock::new(Arc::new(state)) }
    }

    pub fn snapshot(&self) -> Arc<SessionState> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Caller must hold `write`.
    pub fn publish(&self, state: SessionState) -> Arc<SessionState> {
        let state = Arc::new(state);
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = state.clone();
        state
    }
}

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<Session>>>>,
    state_dir: Option<PathBuf>,
}

impl AppState {
    pub fn in_memory() -> Self {
        Self { sessions: Arc::default(), state_dir: None }
    }

    /// Restores every readable snapshot found in `dir`.
    pub fn with_state_dir(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let app = Self { sessions: Arc::default(), state_dir: Some(dir.clone()) };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            match restore(&path) {
                Ok(session) => {
                    let id = session.snapshot().session_id.clone();
                    app.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id, Arc::new(session));
                }
                Err(e) => log::warn!("skipping snapshot {}: {}", path.display(), e.message),
            }
        }
        Ok(app)
    }

    pub fn get(&self, id: &str) -> ApiResult<Arc<Session>> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    pub fn insert(&self, session: Session) -> ApiResult<Arc<Session>> {
        let session = Arc::new(session);
        self.persist(&session.snapshot())?;
        let id = session.snapshot().session_id.clone();
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id, session.clone());
        Ok(session)
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn persist(&self, state: &SessionState) -> ApiResult<()> {
        if let Some(dir) = &self.state_dir {
            io::write_json(&dir.join(format!("{}.json", state.session_id)), state)
                .map_err(|e| ApiError::internal(format!("writing snapshot: {e}")))?;
        }
        Ok(())
    }
}

fn restore(path: &Path) -> ApiResult<Session> {
    let state: SessionState = io::read_json(path).map_err(|e| ApiError::internal(e.to_string()))?;
    let inputs = state.source.parse()?;
    Ok(Session::new(inputs, state))
}
