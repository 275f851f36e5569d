use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use affectrec_core::affect::VaLexicon;
use affectrec_core::catalog::{load_catalog, Catalog, CurationPolicy, Modality};
use affectrec_core::engine::{recommend_filtered, Engine, SimilarityIndex};
use affectrec_core::session::{
    replay, sample_elicitation, ElicitationView, MoodPayload, MoodPhase, PublicItem,
    QualityFeedback, RatingInput, RecommendationsView, RecommendedPainting, Reflection, Session,
    SessionEvent, SessionView,
};
use affectrec_core::{Error, Result};

use crate::log::{read_events, EventLog};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub index_dir: PathBuf,
    pub engines: Vec<Engine>,
    pub music: PathBuf,
    pub paintings: PathBuf,
    pub lexicon: Option<PathBuf>,
    pub allowlist: Option<PathBuf>,
    pub log_path: PathBuf,
    /// Asset shown instead of the real one for music attention checks.
    pub attention_music_asset: Option<String>,
    pub attention_painting_asset: Option<String>,
}

impl ServiceConfig {
    pub fn index_path(&self, engine: Engine) -> PathBuf {
        self.index_dir.join(format!("{engine}.afix"))
    }
}

/// Failure of a service operation.
#[derive(Debug)]
pub enum ServiceError {
    NotFound(String),
    NotReady(String),
    Core(Error),
}

impl From<Error> for ServiceError {
    fn from(e: Error) -> Self {
        ServiceError::Core(e)
    }
}

impl std::fmt::Display for ServiceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ServiceError::NotFound(id) => write!(f, "no session `{id}`"),
            ServiceError::NotReady(msg) => f.write_str(msg),
            ServiceError::Core(e) => write!(f, "{e}"),
        }
    }
}

pub type ServiceResult<T> = std::result::Result<T, ServiceError>;

struct Pools {
    music: Vec<String>,
    paintings: Vec<String>,
}

pub struct AppState {
    config: ServiceConfig,
    catalog: Catalog,
    curated_paintings: BTreeSet<String>,
    indices: HashMap<Engine, (Arc<SimilarityIndex>, Pools)>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
    log: Mutex<EventLog>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl AppState {
    /// Loads catalogs and every configured index, then restores sessions from
    /// an existing event log. Any missing index is an error.
    pub fn load(config: ServiceConfig) -> Result<Self> {
        let lexicon = config.lexicon.as_deref().map(VaLexicon::load).transpose()?;
        let catalog = load_catalog(&config.music, &config.paintings, lexicon.as_ref())?;
        let policy = match &config.allowlist {
            Some(path) => CurationPolicy::with_allowlist_file(path)?,
            None => CurationPolicy::default(),
        };
        let curated_music = policy.curated_ids(&catalog, Modality::Music);
        let curated_paintings: BTreeSet<String> = policy
            .curated_ids(&catalog, Modality::Painting)
            .into_iter()
            .collect();

        let mut indices = HashMap::new();
        for &engine in &config.engines {
            let index = SimilarityIndex::load(&config.index_path(engine))?;
            if index.engine() != engine {
                return Err(Error::Format(format!(
                    "{} holds a {} index",
                    config.index_path(engine).display(),
                    index.engine()
                )));
            }
            let rows: BTreeSet<&str> = index.row_ids().iter().map(String::as_str).collect();
            let cols: BTreeSet<&str> = index.col_ids().iter().map(String::as_str).collect();
            let music = if engine.is_cross_domain() {
                curated_music
                    .iter()
                    .filter(|id| rows.contains(id.as_str()))
                    .cloned()
                    .collect()
            } else {
                curated_music.clone()
            };
            let paintings = curated_paintings
                .iter()
                .filter(|id| cols.contains(id.as_str()))
                .cloned()
                .collect();
            indices.insert(engine, (Arc::new(index), Pools { music, paintings }));
        }

        let events = read_events(&config.log_path)?;
        let sessions = replay(&events)?
            .into_iter()
            .map(|(id, s)| (id, Arc::new(Mutex::new(s))))
            .collect();
        let log = EventLog::open(&config.log_path)?;
        Ok(Self {
            config,
            catalog,
            curated_paintings,
            indices,
            sessions: RwLock::new(sessions),
            log: Mutex::new(log),
        })
    }

    pub fn engines(&self) -> Vec<Engine> {
        let mut e: Vec<Engine> = self.indices.keys().copied().collect();
        e.sort();
        e
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map lock").len()
    }

    fn session(&self, id: &str) -> ServiceResult<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    /// Appends the event, then applies it. The caller holds the session lock.
    fn commit(&self, session: &mut Session, event: SessionEvent) -> ServiceResult<()> {
        let mut probe = session.clone();
        probe.apply(&event)?;
        self.log.lock().expect("log lock").append(&event)?;
        *session = probe;
        Ok(())
    }

    pub fn create_session(&self, engine: Engine, seed: Option<u64>) -> ServiceResult<SessionView> {
        let (_, pools) = self.indices.get(&engine).ok_or_else(|| {
            ServiceError::NotReady(format!("engine `{engine}` has no loaded index"))
        })?;
        let id = uuid::Uuid::new_v4();
        let seed = seed
            .unwrap_or_else(|| u64::from_le_bytes(id.as_bytes()[..8].try_into().expect("8 bytes")));
        let items = sample_elicitation(engine, seed, &pools.music, &pools.paintings)?;
        let event = SessionEvent::SessionCreated {
            session_id: id.to_string(),
            engine,
            seed,
            items,
            at_ms: now_ms(),
        };
        let session = Session::from_created(&event)?;
        let view = session.view();
        let mut map = self.sessions.write().expect("session map lock");
        self.log.lock().expect("log lock").append(&event)?;
        map.insert(id.to_string(), Arc::new(Mutex::new(session)));
        Ok(view)
    }

    pub fn view(&self, id: &str) -> ServiceResult<SessionView> {
        Ok(self.session(id)?.lock().expect("session lock").view())
    }

    /// Full internal state, attention flags included.
    pub fn snapshot(&self, id: &str) -> ServiceResult<Session> {
        Ok(self.session(id)?.lock().expect("session lock").clone())
    }

    pub fn snapshot_all(&self) -> BTreeMap<String, Session> {
        self.sessions
            .read()
            .expect("session map lock")
            .iter()
            .map(|(id, s)| (id.clone(), s.lock().expect("session lock").clone()))
            .collect()
    }

    fn public_item(&self, id: &str, modality: Modality, attention: bool) -> PublicItem {
        let meta = self.catalog.get(id).map(|r| &r.metadata);
        let mut asset = meta.and_then(|m| m.get("asset").cloned());
        if attention {
            let over = match modality {
                Modality::Music => &self.config.attention_music_asset,
                Modality::Painting => &self.config.attention_painting_asset,
            };
            if over.is_some() {
                asset = over.clone();
            }
        }
        PublicItem {
            item_id: id.to_string(),
            modality,
            title: meta.and_then(|m| m.get("title").cloned()),
            asset,
        }
    }

    pub fn elicitation(&self, id: &str) -> ServiceResult<ElicitationView> {
        let session = self.snapshot(id)?;
        Ok(ElicitationView {
            session_id: session.session_id.clone(),
            items: session
                .elicitation
                .iter()
                .map(|i| self.public_item(&i.item_id, i.modality, i.attention_check))
                .collect(),
        })
    }

    pub fn submit_ratings(&self, id: &str, ratings: &[RatingInput]) -> ServiceResult<SessionView> {
        let handle = self.session(id)?;
        let mut session = handle.lock().expect("session lock");
        let prepared = session.prepare_ratings(ratings)?;
        let event = SessionEvent::RatingsSubmitted {
            session_id: id.to_string(),
            ratings: prepared,
            at_ms: now_ms(),
        };
        self.commit(&mut session, event)?;
        Ok(session.view())
    }

    fn recommendations_view(&self, session: &Session) -> RecommendationsView {
        let list = session
            .recommendations
            .as_ref()
            .expect("recommended sessions hold a list");
        RecommendationsView {
            session_id: session.session_id.clone(),
            engine: session.engine,
            paintings: list
                .entries
                .iter()
                .map(|e| {
                    let item = self.public_item(&e.painting_id, Modality::Painting, false);
                    RecommendedPainting {
                        painting_id: e.painting_id.clone(),
                        aggregate_distance: e.aggregate_distance,
                        title: item.title,
                        asset: item.asset,
                    }
                })
                .collect(),
            truncated: list.truncated,
        }
    }

    /// Computes and stores the session's top-`n` list on first call; later
    /// calls with the same `n` return the stored list.
    pub fn recommendations(&self, id: &str, n: usize) -> ServiceResult<RecommendationsView> {
        let handle = self.session(id)?;
        let mut session = handle.lock().expect("session lock");
        if let Some(served) = session.recommendation_n {
            if served != n {
                return Err(Error::State(format!(
                    "recommendations were already served with n = {served}"
                ))
                .into());
            }
            return Ok(self.recommendations_view(&session));
        }
        if session.state != affectrec_core::session::SessionState::Elicited {
            return Err(Error::State(format!(
                "recommendations need submitted ratings (session is {:?})",
                session.state
            ))
            .into());
        }
        let (index, _) = self.indices.get(&session.engine).ok_or_else(|| {
            ServiceError::NotReady(format!("engine `{}` has no loaded index", session.engine))
        })?;
        let excluded = session.excluded_paintings();
        let list = recommend_filtered(index, &session.engine_ratings(), n, |p| {
            self.curated_paintings.contains(p) && !excluded.contains(p)
        })?;
        let event = SessionEvent::RecommendationsServed {
            session_id: id.to_string(),
            n,
            list,
            at_ms: now_ms(),
        };
        self.commit(&mut session, event)?;
        Ok(self.recommendations_view(&session))
    }

    pub fn record_mood(
        &self,
        id: &str,
        phase: MoodPhase,
        mood: MoodPayload,
    ) -> ServiceResult<SessionView> {
        let handle = self.session(id)?;
        let mut session = handle.lock().expect("session lock");
        let event = SessionEvent::MoodRecorded {
            session_id: id.to_string(),
            phase,
            mood,
            at_ms: now_ms(),
        };
        self.commit(&mut session, event)?;
        Ok(session.view())
    }

    pub fn record_reflections(
        &self,
        id: &str,
        reflections: Vec<Reflection>,
    ) -> ServiceResult<SessionView> {
        let handle = self.session(id)?;
        let mut session = handle.lock().expect("session lock");
        let event = SessionEvent::ReflectionsRecorded {
            session_id: id.to_string(),
            reflections,
            at_ms: now_ms(),
        };
        self.commit(&mut session, event)?;
        Ok(session.view())
    }

    pub fn record_feedback(
        &self,
        id: &str,
        feedback: QualityFeedback,
    ) -> ServiceResult<SessionView> {
        let handle = self.session(id)?;
        let mut session = handle.lock().expect("session lock");
        let event = SessionEvent::FeedbackRecorded {
            session_id: id.to_string(),
            feedback,
            at_ms: now_ms(),
        };
        self.commit(&mut session, event)?;
        Ok(session.view())
    }

    /// Flushes and syncs the event log.
    pub fn flush(&self) -> Result<()> {
        self.log.lock().expect("log lock").sync()
    }

    pub fn log_path(&self) -> PathBuf {
        self.log.lock().expect("log lock").path().to_path_buf()
    }
}
