//! Thin async client for the session service's HTTP API.

use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use affectrec_core::engine::Engine;
use affectrec_core::session::{
    CreateSessionRequest, ElicitationView, ErrorBody, Health, MoodPayload, MoodPhase, MoodRequest,
    RatingInput, RatingsRequest, RecommendationsView, Reflection, ReflectionsRequest, SessionView,
};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request to {url} failed: {source}")]
    Transport {
        url: String,
        #[source]
        source: reqwest::Error,
    },

    /// The service answered with an error body.
    #[error("{status} {code}: {message}")]
    Api {
        status: StatusCode,
        code: String,
        message: String,
    },

    #[error("unexpected response from {url}: {message}")]
    Decode { url: String, message: String },
}

impl ClientError {
    /// Error code returned by the service, if any.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            _ => None,
        }
    }

    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn call<B: Serialize + ?Sized, T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        body: Option<&B>,
    ) -> Result<T> {
        let url = format!("{}{path}", self.base);
        let mut req = self.http.request(method, &url);
        if let Some(b) = body {
            req = req.json(b);
        }
        let transport = |source| ClientError::Transport {
            url: url.clone(),
            source,
        };
        let resp = req.send().await.map_err(transport)?;
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(transport)?;
        if !status.is_success() {
            let body: ErrorBody = serde_json::from_slice(&bytes).unwrap_or_else(|_| ErrorBody {
                code: "http".into(),
                message: String::from_utf8_lossy(&bytes).into_owned(),
            });
            return Err(ClientError::Api {
                status,
                code: body.code,
                message: body.message,
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode {
            url,
            message: e.to_string(),
        })
    }

    pub async fn health(&self) -> Result<Health> {
        self.call::<(), _>(Method::GET, "/healthz", None).await
    }

    pub async fn create_session(&self, engine: Engine, seed: Option<u64>) -> Result<SessionView> {
        self.call(
            Method::POST,
            "/sessions",
            Some(&CreateSessionRequest { engine, seed }),
        )
        .await
    }

    pub async fn session(&self, id: &str) -> Result<SessionView> {
        self.call::<(), _>(Method::GET, &format!("/sessions/{id}"), None)
            .await
    }

    pub async fn elicitation(&self, id: &str) -> Result<ElicitationView> {
        self.call::<(), _>(Method::GET, &format!("/sessions/{id}/elicitation"), None)
            .await
    }

    pub async fn submit_ratings(&self, id: &str, ratings: Vec<RatingInput>) -> Result<SessionView> {
        self.call(
            Method::POST,
            &format!("/sessions/{id}/ratings"),
            Some(&RatingsRequest { ratings }),
        )
        .await
    }

    pub async fn recommendations(&self, id: &str, n: usize) -> Result<RecommendationsView> {
        self.call::<(), _>(
            Method::GET,
            &format!("/sessions/{id}/recommendations?n={n}"),
            None,
        )
        .await
    }

    pub async fn mood(&self, id: &str, phase: MoodPhase, mood: MoodPayload) -> Result<SessionView> {
        self.call(
            Method::POST,
            &format!("/sessions/{id}/mood"),
            Some(&MoodRequest { phase, mood }),
        )
        .await
    }

    pub async fn reflections(&self, id: &str, reflections: Vec<Reflection>) -> Result<SessionView> {
        self.call(
            Method::POST,
            &format!("/sessions/{id}/reflections"),
            Some(&ReflectionsRequest { reflections }),
        )
        .await
    }

    /// Sends metric-name to score pairs as given, so the service can name
    /// missing or unknown metrics.
    pub async fn feedback(&self, id: &str, scores: &Value) -> Result<SessionView> {
        self.call(
            Method::POST,
            &format!("/sessions/{id}/feedback"),
            Some(scores),
        )
        .await
    }
}
