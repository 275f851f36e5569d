use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use affectrec_core::session::{
    CreateSessionRequest, ErrorBody, Health, MoodRequest, QualityFeedback, RatingsRequest,
    ReflectionsRequest, DEFAULT_RECOMMENDATIONS,
};
use affectrec_core::{Error, ErrorClass};

use crate::state::{AppState, ServiceError};

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
            },
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let message = e.to_string();
        match e {
            ServiceError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, "not_found", message),
            ServiceError::NotReady(_) => {
                Self::new(StatusCode::SERVICE_UNAVAILABLE, "not_ready", message)
            }
            ServiceError::Core(core) => match (&core, core.class()) {
                (Error::State(_), _) => Self::new(StatusCode::CONFLICT, "conflict", message),
                (Error::UnknownItem(_), _) => {
                    Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_item", message)
                }
                (Error::Io { .. }, _) => {
                    Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
                }
                (_, ErrorClass::Input) => Self::new(StatusCode::BAD_REQUEST, "validation", message),
                (_, ErrorClass::Integrity) => {
                    Self::new(StatusCode::INTERNAL_SERVER_ERROR, "integrity", message)
                }
                (_, ErrorClass::Domain) => {
                    Self::new(StatusCode::UNPROCESSABLE_ENTITY, "domain", message)
                }
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "validation",
            format!("malformed request body: {e}"),
        )
    })
}

async fn healthz(State(app): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        engines: app.engines(),
        sessions: app.session_count(),
    })
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: CreateSessionRequest = parse(&body)?;
    let view = app.create_session(req.engine, req.seed)?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn get_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<affectrec_core::session::SessionView> {
    Ok(Json(app.view(&id)?))
}

async fn elicitation(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<affectrec_core::session::ElicitationView> {
    Ok(Json(app.elicitation(&id)?))
}

async fn ratings(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<affectrec_core::session::SessionView> {
    let req: RatingsRequest = parse(&body)?;
    Ok(Json(app.submit_ratings(&id, &req.ratings)?))
}

#[derive(Deserialize)]
struct RecommendQuery {
    n: Option<usize>,
}

async fn recommendations(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<RecommendQuery>,
) -> ApiResult<affectrec_core::session::RecommendationsView> {
    let n = q.n.unwrap_or(DEFAULT_RECOMMENDATIONS);
    if n == 0 {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "validation",
            "n must be at least 1",
        ));
    }
    Ok(Json(app.recommendations(&id, n)?))
}

async fn mood(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<affectrec_core::session::SessionView> {
    let req: MoodRequest = parse(&body)?;
    Ok(Json(app.record_mood(&id, req.phase, req.mood)?))
}

async fn reflections(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<affectrec_core::session::SessionView> {
    let req: ReflectionsRequest = parse(&body)?;
    Ok(Json(app.record_reflections(&id, req.reflections)?))
}

async fn feedback(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<affectrec_core::session::SessionView> {
    let value: serde_json::Value = parse(&body)?;
    let feedback = QualityFeedback::from_json(&value).map_err(ServiceError::from)?;
    Ok(Json(app.record_feedback(&id, feedback)?))
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/elicitation", get(elicitation))
        .route("/sessions/{id}/ratings", post(ratings))
        .route("/sessions/{id}/recommendations", get(recommendations))
        .route("/sessions/{id}/mood", post(mood))
        .route("/sessions/{id}/reflections", post(reflections))
        .route("/sessions/{id}/feedback", post(feedback))
        .with_state(app)
}
