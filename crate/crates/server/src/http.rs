//! REST routes and the session stream endpoint.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use biopsym_core::anatomy::write_obj;
use biopsym_core::exercises::{
    grade_attempt, recommend_exercises, Attempt, AttemptDetail, AttemptInput, Catalog, ExerciseError, ExerciseKind,
};
use biopsym_store::{new_id, now_ms, ActivityKind, SessionStore, StoreError};
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::scenario::{ScenarioDef, Scenarios};
use crate::session::{Finished, Outgoing, SessionMachine};
use crate::wire::ServerMsg;

pub const DEFAULT_CATALOG: &str = include_str!("../assets/exercises.json");

#[derive(Debug, Error)]
pub enum SetupError {
    #[error("exercise {exercise} refers to unknown scenario {scenario}")]
    UnknownScenario { exercise: String, scenario: String },
}

/// Shared service state. Scenario data is immutable; store writes go
/// through one lock.
pub struct AppState {
    pub scenarios: Scenarios,
    pub catalog: Catalog,
    store: Mutex<Box<dyn SessionStore + Send>>,
    /// Sessions created but not yet ended. A connected stream takes its
    /// machine out and returns it if the socket drops early.
    live: Mutex<HashMap<String, SessionMachine>>,
}

impl AppState {
    pub fn new(
        scenarios: Scenarios,
        catalog: Catalog,
        store: Box<dyn SessionStore + Send>,
    ) -> Result<Self, SetupError> {
        for e in &catalog.exercises {
            if let Some(s) = &e.scenario_ref {
                if scenarios.get(s).is_none() {
                    return Err(SetupError::UnknownScenario {
                        exercise: e.id.clone(),
                        scenario: s.clone(),
                    });
                }
            }
        }
        Ok(Self {
            scenarios,
            catalog,
            store: Mutex::new(store),
            live: Mutex::new(HashMap::new()),
        })
    }

    pub fn store(&self) -> MutexGuard<'_, Box<dyn SessionStore + Send>> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn live(&self) -> MutexGuard<'_, HashMap<String, SessionMachine>> {
        self.live.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Persists a finished session and, for exercises, the graded attempt.
    pub fn persist(&self, fin: &Finished) -> Result<(), StoreError> {
        let mut store = self.store();
        store.record_session(fin.record.clone())?;
        if let (Some(exercise_id), Some(grade)) = (&fin.record.exercise_id, &fin.grade) {
            store.record_attempt(Attempt {
                attempt_id: new_id(),
                user_id: fin.record.user_id.clone(),
                exercise_id: exercise_id.clone(),
                timestamp_ms: fin.record.ended_at_ms.unwrap_or(fin.record.started_at_ms),
                kind: ExerciseKind::GuidedSimulation,
                inputs: AttemptInput::GuidedSimulation {
                    session_id: fin.record.session_id.clone(),
                },
                score: grade.score,
                detail: AttemptDetail::GuidedSimulation {
                    zone_hit_map: fin.record.result.zone_hit_map,
                    grade: grade.clone(),
                },
            })?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    field: Option<&'static str>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownUser(_) | StoreError::UnknownSession(_) => Self::not_found(e.to_string()),
            StoreError::DuplicateId(_) => Self::new(StatusCode::CONFLICT, "conflict", e.to_string()),
            StoreError::InvalidSession(_) => Self::bad_request(e.to_string()),
            _ => {
                tracing::error!("store: {e}");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "store_failed", e.to_string())
            }
        }
    }
}

impl From<ExerciseError> for ApiError {
    fn from(e: ExerciseError) -> Self {
        let field = match &e {
            ExerciseError::InvalidField { field, .. } => Some(*field),
            _ => None,
        };
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "invalid_input",
            message: e.to_string(),
            field,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(f) = self.field {
            body["field"] = f.into();
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/users", post(create_user))
        .route("/sessions", post(create_session))
        .route("/scenarios", get(list_scenarios))
        .route("/scenarios/{id}/mesh", get(scenario_mesh))
        .route("/exercises", get(list_exercises))
        .route("/exercises/{id}/attempts", post(submit_attempt))
        .route("/users/{id}/timeline", get(timeline))
        .route("/users/{id}/series", get(series))
        .route("/users/{id}/recommendations", get(recommendations))
        .route("/sessions/{id}/replay", get(replay))
        .route("/sessions/{id}/stream", get(stream))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

#[derive(Deserialize)]
struct NewUser {
    display_name: String,
}

async fn create_user(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: NewUser = parse(&body)?;
    let user = app.store().create_user(&req.display_name)?;
    Ok((StatusCode::CREATED, Json(user)))
}

#[derive(Deserialize)]
struct NewSession {
    user_id: String,
    scenario_id: String,
    #[serde(default)]
    exercise_id: Option<String>,
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: NewSession = parse(&body)?;
    let scenario = app
        .scenarios
        .get(&req.scenario_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown scenario {}", req.scenario_id)))?
        .clone();
    app.store().require_user(&req.user_id)?;
    let exercise = match &req.exercise_id {
        None => None,
        Some(id) => {
            let e = app
                .catalog
                .get(id)
                .ok_or_else(|| ApiError::not_found(format!("unknown exercise {id}")))?;
            if e.kind() != ExerciseKind::GuidedSimulation {
                return Err(ApiError::bad_request(format!("exercise {id} is not a simulation")));
            }
            if e.scenario_ref.as_ref().is_some_and(|s| *s != req.scenario_id) {
                return Err(ApiError::bad_request(format!("exercise {id} runs on another scenario")));
            }
            Some(e.clone())
        }
    };
    let session_id = new_id();
    let machine = SessionMachine::new(session_id.clone(), req.user_id, scenario, exercise, now_ms());
    app.live().insert(session_id.clone(), machine);
    Ok((StatusCode::CREATED, Json(json!({ "session_id": session_id }))))
}

async fn list_scenarios(State(app): State<Arc<AppState>>) -> Json<Vec<ScenarioDef>> {
    Json(app.scenarios.iter().map(|s| s.def.clone()).collect())
}

async fn scenario_mesh(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let s = app
        .scenarios
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown scenario {id}")))?;
    let mut obj = Vec::new();
    write_obj(&s.prostate.mesh, &mut obj)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "mesh_failed", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "model/obj")], obj))
}

async fn list_exercises(State(app): State<Arc<AppState>>) -> Json<Catalog> {
    Json(app.catalog.clone())
}

#[derive(Deserialize)]
struct NewAttempt {
    user_id: String,
    input: AttemptInput,
    #[serde(default)]
    timestamp_ms: Option<u64>,
}

async fn submit_attempt(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let def = app
        .catalog
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown exercise {id}")))?;
    let req: NewAttempt = parse(&body)?;
    let mut store = app.store();
    store.require_user(&req.user_id)?;
    let session_result = match &req.input {
        AttemptInput::GuidedSimulation { session_id } => {
            let s = store.replay(session_id)?;
            if s.user_id != req.user_id {
                return Err(ApiError::not_found(format!("unknown session {session_id}")));
            }
            Some(s.result.clone())
        }
        _ => None,
    };
    let graded = grade_attempt(def, &req.input, session_result.as_ref())?;
    let attempt = Attempt {
        attempt_id: new_id(),
        user_id: req.user_id,
        exercise_id: def.id.clone(),
        timestamp_ms: req.timestamp_ms.unwrap_or_else(now_ms),
        kind: def.kind(),
        inputs: req.input,
        score: graded.score,
        detail: graded.detail,
    };
    store.record_attempt(attempt.clone())?;
    Ok((StatusCode::CREATED, Json(attempt)))
}

async fn timeline(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(app.store().timeline(&id)?))
}

#[derive(Deserialize)]
struct SeriesQuery {
    kind: String,
}

async fn series(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<SeriesQuery>,
) -> ApiResult<impl IntoResponse> {
    let kind: ActivityKind = q.kind.parse().map_err(ApiError::bad_request)?;
    Ok(Json(app.store().score_series(&id, kind)?))
}

async fn recommendations(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let history: Vec<Attempt> = app.store().attempts_of(&id)?.into_iter().cloned().collect();
    Ok(Json(
        json!({ "exercise_ids": recommend_exercises(&history, &app.catalog) }),
    ))
}

async fn replay(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(app.store().replay(&id)?.clone()))
}

async fn stream(State(app): State<Arc<AppState>>, Path(id): Path<String>, ws: WebSocketUpgrade) -> ApiResult<Response> {
    let machine = app.live().remove(&id);
    let Some(machine) = machine else {
        if app.store().replay(&id).is_ok() {
            return Err(ApiError::new(
                StatusCode::GONE,
                "session_ended",
                format!("session {id} has ended"),
            ));
        }
        return Err(ApiError::not_found(format!("unknown or busy session {id}")));
    };
    Ok(ws.on_upgrade(move |socket| run_stream(app, machine, socket)))
}

async fn run_stream(app: Arc<AppState>, mut machine: SessionMachine, mut socket: WebSocket) {
    let mut ended = false;
    while let Some(Ok(msg)) = socket.recv().await {
        let (mut out, fin) = match msg {
            Message::Text(text) => machine.handle_text(text.as_str(), now_ms()),
            Message::Binary(_) => (
                vec![Outgoing::Msg(ServerMsg::error(
                    "bad_message",
                    "expected a JSON text message",
                ))],
                None,
            ),
            Message::Close(_) => break,
            _ => continue,
        };
        if let Some(fin) = fin {
            ended = true;
            if let Err(e) = app.persist(&fin) {
                tracing::error!(session = %machine.session_id, "persist failed: {e}");
                out = vec![Outgoing::Msg(ServerMsg::error("store_failed", e.to_string()))];
            }
        }
        for o in out {
            let m = match o {
                Outgoing::Frame(bytes) => Message::Binary(bytes.into()),
                Outgoing::Msg(msg) => match serde_json::to_string(&msg) {
                    Ok(s) => Message::Text(s.into()),
                    Err(e) => {
                        tracing::error!("encode: {e}");
                        continue;
                    }
                },
            };
            if socket.send(m).await.is_err() {
                break;
            }
        }
    }
    if !ended {
        app.live().insert(machine.session_id.clone(), machine);
    }
}
