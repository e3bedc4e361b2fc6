//! HTTP/JSON routes over the document store.
//!
//! Every response body is canonical JSON carrying `version` and `phase`
//! (`null` for models and matrices). Mutating session routes require the
//! caller's last seen `version` and fail with 409 when it is stale.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::Router;
use fmgc_core::{
    detect_conflicts, generate_patterns, load_interactions, parse_model, recommend_next_constraint,
    Change, Choice, ConstraintId, InteractionMatrix, ItemKind, MemberId, Pref, Session,
    SessionSettings,
};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::store::{canonical_json, DocKind, Store, StoreError, StoredDocument};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, code: code.to_string(), message: message.into() }
    }

    fn malformed(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", message)
    }
}

impl From<fmgc_core::Error> for ApiError {
    fn from(e: fmgc_core::Error) -> Self {
        use fmgc_core::Error as E;
        let status = match e {
            E::IllegalPhase(_) => StatusCode::CONFLICT,
            E::UnknownProposal(_) | E::UnknownConflict(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound { .. } | StoreError::InvalidId(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string())
            }
            StoreError::Io(_) | StoreError::Corrupt(_) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", e.to_string())
            }
        }
    }
}

impl From<serde_json::Error> for ApiError {
    fn from(e: serde_json::Error) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", e.to_string())
    }
}

fn json_response(status: StatusCode, body: &Value) -> Response {
    match canonical_json(body) {
        Ok(text) => (status, [(header::CONTENT_TYPE, "application/json")], text).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(self.status, &json!({"code": self.code, "message": self.message}))
    }
}

type ApiResult = Result<Response, ApiError>;

pub struct AppState {
    store: Store,
    next_ids: Mutex<HashMap<DocKind, u64>>,
    session_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    /// Resumes id allocation after the highest id already stored.
    pub fn new(store: Store) -> Result<Self, StoreError> {
        let mut next_ids = HashMap::new();
        for kind in DocKind::ALL {
            let highest = store
                .ids(kind)?
                .iter()
                .filter_map(|id| id.strip_prefix(kind.id_prefix())?.parse::<u64>().ok())
                .max()
                .unwrap_or(0);
            next_ids.insert(kind, highest + 1);
        }
        Ok(AppState { store, next_ids: Mutex::new(next_ids), session_locks: Mutex::default() })
    }

    fn allocate(&self, kind: DocKind) -> String {
        let mut ids = self.next_ids.lock().expect("id lock poisoned");
        let n = ids.entry(kind).or_insert(1);
        let id = format!("{}{}", kind.id_prefix(), n);
        *n += 1;
        id
    }

    fn session_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.session_locks.lock().expect("lock table poisoned");
        locks.entry(id.to_string()).or_default().clone()
    }

    fn create(&self, kind: DocKind, payload: impl FnOnce(&str) -> Result<Value, ApiError>) -> Result<StoredDocument, ApiError> {
        let id = self.allocate(kind);
        let doc = StoredDocument { kind, payload: payload(&id)?, id, version: 1 };
        self.store.save(&doc)?;
        Ok(doc)
    }

    fn load_session(&self, id: &str) -> Result<(StoredDocument, Session), ApiError> {
        let doc = self.store.load(DocKind::Session, id)?;
        let session = serde_json::from_value(doc.payload.clone())?;
        Ok((doc, session))
    }

    /// Runs `op` on the session under its writer lock. The stored version
    /// advances only when the session actually changed.
    async fn mutate<R>(
        &self,
        id: &str,
        expected: u64,
        op: impl FnOnce(&mut Session) -> Result<R, fmgc_core::Error>,
    ) -> Result<(StoredDocument, Session, R), ApiError> {
        let lock = self.session_lock(id);
        let _guard = lock.lock().await;
        let (mut doc, mut session) = self.load_session(id)?;
        if doc.version != expected {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "version_conflict",
                format!("session {id} is at version {}, request was based on {expected}", doc.version),
            ));
        }
        let before = session.clone();
        let out = op(&mut session)?;
        if session != before {
            doc.version += 1;
            doc.payload = serde_json::to_value(&session)?;
            self.store.save(&doc)?;
        }
        Ok((doc, session, out))
    }
}

/// Builds the router over `store`.
pub fn router(store: Store) -> Result<Router, StoreError> {
    let state = Arc::new(AppState::new(store)?);
    Ok(Router::new()
        .route("/api/models", post(create_model))
        .route("/api/models/{id}", get(get_model))
        .route("/api/matrices", post(create_matrix))
        .route("/api/matrices/{id}", get(get_matrix))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/members/{member}/preferences/{feature}", put(set_preference))
        .route("/api/sessions/{id}/members/{member}/visits/{constraint}", post(record_visit))
        .route("/api/sessions/{id}/step", post(step))
        .route("/api/sessions/{id}/next-constraint", get(next_constraint))
        .route("/api/sessions/{id}/conflicts", get(conflicts))
        .route("/api/sessions/{id}/conflicts/{feature}/patterns", get(patterns))
        .route("/api/sessions/{id}/conflicts/{feature}/proposals", post(propose))
        .route("/api/sessions/{id}/proposals/{pid}/accept", post(accept))
        .route("/api/sessions/{id}/diagnoses", get(diagnoses))
        .route("/api/sessions/{id}/diagnoses/{index}/apply", post(apply_diagnosis))
        .route("/api/sessions/{id}/reconfigure", post(reconfigure))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed")
        })
        .with_state(state))
}

/// Serves the API until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, store: Store) -> std::io::Result<()> {
    let app = router(store).map_err(std::io::Error::other)?;
    axum::serve(listener, app).await
}

type AppStateRef = State<Arc<AppState>>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::malformed(e.to_string()))
}

fn utf8(body: &Bytes) -> Result<&str, ApiError> {
    std::str::from_utf8(body).map_err(|_| ApiError::malformed("body is not UTF-8"))
}

// Models

fn model_view(doc: &StoredDocument) -> Result<Value, ApiError> {
    let text = doc.payload["text"].as_str().unwrap_or_default();
    let model = parse_model(text).map_err(fmgc_core::Error::from)?;
    let constraints: Vec<Value> = model
        .constraints()
        .iter()
        .map(|c| json!({"id": c.id, "expr": c.expr.to_string()}))
        .collect();
    Ok(json!({
        "id": doc.id,
        "version": doc.version,
        "phase": null,
        "name": model.name(),
        "feature_count": model.feature_count(),
        "features": model.features().collect::<Vec<_>>(),
        "constraints": constraints,
        "text": model.to_text(),
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelBody {
    text: String,
}

/// Accepts either raw model text or `{"text": ...}` with a JSON content type.
async fn create_model(State(state): AppStateRef, headers: HeaderMap, body: Bytes) -> ApiResult {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let text = if is_json { parse_body::<ModelBody>(&body)?.text } else { utf8(&body)?.to_string() };
    let model = parse_model(&text).map_err(fmgc_core::Error::from)?;
    let doc = state.create(DocKind::Model, |_| Ok(json!({"text": model.to_text()})))?;
    Ok(json_response(StatusCode::CREATED, &model_view(&doc)?))
}

async fn get_model(State(state): AppStateRef, Path(id): Path<String>) -> ApiResult {
    let doc = state.store.load(DocKind::Model, &id)?;
    Ok(json_response(StatusCode::OK, &model_view(&doc)?))
}

// Interaction matrices

fn matrix_view(doc: &StoredDocument) -> Result<Value, ApiError> {
    let m: InteractionMatrix = serde_json::from_value(doc.payload.clone())?;
    Ok(json!({
        "id": doc.id,
        "version": doc.version,
        "phase": null,
        "kind": m.kind(),
        "members": m.members(),
        "items": m.items(),
        "ratings": m.rating_count(),
    }))
}

async fn create_matrix(State(state): AppStateRef, RawQuery(query): RawQuery, body: Bytes) -> ApiResult {
    let kind = query
        .as_deref()
        .unwrap_or_default()
        .split('&')
        .find_map(|pair| pair.strip_prefix("kind="))
        .ok_or_else(|| ApiError::malformed("missing `kind` query parameter"))?;
    let kind: ItemKind = kind.parse().map_err(ApiError::malformed)?;
    let matrix = load_interactions(utf8(&body)?, kind)?;
    let doc = state.create(DocKind::Matrix, |_| Ok(serde_json::to_value(&matrix)?))?;
    Ok(json_response(StatusCode::CREATED, &matrix_view(&doc)?))
}

async fn get_matrix(State(state): AppStateRef, Path(id): Path<String>) -> ApiResult {
    let doc = state.store.load(DocKind::Matrix, &id)?;
    Ok(json_response(StatusCode::OK, &matrix_view(&doc)?))
}

// Sessions

fn session_view(version: u64, s: &Session) -> Result<Value, ApiError> {
    let mut preferences = BTreeMap::new();
    let mut predicted = BTreeMap::new();
    let mut visited = BTreeMap::new();
    for m in s.members() {
        preferences.insert(m.clone(), s.effective_preferences(m.as_str())?);
        let p: BTreeMap<_, _> = s
            .model()
            .features()
            .filter_map(|f| s.predicted(m.as_str(), f.as_str()).map(|p| (f.clone(), p)))
            .collect();
        predicted.insert(m.clone(), p);
        visited.insert(m.clone(), s.visited(m.as_str()).unwrap_or_default().to_vec());
    }
    Ok(json!({
        "id": s.id(),
        "model_id": s.model_id(),
        "version": version,
        "phase": s.phase(),
        "revision": s.revision(),
        "members": s.members(),
        "model": s.model().to_text(),
        "preferences": preferences,
        "predicted": predicted,
        "visited": visited,
        "group_decisions": s.group_decisions(),
        "conflicts": s.conflicts(),
        "proposals": s.proposals(),
        "diagnoses": s.diagnosis_report(),
        "settings": s.settings(),
        "interaction_data": {
            "order": s.order_data().is_some(),
            "choice": s.choice_data().is_some(),
        },
    }))
}

fn session_response(status: StatusCode, doc: &StoredDocument, s: &Session) -> ApiResult {
    Ok(json_response(status, &session_view(doc.version, s)?))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct MatrixIds {
    order: Option<String>,
    choice: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSessionBody {
    model_id: String,
    members: Vec<String>,
    #[serde(default)]
    matrix_ids: MatrixIds,
    #[serde(default)]
    settings: Option<SessionSettings>,
}

async fn create_session(State(state): AppStateRef, body: Bytes) -> ApiResult {
    let body: CreateSessionBody = parse_body(&body)?;
    let model_doc = state.store.load(DocKind::Model, &body.model_id)?;
    let model = parse_model(model_doc.payload["text"].as_str().unwrap_or_default())
        .map_err(fmgc_core::Error::from)?;
    let members = body
        .members
        .iter()
        .map(MemberId::new)
        .collect::<Result<Vec<_>, _>>()?;
    let mut matrices = Vec::new();
    for (id, kind) in [(&body.matrix_ids.order, ItemKind::ConstraintOrder), (&body.matrix_ids.choice, ItemKind::FeatureChoice)] {
        let Some(id) = id else { continue };
        let m: InteractionMatrix = serde_json::from_value(state.store.load(DocKind::Matrix, id)?.payload)?;
        if m.kind() != kind {
            return Err(fmgc_core::Error::KindMismatch { expected: kind, actual: m.kind() }.into());
        }
        matrices.push(m);
    }
    let build = |id: &str| -> Result<Session, fmgc_core::Error> {
        let mut s = Session::new(id, body.model_id.as_str(), model.clone(), members.clone())?
            .with_settings(body.settings.clone().unwrap_or_default());
        for m in &matrices {
            s = s.with_interactions(m.clone());
        }
        Ok(s)
    };
    build("pending")?;
    let mut session = None;
    let doc = state.create(DocKind::Session, |id| {
        let s = build(id)?;
        let payload = serde_json::to_value(&s)?;
        session = Some(s);
        Ok(payload)
    })?;
    session_response(StatusCode::CREATED, &doc, &session.expect("created"))
}

async fn get_session(State(state): AppStateRef, Path(id): Path<String>) -> ApiResult {
    let (doc, s) = state.load_session(&id)?;
    session_response(StatusCode::OK, &doc, &s)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VersionBody {
    version: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PreferenceBody {
    value: Pref,
    version: u64,
}

async fn set_preference(
    State(state): AppStateRef,
    Path((id, member, feature)): Path<(String, String, String)>,
    body: Bytes,
) -> ApiResult {
    let body: PreferenceBody = parse_body(&body)?;
    let (doc, s, ()) = state.mutate(&id, body.version, |s| s.set_preference(&member, &feature, body.value)).await?;
    session_response(StatusCode::OK, &doc, &s)
}

async fn record_visit(
    State(state): AppStateRef,
    Path((id, member, constraint)): Path<(String, String, String)>,
    body: Bytes,
) -> ApiResult {
    let body: VersionBody = parse_body(&body)?;
    let constraint: ConstraintId = constraint.parse().map_err(|_| {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_constraint", format!("unknown constraint `{constraint}`"))
    })?;
    let (doc, s, ()) = state.mutate(&id, body.version, |s| s.record_visit(&member, constraint)).await?;
    session_response(StatusCode::OK, &doc, &s)
}

async fn step(State(state): AppStateRef, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let body: VersionBody = parse_body(&body)?;
    let (doc, s, ()) = state.mutate(&id, body.version, Session::step).await?;
    session_response(StatusCode::OK, &doc, &s)
}

async fn next_constraint(State(state): AppStateRef, Path(id): Path<String>) -> ApiResult {
    let (doc, s) = state.load_session(&id)?;
    let rec = recommend_next_constraint(&s, s.order_data(), s.settings().k)?;
    Ok(json_response(
        StatusCode::OK,
        &json!({"version": doc.version, "phase": s.phase(), "recommendation": rec}),
    ))
}

async fn conflicts(State(state): AppStateRef, Path(id): Path<String>) -> ApiResult {
    let (doc, s) = state.load_session(&id)?;
    Ok(json_response(
        StatusCode::OK,
        &json!({"version": doc.version, "phase": s.phase(), "conflicts": detect_conflicts(&s)}),
    ))
}

async fn patterns(State(state): AppStateRef, Path((id, feature)): Path<(String, String)>) -> ApiResult {
    let (doc, s) = state.load_session(&id)?;
    let patterns = generate_patterns(&s, &feature)?;
    Ok(json_response(
        StatusCode::OK,
        &json!({"version": doc.version, "phase": s.phase(), "feature": feature, "patterns": patterns}),
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposalBody {
    member: String,
    value: Choice,
    #[serde(default)]
    rationale: String,
    version: u64,
}

async fn propose(
    State(state): AppStateRef,
    Path((id, feature)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let body: ProposalBody = parse_body(&body)?;
    let (doc, s, pid) = state
        .mutate(&id, body.version, |s| s.propose(&feature, &body.member, body.value, body.rationale.clone()))
        .await?;
    let mut view = session_view(doc.version, &s)?;
    view["proposal_id"] = json!(pid);
    Ok(json_response(StatusCode::CREATED, &view))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AcceptBody {
    member: String,
    version: u64,
}

async fn accept(
    State(state): AppStateRef,
    Path((id, pid)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let body: AcceptBody = parse_body(&body)?;
    let (doc, s, ()) = state.mutate(&id, body.version, |s| s.accept(&pid, &body.member)).await?;
    session_response(StatusCode::OK, &doc, &s)
}

async fn diagnoses(State(state): AppStateRef, Path(id): Path<String>) -> ApiResult {
    let (doc, s) = state.load_session(&id)?;
    let report = s.diagnosis_report();
    Ok(json_response(
        StatusCode::OK,
        &json!({
            "version": doc.version,
            "phase": s.phase(),
            "diagnoses": report.map(|r| r.report.diagnoses.clone()).unwrap_or_default(),
            "complete": report.map(|r| r.report.complete),
        }),
    ))
}

async fn apply_diagnosis(
    State(state): AppStateRef,
    Path((id, index)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let index: usize = index.parse().map_err(|_| ApiError::malformed(format!("invalid index `{index}`")))?;
    let body: VersionBody = parse_body(&body)?;
    let (doc, s, ()) = state.mutate(&id, body.version, |s| s.apply_diagnosis(index)).await?;
    session_response(StatusCode::OK, &doc, &s)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReconfigureBody {
    changes: Vec<Change>,
    version: u64,
}

async fn reconfigure(State(state): AppStateRef, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let body: ReconfigureBody = parse_body(&body)?;
    let (doc, s, ()) = state.mutate(&id, body.version, |s| s.reconfigure(&body.changes)).await?;
    session_response(StatusCode::OK, &doc, &s)
}
