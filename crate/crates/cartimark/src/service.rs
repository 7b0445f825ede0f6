//! HTTP+JSON reader-study service.
//!
//! Pre-completion payloads (session descriptors, cases, acknowledgments)
//! are built from types that carry no ground truth; labels are read only in
//! the report handler, and only once the session is complete.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cartimark_core::session::{Acknowledgment, CaseResponse, Progress, ReaderSession, SessionStatus};
use cartimark_core::table2::Table2Dataset;
use cartimark_core::{Label, View};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, ErrorBody, Result};
use crate::fusion_model::AnyModel;
use crate::imageio::encode_gray8;
use crate::models::{read_predictions, write_predictions, PredictionRecord};
use crate::report::{evaluate, table2_predictions, EvaluationReport, Truth};
use crate::resolver::{CaseSet, Resolver};
use crate::store::SessionStore;

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = match &self {
            AppError::UnknownDataset(_)
            | AppError::UnknownSession(_)
            | AppError::UnknownModel(_)
            | AppError::UnknownImage
            | AppError::UnknownPatient(_) => StatusCode::NOT_FOUND,
            AppError::NotATestSubset(_) | AppError::Usage(_) | AppError::Parse { .. } => StatusCode::BAD_REQUEST,
            AppError::Unauthorized => StatusCode::UNAUTHORIZED,
            AppError::Core(e) => match e.code() {
                "session_complete" | "session_incomplete" | "out_of_order" | "duplicate_conflict" => {
                    StatusCode::CONFLICT
                }
                _ => StatusCode::UNPROCESSABLE_ENTITY,
            },
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self.body())).into_response()
    }
}

/// Known models by id, loaded lazily.
#[derive(Default)]
pub struct ModelRegistry {
    paths: BTreeMap<String, PathBuf>,
    loaded: Mutex<HashMap<String, Arc<AnyModel>>>,
}

impl ModelRegistry {
    pub fn register(&mut self, path: &Path) -> Result<String> {
        let model = AnyModel::load(path)?;
        let id = model.model_id().to_string();
        self.paths.insert(id.clone(), path.to_path_buf());
        self.loaded.lock().unwrap().insert(id.clone(), Arc::new(model));
        Ok(id)
    }

    /// Registers every `model.json`/`fusion.json` one or two levels below
    /// `dir`. Unreadable files are skipped.
    pub fn scan(&mut self, dir: &Path) {
        let Ok(entries) = std::fs::read_dir(dir) else { return };
        for entry in entries.flatten() {
            let p = entry.path();
            for name in [crate::models::SIDECAR_FILE, crate::fusion_model::FUSION_FILE] {
                if p.join(name).is_file() {
                    let _ = self.register(&p.join(name));
                }
            }
        }
    }

    pub fn get(&self, id: &str) -> Result<Arc<AnyModel>> {
        if let Some(m) = self.loaded.lock().unwrap().get(id) {
            return Ok(m.clone());
        }
        let path = self.paths.get(id).ok_or_else(|| AppError::UnknownModel(id.into()))?;
        let m = Arc::new(AnyModel::load(path)?);
        self.loaded.lock().unwrap().insert(id.into(), m.clone());
        Ok(m)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.paths.keys().map(String::as_str)
    }
}

pub struct ServiceConfig {
    pub root: PathBuf,
    pub api_token: Option<String>,
}

pub struct AppState {
    pub store: SessionStore,
    pub resolver: Resolver,
    pub models: ModelRegistry,
    root: PathBuf,
    api_token: Option<String>,
    token_secret: String,
    images: Mutex<HashMap<String, (String, String, View)>>,
    case_sets: Mutex<HashMap<String, Arc<CaseSet>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig, resolver: Resolver, mut models: ModelRegistry) -> Result<Self> {
        models.scan(&config.root.join("models"));
        Ok(AppState {
            store: SessionStore::open(&config.root)?,
            resolver,
            models,
            root: config.root,
            api_token: config.api_token,
            token_secret: uuid::Uuid::new_v4().to_string(),
            images: Mutex::new(HashMap::new()),
            case_sets: Mutex::new(HashMap::new()),
        })
    }

    fn case_set(&self, dataset_ref: &str, test_only: bool) -> Result<Arc<CaseSet>> {
        if let Some(c) = self.case_sets.lock().unwrap().get(dataset_ref) {
            if test_only && c.subset != cartimark_core::Subset::Test {
                return Err(AppError::NotATestSubset(dataset_ref.into()));
            }
            return Ok(c.clone());
        }
        let set =
            Arc::new(if test_only { self.resolver.resolve_test(dataset_ref)? } else { self.resolver.resolve(dataset_ref)? });
        self.case_sets.lock().unwrap().insert(dataset_ref.into(), set.clone());
        Ok(set)
    }

    /// Opaque, unguessable and label-free token for one image.
    fn image_token(&self, dataset_ref: &str, patient_id: &str, view: View) -> String {
        let token = crate::fsutil::sha256_hex(
            format!("{}\u{0}{dataset_ref}\u{0}{patient_id}\u{0}{view}", self.token_secret).as_bytes(),
        )[..32]
            .to_string();
        self.images.lock().unwrap().insert(token.clone(), (dataset_ref.into(), patient_id.into(), view));
        token
    }

    fn predictions_path(&self, model_id: &str, dataset_ref: &str) -> PathBuf {
        self.root.join("predictions").join(model_id).join(format!("{}.jsonl", dataset_ref.replace([':', '/'], "__")))
    }
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub reader_id: String,
    pub reader_role: String,
    pub dataset_ref: String,
    #[serde(default)]
    pub seed: u64,
}

/// Session descriptor as served to readers: no case order, no labels.
#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub reader_id: String,
    pub reader_role: String,
    pub dataset_ref: String,
    pub seed: u64,
    pub status: SessionStatus,
    pub progress: Progress,
    pub created: String,
}

impl From<&ReaderSession> for SessionView {
    fn from(s: &ReaderSession) -> Self {
        SessionView {
            session_id: s.session_id.clone(),
            reader_id: s.reader_id.clone(),
            reader_role: s.reader_role.clone(),
            dataset_ref: s.dataset_ref.clone(),
            seed: s.seed,
            status: s.status,
            progress: Progress { current: s.responses.len(), total: s.total() },
            created: s.created.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ImageLink {
    pub url: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CasePayload {
    pub session_id: String,
    pub patient_id: String,
    pub progress: Progress,
    pub images: BTreeMap<View, ImageLink>,
}

#[derive(Debug, Deserialize)]
pub struct SubmitBody {
    pub patient_id: String,
    pub diagnosis: Label,
    #[serde(default)]
    pub elapsed_ms: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub reader_id: String,
    pub reader_role: String,
    pub dataset_ref: String,
    /// The reader's row comes first, followed by comparison raters.
    pub report: EvaluationReport,
}

#[derive(Debug, Deserialize)]
pub struct PredictQuery {
    pub dataset: String,
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionsPayload {
    pub model_id: String,
    pub dataset_ref: String,
    pub cached: bool,
    pub records: Vec<PredictionRecord>,
}

type Shared = State<Arc<AppState>>;

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create_session(State(st): Shared, Json(body): Json<CreateSession>) -> Result<(StatusCode, Json<SessionView>)> {
    if body.reader_id.trim().is_empty() || body.reader_role.trim().is_empty() {
        return Err(AppError::Usage("reader_id and reader_role must be non-empty".into()));
    }
    let set = st.case_set(&body.dataset_ref, true)?;
    let session = ReaderSession::new(
        uuid::Uuid::new_v4().simple().to_string(),
        body.reader_id,
        body.reader_role,
        body.dataset_ref,
        body.seed,
        &set.patient_ids,
        now_rfc3339(),
    )?;
    let session = st.store.create(session)?;
    Ok((StatusCode::CREATED, Json(SessionView::from(&session))))
}

async fn next_case(State(st): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<CasePayload>> {
    let session = st.store.get(&id)?;
    let patient_id = session.current_case()?.to_string();
    let set = st.case_set(&session.dataset_ref, true)?;
    let mut images = BTreeMap::new();
    for view in View::BOTH {
        let img = set.image(&patient_id, view)?;
        let token = st.image_token(&session.dataset_ref, &patient_id, view);
        images.insert(view, ImageLink { url: format!("/images/{token}"), width: img.width, height: img.height });
    }
    Ok(Json(CasePayload { session_id: id, patient_id, progress: session.progress(), images }))
}

async fn submit(State(st): Shared, UrlPath(id): UrlPath<String>, Json(body): Json<SubmitBody>) -> Result<Json<Acknowledgment>> {
    let session = st.store.get(&id)?;
    let responded_at = chrono::Utc::now();
    let since = session.responses.last().map(|r| r.responded_at.as_str()).unwrap_or(&session.created);
    let elapsed_ms = body.elapsed_ms.unwrap_or_else(|| {
        chrono::DateTime::parse_from_rfc3339(since)
            .map(|t| (responded_at - t.with_timezone(&chrono::Utc)).num_milliseconds().max(0) as u64)
            .unwrap_or(0)
    });
    let response = CaseResponse {
        patient_id: body.patient_id,
        diagnosis: body.diagnosis,
        responded_at: responded_at.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        elapsed_ms,
    };
    Ok(Json(st.store.submit(&id, response)?))
}

/// Reader row plus comparison raters: the bundled table for `table2`,
/// otherwise every cached model prediction for the same dataset.
pub fn session_report(st: &AppState, id: &str) -> Result<SessionReport> {
    let session = st.store.get(id)?;
    if session.status != SessionStatus::Complete {
        return Err(AppError::Core(cartimark_core::Error::SessionIncomplete));
    }
    let set = st.case_set(&session.dataset_ref, true)?;
    let truth = Truth(set.labels().clone());
    let reader: Vec<PredictionRecord> = session
        .answers()
        .map(|(pid, call)| PredictionRecord {
            patient_id: pid.into(),
            rater_id: session.reader_id.clone(),
            score: None,
            call,
            threshold: None,
        })
        .collect();
    let mut report = evaluate(&reader, &truth)?;
    let comparison = if set.is_table2() {
        table2_predictions(&Table2Dataset::bundled()?)
    } else {
        let mut recs = Vec::new();
        for model_id in st.models.ids() {
            let path = st.predictions_path(model_id, &session.dataset_ref);
            if path.is_file() {
                recs.extend(read_predictions(&path)?);
            }
        }
        recs
    };
    if !comparison.is_empty() {
        let other = evaluate(&comparison, &truth)?;
        report.rows.extend(other.rows);
        report.plot.curves.extend(other.plot.curves);
        report.plot.rater_points.extend(other.plot.rater_points);
    }
    Ok(SessionReport {
        session_id: session.session_id,
        reader_id: session.reader_id,
        reader_role: session.reader_role,
        dataset_ref: session.dataset_ref,
        report,
    })
}

async fn report(State(st): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<SessionReport>> {
    Ok(Json(session_report(&st, &id)?))
}

/// Batch inference, persisted under `predictions/` and served from there
/// unless `force` is set.
pub fn model_predict(st: &AppState, model_id: &str, dataset_ref: &str, force: bool) -> Result<PredictionsPayload> {
    let model = st.models.get(model_id)?;
    let path = st.predictions_path(model_id, dataset_ref);
    if !force && path.is_file() {
        return Ok(PredictionsPayload {
            model_id: model_id.into(),
            dataset_ref: dataset_ref.into(),
            cached: true,
            records: read_predictions(&path)?,
        });
    }
    let set = st.case_set(dataset_ref, false)?;
    let records = model.predict_with(&set.patient_ids, &|id, view| set.image(id, view))?;
    write_predictions(&path, &records)?;
    Ok(PredictionsPayload { model_id: model_id.into(), dataset_ref: dataset_ref.into(), cached: false, records })
}

async fn predictions(
    State(st): Shared,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<PredictQuery>,
) -> Result<Json<PredictionsPayload>> {
    let st2 = st.clone();
    let payload = tokio::task::spawn_blocking(move || model_predict(&st2, &id, &q.dataset, q.force))
        .await
        .map_err(|e| AppError::Storage(e.to_string()))??;
    Ok(Json(payload))
}

async fn image(State(st): Shared, UrlPath(token): UrlPath<String>) -> Result<Response> {
    let (dataset_ref, patient_id, view) = st.images.lock().unwrap().get(&token).cloned().ok_or(AppError::UnknownImage)?;
    let set = st.case_set(&dataset_ref, false)?;
    let png = encode_gray8(&set.image(&patient_id, view)?);
    Ok(([(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "no-store")], Body::from(png)).into_response())
}

async fn require_token(State(st): Shared, headers: HeaderMap, req: Request, next: Next) -> Response {
    if let Some(expected) = &st.api_token {
        let given = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(expected.as_str()) {
            return AppError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: Arc<AppState>) -> Router {
    let guarded = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next_case))
        .route("/sessions/{id}/responses", post(submit))
        .route("/sessions/{id}/report", get(report))
        .route("/models/{id}/predictions", get(predictions))
        .route("/images/{token}", get(image))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/healthz", get(healthz))
        .merge(guarded)
        .fallback(|| async { (StatusCode::NOT_FOUND, Json(ErrorBody { code: "not_found".into(), message: "no such route".into() })) })
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| AppError::Storage(format!("bind {addr}: {e}")))?;
    eprintln!("listening on http://{}", listener.local_addr().map_err(|e| AppError::Storage(e.to_string()))?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| AppError::Storage(e.to_string()))
}
