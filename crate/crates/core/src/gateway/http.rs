use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::corpus::{CorpusDatabase, SPECTRUM_LEN};
use crate::error::{Error, Result};
use crate::inference::{self, NormalizationMode, ProjectedCorpus};
use crate::synthgen::FaultClass;
use crate::text_embed::EmbeddingTable;
use crate::trainer::TlsModel;

pub const PREVIEW_FACTOR: usize = 10;
pub const PREVIEW_LEN: usize = SPECTRUM_LEN / PREVIEW_FACTOR;
const DEFAULT_PAGE: usize = 100;
const MAX_PAGE: usize = 1000;

/// Max over each block of 10 consecutive bins.
pub fn spectrum_preview(spectrum: &[f64]) -> Vec<f64> {
    spectrum
        .chunks(PREVIEW_FACTOR)
        .map(|block| block.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

#[derive(Default)]
struct Counters {
    health: AtomicU64,
    retrieve: AtomicU64,
    zeroshot: AtomicU64,
    recordings: AtomicU64,
    errors: AtomicU64,
}

/// Everything a request may read. Immutable once built.
pub struct ServiceState {
    pub model: TlsModel,
    pub db: CorpusDatabase,
    pub table: EmbeddingTable,
    projected: ProjectedCorpus,
    positions: HashMap<String, usize>,
    started: Instant,
    counters: Counters,
}

impl ServiceState {
    pub fn new(model: TlsModel, db: CorpusDatabase, table: EmbeddingTable) -> Result<Self> {
        model.validate()?;
        db.validate()?;
        if db.recordings.is_empty() {
            return Err(Error::Parameter("cannot serve an empty corpus".into()));
        }
        let projected = ProjectedCorpus::build(&model, &db)?;
        let positions = db
            .recordings
            .iter()
            .enumerate()
            .map(|(i, r)| (r.recording_id.clone(), i))
            .collect();
        Ok(Self {
            model,
            db,
            table,
            projected,
            positions,
            started: Instant::now(),
            counters: Counters::default(),
        })
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Parameter(_) | Error::Shape { .. } | Error::Embedding(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.body_text())
    }
}

type Shared = Arc<ServiceState>;
type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

fn parse_mode(mode: Option<&str>) -> std::result::Result<NormalizationMode, ApiError> {
    match mode {
        None => Ok(NormalizationMode::default()),
        Some(m) => m.parse().map_err(ApiError::from),
    }
}

fn counted<T>(state: &ServiceState, result: ApiResult<T>) -> ApiResult<T> {
    if result.is_err() {
        state.counters.errors.fetch_add(1, Ordering::Relaxed);
    }
    result
}

async fn health(State(state): State<Shared>) -> Json<serde_json::Value> {
    state.counters.health.fetch_add(1, Ordering::Relaxed);
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RetrieveRequest {
    query: String,
    k: usize,
    mode: Option<String>,
}

#[derive(Serialize)]
struct RetrieveResult {
    recording_id: String,
    score: f64,
    annotation: Option<String>,
    truth_class: Option<FaultClass>,
    spectrum_preview: Vec<f64>,
}

#[derive(Serialize)]
struct RetrieveResponse {
    results: Vec<RetrieveResult>,
}

async fn retrieve(
    State(state): State<Shared>,
    body: std::result::Result<Json<RetrieveRequest>, JsonRejection>,
) -> ApiResult<RetrieveResponse> {
    state.counters.retrieve.fetch_add(1, Ordering::Relaxed);
    let result = (|| {
        let Json(req) = body?;
        let mode = parse_mode(req.mode.as_deref())?;
        let hits = state
            .projected
            .retrieve(&state.model, &state.table, &req.query, req.k, mode)?;
        let results = hits
            .into_iter()
            .map(|h| {
                let rec = &state.db.recordings[state.positions[&h.recording_id]];
                RetrieveResult {
                    spectrum_preview: spectrum_preview(&rec.spectrum),
                    recording_id: h.recording_id,
                    score: h.score,
                    annotation: h.annotation,
                    truth_class: h.truth_class,
                }
            })
            .collect();
        Ok(Json(RetrieveResponse { results }))
    })();
    counted(&state, result)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ZeroShotRequest {
    queries: Vec<String>,
    recording_ids: Vec<String>,
    mode: Option<String>,
}

#[derive(Serialize)]
struct ZeroShotResponse {
    queries: Vec<String>,
    recording_ids: Vec<String>,
    scores: Vec<Vec<f64>>,
    argmax: Vec<usize>,
}

async fn zeroshot(
    State(state): State<Shared>,
    body: std::result::Result<Json<ZeroShotRequest>, JsonRejection>,
) -> ApiResult<ZeroShotResponse> {
    state.counters.zeroshot.fetch_add(1, Ordering::Relaxed);
    let result = (|| {
        let Json(req) = body?;
        let mode = parse_mode(req.mode.as_deref())?;
        let spectra = req
            .recording_ids
            .iter()
            .map(|id| {
                let i = state
                    .positions
                    .get(id)
                    .ok_or_else(|| Error::NotFound(format!("recording {id}")))?;
                Ok((id.as_str(), state.db.recordings[*i].spectrum.as_slice()))
            })
            .collect::<Result<Vec<_>>>()?;
        let zs = inference::zero_shot(&state.model, &state.table, &spectra, &req.queries, mode)?;
        Ok(Json(ZeroShotResponse {
            queries: zs.matrix.queries,
            recording_ids: zs.matrix.item_ids,
            scores: zs.matrix.scores,
            argmax: zs.argmax,
        }))
    })();
    counted(&state, result)
}

#[derive(Deserialize)]
struct Page {
    limit: Option<usize>,
    offset: Option<usize>,
}

#[derive(Serialize)]
struct RecordingEntry {
    recording_id: String,
    asset_id: String,
    subasset_id: String,
    timestamp: String,
    truth_class: Option<FaultClass>,
}

#[derive(Serialize)]
struct RecordingsResponse {
    total: usize,
    offset: usize,
    limit: usize,
    recordings: Vec<RecordingEntry>,
}

async fn recordings(
    State(state): State<Shared>,
    page: std::result::Result<Query<Page>, QueryRejection>,
) -> ApiResult<RecordingsResponse> {
    state.counters.recordings.fetch_add(1, Ordering::Relaxed);
    let result = (|| {
        let Query(page) = page?;
        let limit = page.limit.unwrap_or(DEFAULT_PAGE);
        if limit == 0 || limit > MAX_PAGE {
            return Err(ApiError(
                StatusCode::BAD_REQUEST,
                format!("limit must be in 1..={MAX_PAGE}"),
            ));
        }
        let offset = page.offset.unwrap_or(0);
        let recordings = state
            .db
            .recordings
            .iter()
            .skip(offset)
            .take(limit)
            .map(|r| RecordingEntry {
                recording_id: r.recording_id.clone(),
                asset_id: r.asset_id.clone(),
                subasset_id: r.subasset_id.clone(),
                timestamp: crate::corpus::iso8601::format(r.timestamp),
                truth_class: r.truth_class,
            })
            .collect();
        Ok(Json(RecordingsResponse {
            total: state.db.recordings.len(),
            offset,
            limit,
            recordings,
        }))
    })();
    counted(&state, result)
}

async fn stats(State(state): State<Shared>) -> Json<serde_json::Value> {
    let c = &state.counters;
    Json(json!({
        "uptime_seconds": state.started.elapsed().as_secs_f64(),
        "recordings": state.db.recordings.len(),
        "annotations": state.db.annotations.len(),
        "embedding_misses": state.table.misses(),
        "requests": {
            "health": c.health.load(Ordering::Relaxed),
            "retrieve": c.retrieve.load(Ordering::Relaxed),
            "zeroshot": c.zeroshot.load(Ordering::Relaxed),
            "recordings": c.recordings.load(Ordering::Relaxed),
            "errors": c.errors.load(Ordering::Relaxed),
        },
    }))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/retrieve", post(retrieve))
        .route("/zeroshot", post(zeroshot))
        .route("/recordings", get(recordings))
        .route("/stats", get(stats))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds `addr` and serves until the process ends. Failing to bind (port in
/// use, permission) is an I/O error.
pub async fn serve(state: Arc<ServiceState>, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(format!("tcp://{addr}"), e))?;
    let local = listener.local_addr().map_err(|e| Error::io(format!("tcp://{addr}"), e))?;
    eprintln!("tlsfd: serving on http://{local}");
    axum::serve(listener, router(state))
        .await
        .map_err(|e| Error::io(format!("tcp://{local}"), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{gen_corpus, GeneratorConfig};
    use crate::trainer::TrainConfig;
    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    fn state() -> Arc<ServiceState> {
        let db = gen_corpus(&GeneratorConfig {
            n_assets: 6,
            recordings_per_annotation: 4,
            extra_recordings: 1,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let model = TlsModel::init(&TrainConfig::default()).unwrap();
        Arc::new(ServiceState::new(model, db, EmbeddingTable::fallback()).unwrap())
    }

    async fn call(app: Router, req: Request<Body>) -> (StatusCode, serde_json::Value) {
        let resp = app.oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, serde_json::from_slice(&bytes).unwrap())
    }

    fn post_json(uri: &str, body: &str) -> Request<Body> {
        Request::post(uri)
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap()
    }

    #[test]
    fn preview_is_block_max() {
        let mut s = vec![0.0; SPECTRUM_LEN];
        s[15] = 3.0;
        s[3199] = 1.0;
        let p = spectrum_preview(&s);
        assert_eq!(p.len(), PREVIEW_LEN);
        assert_eq!(p[1], 3.0);
        assert_eq!(p[319], 1.0);
        assert_eq!(p[0], 0.0);
    }

    #[tokio::test]
    async fn health_ok() {
        let (status, body) = call(router(state()), Request::get("/health").body(Body::empty()).unwrap()).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body, json!({"status": "ok"}));
    }

    #[tokio::test]
    async fn retrieve_returns_k_sorted_with_previews() {
        let (status, body) = call(router(state()), post_json("/retrieve", r#"{"query":"BPFO low levels","k":3}"#)).await;
        assert_eq!(status, StatusCode::OK);
        let results = body["results"].as_array().unwrap();
        assert_eq!(results.len(), 3);
        let scores: Vec<f64> = results.iter().map(|r| r["score"].as_f64().unwrap()).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
        for r in results {
            assert_eq!(r["spectrum_preview"].as_array().unwrap().len(), PREVIEW_LEN);
        }
    }

    #[tokio::test]
    async fn retrieve_is_pure() {
        let app = router(state());
        let req = || post_json("/retrieve", r#"{"query":"Replace sensor","k":5,"mode":"train"}"#);
        let a = call(app.clone(), req()).await;
        let b = call(app, req()).await;
        assert_eq!(a, b);
    }

    #[tokio::test]
    async fn malformed_bodies_are_400() {
        let app = router(state());
        for body in ["{", r#"{"query":"x"}"#, r#"{"query":"x","k":0}"#, r#"{"query":"x","k":1,"mode":"loud"}"#] {
            let (status, resp) = call(app.clone(), post_json("/retrieve", body)).await;
            assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
            assert!(resp["error"].is_string());
        }
    }

    #[tokio::test]
    async fn zeroshot_scores_and_errors() {
        let st = state();
        let ids: Vec<String> = st.db.recordings.iter().take(2).map(|r| r.recording_id.clone()).collect();
        let app = router(st);
        let body = json!({"queries": ["a", "b", "c"], "recording_ids": ids}).to_string();
        let (status, resp) = call(app.clone(), post_json("/zeroshot", &body)).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(resp["scores"].as_array().unwrap().len(), 3);
        assert_eq!(resp["argmax"].as_array().unwrap().len(), 2);

        let empty = json!({"queries": [], "recording_ids": ids}).to_string();
        let (status, resp) = call(app.clone(), post_json("/zeroshot", &empty)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert!(resp["error"].is_string());

        let unknown = json!({"queries": ["a"], "recording_ids": ["nope"]}).to_string();
        let (status, _) = call(app, post_json("/zeroshot", &unknown)).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
    }

    #[tokio::test]
    async fn recordings_paginate() {
        let st = state();
        let total = st.db.recordings.len();
        let app = router(st);
        let (status, body) = call(app.clone(), Request::get("/recordings?limit=5&offset=2").body(Body::empty()).unwrap()).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["total"], total);
        assert_eq!(body["recordings"].as_array().unwrap().len(), 5);
        let (status, _) = call(app.clone(), Request::get("/recordings?limit=abc").body(Body::empty()).unwrap()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        let (_, stats) = call(app, Request::get("/stats").body(Body::empty()).unwrap()).await;
        assert_eq!(stats["requests"]["recordings"], 2);
        assert_eq!(stats["requests"]["errors"], 1);
    }

    #[tokio::test]
    async fn cors_headers_present() {
        let resp = router(state())
            .oneshot(
                Request::get("/health")
                    .header("origin", "http://localhost:5173")
                    .body(Body::empty())
                    .unwrap(),
            )
            .await
            .unwrap();
        assert!(resp.headers().contains_key("access-control-allow-origin"));
    }
}
