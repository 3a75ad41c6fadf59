//! HTTP+JSON triage API over a persistent project.
//!
//! All routes live under `/api/v1`. Mutating requests may carry
//! `If-Match: <revision>`; a stale revision gets `409 revision_conflict`.
//! Every response that reflects project state carries `ETag: "<revision>"`.

mod error;
mod state;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use threadreq_core::config::Thresholds;
use threadreq_core::extract::{Annotation, Feasibility, ReqType};
use threadreq_core::prioritize::WeightScheme;
use threadreq_core::project::{Applied, Mutation, Project, RecomputeScope};

pub use error::{ApiError, ErrorBody};
pub use state::{Clock, Committed, ServiceState};

type Shared = Arc<ServiceState>;
type ApiResult = Result<Response, ApiError>;

pub fn router(state: Shared, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/project", get(get_project))
        .route("/config/weights", get(get_weights).put(put_weights))
        .route("/config/thresholds", get(get_thresholds).put(put_thresholds))
        .route("/candidates", get(get_candidates))
        .route("/candidates/{id}", axum::routing::patch(patch_candidate))
        .route("/clusters", get(get_clusters))
        .route("/clusters/merge", post(merge_clusters))
        .route("/clusters/{id}/split", post(split_cluster))
        .route("/ratings/{candidate_id}", get(get_ratings).put(put_ratings))
        .route("/annotations/{source_id}", put(put_annotation))
        .route("/recompute", post(recompute))
        .route("/ranking", get(get_ranking))
        .route("/stats", get(get_stats))
        .route("/report.md", get(get_report))
        .route("/audit", get(get_audit));
    let app = Router::new().nest("/api/v1", api).with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

pub async fn serve(state: Shared, addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, static_dir)).await
}

fn with_etag(revision: u64, body: impl IntoResponse) -> Response {
    let mut r = body.into_response();
    let tag = HeaderValue::from_str(&format!("\"{revision}\"")).expect("etag is ascii");
    r.headers_mut().insert(header::ETAG, tag);
    r
}

fn json_at(p: &Project, value: Value) -> Response {
    with_etag(p.revision(), Json(value))
}

fn expected_revision(headers: &HeaderMap) -> Result<Option<u64>, ApiError> {
    let Some(v) = headers.get(header::IF_MATCH) else {
        return Ok(None);
    };
    let raw = v.to_str().map_err(|_| ApiError::bad_request("If-Match is not ASCII"))?.trim();
    let raw = raw.strip_prefix("W/").unwrap_or(raw).trim_matches('"');
    raw.parse()
        .map(Some)
        .map_err(|_| ApiError::bad_request(format!("If-Match must be a revision number, got {raw:?}")))
}

fn actor(headers: &HeaderMap) -> String {
    headers
        .get("x-actor")
        .and_then(|v| v.to_str().ok())
        .filter(|s| !s.is_empty())
        .unwrap_or("moderator")
        .to_string()
}

/// Syntax errors are 400; well-formed JSON with bad values is 422.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => ApiError::validation(e.to_string()),
        _ => ApiError::bad_request(e.to_string()),
    })
}

#[derive(Serialize)]
struct MutationResponse<'a> {
    revision: u64,
    results: &'a [Applied],
    stale: threadreq_core::project::Staleness,
    content_hashes: threadreq_core::project::ContentHashes,
}

async fn commit(state: &ServiceState, headers: &HeaderMap, mutations: Vec<Mutation>) -> ApiResult {
    let expected = expected_revision(headers)?;
    let Committed { project, results } = state.mutate(expected, &actor(headers), mutations).await?;
    let body = MutationResponse {
        revision: project.revision(),
        results: &results,
        stale: project.file.stale,
        content_hashes: project.file.content_hashes(),
    };
    Ok(with_etag(project.revision(), Json(body)))
}

async fn get_project(State(s): State<Shared>) -> Response {
    let p = s.snapshot();
    let f = &p.file;
    json_at(
        &p,
        json!({
            "revision": f.revision,
            "room_title": p.export.room_title,
            "topic_statement": p.export.topic_statement,
            "export": f.export,
            "stale": f.stale,
            "content_hashes": f.content_hashes(),
            "counts": {
                "candidates": f.candidates.len(),
                "clusters": f.clusters.len(),
                "ratings": f.ratings.candidates().count(),
                "audit": f.audit.len(),
            },
        }),
    )
}

#[derive(Deserialize)]
struct WeightsBody {
    dimensions: WeightScheme,
}

async fn get_weights(State(s): State<Shared>) -> Response {
    let p = s.snapshot();
    json_at(&p, json!({ "revision": p.revision(), "dimensions": p.file.config.weights }))
}

async fn put_weights(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let WeightsBody { dimensions } = parse_body(&body)?;
    commit(&s, &headers, vec![Mutation::SetWeights { weights: dimensions }]).await
}

async fn get_thresholds(State(s): State<Shared>) -> Response {
    let p = s.snapshot();
    let mut v = serde_json::to_value(p.file.config.thresholds).expect("thresholds serialize");
    v["revision"] = json!(p.revision());
    json_at(&p, v)
}

async fn put_thresholds(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let current = s.snapshot().file.config.thresholds;
    // Partial bodies update only the fields they name.
    let mut merged = serde_json::to_value(current).expect("thresholds serialize");
    let patch: BTreeMap<String, Value> = parse_body(&body)?;
    for (k, v) in patch {
        if k != "revision" {
            merged[k] = v;
        }
    }
    let thresholds: Thresholds =
        serde_json::from_value(merged).map_err(|e| ApiError::validation(e.to_string()))?;
    commit(&s, &headers, vec![Mutation::SetThresholds { thresholds }]).await
}

async fn get_candidates(State(s): State<Shared>) -> Response {
    let p = s.snapshot();
    json_at(
        &p,
        json!({ "revision": p.revision(), "stale": p.file.stale.candidates, "candidates": p.file.candidates }),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidatePatch {
    feasible: Option<Feasibility>,
    req_type: Option<ReqType>,
}

async fn patch_candidate(
    State(s): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let patch: CandidatePatch = parse_body(&body)?;
    let mut mutations = Vec::new();
    if let Some(feasible) = patch.feasible {
        mutations.push(Mutation::SetFeasibility { candidate_id: id.clone(), feasible });
    }
    if let Some(req_type) = patch.req_type {
        mutations.push(Mutation::SetReqType { candidate_id: id, req_type });
    }
    if mutations.is_empty() {
        return Err(ApiError::validation("patch must set feasible or req_type"));
    }
    commit(&s, &headers, mutations).await
}

async fn get_clusters(State(s): State<Shared>) -> Response {
    let p = s.snapshot();
    let clusters: Vec<Value> = p
        .file
        .clusters
        .iter()
        .map(|c| {
            let mut v = serde_json::to_value(c.summary()).expect("cluster serializes");
            v["needs_review"] = json!(c.needs_review);
            v
        })
        .collect();
    json_at(&p, json!({ "revision": p.revision(), "stale": p.file.stale.clusters, "clusters": clusters }))
}

#[derive(Deserialize)]
struct MergeBody {
    cluster_ids: Vec<String>,
}

async fn merge_clusters(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let MergeBody { cluster_ids } = parse_body(&body)?;
    commit(&s, &headers, vec![Mutation::MergeClusters { cluster_ids }]).await
}

#[derive(Deserialize)]
struct SplitBody {
    groups: Vec<Vec<String>>,
}

async fn split_cluster(
    State(s): State<Shared>,
    Path(cluster_id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let SplitBody { groups } = parse_body(&body)?;
    commit(&s, &headers, vec![Mutation::SplitCluster { cluster_id, groups }]).await
}

async fn get_ratings(State(s): State<Shared>, Path(candidate_id): Path<String>) -> ApiResult {
    let p = s.snapshot();
    if p.file.candidate(&candidate_id).is_none() {
        return Err(ApiError::not_found(format!("candidate {candidate_id:?} not found")));
    }
    let row = p.file.ratings.row(&candidate_id);
    let missing: Vec<&str> = p
        .file
        .config
        .weights
        .dimensions()
        .iter()
        .filter(|d| row.is_none_or(|r| !r.contains_key(&d.name)))
        .map(|d| d.name.as_str())
        .collect();
    Ok(json_at(
        &p,
        json!({ "revision": p.revision(), "candidate_id": candidate_id, "ratings": row, "missing": missing }),
    ))
}

#[derive(Deserialize)]
struct RatingsBody {
    ratings: BTreeMap<String, i64>,
}

async fn put_ratings(
    State(s): State<Shared>,
    Path(candidate_id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let RatingsBody { ratings } = parse_body(&body)?;
    commit(&s, &headers, vec![Mutation::SetRating { candidate_id, ratings }]).await
}

async fn put_annotation(
    State(s): State<Shared>,
    Path(source_id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let annotation: Option<Annotation> = parse_body(&body)?;
    commit(&s, &headers, vec![Mutation::SetAnnotation { source_id, annotation }]).await
}

#[derive(Deserialize, Default)]
struct RecomputeBody {
    #[serde(default)]
    scope: Option<RecomputeScope>,
}

async fn recompute(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let body: RecomputeBody = if body.is_empty() { RecomputeBody::default() } else { parse_body(&body)? };
    let scope = body.scope.unwrap_or(RecomputeScope::All);
    commit(&s, &headers, vec![Mutation::Recompute { scope }]).await
}

async fn get_ranking(State(s): State<Shared>) -> Response {
    let p = s.snapshot();
    let f = &p.file;
    let (scored, final_set, dropped) = match &f.ranking {
        Some(r) => (json!(r.scored), json!(r.outcome.final_set), json!(r.outcome.dropped)),
        None => (json!([]), json!([]), json!([])),
    };
    json_at(
        &p,
        json!({
            "revision": f.revision,
            "stale": f.stale.ranking || f.ranking.is_none(),
            "scored": scored,
            "final": final_set,
            "dropped": dropped,
        }),
    )
}

async fn get_stats(State(s): State<Shared>) -> Response {
    let p = s.snapshot();
    let f = &p.file;
    json_at(&p, json!({ "revision": f.revision, "stale": f.stale.stats || f.stats.is_none(), "stats": f.stats }))
}

async fn get_report(State(s): State<Shared>) -> Response {
    let p = s.snapshot();
    let headers = [(header::CONTENT_TYPE, "text/markdown; charset=utf-8")];
    with_etag(p.revision(), (StatusCode::OK, headers, p.report()))
}

async fn get_audit(State(s): State<Shared>) -> Response {
    let p = s.snapshot();
    json_at(&p, json!({ "revision": p.revision(), "entries": p.file.audit }))
}
