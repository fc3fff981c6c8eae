//! Read-only JSON API over a loaded store.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use riseer_core::artifacts::{
    ArtifactKind, ClustersArtifact, ForecastArtifact, IndicatorsArtifact, PathsArtifact, ProjectionArtifact, SegmentsArtifact,
};
use riseer_core::error::Error;
use riseer_core::forecast::ModelKind;
use riseer_core::geocluster::ClusterId;
use riseer_core::ingest::Tier;
use riseer_core::month::YearMonth;
use riseer_core::query::{cluster_details, compare_clusters, query_range, ClusterDetails, Comparison, RangeSlice, DEFAULT_HEAT_GRID};
use schemars::{schema_for, JsonSchema};
use serde::{Deserialize, Serialize};

use crate::store::{Manifest, Store};

pub const MAX_HEAT_GRID: usize = 1000;

/// Error body of every failed request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CompareRequest {
    pub ids: Vec<ClusterId>,
}

/// Endpoint names accepted by [`endpoint_schema`].
pub const ENDPOINTS: [&str; 11] = [
    "projection",
    "snapshots",
    "forecast",
    "segments",
    "clusters",
    "indicators",
    "details",
    "paths",
    "compare",
    "manifest",
    "error",
];

/// JSON schema of an endpoint's successful response.
pub fn endpoint_schema(endpoint: &str) -> Option<serde_json::Value> {
    let schema = match endpoint {
        "projection" => schema_for!(ProjectionArtifact),
        "snapshots" => schema_for!(RangeSlice),
        "forecast" => schema_for!(ForecastArtifact),
        "segments" => schema_for!(SegmentsArtifact),
        "clusters" => schema_for!(ClustersArtifact),
        "indicators" => schema_for!(IndicatorsArtifact),
        "details" => schema_for!(ClusterDetails),
        "paths" => schema_for!(PathsArtifact),
        "compare" => schema_for!(Comparison),
        "manifest" => schema_for!(Manifest),
        "error" => schema_for!(ApiError),
        _ => return None,
    };
    Some(serde_json::to_value(schema).expect("schema serializes"))
}

struct Failure(StatusCode, ApiError);

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure(
            StatusCode::BAD_REQUEST,
            ApiError {
                code: "invalid_argument".into(),
                message: message.into(),
            },
        )
    }

    fn not_found(message: impl Into<String>) -> Self {
        Failure(
            StatusCode::NOT_FOUND,
            ApiError {
                code: "not_found".into(),
                message: message.into(),
            },
        )
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.root() {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::InvalidArgument(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Failure(
            status,
            ApiError {
                code: e.code().into(),
                message: e.to_string(),
            },
        )
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        json_response(self.0, serde_json::to_vec(&self.1).expect("error serializes"))
    }
}

fn json_response(status: StatusCode, body: Vec<u8>) -> Response {
    Response::builder()
        .status(status)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body))
        .expect("valid response")
}

fn ok_json<T: Serialize>(value: &T) -> Result<Response, Failure> {
    let body = serde_json::to_vec(value).map_err(Error::from)?;
    Ok(json_response(StatusCode::OK, body))
}

type Params = Result<Query<BTreeMap<String, String>>, QueryRejection>;

fn params(q: Params) -> Result<BTreeMap<String, String>, Failure> {
    q.map(|Query(m)| m).map_err(|e| Failure::invalid(e.body_text()))
}

fn parse_param<T: std::str::FromStr>(p: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    p.get(key)
        .map(|v| v.parse::<T>().map_err(|e| Failure::invalid(format!("bad {key} {v:?}: {e}"))))
        .transpose()
}

type Shared = Arc<Store>;

async fn raw_artifact(store: &Store, kind: ArtifactKind) -> Response {
    json_response(StatusCode::OK, store.raw[&kind].clone())
}

async fn projection(State(s): State<Shared>) -> Response {
    raw_artifact(&s, ArtifactKind::Projection).await
}

async fn segments(State(s): State<Shared>) -> Response {
    raw_artifact(&s, ArtifactKind::Segments).await
}

async fn paths(State(s): State<Shared>) -> Response {
    raw_artifact(&s, ArtifactKind::Paths).await
}

async fn indicators(State(s): State<Shared>) -> Response {
    raw_artifact(&s, ArtifactKind::Indicators).await
}

async fn manifest(State(s): State<Shared>) -> Response {
    json_response(StatusCode::OK, s.manifest_bytes.clone())
}

/// `from` and `to` default to the ends of the data span.
async fn snapshots(State(s): State<Shared>, q: Params) -> Result<Response, Failure> {
    let p = params(q)?;
    let span = s.analysis.artifacts.snapshots.span;
    let from = parse_param::<YearMonth>(&p, "from")?.or(span.map(|s| s.start));
    let to = parse_param::<YearMonth>(&p, "to")?.or(span.map(|s| s.end));
    let (Some(from), Some(to)) = (from, to) else {
        return Err(Failure::invalid("store has no snapshots; give from and to"));
    };
    ok_json(&query_range(&s.analysis.artifacts, from, to)?)
}

async fn forecast(State(s): State<Shared>, q: Params) -> Result<Response, Failure> {
    let p = params(q)?;
    let tier = parse_param::<Tier>(&p, "tier")?;
    let model = parse_param::<ModelKind>(&p, "model")?;
    let all = &s.analysis.artifacts.forecast;
    ok_json(&ForecastArtifact {
        schema: all.schema.clone(),
        config: all.config.clone(),
        attribution_groups: all.attribution_groups.clone(),
        runs: all
            .runs
            .iter()
            .filter(|r| tier.is_none_or(|t| r.tier == t) && model.is_none_or(|m| r.model == m))
            .cloned()
            .collect(),
    })
}

async fn clusters(State(s): State<Shared>, q: Params) -> Result<Response, Failure> {
    let p = params(q)?;
    let all = &s.analysis.artifacts.clusters;
    let Some(period) = parse_param::<usize>(&p, "period")? else {
        return Ok(raw_artifact(&s, ArtifactKind::Clusters).await);
    };
    let periods: Vec<_> = all.periods.iter().filter(|c| c.period.index == period).cloned().collect();
    if periods.is_empty() {
        return Err(Failure::not_found(format!("period {period}")));
    }
    ok_json(&ClustersArtifact {
        schema: all.schema.clone(),
        periods,
    })
}

async fn details(State(s): State<Shared>, Path(id): Path<String>, q: Params) -> Result<Response, Failure> {
    let p = params(q)?;
    let id: ClusterId = id.parse().map_err(|e: Error| Failure::invalid(e.to_string()))?;
    let grid = parse_param::<usize>(&p, "grid")?.unwrap_or(DEFAULT_HEAT_GRID);
    if !(1..=MAX_HEAT_GRID).contains(&grid) {
        return Err(Failure::invalid(format!("grid must be in 1..={MAX_HEAT_GRID}")));
    }
    ok_json(&cluster_details(&s.analysis, id, grid)?)
}

async fn compare(State(s): State<Shared>, body: Bytes) -> Result<Response, Failure> {
    let req: CompareRequest = serde_json::from_slice(&body).map_err(|e| Failure::invalid(format!("bad compare body: {e}")))?;
    ok_json(&compare_clusters(&s.analysis.artifacts, &req.ids)?)
}

async fn schema(Path(name): Path<String>) -> Result<Response, Failure> {
    let schema = endpoint_schema(&name).ok_or_else(|| Failure::not_found(format!("schema {name}")))?;
    ok_json(&schema)
}

async fn unknown_route() -> Failure {
    Failure::not_found("no such endpoint")
}

async fn wrong_method() -> Failure {
    Failure(
        StatusCode::METHOD_NOT_ALLOWED,
        ApiError {
            code: "method_not_allowed".into(),
            message: "the API is read-only apart from POST /compare".into(),
        },
    )
}

/// The `/api/v1` routes; unknown paths under it answer with a JSON 404.
pub fn router(store: Store) -> Router {
    let api = Router::new()
        .route("/projection", get(projection))
        .route("/snapshots", get(snapshots))
        .route("/forecast", get(forecast))
        .route("/segments", get(segments))
        .route("/clusters", get(clusters))
        .route("/clusters/{id}/details", get(details))
        .route("/indicators", get(indicators))
        .route("/paths", get(paths))
        .route("/compare", post(compare))
        .route("/manifest", get(manifest))
        .route("/schemas/{name}", get(schema))
        .fallback(unknown_route)
        .method_not_allowed_fallback(wrong_method)
        .with_state(Arc::new(store));
    Router::new().nest("/api/v1", api)
}
