//! HTTP API over [`Arena`].
//!
//! Participant routes take the participant id in the body (or the query for
//! GET). Admin routes need `Authorization: Bearer <token>` matching the
//! configured admin token; without a token they are disabled.

use std::str::FromStr;
use std::sync::Arc;

use arena_core::domain::{
    BattleId, Choice, Dimension, DomainError, Judgment, ParticipantId, RegistrationRequest,
};
use arena_core::preference::CommitError;
use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

use crate::export::to_jsonl;
use crate::io::{csv_string, read_benchmarks, write_flags, write_leaderboard, write_matrix, write_correlations};
use crate::service::{Arena, ServiceError, TurnChunk};

pub fn router(arena: Arc<Arena>) -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/register", post(register))
        .route("/battles", post(new_battle))
        .route("/battles/{id}", get(get_battle))
        .route("/battles/{id}/turns", post(turn))
        .route("/battles/{id}/judgment", post(judgment))
        .route("/leaderboard", get(leaderboard))
        .route("/matrices", get(matrices))
        .route("/demographics", get(demographics))
        .route("/correlations", get(correlations))
        .route("/export", get(export))
        .route("/admin/benchmarks", post(admin_benchmarks))
        .route("/admin/ban/{participant}", post(admin_ban))
        .route("/admin/unban/{participant}", post(admin_unban))
        .route("/admin/recompute", post(admin_recompute))
        .route("/admin/flags", get(admin_flags))
        .with_state(arena)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub struct ApiError(StatusCode, String);

impl ApiError {
    fn new(status: StatusCode, msg: impl Into<String>) -> Self {
        Self(status, msg.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

fn domain_error_status(e: &DomainError) -> StatusCode {
    match e {
        DomainError::DuplicateUsername(_) => StatusCode::CONFLICT,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

pub fn status_of(e: &ServiceError) -> StatusCode {
    use ServiceError::*;
    match e {
        Registration(d) => domain_error_status(d),
        UnknownParticipant(_) | UnknownBattle(_) | UnknownModel(_) => StatusCode::NOT_FOUND,
        Banned | NotOwner => StatusCode::FORBIDDEN,
        BattleClosed | Degraded | TurnInProgress => StatusCode::CONFLICT,
        Commit(CommitError::InvalidJudgment(_)) | Commit(CommitError::NoTurns) => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        Commit(CommitError::WrongParticipant) => StatusCode::FORBIDDEN,
        Commit(_) => StatusCode::CONFLICT,
        EmptyMessage | MessageTooLong(..) | TurnLimit(_) | Benchmarks(_) => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        Backend { .. } => StatusCode::GATEWAY_TIMEOUT,
        NotReady | Pairing(_) => StatusCode::SERVICE_UNAVAILABLE,
        Config(_) | Storage(_) | Job(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(status_of(&e), e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn authorize(arena: &Arena, headers: &HeaderMap) -> ApiResult<()> {
    let Some(expected) = arena.config().admin_token.as_deref() else {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "admin endpoints are disabled"));
    };
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    match given {
        Some(t) if t == expected => Ok(()),
        _ => Err(ApiError::new(StatusCode::UNAUTHORIZED, "missing or wrong admin token")),
    }
}

async fn health(State(arena): State<Arc<Arena>>) -> impl IntoResponse {
    Json(arena.health().await)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Registered {
    pub participant_id: ParticipantId,
    pub username: String,
}

async fn register(
    State(arena): State<Arc<Arena>>,
    Json(req): Json<RegistrationRequest>,
) -> ApiResult<(StatusCode, Json<Registered>)> {
    let p = arena.register(req).await?;
    Ok((
        StatusCode::CREATED,
        Json(Registered {
            participant_id: p.participant_id,
            username: p.username,
        }),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ParticipantBody {
    pub participant_id: ParticipantId,
}

async fn new_battle(
    State(arena): State<Arc<Arena>>,
    Json(body): Json<ParticipantBody>,
) -> ApiResult<impl IntoResponse> {
    let view = arena.new_chat(&body.participant_id).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_battle(
    State(arena): State<Arc<Arena>>,
    Path(id): Path<u64>,
    Query(q): Query<ParticipantBody>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(arena.battle_view(&q.participant_id, BattleId(id)).await?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TurnBody {
    pub participant_id: ParticipantId,
    pub message: String,
}

/// One line of the streamed turn response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TurnLine {
    Chunk(TurnChunk),
    Done { response_a: String, response_b: String },
    Error { status: u16, error: String },
}

fn ndjson_line<T: Serialize>(v: &T) -> Bytes {
    let mut line = serde_json::to_vec(v).expect("serializable");
    line.push(b'\n');
    Bytes::from(line)
}

/// Streams newline-delimited JSON: chunk lines as both answers arrive,
/// then a single `done` or `error` line.
async fn turn(
    State(arena): State<Arc<Arena>>,
    Path(id): Path<u64>,
    Json(body): Json<TurnBody>,
) -> ApiResult<Response> {
    let battle_id = BattleId(id);
    arena
        .precheck_turn(&body.participant_id, battle_id, &body.message)
        .await?;
    let (chunk_tx, mut chunk_rx) = mpsc::unbounded_channel::<TurnChunk>();
    let (line_tx, line_rx) = mpsc::unbounded_channel::<Result<Bytes, std::convert::Infallible>>();
    let forward_tx = line_tx.clone();
    let forward = tokio::spawn(async move {
        while let Some(c) = chunk_rx.recv().await {
            let _ = forward_tx.send(Ok(ndjson_line(&TurnLine::Chunk(c))));
        }
    });
    // the turn runs to completion even if the client goes away
    tokio::spawn(async move {
        let result = arena
            .relay_turn(&body.participant_id, battle_id, &body.message, Some(chunk_tx))
            .await;
        let _ = forward.await;
        let last = match result {
            Ok(t) => TurnLine::Done {
                response_a: t.response_a,
                response_b: t.response_b,
            },
            Err(e) => TurnLine::Error {
                status: status_of(&e).as_u16(),
                error: e.to_string(),
            },
        };
        let _ = line_tx.send(Ok(ndjson_line(&last)));
    });
    let stream = futures::stream::unfold(line_rx, |mut rx| async move {
        rx.recv().await.map(|item| (item, rx))
    });
    Ok(Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .body(Body::from_stream(stream))
        .expect("static response parts"))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JudgmentBody {
    pub participant_id: ParticipantId,
    pub content: Choice,
    pub language: Choice,
    #[serde(default)]
    pub overall: Option<Choice>,
}

async fn judgment(
    State(arena): State<Arc<Arena>>,
    Path(id): Path<u64>,
    Json(body): Json<JudgmentBody>,
) -> ApiResult<impl IntoResponse> {
    let j = Judgment::new(body.content, body.language, body.overall);
    Ok(Json(
        arena
            .submit_judgment(&body.participant_id, BattleId(id), j)
            .await?,
    ))
}

#[derive(Debug, Default, Deserialize)]
pub struct TableQuery {
    #[serde(default)]
    pub dimension: Option<String>,
    #[serde(default)]
    pub format: Option<String>,
}

impl TableQuery {
    fn dimension(&self) -> ApiResult<Dimension> {
        match &self.dimension {
            None => Ok(Dimension::Global),
            Some(d) => Dimension::from_str(d)
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string())),
        }
    }

    fn csv(&self) -> ApiResult<bool> {
        match self.format.as_deref() {
            None | Some("json") => Ok(false),
            Some("csv") => Ok(true),
            Some(other) => Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("unknown format {other:?}"),
            )),
        }
    }
}

fn csv_response(body: String) -> Response {
    ([(header::CONTENT_TYPE, "text/csv")], body).into_response()
}

async fn leaderboard(
    State(arena): State<Arc<Arena>>,
    Query(q): Query<TableQuery>,
) -> ApiResult<Response> {
    let dim = q.dimension()?;
    let agg = arena.aggregates()?;
    let Some(result) = agg.leaderboards.get(&dim) else {
        return Err(ServiceError::NotReady.into());
    };
    let Some(board) = result.board() else {
        return Ok((StatusCode::UNPROCESSABLE_ENTITY, Json(result)).into_response());
    };
    if q.csv()? {
        return Ok(csv_response(csv_string(|b| write_leaderboard(board, b))));
    }
    Ok(Json(board).into_response())
}

async fn matrices(
    State(arena): State<Arc<Arena>>,
    Query(q): Query<TableQuery>,
) -> ApiResult<Response> {
    let dim = q.dimension()?;
    let agg = arena.aggregates()?;
    let m = agg.matrices.get(&dim).ok_or(ServiceError::NotReady)?;
    if q.csv()? {
        return Ok(csv_response(csv_string(|b| write_matrix(m, b))));
    }
    Ok(Json(m).into_response())
}

async fn demographics(State(arena): State<Arc<Arena>>) -> ApiResult<impl IntoResponse> {
    Ok(Json(arena.aggregates()?.demographics.clone()))
}

async fn correlations(
    State(arena): State<Arc<Arena>>,
    Query(q): Query<TableQuery>,
) -> ApiResult<Response> {
    let agg = arena.aggregates()?;
    if q.csv()? {
        return Ok(csv_response(csv_string(|b| write_correlations(&agg.correlations, b))));
    }
    Ok(Json(agg.correlations.clone()).into_response())
}

#[derive(Debug, Default, Deserialize)]
pub struct ExportQuery {
    #[serde(default)]
    pub cc0: Option<bool>,
}

/// `cc0=true` (the default) is the public release with banned participants
/// removed; the unfiltered dump is admin-only.
async fn export(
    State(arena): State<Arc<Arena>>,
    headers: HeaderMap,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    let public = q.cc0.unwrap_or(true);
    if !public {
        authorize(&arena, &headers)?;
    }
    let records = arena.export(public).await;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], to_jsonl(&records)).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Ingested {
    pub rows: usize,
}

async fn admin_benchmarks(
    State(arena): State<Arc<Arena>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    authorize(&arena, &headers)?;
    let scores = read_benchmarks(&body[..])
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("schema error: {e}")))?;
    let rows = arena.ingest_benchmarks(scores).await?;
    Ok(Json(Ingested { rows }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BanResult {
    pub participant_id: ParticipantId,
    pub banned: bool,
    pub changed: bool,
}

async fn admin_ban(
    State(arena): State<Arc<Arena>>,
    headers: HeaderMap,
    Path(p): Path<String>,
) -> ApiResult<impl IntoResponse> {
    authorize(&arena, &headers)?;
    let id = ParticipantId(p);
    let changed = arena.ban(&id).await?;
    Ok(Json(BanResult {
        participant_id: id,
        banned: true,
        changed,
    }))
}

async fn admin_unban(
    State(arena): State<Arc<Arena>>,
    headers: HeaderMap,
    Path(p): Path<String>,
) -> ApiResult<impl IntoResponse> {
    authorize(&arena, &headers)?;
    let id = ParticipantId(p);
    let changed = arena.unban(&id).await?;
    Ok(Json(BanResult {
        participant_id: id,
        banned: false,
        changed,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Recomputed {
    pub seq: u64,
}

async fn admin_recompute(
    State(arena): State<Arc<Arena>>,
    headers: HeaderMap,
) -> ApiResult<impl IntoResponse> {
    authorize(&arena, &headers)?;
    let agg = arena.recompute().await?;
    Ok(Json(Recomputed { seq: agg.seq }))
}

async fn admin_flags(
    State(arena): State<Arc<Arena>>,
    headers: HeaderMap,
    Query(q): Query<TableQuery>,
) -> ApiResult<Response> {
    authorize(&arena, &headers)?;
    let agg = arena.aggregates()?;
    if q.csv()? {
        return Ok(csv_response(csv_string(|b| write_flags(&agg.flags, b))));
    }
    Ok(Json(agg.flags.clone()).into_response())
}
