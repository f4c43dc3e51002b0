//! How the harness talks to an arena: in process through [`Arena`], or over
//! HTTP against a running server. Both go through the public API only.

use std::future::Future;
use std::sync::Arc;

use arena_core::domain::{
    BattleId, Dimension, Judgment, ParticipantId, RegistrationRequest, Timestamp, Turn,
};
use arena_core::moderation::Flag;
use arena_core::ranking::PairMatrix;
use thiserror::Error;

use crate::aggregate::BoardResult;
use crate::clock::ManualClock;
use crate::export::{read_jsonl, ExportRecord};
use crate::http::{ErrorBody, Registered, TurnLine};
use crate::service::{Arena, BattleView, ServiceError};

#[derive(Debug, Error)]
pub enum ClientError {
    /// A model backend failed; the battle is void.
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("service error: {0}")]
    Service(String),
    #[error("transport error: {0}")]
    Transport(String),
}

impl From<ServiceError> for ClientError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Backend { .. } => ClientError::Backend(e.to_string()),
            other => ClientError::Service(other.to_string()),
        }
    }
}

impl From<reqwest::Error> for ClientError {
    fn from(e: reqwest::Error) -> Self {
        ClientError::Transport(e.to_string())
    }
}

pub type ClientResult<T> = Result<T, ClientError>;

pub trait ArenaClient: Sync {
    /// Moves the arena's clock; the harness owns time.
    fn set_time(&self, t: Timestamp);
    fn register(&self, req: &RegistrationRequest) -> impl Future<Output = ClientResult<ParticipantId>> + Send;
    fn new_chat(&self, p: &ParticipantId) -> impl Future<Output = ClientResult<BattleView>> + Send;
    fn turn(
        &self,
        p: &ParticipantId,
        b: BattleId,
        message: &str,
    ) -> impl Future<Output = ClientResult<Turn>> + Send;
    fn judge(
        &self,
        p: &ParticipantId,
        b: BattleId,
        j: Judgment,
    ) -> impl Future<Output = ClientResult<BattleView>> + Send;
    fn ban(&self, p: &ParticipantId) -> impl Future<Output = ClientResult<()>> + Send;
    fn recompute(&self) -> impl Future<Output = ClientResult<()>> + Send;
    fn leaderboard(&self, d: Dimension) -> impl Future<Output = ClientResult<BoardResult>> + Send;
    fn matrix(&self, d: Dimension) -> impl Future<Output = ClientResult<PairMatrix>> + Send;
    fn flags(&self) -> impl Future<Output = ClientResult<Vec<Flag>>> + Send;
    fn export(&self) -> impl Future<Output = ClientResult<Vec<ExportRecord>>> + Send;
}

pub struct InProcessClient {
    pub arena: Arc<Arena>,
    pub clock: Arc<ManualClock>,
}

impl ArenaClient for InProcessClient {
    fn set_time(&self, t: Timestamp) {
        self.clock.set(t);
    }

    async fn register(&self, req: &RegistrationRequest) -> ClientResult<ParticipantId> {
        Ok(self.arena.register(req.clone()).await?.participant_id)
    }

    async fn new_chat(&self, p: &ParticipantId) -> ClientResult<BattleView> {
        Ok(self.arena.new_chat(p).await?)
    }

    async fn turn(&self, p: &ParticipantId, b: BattleId, message: &str) -> ClientResult<Turn> {
        Ok(self.arena.relay_turn(p, b, message, None).await?)
    }

    async fn judge(&self, p: &ParticipantId, b: BattleId, j: Judgment) -> ClientResult<BattleView> {
        Ok(self.arena.submit_judgment(p, b, j).await?)
    }

    async fn ban(&self, p: &ParticipantId) -> ClientResult<()> {
        self.arena.ban(p).await?;
        Ok(())
    }

    async fn recompute(&self) -> ClientResult<()> {
        self.arena.recompute().await?;
        Ok(())
    }

    async fn leaderboard(&self, d: Dimension) -> ClientResult<BoardResult> {
        let agg = self.arena.aggregates()?;
        agg.leaderboards
            .get(&d)
            .cloned()
            .ok_or_else(|| ClientError::Service(format!("no {d} leaderboard")))
    }

    async fn matrix(&self, d: Dimension) -> ClientResult<PairMatrix> {
        let agg = self.arena.aggregates()?;
        agg.matrices
            .get(&d)
            .cloned()
            .ok_or_else(|| ClientError::Service(format!("no {d} matrix")))
    }

    async fn flags(&self) -> ClientResult<Vec<Flag>> {
        Ok(self.arena.aggregates()?.flags.clone())
    }

    async fn export(&self) -> ClientResult<Vec<ExportRecord>> {
        Ok(self.arena.export(true).await)
    }
}

/// Talks to a server over its HTTP API. Time still comes from a shared
/// manual clock, so this only works against a server in the same process.
pub struct HttpClient {
    pub base: String,
    pub admin_token: String,
    pub clock: Arc<ManualClock>,
    http: reqwest::Client,
}

impl HttpClient {
    pub fn new(base: impl Into<String>, admin_token: impl Into<String>, clock: Arc<ManualClock>) -> Self {
        Self {
            base: base.into(),
            admin_token: admin_token.into(),
            clock,
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base.trim_end_matches('/'), path)
    }

    async fn json<T: serde::de::DeserializeOwned>(resp: reqwest::Response) -> ClientResult<T> {
        let status = resp.status();
        let bytes = resp.bytes().await?;
        if !status.is_success() {
            let msg = serde_json::from_slice::<ErrorBody>(&bytes)
                .map(|e| e.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&bytes).into_owned());
            return Err(ClientError::Service(format!("{status}: {msg}")));
        }
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Transport(e.to_string()))
    }

    fn admin(&self, req: reqwest::RequestBuilder) -> reqwest::RequestBuilder {
        req.bearer_auth(&self.admin_token)
    }
}

impl ArenaClient for HttpClient {
    fn set_time(&self, t: Timestamp) {
        self.clock.set(t);
    }

    async fn register(&self, req: &RegistrationRequest) -> ClientResult<ParticipantId> {
        let resp = self.http.post(self.url("/register")).json(req).send().await?;
        Ok(Self::json::<Registered>(resp).await?.participant_id)
    }

    async fn new_chat(&self, p: &ParticipantId) -> ClientResult<BattleView> {
        let resp = self
            .http
            .post(self.url("/battles"))
            .json(&serde_json::json!({ "participant_id": p }))
            .send()
            .await?;
        Self::json(resp).await
    }

    async fn turn(&self, p: &ParticipantId, b: BattleId, message: &str) -> ClientResult<Turn> {
        let resp = self
            .http
            .post(self.url(&format!("/battles/{b}/turns")))
            .json(&serde_json::json!({ "participant_id": p, "message": message }))
            .send()
            .await?;
        if !resp.status().is_success() {
            return Self::json::<Turn>(resp).await;
        }
        let body = resp.text().await?;
        for line in body.lines().rev() {
            match serde_json::from_str::<TurnLine>(line) {
                Ok(TurnLine::Done {
                    response_a,
                    response_b,
                }) => {
                    return Ok(Turn {
                        user_message: message.to_string(),
                        response_a,
                        response_b,
                    })
                }
                Ok(TurnLine::Error { status: 504, error }) => return Err(ClientError::Backend(error)),
                Ok(TurnLine::Error { error, .. }) => return Err(ClientError::Service(error)),
                Ok(TurnLine::Chunk(_)) => break,
                Err(e) => return Err(ClientError::Transport(e.to_string())),
            }
        }
        Err(ClientError::Transport("turn stream ended without a result".into()))
    }

    async fn judge(&self, p: &ParticipantId, b: BattleId, j: Judgment) -> ClientResult<BattleView> {
        let resp = self
            .http
            .post(self.url(&format!("/battles/{b}/judgment")))
            .json(&serde_json::json!({
                "participant_id": p,
                "content": j.content_choice,
                "language": j.language_choice,
                "overall": j.overall_choice,
            }))
            .send()
            .await?;
        Self::json(resp).await
    }

    async fn ban(&self, p: &ParticipantId) -> ClientResult<()> {
        let resp = self.admin(self.http.post(self.url(&format!("/admin/ban/{p}")))).send().await?;
        Self::json::<serde_json::Value>(resp).await.map(|_| ())
    }

    async fn recompute(&self) -> ClientResult<()> {
        let resp = self.admin(self.http.post(self.url("/admin/recompute"))).send().await?;
        Self::json::<serde_json::Value>(resp).await.map(|_| ())
    }

    async fn leaderboard(&self, d: Dimension) -> ClientResult<BoardResult> {
        let resp = self
            .http
            .get(self.url(&format!("/leaderboard?dimension={d}")))
            .send()
            .await?;
        if resp.status() == reqwest::StatusCode::UNPROCESSABLE_ENTITY {
            let bytes = resp.bytes().await?;
            return serde_json::from_slice(&bytes).map_err(|e| ClientError::Transport(e.to_string()));
        }
        Self::json(resp).await
    }

    async fn matrix(&self, d: Dimension) -> ClientResult<PairMatrix> {
        let resp = self
            .http
            .get(self.url(&format!("/matrices?dimension={d}")))
            .send()
            .await?;
        Self::json(resp).await
    }

    async fn flags(&self) -> ClientResult<Vec<Flag>> {
        let resp = self.admin(self.http.get(self.url("/admin/flags"))).send().await?;
        Self::json(resp).await
    }

    async fn export(&self) -> ClientResult<Vec<ExportRecord>> {
        let resp = self.http.get(self.url("/export?cc0=true")).send().await?;
        if !resp.status().is_success() {
            return Self::json(resp).await;
        }
        let body = resp.bytes().await?;
        read_jsonl(&body[..]).map_err(|e| ClientError::Transport(e.to_string()))
    }
}
