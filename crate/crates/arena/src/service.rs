//! The arena itself: registration, battles, judgments, bans and aggregates,
//! all persisted through the event log.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::{Arc, Mutex as SyncMutex, RwLock};
use std::time::Duration;

use arena_core::analytics::{validate_scores, AnalyticsError, BenchmarkSuite};
use arena_core::domain::{
    BattleId, BattleStatus, BenchmarkScore, DomainError, Judgment, ModelId, Participant,
    ParticipantId, RegistrationRequest, SamplingConfig, Slot, Turn, validate_registration,
};
use arena_core::moderation::{degrade_response, schedule_control};
use arena_core::pairing::{assign_slots, sample_pair, PairingConfig, PairingError};
use arena_core::preference::{check_commit, CommitError};
use arena_core::ranking::FitConfig;
use arena_core::rng::{mix_seed, stream_rng};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{mpsc, Mutex};

use crate::aggregate::{compute_aggregates, AggregateConfig, AggregateInput, Aggregates};
use crate::backend::{
    BackendError, ChatBackend, ChatMessage, ChatRequest, Endpoint, HttpBackend, MockBackend,
};
use crate::clock::Clock;
use crate::config::{ArenaConfig, ConfigError};
use crate::events::{ConfigChange, Event, EventLog, EventLogEntry, StorageError};
use crate::export::{export_records, ExportRecord};
use crate::state::ArenaState;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("registration rejected: {0}")]
    Registration(#[from] DomainError),
    #[error("unknown participant {0}")]
    UnknownParticipant(ParticipantId),
    #[error("participant is banned")]
    Banned,
    #[error("unknown battle {0}")]
    UnknownBattle(BattleId),
    #[error("battle belongs to another participant")]
    NotOwner,
    #[error("battle is no longer open")]
    BattleClosed,
    #[error("battle is degraded after a backend failure")]
    Degraded,
    #[error("battle already has {0} turns")]
    TurnLimit(usize),
    #[error("message must not be empty")]
    EmptyMessage,
    #[error("message has {0} characters, limit is {1}")]
    MessageTooLong(usize, usize),
    #[error("a turn is already in progress for this battle")]
    TurnInProgress,
    #[error("backend for slot {slot:?} failed: {error}")]
    Backend { slot: Slot, error: BackendError },
    #[error(transparent)]
    Commit(#[from] CommitError),
    #[error(transparent)]
    Pairing(#[from] PairingError),
    #[error(transparent)]
    Benchmarks(#[from] AnalyticsError),
    #[error("unknown model {0}")]
    UnknownModel(ModelId),
    #[error("aggregates have not been computed yet")]
    NotReady,
    #[error("aggregate job failed: {0}")]
    Job(String),
}

/// One streamed piece of a slot's answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnChunk {
    pub slot: Slot,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealedModel {
    pub model_id: ModelId,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reveal {
    pub slot_a: RevealedModel,
    pub slot_b: RevealedModel,
}

/// What a participant may see of a battle. Model identities only show up
/// in `reveal`, which stays empty until the judgment is committed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BattleView {
    pub battle_id: BattleId,
    pub status: BattleStatus,
    pub degraded: bool,
    pub turns: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reveal: Option<Reveal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub models: usize,
    pub active_models: usize,
    pub last_seq: u64,
    pub participants: usize,
    pub battles: usize,
    pub records: usize,
    pub aggregates_seq: Option<u64>,
}

/// Outcome of opening the storage directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenReport {
    pub replayed: usize,
    pub truncated_bytes: u64,
}

#[derive(Debug, Clone)]
struct ModelEntry {
    model_id: ModelId,
    display_name: String,
    configured_active: bool,
}

struct Store {
    log: EventLog,
    state: ArenaState,
}

impl Store {
    fn commit(&mut self, now: arena_core::domain::Timestamp, event: Event) -> Result<EventLogEntry, StorageError> {
        let entry = self.log.append(now, event)?;
        self.state.apply(&entry);
        if self.log.snapshot_due() {
            self.log.write_snapshot(&self.state)?;
        }
        Ok(entry)
    }
}

/// Marks a battle as having a turn in flight; released on drop.
struct BusyGuard {
    set: Arc<SyncMutex<BTreeSet<BattleId>>>,
    id: BattleId,
}

impl BusyGuard {
    fn acquire(set: &Arc<SyncMutex<BTreeSet<BattleId>>>, id: BattleId) -> Option<Self> {
        let mut s = set.lock().expect("busy set poisoned");
        s.insert(id).then(|| BusyGuard {
            set: set.clone(),
            id,
        })
    }
}

impl Drop for BusyGuard {
    fn drop(&mut self) {
        if let Ok(mut s) = self.set.lock() {
            s.remove(&self.id);
        }
    }
}

pub struct Arena {
    config: ArenaConfig,
    sampling: SamplingConfig,
    models: Vec<ModelEntry>,
    endpoints: BTreeMap<ModelId, Arc<Endpoint>>,
    clock: Arc<dyn Clock>,
    store: Mutex<Store>,
    busy: Arc<SyncMutex<BTreeSet<BattleId>>>,
    aggregates: RwLock<Option<Arc<Aggregates>>>,
    recompute_gate: Mutex<()>,
}

impl Arena {
    /// Builds the backends named in the config and recovers state from
    /// `config.storage_path`.
    pub fn open(config: ArenaConfig, clock: Arc<dyn Clock>) -> Result<(Self, OpenReport), ServiceError> {
        Self::open_with(config, clock, BTreeMap::new())
    }

    /// Like [`Arena::open`], but models listed in `overrides` are served by
    /// the given backends instead of the configured ones.
    pub fn open_with(
        config: ArenaConfig,
        clock: Arc<dyn Clock>,
        mut overrides: BTreeMap<ModelId, Arc<dyn ChatBackend>>,
    ) -> Result<(Self, OpenReport), ServiceError> {
        config.validate()?;
        let mut models = Vec::new();
        let mut endpoints = BTreeMap::new();
        for b in &config.backends {
            let id = ModelId::from(b.model_id.as_str());
            let inner: Arc<dyn ChatBackend> = match (overrides.remove(&id), &b.mock, &b.base_url) {
                (Some(o), _, _) => o,
                (None, Some(profile), _) => Arc::new(MockBackend::new(profile.clone())),
                (None, None, Some(url)) => Arc::new(HttpBackend::new(url)),
                (None, None, None) => return Err(ConfigError::NoEndpoint(b.model_id.clone()).into()),
            };
            let endpoint = Endpoint::new(
                b.backend_id(),
                b.model_name(),
                Duration::from_millis(b.timeout_ms),
                b.max_concurrent,
                inner,
            );
            endpoints.insert(id.clone(), Arc::new(endpoint));
            models.push(ModelEntry {
                model_id: id,
                display_name: b.display_name().to_string(),
                configured_active: b.active,
            });
        }
        models.sort_by(|a, b| a.model_id.cmp(&b.model_id));
        let recovered = EventLog::open(&config.storage_path, ArenaState::default(), config.snapshot_every)?;
        let report = OpenReport {
            replayed: recovered.replayed,
            truncated_bytes: recovered.truncated_bytes,
        };
        let arena = Self {
            sampling: config.sampling_config(),
            config,
            models,
            endpoints,
            clock,
            store: Mutex::new(Store {
                log: recovered.log,
                state: recovered.state,
            }),
            busy: Arc::new(SyncMutex::new(BTreeSet::new())),
            aggregates: RwLock::new(None),
            recompute_gate: Mutex::new(()),
        };
        Ok((arena, report))
    }

    pub fn config(&self) -> &ArenaConfig {
        &self.config
    }

    pub fn storage_path(&self) -> &Path {
        &self.config.storage_path
    }

    pub fn registry(&self) -> Vec<ModelId> {
        self.models.iter().map(|m| m.model_id.clone()).collect()
    }

    pub fn endpoint(&self, model: &ModelId) -> Option<&Arc<Endpoint>> {
        self.endpoints.get(model)
    }

    fn display_name(&self, model: &ModelId) -> String {
        self.models
            .iter()
            .find(|m| &m.model_id == model)
            .map(|m| m.display_name.clone())
            .unwrap_or_else(|| model.to_string())
    }

    fn active_models(&self, state: &ArenaState) -> Vec<ModelId> {
        self.models
            .iter()
            .filter(|m| m.configured_active && !state.inactive.contains(&m.model_id))
            .map(|m| m.model_id.clone())
            .collect()
    }

    /// A copy of the current in-memory state.
    pub async fn state(&self) -> ArenaState {
        self.store.lock().await.state.clone()
    }

    /// Flushes and fsyncs the log.
    pub async fn sync(&self) -> Result<(), ServiceError> {
        Ok(self.store.lock().await.log.sync()?)
    }

    pub async fn write_snapshot(&self) -> Result<(), ServiceError> {
        let mut store = self.store.lock().await;
        let Store { log, state } = &mut *store;
        Ok(log.write_snapshot(state)?)
    }

    pub async fn register(&self, req: RegistrationRequest) -> Result<Participant, ServiceError> {
        let mut store = self.store.lock().await;
        let now = self.clock.now();
        let participant = validate_registration(&req, store.state.next_participant_id(), now, |u| {
            store.state.usernames.contains(u)
        })?;
        store.commit(
            now,
            Event::Registration {
                participant: participant.clone(),
            },
        )?;
        Ok(participant)
    }

    fn participant<'s>(state: &'s ArenaState, id: &ParticipantId) -> Result<&'s Participant, ServiceError> {
        let p = state
            .participants
            .get(id)
            .ok_or_else(|| ServiceError::UnknownParticipant(id.clone()))?;
        if state.is_banned(id) {
            return Err(ServiceError::Banned);
        }
        Ok(p)
    }

    /// Starts a fresh battle, discarding the participant's open one.
    pub async fn new_chat(&self, participant_id: &ParticipantId) -> Result<BattleView, ServiceError> {
        let mut store = self.store.lock().await;
        Self::participant(&store.state, participant_id)?;
        let state = &store.state;
        let mut rng = stream_rng(mix_seed(self.config.seed, store.log.next_seq()), 0);
        let pair = sample_pair(
            &mut rng,
            &self.active_models(state),
            state.last_pair.get(participant_id),
            &state.pair_counts,
            &PairingConfig {
                balance_probability: self.config.balance_probability,
            },
        )?;
        let (slot_a, slot_b) = assign_slots(&mut rng, &pair);
        let control_slot = schedule_control(&mut rng, self.config.control_rate)
            .then(|| if rng.gen_bool(0.5) { Slot::A } else { Slot::B });
        let battle_id = state.next_battle_id();
        let discarded = state.open_battle.get(participant_id).copied();
        store.commit(
            self.clock.now(),
            Event::BattleCreated {
                battle_id,
                participant_id: participant_id.clone(),
                slot_a,
                slot_b,
                control_slot,
                discarded,
            },
        )?;
        Ok(self.view(&store.state, battle_id))
    }

    fn view(&self, state: &ArenaState, id: BattleId) -> BattleView {
        let b = &state.battles[&id];
        let reveal = (b.status == BattleStatus::Judged).then(|| Reveal {
            slot_a: RevealedModel {
                model_id: b.slot_a.clone(),
                display_name: self.display_name(&b.slot_a),
            },
            slot_b: RevealedModel {
                model_id: b.slot_b.clone(),
                display_name: self.display_name(&b.slot_b),
            },
        });
        BattleView {
            battle_id: id,
            status: b.status,
            degraded: b.degraded,
            turns: b.turns.clone(),
            reveal,
        }
    }

    pub async fn battle_view(
        &self,
        participant_id: &ParticipantId,
        battle_id: BattleId,
    ) -> Result<BattleView, ServiceError> {
        let store = self.store.lock().await;
        let b = store
            .state
            .battles
            .get(&battle_id)
            .ok_or(ServiceError::UnknownBattle(battle_id))?;
        if &b.participant_id != participant_id {
            return Err(ServiceError::NotOwner);
        }
        Ok(self.view(&store.state, battle_id))
    }

    fn check_message(&self, message: &str) -> Result<(), ServiceError> {
        if message.trim().is_empty() {
            return Err(ServiceError::EmptyMessage);
        }
        let chars = message.chars().count();
        if chars > self.config.max_message_chars {
            return Err(ServiceError::MessageTooLong(chars, self.config.max_message_chars));
        }
        Ok(())
    }

    fn turnable<'s>(
        &self,
        state: &'s ArenaState,
        participant_id: &ParticipantId,
        battle_id: BattleId,
    ) -> Result<&'s arena_core::domain::Battle, ServiceError> {
        Self::participant(state, participant_id)?;
        let battle = state
            .battles
            .get(&battle_id)
            .ok_or(ServiceError::UnknownBattle(battle_id))?;
        if &battle.participant_id != participant_id {
            return Err(ServiceError::NotOwner);
        }
        if !battle.is_open() {
            return Err(ServiceError::BattleClosed);
        }
        if battle.degraded {
            return Err(ServiceError::Degraded);
        }
        if battle.turns.len() >= self.config.max_turns {
            return Err(ServiceError::TurnLimit(battle.turns.len()));
        }
        Ok(battle)
    }

    /// The checks [`Arena::relay_turn`] starts with, without calling any
    /// backend. Lets the HTTP layer answer with a status code before it
    /// commits to a streamed body.
    pub async fn precheck_turn(
        &self,
        participant_id: &ParticipantId,
        battle_id: BattleId,
        message: &str,
    ) -> Result<(), ServiceError> {
        self.check_message(message)?;
        let store = self.store.lock().await;
        self.turnable(&store.state, participant_id, battle_id)?;
        if self.busy.lock().expect("busy set poisoned").contains(&battle_id) {
            return Err(ServiceError::TurnInProgress);
        }
        Ok(())
    }

    /// Sends `message` to both models of the battle and records the turn.
    ///
    /// Each slot sees the rendered system prompt, its own previous answers
    /// and the new message. Chunks are pushed to `sink` as they arrive.
    pub async fn relay_turn(
        &self,
        participant_id: &ParticipantId,
        battle_id: BattleId,
        message: &str,
        sink: Option<mpsc::UnboundedSender<TurnChunk>>,
    ) -> Result<Turn, ServiceError> {
        self.check_message(message)?;
        let _busy = BusyGuard::acquire(&self.busy, battle_id).ok_or(ServiceError::TurnInProgress)?;

        let (requests, control_slot, endpoints) = {
            let store = self.store.lock().await;
            let battle = self.turnable(&store.state, participant_id, battle_id)?;
            let system = self
                .sampling
                .system_prompt(self.clock.now().date())
                .map_err(ServiceError::Registration)?;
            let mut requests = Vec::with_capacity(2);
            let mut endpoints = Vec::with_capacity(2);
            for slot in [Slot::A, Slot::B] {
                let model = battle.model_in(slot);
                let endpoint = self
                    .endpoints
                    .get(model)
                    .ok_or_else(|| ServiceError::UnknownModel(model.clone()))?
                    .clone();
                let mut messages = vec![ChatMessage::new("system", system.clone())];
                for t in &battle.turns {
                    messages.push(ChatMessage::new("user", t.user_message.clone()));
                    messages.push(ChatMessage::new("assistant", t.response(slot).to_string()));
                }
                messages.push(ChatMessage::new("user", message));
                requests.push(ChatRequest {
                    model: endpoint.model_name.clone(),
                    messages,
                    temperature: self.sampling.temperature,
                    top_p: self.sampling.top_p,
                    stream: true,
                });
                endpoints.push(endpoint);
            }
            (requests, battle.control_slot.filter(|_| battle.is_control), endpoints)
        };

        let mut req = requests.into_iter();
        let (req_a, req_b) = (req.next().expect("two requests"), req.next().expect("two requests"));
        let (res_a, res_b) = tokio::join!(
            relay_slot(&endpoints[0], req_a, Slot::A, control_slot, sink.clone()),
            relay_slot(&endpoints[1], req_b, Slot::B, control_slot, sink),
        );

        let mut store = self.store.lock().await;
        let still_open = store
            .state
            .battles
            .get(&battle_id)
            .is_some_and(|b| b.is_open());
        if !still_open {
            return Err(ServiceError::BattleClosed);
        }
        let now = self.clock.now();
        let (response_a, response_b) = match (res_a, res_b) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(error), _) | (_, Err(error)) => {
                let (slot, error) = error;
                store.commit(
                    now,
                    Event::Turn {
                        battle_id,
                        turn: None,
                        timed_out: Some(slot),
                    },
                )?;
                return Err(ServiceError::Backend { slot, error });
            }
        };
        let turn = Turn {
            user_message: message.to_string(),
            response_a,
            response_b,
        };
        store.commit(
            now,
            Event::Turn {
                battle_id,
                turn: Some(turn.clone()),
                timed_out: None,
            },
        )?;
        Ok(turn)
    }

    /// Commits a judgment and reveals the two models.
    pub async fn submit_judgment(
        &self,
        participant_id: &ParticipantId,
        battle_id: BattleId,
        judgment: Judgment,
    ) -> Result<BattleView, ServiceError> {
        let mut store = self.store.lock().await;
        let participant = Self::participant(&store.state, participant_id)?.clone();
        let battle = store
            .state
            .battles
            .get(&battle_id)
            .ok_or(ServiceError::UnknownBattle(battle_id))?;
        if self.busy.lock().expect("busy set poisoned").contains(&battle_id) {
            return Err(ServiceError::TurnInProgress);
        }
        check_commit(battle, &judgment, &participant)?;
        store.commit(self.clock.now(), Event::Judgment { battle_id, judgment })?;
        Ok(self.view(&store.state, battle_id))
    }

    pub async fn ban(&self, participant_id: &ParticipantId) -> Result<bool, ServiceError> {
        self.set_banned(participant_id, true).await
    }

    pub async fn unban(&self, participant_id: &ParticipantId) -> Result<bool, ServiceError> {
        self.set_banned(participant_id, false).await
    }

    /// Returns whether anything changed.
    async fn set_banned(&self, participant_id: &ParticipantId, banned: bool) -> Result<bool, ServiceError> {
        let mut store = self.store.lock().await;
        if !store.state.participants.contains_key(participant_id) {
            return Err(ServiceError::UnknownParticipant(participant_id.clone()));
        }
        if store.state.is_banned(participant_id) == banned {
            return Ok(false);
        }
        let participant_id = participant_id.clone();
        let event = if banned {
            Event::Ban { participant_id }
        } else {
            Event::Unban { participant_id }
        };
        store.commit(self.clock.now(), event)?;
        Ok(true)
    }

    /// Replaces the benchmark table after validating it.
    pub async fn ingest_benchmarks(&self, scores: Vec<BenchmarkScore>) -> Result<usize, ServiceError> {
        let scores = validate_scores(scores)?;
        let n = scores.len();
        let mut store = self.store.lock().await;
        store.commit(
            self.clock.now(),
            Event::ConfigChange {
                change: ConfigChange::Benchmarks { scores },
            },
        )?;
        Ok(n)
    }

    pub async fn set_model_active(&self, model_id: &ModelId, active: bool) -> Result<(), ServiceError> {
        if !self.endpoints.contains_key(model_id) {
            return Err(ServiceError::UnknownModel(model_id.clone()));
        }
        let mut store = self.store.lock().await;
        store.commit(
            self.clock.now(),
            Event::ConfigChange {
                change: ConfigChange::ModelActive {
                    model_id: model_id.clone(),
                    active,
                },
            },
        )?;
        Ok(())
    }

    pub fn aggregate_config(&self) -> AggregateConfig {
        AggregateConfig {
            fit: FitConfig {
                resamples: self.config.bootstrap_resamples,
                confidence: self.config.confidence,
                seed: self.config.seed,
                ..FitConfig::default()
            },
            suite: BenchmarkSuite::default(),
            moderation: self.config.moderation.clone(),
        }
    }

    pub async fn aggregate_input(&self) -> AggregateInput {
        let store = self.store.lock().await;
        let s = &store.state;
        AggregateInput {
            seq: s.last_seq,
            registry: self.registry(),
            records: s.records.clone(),
            banned: s.banned.clone(),
            participants: s.participants.values().cloned().collect(),
            activity: s.activity.clone(),
            benchmarks: s.benchmarks.clone(),
        }
    }

    /// Recomputes every aggregate from the current records and ban set. The
    /// heavy part runs on the blocking pool.
    pub async fn recompute(&self) -> Result<Arc<Aggregates>, ServiceError> {
        let _gate = self.recompute_gate.lock().await;
        let input = self.aggregate_input().await;
        let cfg = self.aggregate_config();
        let aggregates = tokio::task::spawn_blocking(move || compute_aggregates(&input, &cfg))
            .await
            .map_err(|e| ServiceError::Job(e.to_string()))?;
        let aggregates = Arc::new(aggregates);
        *self.aggregates.write().expect("aggregate lock poisoned") = Some(aggregates.clone());
        Ok(aggregates)
    }

    /// The last computed aggregates.
    pub fn aggregates(&self) -> Result<Arc<Aggregates>, ServiceError> {
        self.aggregates
            .read()
            .expect("aggregate lock poisoned")
            .clone()
            .ok_or(ServiceError::NotReady)
    }

    /// Judged, non-control battles as dataset lines.
    pub async fn export(&self, ban_filter: bool) -> Vec<ExportRecord> {
        let store = self.store.lock().await;
        export_records(&store.state, ban_filter)
    }

    pub async fn health(&self) -> Health {
        let store = self.store.lock().await;
        let s = &store.state;
        Health {
            status: "ready".to_string(),
            models: self.models.len(),
            active_models: self.active_models(s).len(),
            last_seq: s.last_seq,
            participants: s.participants.len(),
            battles: s.battles.len(),
            records: s.records.len(),
            aggregates_seq: self.aggregates().ok().map(|a| a.seq),
        }
    }
}

type SlotResult = Result<String, (Slot, BackendError)>;

/// Runs one slot's request, forwarding chunks tagged with the slot. The
/// control slot is withheld until complete and then served degraded.
async fn relay_slot(
    endpoint: &Endpoint,
    req: ChatRequest,
    slot: Slot,
    control: Option<Slot>,
    sink: Option<mpsc::UnboundedSender<TurnChunk>>,
) -> SlotResult {
    let is_control = control == Some(slot);
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    let forward_to = if is_control { None } else { sink.clone() };
    let call = endpoint.call(req, Some(tx));
    let forward = async {
        while let Some(text) = rx.recv().await {
            if let Some(s) = &forward_to {
                let _ = s.send(TurnChunk { slot, text });
            }
        }
    };
    let (result, ()) = tokio::join!(call, forward);
    let text = result.map_err(|e| (slot, e))?;
    if !is_control {
        return Ok(text);
    }
    let degraded = degrade_response(&text);
    if let Some(s) = &sink {
        let _ = s.send(TurnChunk {
            slot,
            text: degraded.clone(),
        });
    }
    Ok(degraded)
}
