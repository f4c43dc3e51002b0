mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use arena::backend::{quality_marker, ChatBackend, MockProfile};
use arena::config::{ArenaConfig, BackendConfig, ConfigError};
use arena::service::{Arena, ServiceError};
use arena_core::domain::{
    BattleStatus, Choice, Dimension, DomainError, Judgment, ModelId, Slot,
};
use arena_core::preference::CommitError;
use common::*;

fn tie() -> Judgment {
    Judgment::new(Choice::Tie, Choice::Tie, None)
}

#[tokio::test]
async fn one_backend_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 2);
    cfg.backends.truncate(1);
    let clock = Arc::new(arena::clock::ManualClock::new(T0));
    assert!(matches!(
        Arena::open(cfg, clock),
        Err(ServiceError::Config(ConfigError::TooFewBackends(1)))
    ));
}

#[tokio::test]
async fn two_mocks_are_ready() {
    let dir = tempfile::tempdir().unwrap();
    let (arena, _) = open(config(dir.path(), 2));
    let h = arena.health().await;
    assert_eq!(h.status, "ready");
    assert_eq!((h.models, h.active_models, h.last_seq), (2, 2, 0));
    assert!(matches!(arena.aggregates(), Err(ServiceError::NotReady)));
}

#[tokio::test]
async fn registration_rules() {
    let dir = tempfile::tempdir().unwrap();
    let (arena, _) = open(config(dir.path(), 2));
    arena.register(registration("ane")).await.unwrap();
    let dup = arena.register(registration(" ane ")).await;
    assert!(matches!(dup, Err(ServiceError::Registration(DomainError::DuplicateUsername(_)))));
    let mut young = registration("mikel");
    young.age_attested = false;
    assert!(matches!(arena.register(young).await, Err(ServiceError::Registration(DomainError::UnderAge))));
    let mut anon = registration("jon");
    anon.education = None;
    assert!(matches!(
        arena.register(anon).await,
        Err(ServiceError::Registration(DomainError::MissingDemographics))
    ));
    assert_eq!(arena.health().await.participants, 1);
}

#[tokio::test]
async fn judged_battle_reveals_models_only_after_commit() {
    let dir = tempfile::tempdir().unwrap();
    let (arena, _) = open(config(dir.path(), 4));
    let p = arena.register(registration("ane")).await.unwrap().participant_id;
    let view = arena.new_chat(&p).await.unwrap();
    let turn = arena.relay_turn(&p, view.battle_id, "kaixo", None).await.unwrap();
    let before = arena.battle_view(&p, view.battle_id).await.unwrap();
    assert!(before.reveal.is_none());
    let text = serde_json::to_string(&before).unwrap();
    for m in arena.registry() {
        assert!(!text.contains(m.as_str()), "{m} leaked before commit");
    }
    assert_eq!(before.turns, vec![turn]);

    let after = arena.submit_judgment(&p, view.battle_id, tie()).await.unwrap();
    assert_eq!(after.status, BattleStatus::Judged);
    let reveal = after.reveal.expect("revealed");
    assert_ne!(reveal.slot_a.model_id, reveal.slot_b.model_id);
    let state = arena.state().await;
    let b = &state.battles[&view.battle_id];
    assert_eq!((&b.slot_a, &b.slot_b), (&reveal.slot_a.model_id, &reveal.slot_b.model_id));

    // a second commit is rejected
    assert!(matches!(
        arena.submit_judgment(&p, view.battle_id, tie()).await,
        Err(ServiceError::Commit(CommitError::BattleClosed))
    ));
}

#[tokio::test]
async fn commit_preconditions() {
    let dir = tempfile::tempdir().unwrap();
    let (arena, _) = open(config(dir.path(), 3));
    let p = arena.register(registration("ane")).await.unwrap().participant_id;
    let q = arena.register(registration("miren")).await.unwrap().participant_id;
    let b = arena.new_chat(&p).await.unwrap().battle_id;
    assert!(matches!(
        arena.submit_judgment(&p, b, tie()).await,
        Err(ServiceError::Commit(CommitError::NoTurns))
    ));
    arena.relay_turn(&p, b, "kaixo", None).await.unwrap();
    assert!(matches!(
        arena.submit_judgment(&q, b, tie()).await,
        Err(ServiceError::Commit(CommitError::WrongParticipant))
    ));
    assert!(matches!(arena.battle_view(&q, b).await, Err(ServiceError::NotOwner)));
    let conflicting = Judgment::new(Choice::A, Choice::B, None);
    assert!(matches!(
        arena.submit_judgment(&p, b, conflicting).await,
        Err(ServiceError::Commit(CommitError::InvalidJudgment(_)))
    ));
    assert!(matches!(
        arena.relay_turn(&p, b, "   ", None).await,
        Err(ServiceError::EmptyMessage)
    ));
    let long = "x".repeat(arena.config().max_message_chars + 1);
    assert!(matches!(
        arena.relay_turn(&p, b, &long, None).await,
        Err(ServiceError::MessageTooLong(_, _))
    ));
    let resolved = Judgment::new(Choice::A, Choice::B, Some(Choice::B));
    arena.submit_judgment(&p, b, resolved).await.unwrap();
    assert_eq!(arena.state().await.records.len(), 1);
}

#[tokio::test]
async fn turn_limit_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 2);
    cfg.max_turns = 2;
    let (arena, _) = open(cfg);
    let p = arena.register(registration("ane")).await.unwrap().participant_id;
    let b = arena.new_chat(&p).await.unwrap().battle_id;
    arena.relay_turn(&p, b, "bat", None).await.unwrap();
    arena.relay_turn(&p, b, "bi", None).await.unwrap();
    assert!(matches!(arena.relay_turn(&p, b, "hiru", None).await, Err(ServiceError::TurnLimit(2))));
}

#[tokio::test]
async fn new_chat_discards_the_open_battle() {
    let dir = tempfile::tempdir().unwrap();
    let (arena, _) = open(config(dir.path(), 3));
    let p = arena.register(registration("ane")).await.unwrap().participant_id;
    let first = arena.new_chat(&p).await.unwrap().battle_id;
    arena.relay_turn(&p, first, "kaixo", None).await.unwrap();
    let second = arena.new_chat(&p).await.unwrap().battle_id;
    assert_ne!(first, second);
    assert_eq!(arena.battle_view(&p, first).await.unwrap().status, BattleStatus::Discarded);
    assert!(matches!(
        arena.relay_turn(&p, first, "berriz", None).await,
        Err(ServiceError::BattleClosed)
    ));
    assert!(matches!(
        arena.submit_judgment(&p, first, tie()).await,
        Err(ServiceError::Commit(CommitError::BattleClosed))
    ));
}

#[tokio::test]
async fn each_slot_sees_only_its_own_history() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 2);
    let r0 = Recorder::new("zero");
    let r1 = Recorder::new("one");
    let mut overrides: BTreeMap<ModelId, Arc<dyn ChatBackend>> = BTreeMap::new();
    overrides.insert(ModelId::from("model-0"), r0.clone());
    overrides.insert(ModelId::from("model-1"), r1.clone());
    let (arena, _) = open_with(cfg, overrides);
    let p = arena.register(registration("ane")).await.unwrap().participant_id;
    let b = arena.new_chat(&p).await.unwrap().battle_id;
    for msg in ["lehena", "bigarrena", "hirugarrena"] {
        arena.relay_turn(&p, b, msg, None).await.unwrap();
    }
    let (q0, q1) = (r0.requests(), r1.requests());
    assert_eq!((q0.len(), q1.len()), (3, 3));
    for (reqs, name) in [(&q0, "zero"), (&q1, "one")] {
        let last = &reqs[2];
        assert_eq!(last.messages[0].role, "system");
        assert!(last.messages[0].content.contains("2025-03-14"), "{}", last.messages[0].content);
        let roles: Vec<&str> = last.messages.iter().map(|m| m.role.as_str()).collect();
        assert_eq!(roles, ["system", "user", "assistant", "user", "assistant", "user"]);
        assert_eq!(last.messages[2].content, format!("answer 1 from {name}"));
        assert_eq!(last.messages[4].content, format!("answer 2 from {name}"));
        assert_eq!(last.messages[5].content, "hirugarrena");
        assert_eq!(last.temperature, 0.9);
        assert_eq!(last.top_p, 0.95);
        assert!(last.stream);
    }
    // same user content and system prompt on both sides
    let users = |r: &[arena::backend::ChatRequest]| -> Vec<String> {
        r[2].messages
            .iter()
            .filter(|m| m.role != "assistant")
            .map(|m| m.content.clone())
            .collect()
    };
    assert_eq!(users(&q0), users(&q1));
}

#[tokio::test]
async fn timeout_degrades_the_battle() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 2);
    for b in &mut cfg.backends {
        b.timeout_ms = 50;
    }
    let mut overrides: BTreeMap<ModelId, Arc<dyn ChatBackend>> = BTreeMap::new();
    overrides.insert(ModelId::from("model-1"), Arc::new(Slow { ms: 2_000 }));
    let (arena, _) = open_with(cfg, overrides);
    let p = arena.register(registration("ane")).await.unwrap().participant_id;
    let b = arena.new_chat(&p).await.unwrap().battle_id;
    let err = arena.relay_turn(&p, b, "kaixo", None).await.unwrap_err();
    assert!(matches!(err, ServiceError::Backend { .. }), "{err}");
    let view = arena.battle_view(&p, b).await.unwrap();
    assert!(view.degraded);
    assert!(view.turns.is_empty());
    assert!(matches!(arena.relay_turn(&p, b, "berriz", None).await, Err(ServiceError::Degraded)));
    assert!(matches!(
        arena.submit_judgment(&p, b, tie()).await,
        Err(ServiceError::Commit(_))
    ));
    assert!(arena.state().await.records.is_empty());
}

#[tokio::test]
async fn mock_failure_rate_one_always_voids() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 2);
    for b in &mut cfg.backends {
        b.mock.as_mut().unwrap().failure_rate = 1.0;
    }
    let (arena, _) = open(cfg);
    let p = arena.register(registration("ane")).await.unwrap().participant_id;
    for _ in 0..5 {
        let b = arena.new_chat(&p).await.unwrap().battle_id;
        assert!(arena.relay_turn(&p, b, "kaixo", None).await.is_err());
        assert!(arena.battle_view(&p, b).await.unwrap().degraded);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn per_backend_concurrency_cap() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 2);
    for b in &mut cfg.backends {
        b.max_concurrent = 2;
    }
    let mut overrides: BTreeMap<ModelId, Arc<dyn ChatBackend>> = BTreeMap::new();
    overrides.insert(ModelId::from("model-0"), Arc::new(Slow { ms: 40 }));
    overrides.insert(ModelId::from("model-1"), Arc::new(Slow { ms: 40 }));
    let (arena, _) = open_with(cfg, overrides);
    let mut battles = Vec::new();
    for i in 0..8 {
        let p = arena.register(registration(&format!("u{i}"))).await.unwrap().participant_id;
        let b = arena.new_chat(&p).await.unwrap().battle_id;
        battles.push((p, b));
    }
    let tasks: Vec<_> = battles
        .into_iter()
        .map(|(p, b)| {
            let arena = arena.clone();
            tokio::spawn(async move { arena.relay_turn(&p, b, "kaixo", None).await })
        })
        .collect();
    for t in tasks {
        t.await.unwrap().unwrap();
    }
    for m in arena.registry() {
        let ep = arena.endpoint(&m).unwrap();
        assert_eq!(ep.peak_in_flight(), 2, "{m}");
    }
}

#[tokio::test]
async fn control_battles_degrade_one_answer_and_stay_out_of_rankings() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 2);
    cfg.control_rate = 1.0;
    let (arena, _) = open(cfg);
    let p = arena.register(registration("ane")).await.unwrap().participant_id;
    let b = arena.new_chat(&p).await.unwrap().battle_id;
    let turn = arena.relay_turn(&p, b, "kaixo", None).await.unwrap();
    let state = arena.state().await;
    let slot = state.battles[&b].control_slot.expect("control battle");
    let (degraded, intact) = match slot {
        Slot::A => (&turn.response_a, &turn.response_b),
        Slot::B => (&turn.response_b, &turn.response_a),
    };
    assert!(quality_marker(intact).is_some());
    assert!(quality_marker(degraded).is_none());
    assert!(degraded.len() < intact.len());
    arena.submit_judgment(&p, b, tie()).await.unwrap();
    let state = arena.state().await;
    assert!(state.records.is_empty());
    assert_eq!(state.activity[&p].judgments.len(), 1);
}

#[tokio::test]
async fn banned_participants_are_locked_out() {
    let dir = tempfile::tempdir().unwrap();
    let (arena, _) = open(config(dir.path(), 2));
    let p = arena.register(registration("ane")).await.unwrap().participant_id;
    let b = arena.new_chat(&p).await.unwrap().battle_id;
    assert!(arena.ban(&p).await.unwrap());
    assert!(!arena.ban(&p).await.unwrap());
    assert!(matches!(arena.new_chat(&p).await, Err(ServiceError::Banned)));
    assert!(matches!(arena.relay_turn(&p, b, "kaixo", None).await, Err(ServiceError::Banned)));
    assert!(arena.unban(&p).await.unwrap());
    arena.relay_turn(&p, b, "kaixo", None).await.unwrap();
    let ghost = arena_core::domain::ParticipantId::from("p999999");
    assert!(matches!(arena.ban(&ghost).await, Err(ServiceError::UnknownParticipant(_))));
}

async fn judged(arena: &Arena, name: &str, n: usize, judgment: Judgment) -> arena_core::domain::ParticipantId {
    let p = arena.register(registration(name)).await.unwrap().participant_id;
    for _ in 0..n {
        let b = arena.new_chat(&p).await.unwrap().battle_id;
        arena.relay_turn(&p, b, "kaixo", None).await.unwrap();
        arena.submit_judgment(&p, b, judgment).await.unwrap();
    }
    p
}

#[tokio::test]
async fn ban_is_reversible_for_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let (arena, _) = open(config(dir.path(), 3));
    judged(&arena, "ane", 12, tie()).await;
    let spam = judged(&arena, "spam", 12, Judgment::new(Choice::A, Choice::A, None)).await;
    let before = arena.recompute().await.unwrap();
    arena.ban(&spam).await.unwrap();
    let banned = arena.recompute().await.unwrap();
    assert_ne!(before.leaderboards, banned.leaderboards);
    let global = banned.leaderboard(Dimension::Global).unwrap();
    assert_eq!(global.battles, 12);
    arena.unban(&spam).await.unwrap();
    let after = arena.recompute().await.unwrap();
    assert_eq!(before.leaderboards, after.leaderboards);
    assert_eq!(before.matrices, after.matrices);
}

#[tokio::test]
async fn banning_the_only_annotator_of_a_pair_empties_it() {
    let dir = tempfile::tempdir().unwrap();
    let (arena, _) = open(config(dir.path(), 2));
    let p = judged(&arena, "ane", 3, tie()).await;
    let agg = arena.recompute().await.unwrap();
    let m = &agg.matrices[&Dimension::Global];
    assert_eq!(m.count(&ModelId::from("model-0"), &ModelId::from("model-1")), 3);
    arena.ban(&p).await.unwrap();
    let agg = arena.recompute().await.unwrap();
    let m = &agg.matrices[&Dimension::Global];
    assert_eq!(m.count(&ModelId::from("model-0"), &ModelId::from("model-1")), 0);
    assert!(agg.leaderboard(Dimension::Global).is_none());
}

#[tokio::test]
async fn no_battles_means_no_leaderboard() {
    let dir = tempfile::tempdir().unwrap();
    let (arena, _) = open(config(dir.path(), 3));
    let agg = arena.recompute().await.unwrap();
    for d in Dimension::ALL {
        assert!(agg.leaderboard(*d).is_none(), "{d}");
    }
}

#[tokio::test]
async fn inactive_models_are_not_paired() {
    let dir = tempfile::tempdir().unwrap();
    let (arena, _) = open(config(dir.path(), 3));
    arena.set_model_active(&ModelId::from("model-2"), false).await.unwrap();
    let p = arena.register(registration("ane")).await.unwrap().participant_id;
    for _ in 0..10 {
        let b = arena.new_chat(&p).await.unwrap().battle_id;
        let state = arena.state().await;
        let battle = &state.battles[&b];
        assert_ne!(battle.slot_a.as_str(), "model-2");
        assert_ne!(battle.slot_b.as_str(), "model-2");
    }
    assert!(matches!(
        arena.set_model_active(&ModelId::from("nope"), false).await,
        Err(ServiceError::UnknownModel(_))
    ));
}

#[test]
fn toml_config_round_trip() {
    let text = r#"
        seed = 3
        storage_path = "/tmp/x"
        [[backends]]
        model_id = "a"
        mock = { quality = 1.0 }
        [[backends]]
        model_id = "b"
        mock = { quality = -1.0, failure_rate = 0.5 }
    "#;
    let cfg = ArenaConfig::from_toml(text).unwrap();
    assert_eq!(cfg.backends.len(), 2);
    assert_eq!(
        cfg.backends[1],
        BackendConfig::mock(
            "b",
            MockProfile {
                quality: -1.0,
                failure_rate: 0.5,
                ..MockProfile::default()
            }
        )
    );
}
