//! Drives an experiment plan against an arena and scores the result.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use arena_core::domain::{BattleId, Dimension, ModelId, ParticipantId, Turn};
use arena_core::moderation::Flag;
use arena_core::ranking::{fit_bradley_terry, BattleOutcomeSet, FitConfig, Leaderboard, PairMatrix};
use arena_core::rng::{mix_seed, stream_rng};
use arena_core::stats::spearman;
use serde::{Deserialize, Serialize};

use crate::aggregate::BoardResult;
use crate::backend::MockProfile;
use crate::clock::ManualClock;
use crate::config::{ArenaConfig, BackendConfig};
use crate::io::{csv_string, write_flags, write_leaderboard, write_matrix};
use crate::service::{Arena, OpenReport, ServiceError};
use crate::sim::annotator::{judge, prompt, Behavior};
use crate::sim::client::{ArenaClient, ClientError, InProcessClient};
use crate::sim::schedule::{build_plan, ActionKind, Plan, START};
use crate::sim::spec::ExperimentSpec;

pub const SIM_ADMIN_TOKEN: &str = "sim-admin";

/// Arena configuration serving one mock per model, each stamping its true
/// strength into its answers.
pub fn arena_config(spec: &ExperimentSpec, storage: &Path) -> ArenaConfig {
    let backends = spec
        .truth()
        .into_iter()
        .enumerate()
        .map(|(i, theta)| {
            let mut b = BackendConfig::mock(
                &ExperimentSpec::model_id(i),
                MockProfile {
                    quality: theta,
                    latency_ms: spec.backend.latency_ms,
                    failure_rate: spec.backend.failure_rate,
                    seed: mix_seed(spec.seed, i as u64),
                    ..MockProfile::default()
                },
            );
            b.timeout_ms = spec.backend.timeout_ms;
            b.max_concurrent = spec.backend.max_concurrent;
            b
        })
        .collect();
    ArenaConfig {
        seed: spec.seed,
        storage_path: storage.to_path_buf(),
        backends,
        control_rate: spec.control_rate,
        bootstrap_resamples: spec.bootstrap_resamples,
        balance_probability: spec.balance_probability,
        snapshot_every: spec.snapshot_every,
        admin_token: Some(SIM_ADMIN_TOKEN.to_string()),
        ..ArenaConfig::default()
    }
}

/// Opens (or reopens) the experiment's arena on a manual clock.
pub fn open_arena(spec: &ExperimentSpec, storage: &Path) -> Result<(InProcessClient, OpenReport), ServiceError> {
    let clock = Arc::new(ManualClock::new(START));
    let (arena, report) = Arena::open(arena_config(spec, storage), clock.clone())?;
    Ok((
        InProcessClient {
            arena: Arc::new(arena),
            clock,
        },
        report,
    ))
}

/// Client-side memory of the run: what the participants know.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Progress {
    pub next_action: usize,
    pub participant_ids: Vec<Option<ParticipantId>>,
    pub battles: Vec<Option<BattleId>>,
    pub last_turn: Vec<Option<Turn>>,
    /// Steps abandoned after a backend failure.
    pub void: Vec<bool>,
    pub judged: usize,
    pub failed_turns: usize,
}

pub struct Driver {
    pub spec: ExperimentSpec,
    pub plan: Plan,
    pub progress: Progress,
}

impl Driver {
    pub fn new(spec: ExperimentSpec) -> Self {
        let plan = build_plan(&spec);
        let progress = Progress {
            participant_ids: vec![None; plan.participants.len()],
            battles: vec![None; plan.steps.len()],
            last_turn: vec![None; plan.steps.len()],
            void: vec![false; plan.steps.len()],
            ..Progress::default()
        };
        Self {
            spec,
            plan,
            progress,
        }
    }

    pub fn total_actions(&self) -> usize {
        self.plan.actions.len()
    }

    pub fn is_done(&self) -> bool {
        self.progress.next_action >= self.plan.actions.len()
    }

    /// Executes actions up to (excluding) `end`.
    pub async fn run_until<C: ArenaClient>(&mut self, client: &C, end: usize) -> Result<(), ClientError> {
        let end = end.min(self.plan.actions.len());
        while self.progress.next_action < end {
            let idx = self.progress.next_action;
            self.step(client, idx).await?;
            self.progress.next_action += 1;
        }
        Ok(())
    }

    pub async fn run_all<C: ArenaClient>(&mut self, client: &C) -> Result<(), ClientError> {
        self.run_until(client, usize::MAX).await
    }

    async fn step<C: ArenaClient>(&mut self, client: &C, idx: usize) -> Result<(), ClientError> {
        let action = self.plan.actions[idx];
        let mut rng = stream_rng(mix_seed(self.spec.seed, 0x6163_7473), idx as u64);
        client.set_time(action.at);
        let p = &mut self.progress;
        match action.kind {
            ActionKind::Register { participant } => {
                let id = client.register(&self.plan.participants[participant].request).await?;
                p.participant_ids[participant] = Some(id);
            }
            ActionKind::NewChat { step } => {
                let who = self.plan.steps[step].participant;
                let pid = p.participant_ids[who].clone().expect("registered first");
                let view = client.new_chat(&pid).await?;
                p.battles[step] = Some(view.battle_id);
            }
            ActionKind::Turn { step, .. } => {
                if p.void[step] {
                    return Ok(());
                }
                let who = self.plan.steps[step].participant;
                let pid = p.participant_ids[who].clone().expect("registered first");
                let battle = p.battles[step].expect("battle created first");
                match client.turn(&pid, battle, &prompt(&mut rng)).await {
                    Ok(t) => p.last_turn[step] = Some(t),
                    Err(ClientError::Backend(_)) => {
                        p.void[step] = true;
                        p.failed_turns += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            ActionKind::Judge { step } => {
                if p.void[step] {
                    return Ok(());
                }
                let who = self.plan.steps[step].participant;
                let behavior = self.plan.participants[who].behavior;
                let pid = p.participant_ids[who].clone().expect("registered first");
                let battle = p.battles[step].expect("battle created first");
                let turn = p.last_turn[step].take().expect("turn before judgment");
                let j = judge(&mut rng, behavior, &self.spec.annotator, &turn);
                client.judge(&pid, battle, j).await?;
                p.judged += 1;
            }
        }
        Ok(())
    }

    /// Planted spammers by participant id.
    pub fn spammers(&self) -> BTreeMap<ParticipantId, Behavior> {
        self.plan
            .participants
            .iter()
            .zip(&self.progress.participant_ids)
            .filter(|(sp, _)| sp.behavior.is_spammer())
            .filter_map(|(sp, id)| id.clone().map(|id| (id, sp.behavior)))
            .collect()
    }

    pub fn truth(&self) -> BTreeMap<ModelId, f64> {
        self.spec
            .truth()
            .into_iter()
            .enumerate()
            .map(|(i, t)| (ModelId(ExperimentSpec::model_id(i)), t))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub models: usize,
    pub spearman: f64,
    /// Share of models whose true score lies inside the interval.
    pub coverage: f64,
    pub mean_half_width: f64,
    pub min_delta: f64,
    pub max_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixStats {
    pub models: usize,
    pub pairs_with_battles: usize,
    pub min_count: u64,
    pub max_count: u64,
    pub mean_count: f64,
    /// Largest |win_ij + win_ji + tie_ij - 1| over pairs with battles.
    pub max_identity_error: f64,
    pub symmetric_counts: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    pub planted: usize,
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModerationStats {
    pub participants: usize,
    pub spammers: usize,
    pub flagged: usize,
    pub true_positives: usize,
    pub honest_flagged: usize,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub false_flag_rate: f64,
    pub by_kind: BTreeMap<Behavior, KindStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub n_models: usize,
    pub planned_battles: usize,
    pub judged_battles: usize,
    pub failed_turns: usize,
    /// Per dimension; `Err` carries the ranking error.
    pub recovery: BTreeMap<Dimension, Result<Recovery, String>>,
    pub matrix: MatrixStats,
    pub moderation: ModerationStats,
    /// Global Spearman after banning every flagged participant.
    pub spearman_after_ban: Option<f64>,
    pub fit_seconds: f64,
}

pub struct Outcome {
    pub report: ExperimentReport,
    pub leaderboards: BTreeMap<Dimension, BoardResult>,
    pub matrix: PairMatrix,
    pub flags: Vec<Flag>,
}

pub fn recovery(board: &Leaderboard, truth: &BTreeMap<ModelId, f64>) -> Recovery {
    let mean_truth = truth.values().sum::<f64>() / truth.len() as f64;
    let mut est = Vec::new();
    let mut tru = Vec::new();
    let mut covered = 0;
    let mut widths = Vec::new();
    let mut min_delta = f64::INFINITY;
    let mut max_delta: f64 = 0.0;
    for e in &board.estimates {
        let Some(t) = truth.get(&e.model_id) else {
            continue;
        };
        est.push(e.theta);
        tru.push(*t);
        let true_score = 400.0 * (t - mean_truth) + 1000.0;
        if e.score + e.ci_low_delta <= true_score && true_score <= e.score + e.ci_high_delta {
            covered += 1;
        }
        widths.push((e.ci_high_delta - e.ci_low_delta) / 2.0);
        for d in [e.ci_low_delta.abs(), e.ci_high_delta] {
            min_delta = min_delta.min(d);
            max_delta = max_delta.max(d);
        }
    }
    let n = est.len();
    Recovery {
        models: n,
        spearman: spearman(&est, &tru).map(|c| c.rho).unwrap_or(f64::NAN),
        coverage: covered as f64 / n.max(1) as f64,
        mean_half_width: widths.iter().sum::<f64>() / n.max(1) as f64,
        min_delta,
        max_delta,
    }
}

pub fn matrix_stats(m: &PairMatrix) -> MatrixStats {
    let k = m.models.len();
    let mut counts = Vec::new();
    let mut err: f64 = 0.0;
    let mut symmetric = true;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            symmetric &= m.battle_count[i][j] == m.battle_count[j][i];
            if let (Some(w1), Some(w2), Some(t)) = (m.win_rate[i][j], m.win_rate[j][i], m.tie_rate[i][j]) {
                err = err.max((w1 + w2 + t - 1.0).abs());
            }
        }
    }
    for c in m.pair_counts() {
        counts.push(c);
    }
    let with: Vec<u64> = counts.iter().copied().filter(|c| *c > 0).collect();
    MatrixStats {
        models: k,
        pairs_with_battles: with.len(),
        min_count: counts.iter().copied().min().unwrap_or(0),
        max_count: counts.iter().copied().max().unwrap_or(0),
        mean_count: counts.iter().sum::<u64>() as f64 / counts.len().max(1) as f64,
        max_identity_error: err,
        symmetric_counts: symmetric,
    }
}

pub fn moderation_stats(
    flags: &[Flag],
    spammers: &BTreeMap<ParticipantId, Behavior>,
    participants: usize,
) -> ModerationStats {
    let flagged: BTreeSet<&ParticipantId> = flags.iter().map(|f| &f.participant_id).collect();
    let tp = flagged.iter().filter(|p| spammers.contains_key(**p)).count();
    let honest = participants - spammers.len();
    let honest_flagged = flagged.len() - tp;
    let mut by_kind: BTreeMap<Behavior, KindStats> = BTreeMap::new();
    for (p, b) in spammers {
        let k = by_kind.entry(*b).or_insert(KindStats { planted: 0, flagged: 0 });
        k.planted += 1;
        k.flagged += flagged.contains(p) as usize;
    }
    ModerationStats {
        participants,
        spammers: spammers.len(),
        flagged: flagged.len(),
        true_positives: tp,
        honest_flagged,
        recall: (!spammers.is_empty()).then(|| tp as f64 / spammers.len() as f64),
        precision: (!flagged.is_empty()).then(|| tp as f64 / flagged.len() as f64),
        false_flag_rate: honest_flagged as f64 / honest.max(1) as f64,
        by_kind,
    }
}

/// Recomputes and collects the report. With `ban_flagged`, every flagged
/// participant is then banned and the global correlation measured again.
pub async fn evaluate<C: ArenaClient>(
    driver: &Driver,
    client: &C,
    ban_flagged: bool,
) -> Result<Outcome, ClientError> {
    client.recompute().await?;
    let truth = driver.truth();
    let mut leaderboards = BTreeMap::new();
    let mut recoveries = BTreeMap::new();
    for d in Dimension::ALL {
        let b = client.leaderboard(*d).await?;
        let r = match &b {
            BoardResult::Ok(board) => Ok(recovery(board, &truth)),
            BoardResult::Err { error } => Err(error.clone()),
        };
        recoveries.insert(*d, r);
        leaderboards.insert(*d, b);
    }
    let matrix = client.matrix(Dimension::Global).await?;
    let flags = client.flags().await?;
    let spammers = driver.spammers();
    let moderation = moderation_stats(&flags, &spammers, driver.plan.participants.len());

    let records = client.export().await?;
    let registry: Vec<ModelId> = truth.keys().cloned().collect();
    let recs: Vec<_> = records.iter().map(|r| r.to_record()).collect();
    let data = BattleOutcomeSet::from_records(&recs, Dimension::Global, &registry);
    let started = Instant::now();
    let _ = fit_bradley_terry(&data, &FitConfig::default());
    let fit_seconds = started.elapsed().as_secs_f64();

    let mut spearman_after_ban = None;
    if ban_flagged && !flags.is_empty() {
        let ids: BTreeSet<ParticipantId> = flags.iter().map(|f| f.participant_id.clone()).collect();
        for p in &ids {
            client.ban(p).await?;
        }
        client.recompute().await?;
        if let BoardResult::Ok(b) = client.leaderboard(Dimension::Global).await? {
            spearman_after_ban = Some(recovery(&b, &truth).spearman);
        }
    }

    let report = ExperimentReport {
        seed: driver.spec.seed,
        n_models: driver.spec.n_models,
        planned_battles: driver.spec.n_battles,
        judged_battles: driver.progress.judged,
        failed_turns: driver.progress.failed_turns,
        recovery: recoveries,
        matrix: matrix_stats(&matrix),
        moderation,
        spearman_after_ban,
        fit_seconds,
    };
    Ok(Outcome {
        report,
        leaderboards,
        matrix,
        flags,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("cannot write {0}: {1}")]
    Io(PathBuf, std::io::Error),
}

/// Whole experiment in process, with storage under `storage`.
pub async fn run_experiment(spec: ExperimentSpec, storage: &Path) -> Result<Outcome, RunError> {
    let (client, _) = open_arena(&spec, storage)?;
    let mut driver = Driver::new(spec);
    driver.run_all(&client).await?;
    Ok(evaluate(&driver, &client, true).await?)
}

pub fn render_report(r: &ExperimentReport) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "[experiment]");
    let _ = writeln!(s, "seed: {}", r.seed);
    let _ = writeln!(s, "models: {}", r.n_models);
    let _ = writeln!(s, "planned_battles: {}", r.planned_battles);
    let _ = writeln!(s, "judged_battles: {}", r.judged_battles);
    let _ = writeln!(s, "failed_turns: {}", r.failed_turns);
    let _ = writeln!(s, "fit_seconds: {:.4}", r.fit_seconds);
    for (d, rec) in &r.recovery {
        let _ = writeln!(s, "\n[recovery {d}]");
        match rec {
            Ok(x) => {
                let _ = writeln!(s, "models: {}", x.models);
                let _ = writeln!(s, "spearman: {:.4}", x.spearman);
                let _ = writeln!(s, "coverage: {:.4}", x.coverage);
                let _ = writeln!(s, "mean_half_width: {:.2}", x.mean_half_width);
                let _ = writeln!(s, "delta_range: {:.2} .. {:.2}", x.min_delta, x.max_delta);
            }
            Err(e) => {
                let _ = writeln!(s, "error: {e}");
            }
        }
    }
    let m = &r.matrix;
    let _ = writeln!(s, "\n[matrix global]");
    let _ = writeln!(s, "pairs_with_battles: {}", m.pairs_with_battles);
    let _ = writeln!(s, "count_min_mean_max: {} {:.2} {}", m.min_count, m.mean_count, m.max_count);
    let _ = writeln!(s, "max_identity_error: {:e}", m.max_identity_error);
    let _ = writeln!(s, "symmetric_counts: {}", m.symmetric_counts);
    let d = &r.moderation;
    let _ = writeln!(s, "\n[moderation]");
    let _ = writeln!(s, "spammers: {} of {}", d.spammers, d.participants);
    let _ = writeln!(s, "flagged: {} (true positives {})", d.flagged, d.true_positives);
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let _ = writeln!(s, "recall: {}", fmt(d.recall));
    let _ = writeln!(s, "precision: {}", fmt(d.precision));
    let _ = writeln!(s, "false_flag_rate: {:.4}", d.false_flag_rate);
    for (k, v) in &d.by_kind {
        let _ = writeln!(s, "{k:?}: {} of {} flagged", v.flagged, v.planted);
    }
    let _ = writeln!(s, "spearman_after_ban: {}", fmt(r.spearman_after_ban));
    s
}

/// report.txt, report.json and the CSV tables.
pub fn write_outputs(out: &Path, o: &Outcome) -> Result<(), RunError> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| RunError::Io(p, e)
    };
    std::fs::create_dir_all(out).map_err(io(out))?;
    let mut files: Vec<(String, String)> = vec![
        ("report.txt".into(), render_report(&o.report)),
        (
            "report.json".into(),
            serde_json::to_string_pretty(&o.report).expect("report serializes"),
        ),
        ("matrix_global.csv".into(), csv_string(|b| write_matrix(&o.matrix, b))),
        ("flags.csv".into(), csv_string(|b| write_flags(&o.flags, b))),
    ];
    for (d, b) in &o.leaderboards {
        if let Some(board) = b.board() {
            files.push((format!("leaderboard_{d}.csv"), csv_string(|w| write_leaderboard(board, w))));
        }
    }
    for (name, body) in files {
        let path = out.join(name);
        std::fs::write(&path, body).map_err(io(&path))?;
    }
    Ok(())
}
