//! The full list of actions of an experiment, fixed up front from the seed.

use arena_core::domain::{Education, Proficiency, RegistrationRequest, Timestamp};
use arena_core::rng::{mix_seed, stream_rng, ArenaRng};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::sim::annotator::Behavior;
use crate::sim::spec::ExperimentSpec;

/// 2024-10-01T00:00:00Z
pub const START: Timestamp = Timestamp(1_727_740_800_000);

const EDUCATION_WEIGHTS: [(Education, u32); 6] = [
    (Education::Primary, 2),
    (Education::Secondary, 8),
    (Education::Vocational, 10),
    (Education::Bachelor, 35),
    (Education::Master, 35),
    (Education::Doctorate, 10),
];

const PROFICIENCY_WEIGHTS: [(Proficiency, u32); 4] = [
    (Proficiency::Basic, 5),
    (Proficiency::Intermediate, 10),
    (Proficiency::Advanced, 30),
    (Proficiency::Native, 55),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SimParticipant {
    pub behavior: Behavior,
    pub request: RegistrationRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepPlan {
    pub participant: usize,
    pub turns: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    Register { participant: usize },
    NewChat { step: usize },
    Turn { step: usize, turn: usize },
    Judge { step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Action {
    pub at: Timestamp,
    pub kind: ActionKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub participants: Vec<SimParticipant>,
    pub steps: Vec<StepPlan>,
    /// Time-ordered; each participant's own actions keep their order.
    pub actions: Vec<Action>,
}

fn weighted<T: Copy>(rng: &mut ArenaRng, table: &[(T, u32)]) -> T {
    let dist = WeightedIndex::new(table.iter().map(|(_, w)| *w)).expect("positive weights");
    table[dist.sample(rng)].0
}

fn secs(rng: &mut ArenaRng, lo: f64, hi: f64) -> u64 {
    (rng.gen_range(lo..hi) * 1000.0) as u64
}

pub fn build_plan(spec: &ExperimentSpec) -> Plan {
    let mut rng = stream_rng(mix_seed(spec.seed, 0x706c_616e), 0);
    let n = spec.n_participants;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut behaviors = vec![Behavior::Honest; n];
    let kinds = [Behavior::Position, Behavior::Rate, Behavior::Control];
    for (k, &p) in order.iter().take(spec.n_spammers()).enumerate() {
        behaviors[p] = kinds[k % kinds.len()];
    }

    let participants: Vec<SimParticipant> = behaviors
        .iter()
        .enumerate()
        .map(|(i, &behavior)| SimParticipant {
            behavior,
            request: RegistrationRequest {
                username: format!("sim{i:05}"),
                email: format!("sim{i:05}@example.org"),
                education: Some(weighted(&mut rng, &EDUCATION_WEIGHTS)),
                proficiency: Some(weighted(&mut rng, &PROFICIENCY_WEIGHTS)),
                age_attested: true,
            },
        })
        .collect();

    let weights: Vec<f64> = behaviors
        .iter()
        .map(|b| if b.is_spammer() { spec.spammers.activity_weight } else { 1.0 })
        .collect();
    let pick = WeightedIndex::new(&weights).expect("positive weights");
    let steps: Vec<StepPlan> = (0..spec.n_battles)
        .map(|_| {
            let participant = pick.sample(&mut rng);
            let turns = if behaviors[participant] != Behavior::Rate
                && rng.gen_bool(spec.annotator.second_turn_rate)
            {
                2
            } else {
                1
            };
            StepPlan { participant, turns }
        })
        .collect();

    let mut timed: Vec<(Timestamp, usize, ActionKind)> = Vec::new();
    for i in 0..n {
        timed.push((Timestamp(START.0 + i as u64 * 1000), i, ActionKind::Register { participant: i }));
    }
    let open = START.0 + n as u64 * 1000;
    let mut clock: Vec<u64> = (0..n).map(|_| open + secs(&mut rng, 0.0, 7200.0)).collect();
    for (step, plan) in steps.iter().enumerate() {
        let p = plan.participant;
        let mut t = clock[p];
        timed.push((Timestamp(t), p, ActionKind::NewChat { step }));
        let quick = behaviors[p] == Behavior::Rate;
        for turn in 0..plan.turns {
            t += if quick { 500 } else { secs(&mut rng, 5.0, 30.0) };
            timed.push((Timestamp(t), p, ActionKind::Turn { step, turn }));
        }
        t += if quick { secs(&mut rng, 1.0, 3.5) } else { secs(&mut rng, 20.0, 120.0) };
        timed.push((Timestamp(t), p, ActionKind::Judge { step }));
        t += if quick { 200 } else { secs(&mut rng, 10.0, 300.0) };
        clock[p] = t;
    }
    // stable: equal times keep generation order, which is per-participant order
    timed.sort_by_key(|(at, p, _)| (*at, *p));
    let actions = timed
        .into_iter()
        .map(|(at, _, kind)| Action { at, kind })
        .collect();
    Plan {
        participants,
        steps,
        actions,
    }
}
