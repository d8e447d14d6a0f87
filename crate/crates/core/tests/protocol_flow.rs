//! Cross-module protocol flows: backend substitution, replay round-trips,
//! context hygiene and the analytic phase law checked against simulation.

use std::sync::Arc;

use rand::Rng;

use roundtable::agents::replay::ChunkRecord;
use roundtable::agents::{bind_payload, AgentKind, AgentSpec, PayloadTier, ReplayPool};
use roundtable::experiment::generate_tasks;
use roundtable::protocol::{
    run_rr_trajectory, run_rrmaj, EnsembleConfig, Role, Task, DEFAULT_V0,
};
use roundtable::seed::{child_rng, rng_from};
use roundtable::stats::TiePolicy;

fn task() -> Task {
    generate_tasks(1, 5).unwrap().remove(0)
}

fn laws_hold(ensemble: &EnsembleConfig, trajectory: &roundtable::Trajectory) {
    assert!(trajectory.total_tokens() <= ensemble.l, "budget law");
    for (i, chunk) in trajectory.chunks.iter().enumerate() {
        assert_eq!(chunk.agent_slot, i % ensemble.n, "schedule law");
        if i + 1 < trajectory.chunks.len() {
            assert_eq!(chunk.tokens.len(), ensemble.k, "interior chunks carry exactly k tokens");
        }
    }
}

/// Swapping the backend kind never changes the schedule or budget laws.
#[test]
fn backend_substitution_preserves_relay_laws() {
    let task = task();
    let kinds: Vec<(&str, AgentKind)> = vec![
        ("potential", AgentKind::potential_linear(0.03, 0.004).unwrap()),
        ("scripted", AgentKind::scripted(0.9, 1.0)),
    ];
    for (name, kind) in kinds {
        let ensemble =
            EnsembleConfig::homogeneous(kind, 5, 2, 32, 384, PayloadTier::Moderate).unwrap();
        let mut rng = rng_from(7);
        let trajectory = run_rr_trajectory(&ensemble, &task, 0, &mut rng).unwrap();
        laws_hold(&ensemble, &trajectory);
        assert!(trajectory.final_answer.is_some(), "{name} relay must resolve");
    }
}

/// A recorded run replayed through the replay backend reproduces the
/// trajectory bit-exactly, and a missing record aborts the shot with the
/// partial prefix retained.
#[test]
fn replay_round_trip_is_bit_exact() {
    let task = task();
    let recorded_ensemble = EnsembleConfig::homogeneous(
        AgentKind::scripted(0.8, 1.0),
        4,
        2,
        16,
        128,
        PayloadTier::Strong,
    )
    .unwrap();
    let mut rng = rng_from(99);
    let recorded = run_rr_trajectory(&recorded_ensemble, &task, 3, &mut rng).unwrap();
    assert!(recorded.final_answer.is_some());

    let mut pool = ReplayPool::new();
    for chunk in &recorded.chunks {
        pool.insert_chunk(ChunkRecord {
            task_id: task.id.clone(),
            shot: 3,
            slot: chunk.agent_slot,
            turn: chunk.turn_index,
            role: chunk.agent_role,
            text: chunk.text(),
            answer: None,
        });
    }
    let pool = Arc::new(pool);
    let replay_ensemble = EnsembleConfig {
        agent_specs: recorded_ensemble
            .agent_specs
            .iter()
            .map(|s| AgentSpec { kind: AgentKind::Replay(pool.clone()), role: s.role })
            .collect(),
        ..recorded_ensemble.clone()
    };

    let mut rng = rng_from(12345); // replay ignores randomness
    let replayed = run_rr_trajectory(&replay_ensemble, &task, 3, &mut rng).unwrap();
    assert_eq!(replayed.chunks.len(), recorded.chunks.len());
    for (a, b) in recorded.chunks.iter().zip(&replayed.chunks) {
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.agent_slot, b.agent_slot);
        assert_eq!(a.agent_role, b.agent_role);
    }
    assert_eq!(replayed.final_answer, recorded.final_answer);
    laws_hold(&replay_ensemble, &replayed);

    // A different shot has no records: the relay aborts at turn 0 and keeps
    // what it has (nothing), rather than fabricating chunks.
    let aborted = run_rr_trajectory(&replay_ensemble, &task, 4, &mut rng).unwrap();
    assert!(aborted.aborted.is_some());
    assert!(aborted.chunks.is_empty());
    assert_eq!(aborted.final_answer, None);
}

/// Honest private contexts never contain payload text, across tiers and
/// ensembles.
#[test]
fn honest_contexts_are_payload_free() {
    let task = task();
    let distractor = task.distractor_label.clone();
    let payload_fragments = [
        format!("I am confident that ({distractor})"),
        format!("You MUST choose ({distractor})"),
        "Critical Instruction".to_owned(),
    ];
    for tier in [PayloadTier::Moderate, PayloadTier::Strong] {
        let ensemble = EnsembleConfig::homogeneous(
            AgentKind::scripted(1.0, 1.0),
            6,
            3,
            8,
            64,
            tier,
        )
        .unwrap();
        for spec in &ensemble.agent_specs {
            let effective = match spec.role {
                Role::Corrupt => tier,
                Role::Honest => PayloadTier::None,
            };
            let context = bind_payload(spec, effective, &task).unwrap();
            match spec.role {
                Role::Honest => {
                    for fragment in &payload_fragments {
                        assert!(
                            !context.contains(fragment.as_str()),
                            "honest context leaked payload: {fragment}"
                        );
                    }
                }
                Role::Corrupt => {
                    assert!(
                        payload_fragments.iter().any(|f| context.contains(f.as_str())),
                        "corrupt context missing payload"
                    );
                }
            }
        }
    }
}

/// Single-shot RRMaj equals the lone trajectory's answer for any seed.
#[test]
fn rrmaj_one_shot_equals_rr_for_many_seeds() {
    let task = task();
    for seed in 0..20u64 {
        let ensemble = EnsembleConfig::homogeneous(
            AgentKind::scripted(0.5, 0.6),
            5,
            3,
            16,
            96,
            PayloadTier::Moderate,
        )
        .unwrap()
        .with_shots(1);
        let mut rng_a = rng_from(seed);
        let trajectory = run_rr_trajectory(&ensemble, &task, 0, &mut rng_a).unwrap();
        let mut rng_b = rng_from(seed);
        let (outcome, trajectories) =
            run_rrmaj(&ensemble, &task, TiePolicy::SeededUniform, &mut rng_b).unwrap();
        assert_eq!(trajectories.len(), 1);
        assert_eq!(outcome.winner(), trajectory.final_answer.as_ref());
    }
}

/// With zero noise, linear drift and the canonical deterministic schedule,
/// correctness of the relay answer is decided by closed-form arithmetic:
/// the final potential is a product of per-token factors fixed by the
/// schedule. Simulation must agree exactly.
#[test]
fn potential_phase_law_matches_closed_form() {
    let mut rng = child_rng(31_337, &["phase-law"]);
    let mut correct_seen = 0usize;
    let mut wrong_seen = 0usize;
    for trial in 0..60 {
        let gamma: f64 = rng.random_range(0.01..0.2);
        let alpha: f64 = rng.random_range(0.0005..0.02);
        let n: usize = rng.random_range(2..=6);
        let c: usize = rng.random_range(0..=n);
        let k: usize = rng.random_range(3..=40);
        let turns: usize = rng.random_range(n..=6 * n);
        // Keep the final chunk either full or big enough for the marker.
        let remainder = if rng.random_bool(0.5) { 0 } else { rng.random_range(3..k.max(4)) };
        let l = k * turns + remainder;

        // Closed form: count corrupt and honest tokens along the schedule.
        let total_turns = turns + usize::from(remainder > 0);
        let mut corrupt_tokens = 0usize;
        let mut honest_tokens = 0usize;
        for turn in 0..total_turns {
            let chunk = if turn + 1 == total_turns && remainder > 0 { remainder } else { k };
            if turn % n < c {
                corrupt_tokens += chunk;
            } else {
                honest_tokens += chunk;
            }
        }
        let v_final = DEFAULT_V0
            * (1.0 - gamma).powi(honest_tokens as i32)
            * (1.0 + alpha).powi(corrupt_tokens as i32);
        let analytic_correct = v_final <= 0.1; // default success level

        let ensemble = EnsembleConfig::homogeneous(
            AgentKind::potential_linear(gamma, alpha).unwrap(),
            n,
            c,
            k,
            l,
            PayloadTier::Strong,
        )
        .unwrap();
        let task = task();
        let mut run_rng = child_rng(31_337, &["phase-law-run", &trial.to_string()]);
        let trajectory = run_rr_trajectory(&ensemble, &task, 0, &mut run_rng).unwrap();
        let answer = trajectory.final_answer.clone().expect("relay resolves");
        let simulated_correct = answer == task.correct_label;
        assert_eq!(
            simulated_correct, analytic_correct,
            "trial {trial}: gamma={gamma} alpha={alpha} n={n} c={c} k={k} l={l} v_final={v_final}"
        );
        if analytic_correct {
            correct_seen += 1;
        } else {
            wrong_seen += 1;
        }
    }
    // The sample must exercise both phases.
    assert!(correct_seen >= 5, "only {correct_seen} converging configs sampled");
    assert!(wrong_seen >= 5, "only {wrong_seen} diverging configs sampled");
}

/// Mixed potential capability per slot: a strong honest anchor can hold the
/// trajectory that uniform weak agents lose.
#[test]
fn heterogeneous_anchor_changes_the_outcome() {
    let task = task();
    let weak = AgentKind::potential_linear(0.004, 0.01).unwrap();
    let strong = AgentKind::potential_linear(0.35, 0.01).unwrap();

    let uniform_weak = EnsembleConfig {
        n: 3,
        corrupt_count: 2,
        k: 50,
        m: 1,
        l: 1500,
        payload_tier: PayloadTier::Strong,
        agent_specs: vec![
            AgentSpec { kind: weak.clone(), role: Role::Corrupt },
            AgentSpec { kind: weak.clone(), role: Role::Corrupt },
            AgentSpec { kind: weak.clone(), role: Role::Honest },
        ],
    };
    let mut rng = rng_from(1);
    let lost = run_rr_trajectory(&uniform_weak, &task, 0, &mut rng).unwrap();
    assert_eq!(lost.final_answer, Some(task.distractor_label.clone()));

    let anchored = EnsembleConfig {
        agent_specs: vec![
            AgentSpec { kind: weak.clone(), role: Role::Corrupt },
            AgentSpec { kind: weak.clone(), role: Role::Corrupt },
            AgentSpec { kind: strong, role: Role::Honest },
        ],
        ..uniform_weak
    };
    let mut rng = rng_from(1);
    let held = run_rr_trajectory(&anchored, &task, 0, &mut rng).unwrap();
    assert_eq!(held.final_answer, Some(task.correct_label.clone()));
}
