//! Shot-count scaling studies.
//!
//! For each grid row and method a pool of `pool_size` recorded outcomes per
//! task is generated once, then resampled by bootstrap at every requested
//! shot count `M`. The MAJ point at `M = 1` also carries its analytic
//! anchor — the head-count-weighted single-draw expectation — whenever the
//! agent settings allow deriving per-role accuracies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentError, ExperimentPlan, Method, SharedBackends};
use crate::agents::replay::{write_answer_record, AnswerRecord};
use crate::protocol::{run_independent, run_rr_trajectory};
use crate::seed::child_rng;
use crate::stats::{bootstrap_scaling, maj_m1_expectation, Label, PoolEntry, ScalingPool};

/// One point of a scaling curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub c: usize,
    pub t: usize,
    pub method: Method,
    pub m: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// Analytic single-draw expectation, on MAJ rows at `m = 1` when
    /// derivable.
    pub anchor: Option<f64>,
}

/// Pools generated for one scaling study, kept for export.
#[derive(Debug)]
pub struct StudyPools {
    pub per_condition: Vec<((usize, usize), Method, ScalingPool)>,
}

pub fn scaling_study(
    plan: &ExperimentPlan,
    m_list: &[usize],
    trials: usize,
    pool_size: usize,
) -> Result<(Vec<ScalingPoint>, StudyPools), ExperimentError> {
    plan.validate()?;
    if m_list.is_empty() {
        return Err(ExperimentError::Config("m_list must not be empty".into()));
    }
    if let Some(&too_big) = m_list.iter().find(|&&m| m > pool_size) {
        return Err(ExperimentError::Config(format!(
            "requested M = {too_big} exceeds the pool size {pool_size}"
        )));
    }
    let shared = SharedBackends::for_settings(&plan.agents)?;
    let tasks = plan.load_tasks()?;
    let methods: Vec<Method> = plan
        .methods
        .iter()
        .copied()
        .filter(|m| matches!(m, Method::Maj | Method::RrMaj))
        .collect();
    if methods.is_empty() {
        return Err(ExperimentError::Config(
            "scaling study needs maj or rrmaj among the methods".into(),
        ));
    }

    let mut points = Vec::new();
    let mut pools = Vec::new();
    for &(c, t) in &plan.grid {
        let ensemble = plan.ensemble_for_row(c, &shared)?;
        for &method in &methods {
            let row_name = format!("{c}c{t}t");
            let entries: Vec<PoolEntry> = tasks
                .par_iter()
                .map(|task| -> Result<PoolEntry, ExperimentError> {
                    let mut outcomes = Vec::with_capacity(pool_size);
                    for i in 0..pool_size {
                        let mut rng = child_rng(
                            plan.root_seed,
                            &["pool", &row_name, &method.to_string(), &task.id, &i.to_string()],
                        );
                        let outcome: Option<Label> = match method {
                            Method::Maj => {
                                // One pool entry = one draw of a single agent;
                                // cycling slots realizes the head-count mix
                                // exactly.
                                let slot = i % ensemble.n;
                                let run = run_independent(
                                    &ensemble.agent_specs[slot],
                                    slot,
                                    i,
                                    task,
                                    ensemble.payload_tier,
                                    ensemble.l,
                                    &mut rng,
                                )?;
                                run.answer
                            }
                            Method::RrMaj => {
                                run_rr_trajectory(&ensemble, task, i, &mut rng)?.final_answer
                            }
                            Method::Rr => unreachable!("filtered above"),
                        };
                        let label = outcome.ok_or_else(|| {
                            ExperimentError::Config(format!(
                                "pool entry {i} for task {} came back unresolved; pools need resolved outcomes",
                                task.id
                            ))
                        })?;
                        outcomes.push(label);
                    }
                    Ok(PoolEntry {
                        task_id: task.id.clone(),
                        correct: task.correct_label.clone(),
                        outcomes,
                    })
                })
                .collect::<Result<_, _>>()?;
            let pool = ScalingPool::new(entries)?;

            let anchor_value = plan.agents.role_accuracies(plan.l).and_then(|(p_t, p_c)| {
                maj_m1_expectation(c, t, p_c, p_t).ok()
            });
            for &m in m_list {
                let mut rng = child_rng(
                    plan.root_seed,
                    &["bootstrap", &row_name, &method.to_string(), &m.to_string()],
                );
                let (mean, std) = bootstrap_scaling(&pool, m, trials, plan.tie_policy, &mut rng)?;
                points.push(ScalingPoint {
                    c,
                    t,
                    method,
                    m,
                    mean_accuracy: mean,
                    std_accuracy: std,
                    anchor: (method == Method::Maj && m == 1)
                        .then_some(anchor_value)
                        .flatten(),
                });
            }
            pools.push(((c, t), method, pool));
        }
    }
    Ok((points, StudyPools { per_condition: pools }))
}

/// Renders curve points as CSV with a header row.
pub fn scaling_csv(points: &[ScalingPoint]) -> String {
    let mut out = String::from("config,method,m,mean_accuracy,std_accuracy,anchor\n");
    for p in points {
        out.push_str(&format!(
            "{}c{}t,{},{},{:.6},{:.6},{}\n",
            p.c,
            p.t,
            p.method,
            p.m,
            p.mean_accuracy,
            p.std_accuracy,
            p.anchor.map(|a| format!("{a:.6}")).unwrap_or_default(),
        ));
    }
    out
}

/// Exports a pool in the answers-only replay format.
pub fn export_pool<W: std::io::Write>(
    w: &mut W,
    pool: &ScalingPool,
    n: usize,
    method: Method,
) -> Result<(), ExperimentError> {
    for entry in pool.entries() {
        for (i, label) in entry.outcomes.iter().enumerate() {
            let slot = match method {
                Method::Maj => i % n,
                _ => 0,
            };
            write_answer_record(
                w,
                &AnswerRecord {
                    task_id: entry.task_id.clone(),
                    shot: i,
                    slot,
                    answer: label.clone(),
                },
            )?;
        }
    }
    Ok(())
}
