//! Declarative experiment harness: configuration, synthetic tasks, the grid
//! runner and report emission.
//!
//! An [`ExperimentPlan`] names an ensemble blueprint, a corruption grid
//! (`0c5t` down to `5c0t`), a task source and the aggregation methods to
//! run. [`run_experiment`] executes every grid row over every task on a
//! worker pool — each cell derives its own random stream from the root seed
//! and its coordinates, so reports are bit-identical across reruns and
//! worker counts — and aggregates accuracies, gaps, the asymmetric yield and
//! the final-speaker split.

pub mod analyze;
pub mod config;
pub mod dump;
pub mod report;
pub mod scaling;
pub mod tasks;

pub use config::ConfigFile;
pub use report::{emit_report, ReportFormat};
pub use scaling::{scaling_study, ScalingPoint};
pub use tasks::generate_tasks;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{AgentError, AgentKind, PayloadTier, RemoteClient, ReplayPool};
use crate::latent::{DriftModel, LatentError, OperatorParams, TruthFrame};
use crate::protocol::{
    attribute_final_speaker, run_maj, run_rr_trajectory, run_rrmaj, EnsembleConfig,
    ProtocolError, Role, Task,
};
use crate::seed::child_rng;
use crate::stats::{asymmetric_yield, fisher_exact_2x2, StatsError, TiePolicy};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("task file error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Replay(#[from] crate::agents::replay::ReplayError),
}

/// Aggregation method of one result column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Maj,
    Rr,
    RrMaj,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Maj => "MAJ",
            Method::Rr => "RR",
            Method::RrMaj => "RRMaj",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "maj" => Ok(Method::Maj),
            "rr" => Ok(Method::Rr),
            "rrmaj" => Ok(Method::RrMaj),
            other => Err(format!("unknown method `{other}` (expected maj, rr or rrmaj)")),
        }
    }
}

/// Where tasks come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskSource {
    Synthetic { count: usize, seed: u64 },
    File(PathBuf),
}

/// Per-slot parameter overrides for heterogeneous ensembles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SlotOverride {
    pub slot: usize,
    pub gamma_h: Option<f64>,
    pub alpha: Option<f64>,
    pub p_correct: Option<f64>,
    pub p_adhere: Option<f64>,
}

/// Agent backend settings shared by a whole plan. One kind per plan: theory
/// numbers (potential agents) and answer-level numbers (scripted agents)
/// never mix inside one report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSettings {
    pub kind: String,
    pub gamma_h: Option<f64>,
    pub alpha: Option<f64>,
    pub v_success: Option<f64>,
    pub noise_scale: Option<f64>,
    pub p_correct: Option<f64>,
    pub p_adhere: Option<f64>,
    pub pool: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub key_env_var: Option<String>,
    pub max_in_flight: Option<usize>,
    pub retry_attempts: Option<u32>,
    pub retry_base_ms: Option<u64>,
    pub timeout_s: Option<u64>,
    #[serde(default)]
    pub slots: Vec<SlotOverride>,
}

impl AgentSettings {
    pub fn potential(gamma_h: f64, alpha: f64) -> Self {
        Self {
            kind: "potential".into(),
            gamma_h: Some(gamma_h),
            alpha: Some(alpha),
            ..Self::empty()
        }
    }

    pub fn scripted(p_correct: f64, p_adhere: f64) -> Self {
        Self {
            kind: "scripted".into(),
            p_correct: Some(p_correct),
            p_adhere: Some(p_adhere),
            ..Self::empty()
        }
    }

    fn empty() -> Self {
        Self {
            kind: String::new(),
            gamma_h: None,
            alpha: None,
            v_success: None,
            noise_scale: None,
            p_correct: None,
            p_adhere: None,
            pool: None,
            endpoint: None,
            model: None,
            temperature: None,
            key_env_var: None,
            max_in_flight: None,
            retry_attempts: None,
            retry_base_ms: None,
            timeout_s: None,
            slots: Vec::new(),
        }
    }

    fn override_for(&self, slot: usize) -> SlotOverride {
        self.slots
            .iter()
            .find(|o| o.slot == slot)
            .cloned()
            .unwrap_or_default()
    }

    /// Builds the backend for one slot. Replay pools and remote clients are
    /// constructed once and shared.
    pub fn build_kind(
        &self,
        slot: usize,
        shared: &SharedBackends,
    ) -> Result<AgentKind, ExperimentError> {
        let o = self.override_for(slot);
        match self.kind.as_str() {
            "potential" => {
                let gamma = o.gamma_h.or(self.gamma_h).ok_or_else(|| {
                    ExperimentError::Config("potential agents need gamma_h".into())
                })?;
                let alpha = o.alpha.or(self.alpha).ok_or_else(|| {
                    ExperimentError::Config("potential agents need alpha".into())
                })?;
                let frame = match self.v_success {
                    Some(v) => TruthFrame::from_v_success(v)?,
                    None => TruthFrame::default(),
                };
                let params = OperatorParams::new(
                    gamma,
                    DriftModel::linear(alpha)?,
                    frame,
                    self.noise_scale.unwrap_or(0.0),
                )?;
                Ok(AgentKind::Potential(params))
            }
            "scripted" => {
                let p_correct = o.p_correct.or(self.p_correct).ok_or_else(|| {
                    ExperimentError::Config("scripted agents need p_correct".into())
                })?;
                let p_adhere = o.p_adhere.or(self.p_adhere).unwrap_or(1.0);
                Ok(AgentKind::Scripted { p_correct, p_adhere })
            }
            "replay" => {
                let pool = shared.replay_pool.clone().ok_or_else(|| {
                    ExperimentError::Config("replay agents need a pool file".into())
                })?;
                Ok(AgentKind::Replay(pool))
            }
            "remote" => {
                let client = shared.remote_client.clone().ok_or_else(|| {
                    ExperimentError::Config("remote agents need endpoint settings".into())
                })?;
                Ok(AgentKind::Remote(client))
            }
            other => Err(ExperimentError::Config(format!("unknown agent kind `{other}`"))),
        }
    }

    /// Per-role single-run accuracies `(P_truthful, P_corrupt)` when they
    /// can be derived from the settings; used to anchor scaling curves.
    pub fn role_accuracies(&self, l: usize) -> Option<(f64, f64)> {
        match self.kind.as_str() {
            "scripted" => {
                let p_correct = self.p_correct?;
                let p_adhere = self.p_adhere.unwrap_or(1.0);
                Some((p_correct, (1.0 - p_adhere) * p_correct))
            }
            "potential" => {
                let gamma = self.gamma_h?;
                let v_success = self.v_success.unwrap_or(0.1);
                let honest_final = (1.0 - gamma).powi(l as i32) * crate::protocol::DEFAULT_V0;
                let p_truthful = if honest_final <= v_success { 1.0 } else { 0.0 };
                // A corrupt run only inflates the potential, which starts
                // above the success level.
                Some((p_truthful, 0.0))
            }
            _ => None,
        }
    }
}

/// Backends that exist once per plan and are shared across slots.
#[derive(Default)]
pub struct SharedBackends {
    pub replay_pool: Option<Arc<ReplayPool>>,
    pub remote_client: Option<Arc<RemoteClient>>,
}

impl SharedBackends {
    pub fn for_settings(settings: &AgentSettings) -> Result<Self, ExperimentError> {
        let mut shared = Self::default();
        if settings.kind == "replay" {
            let path = settings.pool.as_ref().ok_or_else(|| {
                ExperimentError::Config("replay agents need `pool = <path>`".into())
            })?;
            let file = std::fs::File::open(path)?;
            let pool = ReplayPool::from_reader(std::io::BufReader::new(file))?;
            shared.replay_pool = Some(Arc::new(pool));
        }
        if settings.kind == "remote" {
            let config = crate::agents::RemoteConfig {
                endpoint: settings
                    .endpoint
                    .clone()
                    .ok_or_else(|| ExperimentError::Config("remote agents need `endpoint`".into()))?,
                model: settings
                    .model
                    .clone()
                    .ok_or_else(|| ExperimentError::Config("remote agents need `model`".into()))?,
                temperature: settings.temperature.unwrap_or(0.7),
                key_env_var: settings.key_env_var.clone().ok_or_else(|| {
                    ExperimentError::Config("remote agents need `key_env_var`".into())
                })?,
                max_in_flight: settings.max_in_flight.unwrap_or(4),
                retry_attempts: settings.retry_attempts.unwrap_or(3),
                retry_base_ms: settings.retry_base_ms.unwrap_or(250),
                timeout_s: settings.timeout_s.unwrap_or(30),
            };
            shared.remote_client = Some(Arc::new(RemoteClient::new(config)?));
        }
        Ok(shared)
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub name: String,
    pub root_seed: u64,
    pub methods: Vec<Method>,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub l: usize,
    pub payload_tier: PayloadTier,
    /// Grid rows as `(corrupt, truthful)` pairs; each must sum to `n`.
    pub grid: Vec<(usize, usize)>,
    pub agents: AgentSettings,
    pub task_source: TaskSource,
    pub tie_policy: TiePolicy,
    pub output_dir: PathBuf,
    pub dump_trajectories: bool,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.methods.is_empty() {
            return Err(ExperimentError::Config("at least one method required".into()));
        }
        if self.grid.is_empty() {
            return Err(ExperimentError::Config("grid must not be empty".into()));
        }
        for &(c, t) in &self.grid {
            if c + t != self.n {
                return Err(ExperimentError::Config(format!(
                    "grid row {c}c{t}t does not sum to n = {}",
                    self.n
                )));
            }
        }
        Ok(())
    }

    /// Hash of the resolved plan, embedded in every artifact.
    pub fn config_hash(&self) -> String {
        let serialized = serde_json::to_string(self).expect("plan serializes");
        let digest = Sha256::digest(serialized.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_owned()
    }

    pub fn load_tasks(&self) -> Result<Vec<Task>, ExperimentError> {
        let tasks = match &self.task_source {
            TaskSource::Synthetic { count, seed } => generate_tasks(*count, *seed)?,
            TaskSource::File(path) => tasks::read_task_file(path)?,
        };
        for t in &tasks {
            t.validate()?;
        }
        Ok(tasks)
    }

    fn ensemble_for_row(
        &self,
        c: usize,
        shared: &SharedBackends,
    ) -> Result<EnsembleConfig, ExperimentError> {
        let agent_specs = (0..self.n)
            .map(|slot| {
                Ok(crate::agents::AgentSpec {
                    kind: self.agents.build_kind(slot, shared)?,
                    role: if slot < c { Role::Corrupt } else { Role::Honest },
                })
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        let cfg = EnsembleConfig {
            n: self.n,
            corrupt_count: c,
            k: self.k,
            m: self.m,
            l: self.l,
            payload_tier: self.payload_tier,
            agent_specs,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Accuracy bookkeeping for one method on one grid row.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub correct: usize,
    pub wrong: usize,
    /// Tasks whose vote had no quorum.
    pub unresolved_tasks: usize,
    /// Tasks that failed outright (backend errors).
    pub failed_tasks: usize,
    /// Unresolved per-run answers inside votes, summed over tasks.
    pub unresolved_answers: usize,
}

impl MethodStats {
    pub fn denominator(&self) -> usize {
        self.correct + self.wrong
    }

    /// Accuracy in percent over resolved tasks; `None` without a denominator.
    pub fn accuracy_pct(&self) -> Option<f64> {
        let d = self.denominator();
        (d > 0).then(|| self.correct as f64 / d as f64 * 100.0)
    }
}

/// Final-speaker split of relay trajectories on one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerSplit {
    pub clean_correct: usize,
    pub clean_total: usize,
    pub corrupt_correct: usize,
    pub corrupt_total: usize,
    /// Two-tailed Fisher p; `None` when a margin is degenerate.
    pub p_value: Option<f64>,
}

/// One grid row of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowReport {
    pub c: usize,
    pub t: usize,
    pub rho: f64,
    pub stats: BTreeMap<Method, MethodStats>,
    /// RRMaj accuracy minus MAJ accuracy, when both columns exist.
    pub delta_pct: Option<f64>,
    pub speaker_split: Option<SpeakerSplit>,
    pub failures: Vec<String>,
}

impl RowReport {
    pub fn config_name(&self) -> String {
        format!("{}c{}t", self.c, self.t)
    }
}

/// Everything [`run_experiment`] produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub agent_kind: String,
    pub tie_policy: TiePolicy,
    pub root_seed: u64,
    pub config_hash: String,
    pub build_id: String,
    pub task_count: usize,
    pub methods: Vec<Method>,
    pub rows: Vec<RowReport>,
    /// `(tax, gain)` over the RRMaj-vs-MAJ gaps, when the grid covers both
    /// sides.
    pub asymmetric_yield: Option<(f64, f64)>,
    pub notes: Vec<String>,
    /// Rendered trajectory dump per row, present when the plan asked for
    /// dumps.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub dumps: BTreeMap<String, String>,
}

struct CellOutcome {
    task_index: usize,
    per_method: BTreeMap<Method, TaskVerdict>,
    shot_records: Vec<(Role, bool)>,
    dump_lines: Option<String>,
    notes: Vec<String>,
    failures: Vec<(Method, String)>,
}

enum TaskVerdict {
    Correct { unresolved_answers: usize },
    Wrong { unresolved_answers: usize },
    Unresolved { unresolved_answers: usize },
}

pub const BUILD_ID: &str = concat!("roundtable-", env!("CARGO_PKG_VERSION"));

/// Runs the full grid. Cells (row x task) execute on the worker pool; each
/// derives its seed from `(root_seed, row, task, method)`. Cell failures are
/// recorded on their row rather than aborting the grid.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentReport, ExperimentError> {
    plan.validate()?;
    let shared = SharedBackends::for_settings(&plan.agents)?;
    let tasks = plan.load_tasks()?;
    if tasks.is_empty() {
        return Err(ExperimentError::Config("task set is empty".into()));
    }

    let mut rows = Vec::with_capacity(plan.grid.len());
    let mut dumps = BTreeMap::new();
    let mut all_notes: Vec<String> = Vec::new();

    for &(c, t) in &plan.grid {
        let row_name = format!("{c}c{t}t");
        let ensemble = plan.ensemble_for_row(c, &shared)?;

        let cells: Vec<CellOutcome> = tasks
            .par_iter()
            .enumerate()
            .map(|(task_index, task)| run_cell(plan, &ensemble, &row_name, task_index, task))
            .collect();

        let mut stats: BTreeMap<Method, MethodStats> = BTreeMap::new();
        let mut shot_records = Vec::new();
        let mut failures = Vec::new();
        let mut dump = String::new();
        for cell in cells {
            for (method, f) in &cell.failures {
                failures.push(format!("task {} ({method}): {f}", tasks[cell.task_index].id));
                stats.entry(*method).or_default().failed_tasks += 1;
            }
            for (method, verdict) in &cell.per_method {
                let entry = stats.entry(*method).or_default();
                match verdict {
                    TaskVerdict::Correct { unresolved_answers } => {
                        entry.correct += 1;
                        entry.unresolved_answers += unresolved_answers;
                    }
                    TaskVerdict::Wrong { unresolved_answers } => {
                        entry.wrong += 1;
                        entry.unresolved_answers += unresolved_answers;
                    }
                    TaskVerdict::Unresolved { unresolved_answers } => {
                        entry.unresolved_tasks += 1;
                        entry.unresolved_answers += unresolved_answers;
                    }
                }
            }
            shot_records.extend(cell.shot_records);
            if let Some(lines) = cell.dump_lines {
                dump.push_str(&lines);
            }
            all_notes.extend(cell.notes);
        }

        let delta_pct = match (stats.get(&Method::Maj), stats.get(&Method::RrMaj)) {
            (Some(maj), Some(rrmaj)) => match (maj.accuracy_pct(), rrmaj.accuracy_pct()) {
                (Some(a), Some(b)) => Some(b - a),
                _ => None,
            },
            _ => None,
        };

        let speaker_split = speaker_split(&shot_records);

        if plan.dump_trajectories {
            dumps.insert(row_name.clone(), dump);
        }
        rows.push(RowReport { c, t, rho: c as f64 / plan.n as f64, stats, delta_pct, speaker_split, failures });
    }

    let delta_rows: BTreeMap<(usize, usize), f64> = rows
        .iter()
        .filter_map(|r| r.delta_pct.map(|d| ((r.c, r.t), d)))
        .collect();
    let yield_pair = match asymmetric_yield(&delta_rows) {
        Ok(pair) => Some(pair),
        Err(StatsError::MissingYieldRows) => None,
        Err(e) => return Err(e.into()),
    };

    all_notes.sort();
    all_notes.dedup();

    Ok(ExperimentReport {
        name: plan.name.clone(),
        agent_kind: plan.agents.kind.clone(),
        tie_policy: plan.tie_policy,
        root_seed: plan.root_seed,
        config_hash: plan.config_hash(),
        build_id: BUILD_ID.to_owned(),
        task_count: tasks.len(),
        methods: plan.methods.clone(),
        rows,
        asymmetric_yield: yield_pair,
        notes: all_notes,
        dumps,
    })
}

fn run_cell(
    plan: &ExperimentPlan,
    ensemble: &EnsembleConfig,
    row_name: &str,
    task_index: usize,
    task: &Task,
) -> CellOutcome {
    let mut per_method = BTreeMap::new();
    let mut shot_records = Vec::new();
    let mut dump_lines = plan.dump_trajectories.then(String::new);
    let mut notes = Vec::new();
    let mut failures = Vec::new();

    for method in &plan.methods {
        let mut rng = child_rng(
            plan.root_seed,
            &[row_name, &task.id, &method.to_string()],
        );
        let verdict = match method {
            Method::Maj => run_maj(ensemble, task, plan.tie_policy, &mut rng).map(|out| {
                let unresolved_answers = out.unresolved;
                match out.winner() {
                    Some(w) if *w == task.correct_label => {
                        TaskVerdict::Correct { unresolved_answers }
                    }
                    Some(_) => TaskVerdict::Wrong { unresolved_answers },
                    None => TaskVerdict::Unresolved { unresolved_answers },
                }
            }),
            Method::Rr => run_rr_trajectory(ensemble, task, 0, &mut rng).map(|trajectory| {
                let resolved = trajectory.final_answer.clone();
                let unresolved_answers = usize::from(resolved.is_none());
                record_trajectory(
                    &trajectory,
                    task,
                    0,
                    &mut shot_records,
                    &mut dump_lines,
                    &mut notes,
                );
                match resolved {
                    Some(a) if a == task.correct_label => {
                        TaskVerdict::Correct { unresolved_answers }
                    }
                    Some(_) => TaskVerdict::Wrong { unresolved_answers },
                    None => TaskVerdict::Unresolved { unresolved_answers },
                }
            }),
            Method::RrMaj => {
                run_rrmaj(ensemble, task, plan.tie_policy, &mut rng).map(|(out, trajectories)| {
                    for (shot, trajectory) in trajectories.iter().enumerate() {
                        record_trajectory(
                            trajectory,
                            task,
                            shot,
                            &mut shot_records,
                            &mut dump_lines,
                            &mut notes,
                        );
                    }
                    let unresolved_answers = out.unresolved;
                    match out.winner() {
                        Some(w) if *w == task.correct_label => {
                            TaskVerdict::Correct { unresolved_answers }
                        }
                        Some(_) => TaskVerdict::Wrong { unresolved_answers },
                        None => TaskVerdict::Unresolved { unresolved_answers },
                    }
                })
            }
        };
        match verdict {
            Ok(v) => {
                per_method.insert(*method, v);
            }
            Err(e) => {
                failures.push((*method, e.to_string()));
            }
        }
    }

    CellOutcome { task_index, per_method, shot_records, dump_lines, notes, failures }
}

fn record_trajectory(
    trajectory: &crate::protocol::Trajectory,
    task: &Task,
    shot: usize,
    shot_records: &mut Vec<(Role, bool)>,
    dump_lines: &mut Option<String>,
    notes: &mut Vec<String>,
) {
    if let (Ok(role), Some(answer)) =
        (attribute_final_speaker(trajectory), trajectory.final_answer.as_ref())
    {
        shot_records.push((role, *answer == task.correct_label));
    }
    for chunk in &trajectory.chunks {
        if let Some(note) = &chunk.note {
            notes.push(note.clone());
        }
    }
    if let Some(reason) = &trajectory.aborted {
        notes.push(format!("aborted shot: {reason}"));
    }
    if let Some(buf) = dump_lines {
        dump::append_trajectory(buf, shot, trajectory);
    }
}

fn speaker_split(shot_records: &[(Role, bool)]) -> Option<SpeakerSplit> {
    if shot_records.is_empty() {
        return None;
    }
    let mut split = SpeakerSplit {
        clean_correct: 0,
        clean_total: 0,
        corrupt_correct: 0,
        corrupt_total: 0,
        p_value: None,
    };
    for &(role, correct) in shot_records {
        match role {
            Role::Honest => {
                split.clean_total += 1;
                split.clean_correct += usize::from(correct);
            }
            Role::Corrupt => {
                split.corrupt_total += 1;
                split.corrupt_correct += usize::from(correct);
            }
        }
    }
    split.p_value = fisher_exact_2x2(
        split.clean_correct as u64,
        (split.clean_total - split.clean_correct) as u64,
        split.corrupt_correct as u64,
        (split.corrupt_total - split.corrupt_correct) as u64,
    )
    .ok();
    Some(split)
}

/// Parses a `3c2t`-style grid row name.
pub fn parse_grid_row(s: &str) -> Result<(usize, usize), ExperimentError> {
    let err = || {
        ExperimentError::Config(format!(
            "grid row `{s}` is not of the form <c>c<t>t (e.g. 3c2t)"
        ))
    };
    let body = s.strip_suffix('t').ok_or_else(err)?;
    let (c_str, t_str) = body.split_once('c').ok_or_else(err)?;
    let c = c_str.parse().map_err(|_| err())?;
    let t = t_str.parse().map_err(|_| err())?;
    Ok((c, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(methods: Vec<Method>, agents: AgentSettings) -> ExperimentPlan {
        ExperimentPlan {
            name: "unit".into(),
            root_seed: 17,
            methods,
            n: 5,
            k: 100,
            m: 5,
            l: 3000,
            payload_tier: PayloadTier::Strong,
            grid: vec![(0, 5), (1, 4), (2, 3), (3, 2), (4, 1), (5, 0)],
            agents,
            task_source: TaskSource::Synthetic { count: 12, seed: 3 },
            tie_policy: TiePolicy::SeededUniform,
            output_dir: PathBuf::from("out"),
            dump_trajectories: false,
        }
    }

    #[test]
    fn grid_row_parsing() {
        assert_eq!(parse_grid_row("3c2t").unwrap(), (3, 2));
        assert_eq!(parse_grid_row("0c5t").unwrap(), (0, 5));
        assert!(parse_grid_row("3x2t").is_err());
        assert!(parse_grid_row("c5t").is_err());
        assert!(parse_grid_row("3c2").is_err());
    }

    #[test]
    fn potential_grid_reproduces_the_phase_pattern() {
        let plan = plan(
            vec![Method::Maj, Method::RrMaj],
            AgentSettings::potential(0.03, 0.004),
        );
        let report = run_experiment(&plan).unwrap();
        assert_eq!(report.rows.len(), 6);
        let acc = |row: &RowReport, m: Method| row.stats[&m].accuracy_pct().unwrap();
        // MAJ tracks the head count; the relay holds until rho crosses the
        // exact threshold 0.8841.
        let expected_maj = [100.0, 100.0, 100.0, 0.0, 0.0, 0.0];
        let expected_rrmaj = [100.0, 100.0, 100.0, 100.0, 100.0, 0.0];
        for (i, row) in report.rows.iter().enumerate() {
            assert_eq!(acc(row, Method::Maj), expected_maj[i], "MAJ row {}", row.config_name());
            assert_eq!(
                acc(row, Method::RrMaj),
                expected_rrmaj[i],
                "RRMaj row {}",
                row.config_name()
            );
        }
        // 3c2t: MAJ collapsed, relay held.
        assert_eq!(report.rows[3].delta_pct, Some(100.0));
        let (tax, gain) = report.asymmetric_yield.unwrap();
        assert_eq!(tax, 0.0);
        assert_eq!(gain, 100.0);
    }

    #[test]
    fn reports_are_bit_identical_across_runs() {
        let plan = plan(
            vec![Method::Maj, Method::RrMaj],
            AgentSettings::potential(0.03, 0.004),
        );
        let a = run_experiment(&plan).unwrap();
        let b = run_experiment(&plan).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn maj_only_plan_has_no_delta() {
        let plan = plan(vec![Method::Maj], AgentSettings::scripted(1.0, 1.0));
        let report = run_experiment(&plan).unwrap();
        for row in &report.rows {
            assert!(row.delta_pct.is_none());
            assert!(!row.stats.contains_key(&Method::RrMaj));
        }
        assert!(report.asymmetric_yield.is_none());
    }

    #[test]
    fn speaker_split_counts_follow_schedule() {
        let plan = plan(vec![Method::RrMaj], AgentSettings::potential(0.03, 0.004));
        let report = run_experiment(&plan).unwrap();
        // 3c2t with l = 3000, k = 100: every trajectory ends on turn 29,
        // slot 4, honest under the canonical assignment.
        let row = &report.rows[3];
        let split = row.speaker_split.as_ref().unwrap();
        assert_eq!(split.corrupt_total, 0);
        assert_eq!(split.clean_total, 12 * 5);
        assert!(split.p_value.is_none(), "degenerate margin: no corrupt-last shots");
    }

    #[test]
    fn mismatched_grid_rows_are_rejected() {
        let mut p = plan(vec![Method::Maj], AgentSettings::scripted(1.0, 1.0));
        p.grid = vec![(3, 3)];
        assert!(matches!(run_experiment(&p), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn heterogeneous_slot_overrides_apply() {
        let mut agents = AgentSettings::potential(0.03, 0.004);
        agents.slots = vec![SlotOverride { slot: 4, gamma_h: Some(0.2), ..Default::default() }];
        let shared = SharedBackends::default();
        let strong = agents.build_kind(4, &shared).unwrap();
        let base = agents.build_kind(0, &shared).unwrap();
        match (strong, base) {
            (AgentKind::Potential(s), AgentKind::Potential(b)) => {
                assert_eq!(s.gamma_h(), 0.2);
                assert_eq!(b.gamma_h(), 0.03);
            }
            _ => panic!("expected potential kinds"),
        }
    }

    #[test]
    fn role_accuracy_anchors() {
        let scripted = AgentSettings::scripted(0.8, 0.75);
        assert_eq!(scripted.role_accuracies(100), Some((0.8, 0.25 * 0.8)));
        let potential = AgentSettings::potential(0.03, 0.004);
        // 0.97^100 = 0.0476 <= 0.1: honest run converges, corrupt cannot.
        assert_eq!(potential.role_accuracies(100), Some((1.0, 0.0)));
        assert_eq!(potential.role_accuracies(10), Some((0.0, 0.0)));
    }
}
