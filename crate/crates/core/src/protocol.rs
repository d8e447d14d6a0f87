//! The aggregation protocols as explicit state machines.
//!
//! * [`run_independent`] / [`run_maj`] — isolated generation per agent,
//!   plurality over the terminal answers.
//! * [`run_rr_trajectory`] — the relay: agents take turns appending exactly
//!   `K` tokens to one shared trajectory, slot = turn mod N, until the token
//!   budget runs out or an agent emits the terminal answer marker at a chunk
//!   boundary.
//! * [`run_rrmaj`] — `M` independent relay trajectories, plurality over
//!   their final answers.
//!
//! Corrupt agents carry their payload in a private context prefix; the
//! shared trajectory holds only the task prompt and the generated chunks, so
//! an honest agent is never exposed to the payload text itself — only to
//! whatever the corrupt agents managed to write into the trajectory.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    bind_payload, generate_chunk, AgentError, AgentKind, AgentSpec, GenerationRequest,
    PayloadTier, SharedView,
};
use crate::latent::{corrupt_step, honest_step, in_attractor, PotentialState};
use crate::stats::{plurality, Label, StatsError, TiePolicy, VoteOutcome};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Initial potential of a fresh trajectory: the normalized error state.
pub const DEFAULT_V0: f64 = 1.0;

/// Marker prefix every agent uses to hand in its terminal answer.
pub const ANSWER_MARKER: &str = "FINAL ANSWER:";

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("trajectory has no chunks")]
    EmptyTrajectory,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Whether an agent works toward the correct answer or the distractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Honest,
    Corrupt,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Honest => "honest",
            Role::Corrupt => "corrupt",
        })
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "honest" => Ok(Role::Honest),
            "corrupt" => Ok(Role::Corrupt),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

/// A multiple-choice task with a designated distractor target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub prompt: String,
    pub options: Vec<Label>,
    pub correct_label: Label,
    pub distractor_label: Label,
}

impl Task {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let mut seen = std::collections::BTreeSet::new();
        for o in &self.options {
            if !seen.insert(o) {
                return Err(ProtocolError::InvalidTask(format!(
                    "{}: duplicate option {o}",
                    self.id
                )));
            }
        }
        if self.correct_label == self.distractor_label {
            return Err(ProtocolError::InvalidTask(format!(
                "{}: correct and distractor labels coincide",
                self.id
            )));
        }
        for l in [&self.correct_label, &self.distractor_label] {
            if !self.options.contains(l) {
                return Err(ProtocolError::InvalidTask(format!(
                    "{}: label {l} not among options",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Ensemble shape: `n` agents with the first `corrupt_count` slots corrupt
/// under the canonical assignment, chunk size `k`, shot count `m`, token
/// budget `l` per trajectory.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub n: usize,
    pub corrupt_count: usize,
    pub k: usize,
    pub m: usize,
    pub l: usize,
    pub payload_tier: PayloadTier,
    pub agent_specs: Vec<AgentSpec>,
}

impl EnsembleConfig {
    /// Homogeneous ensemble: every slot runs the same kind, slots
    /// `0..corrupt_count` corrupt. `m` defaults to `n`.
    pub fn homogeneous(
        kind: AgentKind,
        n: usize,
        corrupt_count: usize,
        k: usize,
        l: usize,
        payload_tier: PayloadTier,
    ) -> Result<Self, ProtocolError> {
        let agent_specs = (0..n)
            .map(|slot| AgentSpec {
                kind: kind.clone(),
                role: if slot < corrupt_count { Role::Corrupt } else { Role::Honest },
            })
            .collect();
        let cfg = Self { n, corrupt_count, k, m: n, l, payload_tier, agent_specs };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_shots(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    /// Randomly permutes which slots are corrupt, keeping the counts. For
    /// order-sensitivity studies; the canonical assignment stays the default.
    pub fn permute_roles<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        use rand::seq::SliceRandom;
        let mut roles: Vec<Role> = self.agent_specs.iter().map(|s| s.role).collect();
        roles.shuffle(rng);
        for (spec, role) in self.agent_specs.iter_mut().zip(roles) {
            spec.role = role;
        }
    }

    pub fn rho(&self) -> f64 {
        self.corrupt_count as f64 / self.n as f64
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.n == 0 {
            return Err(ProtocolError::InvalidEnsemble("n must be >= 1".into()));
        }
        if self.corrupt_count > self.n {
            return Err(ProtocolError::InvalidEnsemble(format!(
                "corrupt_count {} exceeds n {}",
                self.corrupt_count, self.n
            )));
        }
        if self.k == 0 || self.m == 0 {
            return Err(ProtocolError::InvalidEnsemble("k and m must be >= 1".into()));
        }
        if self.k > self.l {
            return Err(ProtocolError::InvalidEnsemble(format!(
                "chunk size k = {} exceeds token budget l = {}",
                self.k, self.l
            )));
        }
        if self.agent_specs.len() != self.n {
            return Err(ProtocolError::InvalidEnsemble(format!(
                "expected {} agent specs, got {}",
                self.n,
                self.agent_specs.len()
            )));
        }
        let corrupt = self.agent_specs.iter().filter(|s| s.role == Role::Corrupt).count();
        if corrupt != self.corrupt_count {
            return Err(ProtocolError::InvalidEnsemble(format!(
                "corrupt_count {} does not match {} corrupt specs",
                self.corrupt_count, corrupt
            )));
        }
        Ok(())
    }
}

/// One agent turn on the shared trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub turn_index: usize,
    pub agent_slot: usize,
    pub agent_role: Role,
    pub tokens: Vec<String>,
    /// Potential after this chunk, for latent-dynamics agents.
    pub potential_after: Option<PotentialState>,
    /// Adapter metadata (e.g. a remote continuation fallback), not part of
    /// the wire format.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl Chunk {
    pub fn v_after(&self) -> Option<f64> {
        self.potential_after.map(|p| p.v())
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// A completed (or aborted) shared trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub chunks: Vec<Chunk>,
    pub final_answer: Option<Label>,
    pub final_speaker_role: Option<Role>,
    /// Set when a backend failure aborted the relay; partial chunks are
    /// retained.
    pub aborted: Option<String>,
}

impl Trajectory {
    pub fn total_tokens(&self) -> usize {
        self.chunks.iter().map(|c| c.tokens.len()).sum()
    }

    /// Generated text of all chunks, in order.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for (i, chunk) in self.chunks.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&chunk.text());
        }
        out
    }

    pub fn final_potential(&self) -> Option<PotentialState> {
        self.chunks.iter().rev().find_map(|c| c.potential_after)
    }
}

/// Result of one independent (non-relay) generation.
#[derive(Debug, Clone)]
pub struct IndependentRun {
    pub answer: Option<Label>,
    pub transcript: String,
    /// Backend failure, recorded rather than dropped; `answer` is then
    /// unresolved.
    pub error: Option<String>,
}

/// Aggregated plurality outcome of several runs.
#[derive(Debug, Clone)]
pub struct AggregateOutcome {
    /// None when every run came back unresolved (no quorum).
    pub vote: Option<VoteOutcome>,
    pub answers: Vec<Option<Label>>,
    pub unresolved: usize,
    pub errors: Vec<String>,
}

impl AggregateOutcome {
    fn from_answers<R: Rng + ?Sized>(
        answers: Vec<Option<Label>>,
        errors: Vec<String>,
        policy: TiePolicy,
        rng: &mut R,
    ) -> Result<Self, ProtocolError> {
        let resolved: Vec<Label> = answers.iter().flatten().cloned().collect();
        let unresolved = answers.len() - resolved.len();
        let vote = match plurality(&resolved, policy, rng) {
            Ok(v) => Some(v),
            Err(StatsError::NoQuorum) => None,
            Err(e) => return Err(e.into()),
        };
        Ok(Self { vote, answers, unresolved, errors })
    }

    pub fn winner(&self) -> Option<&Label> {
        self.vote.as_ref().map(|v| &v.winner)
    }
}

/// Scans a transcript for the last well-formed answer marker
/// `FINAL ANSWER: (<label>)` and returns its label if it is one of the
/// task's options.
pub fn extract_answer(transcript: &str, task: &Task) -> Option<Label> {
    let mut last = None;
    let mut rest = transcript;
    while let Some(pos) = rest.find(ANSWER_MARKER) {
        rest = &rest[pos + ANSWER_MARKER.len()..];
        let candidate = rest.trim_start();
        if let Some(inner) = candidate.strip_prefix('(') {
            if let Some(end) = inner.find(')') {
                last = Some(inner[..end].to_owned());
            }
        }
    }
    let label = Label::new(last?);
    task.options.contains(&label).then_some(label)
}

/// Role of the agent that produced the last chunk.
pub fn attribute_final_speaker(trajectory: &Trajectory) -> Result<Role, ProtocolError> {
    trajectory
        .chunks
        .last()
        .map(|c| c.agent_role)
        .ok_or(ProtocolError::EmptyTrajectory)
}

/// Runs one agent in isolation over the full token budget `l`.
///
/// Corrupt agents see their payload in the private context; honest agents
/// see clean instructions. Backend failures come back as an unresolved
/// answer with the error recorded.
pub fn run_independent(
    spec: &AgentSpec,
    slot: usize,
    shot: usize,
    task: &Task,
    payload_tier: PayloadTier,
    l: usize,
    rng: &mut ChaCha8Rng,
) -> Result<IndependentRun, ProtocolError> {
    task.validate()?;
    let tier = effective_tier(spec.role, payload_tier);
    let private_context = bind_payload(spec, tier, task)?;
    match &spec.kind {
        AgentKind::Potential(params) => {
            let mut state = PotentialState::from_v(DEFAULT_V0);
            for _ in 0..l {
                state = match spec.role {
                    Role::Honest => honest_step(state, params, rng),
                    Role::Corrupt => corrupt_step(state, params, rng),
                };
            }
            let label = if in_attractor(&state, params.frame()) {
                task.correct_label.clone()
            } else {
                task.distractor_label.clone()
            };
            let mut transcript = filler_text(l.saturating_sub(3));
            push_marker(&mut transcript, &label);
            Ok(IndependentRun { answer: Some(label), transcript, error: None })
        }
        AgentKind::Scripted { p_correct, p_adhere } => {
            let label = scripted_answer(spec.role, *p_correct, *p_adhere, task, rng);
            let mut transcript = filler_text(l.saturating_sub(3).min(32));
            push_marker(&mut transcript, &label);
            Ok(IndependentRun { answer: Some(label), transcript, error: None })
        }
        AgentKind::Replay(pool) => match pool.answer_for(&task.id, shot, slot) {
            Some(label) => Ok(IndependentRun {
                answer: Some(label.clone()),
                transcript: format!("(replayed) FINAL ANSWER: ({label})"),
                error: None,
            }),
            None => Err(AgentError::MissingReplayRecord {
                task_id: task.id.clone(),
                shot,
                turn_or_slot: slot,
            }
            .into()),
        },
        AgentKind::Remote(client) => {
            match client.complete(&private_context, &task.prompt, None, l) {
                Ok(completion) => {
                    let answer = extract_answer(&completion.text, task);
                    Ok(IndependentRun { answer, transcript: completion.text, error: None })
                }
                Err(e) => Ok(IndependentRun {
                    answer: None,
                    transcript: String::new(),
                    error: Some(e.to_string()),
                }),
            }
        }
    }
}

/// Independent generation for every slot, then plurality over the resolved
/// answers. All-unresolved yields an explicit no-quorum outcome.
pub fn run_maj(
    ensemble: &EnsembleConfig,
    task: &Task,
    policy: TiePolicy,
    rng: &mut ChaCha8Rng,
) -> Result<AggregateOutcome, ProtocolError> {
    ensemble.validate()?;
    let mut answers = Vec::with_capacity(ensemble.n);
    let mut errors = Vec::new();
    for (slot, spec) in ensemble.agent_specs.iter().enumerate() {
        let run =
            run_independent(spec, slot, 0, task, ensemble.payload_tier, ensemble.l, rng)?;
        if let Some(e) = run.error {
            errors.push(format!("slot {slot}: {e}"));
        }
        answers.push(run.answer);
    }
    AggregateOutcome::from_answers(answers, errors, policy, rng)
}

/// Runs one shared relay trajectory.
pub fn run_rr_trajectory(
    ensemble: &EnsembleConfig,
    task: &Task,
    shot: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory, ProtocolError> {
    ensemble.validate()?;
    task.validate()?;
    let contexts: Vec<String> = ensemble
        .agent_specs
        .iter()
        .map(|spec| bind_payload(spec, effective_tier(spec.role, ensemble.payload_tier), task))
        .collect::<Result<_, _>>()?;

    let has_potential = ensemble
        .agent_specs
        .iter()
        .any(|s| matches!(s.kind, AgentKind::Potential(_)));
    let mut potential = has_potential.then(|| PotentialState::from_v(DEFAULT_V0));

    let mut trajectory = Trajectory {
        task_id: task.id.clone(),
        chunks: Vec::new(),
        final_answer: None,
        final_speaker_role: None,
        aborted: None,
    };
    let mut transcript = String::new();
    let mut tokens_used = 0usize;
    let mut turn = 0usize;

    while tokens_used < ensemble.l {
        let slot = turn % ensemble.n;
        let spec = &ensemble.agent_specs[slot];
        let k_eff = ensemble.k.min(ensemble.l - tokens_used);
        let request = GenerationRequest {
            private_context: &contexts[slot],
            task,
            turn_index: turn,
            agent_slot: slot,
            shot,
            k: k_eff,
            shared: SharedView {
                transcript: &transcript,
                tokens_used,
                budget: ensemble.l,
                potential,
            },
        };
        let chunk = match generate_chunk(spec, &request, rng) {
            Ok(c) => c,
            Err(e) => {
                trajectory.aborted = Some(format!("turn {turn} (slot {slot}): {e}"));
                break;
            }
        };
        if chunk.potential_after.is_some() {
            potential = chunk.potential_after;
        }
        tokens_used += chunk.tokens.len();
        if !transcript.is_empty() {
            transcript.push(' ');
        }
        transcript.push_str(&chunk.text());
        let has_marker = chunk.text().contains(ANSWER_MARKER);
        trajectory.chunks.push(chunk);
        turn += 1;
        if has_marker {
            break;
        }
    }

    trajectory.final_answer = extract_answer(&transcript, task);
    trajectory.final_speaker_role = trajectory.chunks.last().map(|c| c.agent_role);
    Ok(trajectory)
}

/// `M` independent relay trajectories, plurality over their final answers.
pub fn run_rrmaj(
    ensemble: &EnsembleConfig,
    task: &Task,
    policy: TiePolicy,
    rng: &mut ChaCha8Rng,
) -> Result<(AggregateOutcome, Vec<Trajectory>), ProtocolError> {
    let mut trajectories = Vec::with_capacity(ensemble.m);
    let mut answers = Vec::with_capacity(ensemble.m);
    let mut errors = Vec::new();
    for shot in 0..ensemble.m {
        let trajectory = run_rr_trajectory(ensemble, task, shot, rng)?;
        if let Some(reason) = &trajectory.aborted {
            errors.push(format!("shot {shot}: {reason}"));
        }
        answers.push(trajectory.final_answer.clone());
        trajectories.push(trajectory);
    }
    let outcome = AggregateOutcome::from_answers(answers, errors, policy, rng)?;
    Ok((outcome, trajectories))
}

fn effective_tier(role: Role, tier: PayloadTier) -> PayloadTier {
    match role {
        Role::Corrupt => tier,
        Role::Honest => PayloadTier::None,
    }
}

fn scripted_answer<R: Rng + ?Sized>(
    role: Role,
    p_correct: f64,
    p_adhere: f64,
    task: &Task,
    rng: &mut R,
) -> Label {
    let honest_pick = |rng: &mut R| {
        if rng.random_bool(p_correct) {
            task.correct_label.clone()
        } else {
            task.distractor_label.clone()
        }
    };
    match role {
        Role::Honest => honest_pick(rng),
        Role::Corrupt => {
            if rng.random_bool(p_adhere) {
                task.distractor_label.clone()
            } else {
                honest_pick(rng)
            }
        }
    }
}

pub(crate) fn filler_text(tokens: usize) -> String {
    let mut out = String::with_capacity(tokens * 2);
    for i in 0..tokens {
        if i > 0 {
            out.push(' ');
        }
        out.push('.');
    }
    out
}

pub(crate) fn push_marker(transcript: &mut String, label: &Label) {
    if !transcript.is_empty() {
        transcript.push(' ');
    }
    transcript.push_str(&format!("{ANSWER_MARKER} ({label})"));
}
