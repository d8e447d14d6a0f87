//! Voting mathematics and statistical analyses.
//!
//! Plurality with an explicit tie policy, the single-draw expectation anchor,
//! Condorcet scaling curves, bootstrap pool resampling, Fisher's exact test
//! and the outcome-level aggregation impossibility checker.

mod fisher;
mod scaling;
mod trinity;

pub use fisher::fisher_exact_2x2;
pub use scaling::{bootstrap_scaling, condorcet_curve, PoolEntry, ScalingPool};
pub use trinity::{
    random_monotone_mechanism, trinity_check, ConstantCorrect, Mechanism, MonotoneScore,
    PluralityMech, RandomDictator, TrinityReport,
};

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no quorum: no resolved answers to aggregate")]
    NoQuorum,
    #[error("probability out of range: {0}")]
    InvalidProbability(f64),
    #[error("ensemble must contain at least one agent")]
    EmptyEnsemble,
    #[error("degenerate contingency table: every margin must be positive")]
    DegenerateMargins,
    #[error("scaling pool is empty")]
    EmptyPool,
    #[error("pool entries must all hold exactly {expected} outcomes, found {found}")]
    RaggedPool { expected: usize, found: usize },
    #[error("requested m = {m} exceeds pool size m_star = {m_star}")]
    MExceedsPool { m: usize, m_star: usize },
    #[error("bootstrap needs trials >= 1")]
    NoTrials,
    #[error("asymmetric yield needs at least one row with rho <= 0.4 and one with rho >= 0.6")]
    MissingYieldRows,
    #[error("trinity checker needs n >= 2, got {0}")]
    TrinityTooSmall(usize),
    #[error("mechanism returned an invalid distribution: {0}")]
    BadMechanism(String),
}

/// An answer label. Ordering is lexicographic, which is also the order the
/// deterministic tie policy uses.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(String);

impl Label {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// How plurality ties are broken. Every experiment records which policy
/// produced its outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Uniform draw among the tied labels from the caller's seeded stream.
    SeededUniform,
    /// Smallest label wins.
    Lexicographic,
}

/// Outcome of a plurality vote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub counts: BTreeMap<Label, usize>,
    pub winner: Label,
    pub tie: bool,
    pub tie_members: BTreeSet<Label>,
}

/// Plurality over a list of resolved labels.
///
/// The winner is drawn from the argmax set; `tie` is set whenever that set
/// has more than one member. An empty input has no quorum.
pub fn plurality<R: Rng + ?Sized>(
    labels: &[Label],
    policy: TiePolicy,
    rng: &mut R,
) -> Result<VoteOutcome, StatsError> {
    if labels.is_empty() {
        return Err(StatsError::NoQuorum);
    }
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    for label in labels {
        *counts.entry(label.clone()).or_insert(0) += 1;
    }
    let top = *counts.values().max().expect("non-empty counts");
    let tied: Vec<&Label> = counts
        .iter()
        .filter(|(_, &c)| c == top)
        .map(|(l, _)| l)
        .collect();
    let tie = tied.len() > 1;
    let winner = match (tie, policy) {
        (false, _) | (true, TiePolicy::Lexicographic) => tied[0].clone(),
        (true, TiePolicy::SeededUniform) => tied[rng.random_range(0..tied.len())].clone(),
    };
    let tie_members = if tie {
        tied.into_iter().cloned().collect()
    } else {
        BTreeSet::new()
    };
    Ok(VoteOutcome { counts, winner, tie, tie_members })
}

/// Expected single-draw accuracy of an ensemble with `c` corrupted and `t`
/// truthful agents: the head-count-weighted sum of the per-role accuracies.
pub fn maj_m1_expectation(
    c: usize,
    t: usize,
    p_corrupt_correct: f64,
    p_truthful_correct: f64,
) -> Result<f64, StatsError> {
    if c + t == 0 {
        return Err(StatsError::EmptyEnsemble);
    }
    for p in [p_corrupt_correct, p_truthful_correct] {
        if !(0.0..=1.0).contains(&p) {
            return Err(StatsError::InvalidProbability(p));
        }
    }
    let n = (c + t) as f64;
    Ok(c as f64 / n * p_corrupt_correct + t as f64 / n * p_truthful_correct)
}

/// Splits per-configuration accuracy gaps into the robustness tax paid in
/// mostly-safe environments and the rescue gain earned in mostly-compromised
/// ones.
///
/// `delta_rows` maps `(c, t)` to the accuracy gap of that row. The tax is
/// the mean gap over rows with `0 < rho <= 0.4`, the gain the mean over rows
/// with `0.6 <= rho < 1`; ceiling and floor rows carry no gap and are
/// ignored if present.
pub fn asymmetric_yield(
    delta_rows: &BTreeMap<(usize, usize), f64>,
) -> Result<(f64, f64), StatsError> {
    let mut tax = Vec::new();
    let mut gain = Vec::new();
    for (&(c, t), &delta) in delta_rows {
        let n = c + t;
        if n == 0 {
            continue;
        }
        let rho = c as f64 / n as f64;
        if rho > 0.0 && rho <= 0.4 {
            tax.push(delta);
        } else if rho >= 0.6 && rho < 1.0 {
            gain.push(delta);
        }
    }
    if tax.is_empty() || gain.is_empty() {
        return Err(StatsError::MissingYieldRows);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok((mean(&tax), mean(&gain)))
}
