//! Test-time compute scaling: analytic Condorcet curves and bootstrap
//! resampling over recorded outcome pools.
//!
//! Both tools answer the same question — what happens to plurality accuracy
//! as the number of aggregated shots grows — one in the idealized binary
//! model, one on real recorded outcomes. Scaling helps exactly when the
//! per-shot accuracy is above one half and hurts when it is below; pools
//! straddling 0.5 are where ensembles quietly turn into error amplifiers.

use rand::Rng;

use super::{plurality, Label, StatsError, TiePolicy};

/// Probability that plurality over `m` independent binary shots, each
/// correct with probability `p`, returns the correct label.
///
/// `sum_{j > m/2} C(m,j) p^j (1-p)^(m-j)`, plus the exact-tie mass for even
/// `m` weighted by the tie policy: half under [`TiePolicy::SeededUniform`].
/// Under [`TiePolicy::Lexicographic`] the binary model's label pair is
/// `correct` / `distractor`, and `correct` sorts first, so ties count in
/// full. Binomial coefficients are exact integers up to `m = 64` and
/// log-space beyond.
pub fn condorcet_curve(p: f64, m: usize, policy: TiePolicy) -> f64 {
    assert!((0.0..=1.0).contains(&p), "p must be a probability");
    assert!(m >= 1, "m must be >= 1");
    let q = 1.0 - p;
    let term = |j: usize| -> f64 {
        if m <= 64 {
            binomial_exact(m, j) * p.powi(j as i32) * q.powi((m - j) as i32)
        } else {
            let ln = ln_binomial(m, j) + j as f64 * p.ln() + (m - j) as f64 * q.ln();
            ln.exp()
        }
    };
    // Degenerate endpoints, kept away from ln(0) in the log path.
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    let mut acc = 0.0;
    for j in (m / 2 + 1)..=m {
        acc += term(j);
    }
    if m % 2 == 0 {
        acc += tie_credit(policy) * term(m / 2);
    }
    acc.clamp(0.0, 1.0)
}

fn tie_credit(policy: TiePolicy) -> f64 {
    match policy {
        TiePolicy::SeededUniform => 0.5,
        TiePolicy::Lexicographic => 1.0,
    }
}

fn binomial_exact(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 1..=k {
        result = result * (n - k + i) as u128 / i as u128;
    }
    result as f64
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    let lf = |x: usize| (1..=x).map(|i| (i as f64).ln()).sum::<f64>();
    lf(n) - lf(k) - lf(n - k)
}

/// Recorded outcomes for one task under one condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolEntry {
    pub task_id: String,
    pub correct: Label,
    pub outcomes: Vec<Label>,
}

/// A pool of `m_star` recorded outcome labels per task, resampled by
/// [`bootstrap_scaling`] to estimate accuracy at smaller shot counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScalingPool {
    entries: Vec<PoolEntry>,
    m_star: usize,
}

impl ScalingPool {
    /// Builds a pool; every entry must hold the same number of outcomes.
    pub fn new(entries: Vec<PoolEntry>) -> Result<Self, StatsError> {
        let m_star = entries.first().map(|e| e.outcomes.len()).ok_or(StatsError::EmptyPool)?;
        if m_star == 0 {
            return Err(StatsError::EmptyPool);
        }
        for e in &entries {
            if e.outcomes.len() != m_star {
                return Err(StatsError::RaggedPool { expected: m_star, found: e.outcomes.len() });
            }
        }
        Ok(Self { entries, m_star })
    }

    pub fn m_star(&self) -> usize {
        self.m_star
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    /// Fraction of pool outcomes that match their task's correct label.
    pub fn empirical_accuracy(&self) -> f64 {
        let hits: usize = self
            .entries
            .iter()
            .map(|e| e.outcomes.iter().filter(|o| **o == e.correct).count())
            .sum();
        hits as f64 / (self.entries.len() * self.m_star) as f64
    }
}

/// Bootstrap estimate of plurality accuracy at shot count `m`.
///
/// Each trial draws `m` outcomes per task uniformly with replacement from
/// that task's pool, takes the plurality winner and scores it against the
/// task's correct label; the returned pair is the mean and sample standard
/// deviation of the per-trial accuracy.
pub fn bootstrap_scaling<R: Rng + ?Sized>(
    pool: &ScalingPool,
    m: usize,
    trials: usize,
    policy: TiePolicy,
    rng: &mut R,
) -> Result<(f64, f64), StatsError> {
    if m == 0 || trials == 0 {
        return Err(StatsError::NoTrials);
    }
    if m > pool.m_star {
        return Err(StatsError::MExceedsPool { m, m_star: pool.m_star });
    }
    let mut per_trial = Vec::with_capacity(trials);
    let mut draw = Vec::with_capacity(m);
    for _ in 0..trials {
        let mut hits = 0usize;
        for entry in &pool.entries {
            draw.clear();
            for _ in 0..m {
                let idx = rng.random_range(0..pool.m_star);
                draw.push(entry.outcomes[idx].clone());
            }
            let outcome = plurality(&draw, policy, rng)?;
            if outcome.winner == entry.correct {
                hits += 1;
            }
        }
        per_trial.push(hits as f64 / pool.entries.len() as f64);
    }
    let mean = per_trial.iter().sum::<f64>() / trials as f64;
    let std = if trials == 1 {
        0.0
    } else {
        (per_trial.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt()
    };
    Ok((mean, std))
}
