//! Stability analysis of the relay dynamics.
//!
//! Over one turn of `K` tokens starting from potential `v0`, an honest agent
//! is guaranteed to restore at least
//!
//! ```text
//! R_H(K) = (1 - (1 - gamma_h)^K) * v0
//! ```
//!
//! while a corrupted agent can inflate the potential by at most the
//! compounded drift bound
//!
//! ```text
//! DV_C(K) = sum of delta(v) along the worst-case corrupt turn
//!         = ((1 + alpha)^K - 1) * v0        (linear drift)
//! ```
//!
//! Requiring the expected per-turn change to be negative at corruption ratio
//! `rho` gives the conservative threshold
//!
//! ```text
//! rho_max(K) = R_H(K) / (R_H(K) + DV_C(K))
//! ```
//!
//! below which the shared trajectory is expected to sink into the attractor
//! regardless of who holds the majority. `DV_C` grows super-linearly in `K`
//! while `R_H` saturates, so the threshold decays as turns get longer —
//! interrupting generation often is what keeps the bound above 1/2.
//!
//! For linear drift the model also admits an exact threshold independent of
//! `K` ([`rho_crit_exact`]): the per-token dynamics are multiplicative, so
//! the expected log-potential change is zero at
//! `rho = ln(1/(1-gamma)) / (ln(1/(1-gamma)) + ln(1+alpha))`. The gap between
//! the two thresholds is the price of the conservative bound; [`phase_sweep`]
//! measures both against Monte-Carlo runs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latent::{corrupt_step, honest_step, DriftModel, OperatorParams, PotentialState};
use crate::seed::child_rng;

#[derive(Debug, Error, PartialEq)]
pub enum StabilityError {
    #[error("chunk size k must be >= 1 for the bound, got {0}")]
    DegenerateChunk(usize),
    #[error("initial potential v0 must be finite and > 0, got {0}")]
    InvalidV0(f64),
    #[error("corruption ratio rho must lie in [0, 1], got {0}")]
    InvalidRho(f64),
    #[error("deterministic schedule needs 0 <= c <= n and n >= 1, got c={c}, n={n}")]
    InvalidDeterministicSchedule { c: usize, n: usize },
    #[error("deterministic schedule requires rho = c/n; got rho={rho}, c={c}, n={n}")]
    RhoScheduleMismatch { rho: f64, c: usize, n: usize },
    #[error("alpha = 0 has no finite log-multiplicative threshold")]
    ZeroAlpha,
    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),
}

/// How corrupt turns are assigned along the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    /// Each turn is corrupt independently with probability `rho`. Matches
    /// the expectation the threshold is derived from.
    Stochastic,
    /// Fixed round-robin of `n` slots per cycle, the first `c` of them
    /// corrupt. Matches the actual relay schedule (slot = turn mod n) under
    /// the canonical corruption assignment.
    Deterministic { c: usize, n: usize },
    /// Fixed round-robin with an explicit per-cycle corruption mask, for
    /// ordering studies. `true` marks a corrupt slot.
    Ordered { corrupt_slots: Vec<bool> },
}

/// One simulated system: operators, chunk size, start, ratio and schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub params: OperatorParams,
    pub k: usize,
    pub v0: f64,
    pub rho: f64,
    pub schedule: Schedule,
}

impl StabilityConfig {
    pub fn new(
        params: OperatorParams,
        k: usize,
        v0: f64,
        rho: f64,
        schedule: Schedule,
    ) -> Result<Self, StabilityError> {
        if k == 0 {
            return Err(StabilityError::DegenerateChunk(k));
        }
        if !v0.is_finite() || v0 <= 0.0 {
            return Err(StabilityError::InvalidV0(v0));
        }
        if !rho.is_finite() || !(0.0..=1.0).contains(&rho) {
            return Err(StabilityError::InvalidRho(rho));
        }
        match &schedule {
            Schedule::Deterministic { c, n } => {
                if *n == 0 || c > n {
                    return Err(StabilityError::InvalidDeterministicSchedule { c: *c, n: *n });
                }
                let implied = *c as f64 / *n as f64;
                if (rho - implied).abs() > 1e-12 {
                    return Err(StabilityError::RhoScheduleMismatch { rho, c: *c, n: *n });
                }
            }
            Schedule::Ordered { corrupt_slots } => {
                let n = corrupt_slots.len();
                let c = corrupt_slots.iter().filter(|&&x| x).count();
                if n == 0 {
                    return Err(StabilityError::InvalidDeterministicSchedule { c, n });
                }
                let implied = c as f64 / n as f64;
                if (rho - implied).abs() > 1e-12 {
                    return Err(StabilityError::RhoScheduleMismatch { rho, c, n });
                }
            }
            Schedule::Stochastic => {}
        }
        Ok(Self { params, k, v0, rho, schedule })
    }

    /// Deterministic-schedule config with `rho` filled in as `c/n`.
    pub fn deterministic(
        params: OperatorParams,
        k: usize,
        v0: f64,
        c: usize,
        n: usize,
    ) -> Result<Self, StabilityError> {
        if n == 0 || c > n {
            return Err(StabilityError::InvalidDeterministicSchedule { c, n });
        }
        let rho = c as f64 / n as f64;
        Self::new(params, k, v0, rho, Schedule::Deterministic { c, n })
    }
}

/// Verdict of a finite run. `Converged` once `v <= v_success`, `Diverged`
/// once `v >= 100 * v0`; runs that reach the turn budget undecided are
/// reported as such, never coerced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Converged { turns: usize },
    Diverged { turns: usize },
    Undecided,
}

/// Potential recorded at every turn boundary, plus the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialTrace {
    pub samples: Vec<(usize, f64)>,
    pub verdict: Verdict,
}

/// Guaranteed restoration over one honest turn of `k` tokens:
/// `(1 - (1-gamma_h)^k) * v0`.
pub fn honest_restoration(gamma_h: f64, k: usize, v0: f64) -> f64 {
    (1.0 - (1.0 - gamma_h).powi(k as i32)) * v0
}

/// Worst-case cumulative drift over one corrupt turn of `k` tokens,
/// iterating `v <- v + delta(v)` from `v0`. Equals `((1+alpha)^k - 1) * v0`
/// for linear drift.
pub fn adversarial_drift(drift: &DriftModel, k: usize, v0: f64) -> f64 {
    if let DriftModel::Linear { alpha } = drift {
        return ((1.0 + alpha).powi(k as i32) - 1.0) * v0;
    }
    let mut v = v0;
    for _ in 0..k {
        v += drift.delta(v);
    }
    v - v0
}

/// Conservative corruption threshold `R_H / (R_H + DV_C)`.
///
/// Sufficient, not tight: staying below it guarantees the expected per-turn
/// potential change is negative.
pub fn rho_max_conservative(
    gamma_h: f64,
    drift: &DriftModel,
    k: usize,
    v0: f64,
) -> Result<f64, StabilityError> {
    if k == 0 {
        return Err(StabilityError::DegenerateChunk(k));
    }
    let r = honest_restoration(gamma_h, k, v0);
    let d = adversarial_drift(drift, k, v0);
    Ok(r / (r + d))
}

/// Exact threshold for the linear-drift realization: the corruption ratio at
/// which the expected per-token log-potential change is zero,
/// `ln(1/(1-gamma)) / (ln(1/(1-gamma)) + ln(1+alpha))`. Independent of `k`.
///
/// This is a diagnostic of the model, not part of the conservative bound; it
/// separates what the bound guarantees from where the dynamics actually tip.
pub fn rho_crit_exact(gamma_h: f64, alpha: f64) -> Result<f64, StabilityError> {
    if alpha == 0.0 {
        return Err(StabilityError::ZeroAlpha);
    }
    let lg = -(1.0 - gamma_h).ln();
    let la = (1.0 + alpha).ln();
    Ok(lg / (lg + la))
}

/// Expected potential change over one turn at ratio `rho`, with the
/// per-turn quantities evaluated at the turn-start potential:
/// `(1-rho) * (-R_H) + rho * DV_C`. Affine in `rho`, with its root at
/// [`rho_max_conservative`].
pub fn expected_turn_drift(cfg: &StabilityConfig) -> f64 {
    let r = honest_restoration(cfg.params.gamma_h(), cfg.k, cfg.v0);
    let d = adversarial_drift(cfg.params.drift(), cfg.k, cfg.v0);
    (1.0 - cfg.rho) * (-r) + cfg.rho * d
}

/// Runs the turn-by-turn dynamics for up to `max_turns` turns.
///
/// Each turn draws its role from the schedule and applies `k` single-token
/// operator steps. The potential is sampled at every turn boundary and the
/// run stops at the first boundary that crosses either verdict threshold.
pub fn simulate_cycles<R: Rng + ?Sized>(
    cfg: &StabilityConfig,
    max_turns: usize,
    rng: &mut R,
) -> PotentialTrace {
    let v_success = cfg.params.frame().v_success();
    let diverge_at = 100.0 * cfg.v0;
    let mut state = PotentialState::from_v(cfg.v0);
    let mut samples = Vec::with_capacity(max_turns.min(4096) + 1);
    samples.push((0, state.v()));

    for turn in 0..max_turns {
        let corrupt = match &cfg.schedule {
            Schedule::Stochastic => rng.random_bool(cfg.rho),
            Schedule::Deterministic { c, n } => turn % n < *c,
            Schedule::Ordered { corrupt_slots } => corrupt_slots[turn % corrupt_slots.len()],
        };
        for _ in 0..cfg.k {
            state = if corrupt {
                corrupt_step(state, &cfg.params, rng)
            } else {
                honest_step(state, &cfg.params, rng)
            };
        }
        samples.push((turn + 1, state.v()));
        if state.v() <= v_success {
            return PotentialTrace { samples, verdict: Verdict::Converged { turns: turn + 1 } };
        }
        if state.v() >= diverge_at {
            return PotentialTrace { samples, verdict: Verdict::Diverged { turns: turn + 1 } };
        }
    }
    PotentialTrace { samples, verdict: Verdict::Undecided }
}

/// One cell of a phase sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub k: usize,
    pub rho: f64,
    pub frac_converged: f64,
    pub frac_diverged: f64,
    pub frac_undecided: f64,
    pub rho_max: f64,
    pub rho_crit: f64,
}

/// Monte-Carlo convergence fraction over a `(K, rho)` grid, with both
/// analytic thresholds attached to every cell.
///
/// Cells are independent work items; each trial derives its own random
/// stream from the root seed and its coordinates, so the table is identical
/// for any worker count.
pub fn phase_sweep(
    gamma_h: f64,
    alpha: f64,
    k_list: &[usize],
    rho_grid: &[f64],
    trials: usize,
    schedule_of: impl Fn(f64) -> Schedule + Sync,
    max_turns: usize,
    root_seed: u64,
) -> Result<Vec<SweepCell>, StabilityError> {
    if k_list.is_empty() {
        return Err(StabilityError::EmptyGrid("k_list"));
    }
    if rho_grid.is_empty() {
        return Err(StabilityError::EmptyGrid("rho_grid"));
    }
    if trials == 0 {
        return Err(StabilityError::EmptyGrid("trials"));
    }
    let drift = DriftModel::linear(alpha).map_err(|_| StabilityError::EmptyGrid("alpha"))?;
    let params = OperatorParams::with_linear_drift(gamma_h, alpha)
        .map_err(|_| StabilityError::EmptyGrid("gamma"))?;
    let rho_crit = rho_crit_exact(gamma_h, alpha)?;

    let cells: Vec<(usize, f64)> = k_list
        .iter()
        .flat_map(|&k| rho_grid.iter().map(move |&r| (k, r)))
        .collect();

    cells
        .par_iter()
        .map(|&(k, rho)| {
            let schedule = schedule_of(rho);
            let rho_eff = match &schedule {
                Schedule::Deterministic { c, n } => *c as f64 / *n as f64,
                Schedule::Ordered { corrupt_slots } => {
                    corrupt_slots.iter().filter(|&&x| x).count() as f64 / corrupt_slots.len() as f64
                }
                Schedule::Stochastic => rho,
            };
            let cfg = StabilityConfig::new(params.clone(), k, 1.0, rho_eff, schedule)?;
            let mut converged = 0usize;
            let mut diverged = 0usize;
            for trial in 0..trials {
                let mut rng = child_rng(
                    root_seed,
                    &["sweep", &k.to_string(), &format!("{rho:.9}"), &trial.to_string()],
                );
                match simulate_cycles(&cfg, max_turns, &mut rng).verdict {
                    Verdict::Converged { .. } => converged += 1,
                    Verdict::Diverged { .. } => diverged += 1,
                    Verdict::Undecided => {}
                }
            }
            let t = trials as f64;
            Ok(SweepCell {
                k,
                rho: rho_eff,
                frac_converged: converged as f64 / t,
                frac_diverged: diverged as f64 / t,
                frac_undecided: (trials - converged - diverged) as f64 / t,
                rho_max: rho_max_conservative(gamma_h, &drift, k, 1.0)?,
                rho_crit,
            })
        })
        .collect()
}

/// Renders a sweep as the tab-separated exchange table:
/// `K  rho  frac_converged  rho_max  rho_crit`, 6 significant digits.
pub fn sweep_to_tsv(cells: &[SweepCell]) -> String {
    let mut out = String::from("K\trho\tfrac_converged\trho_max\trho_crit\n");
    for c in cells {
        out.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
            c.k,
            Sig6(c.rho),
            Sig6(c.frac_converged),
            Sig6(c.rho_max),
            Sig6(c.rho_crit)
        ));
    }
    out
}

/// Wrapper printing a float with 6 significant digits.
struct Sig6(f64);

impl std::fmt::Display for Sig6 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0 == 0.0 {
            return write!(f, "0.00000");
        }
        let magnitude = self.0.abs().log10().floor() as i32;
        let decimals = (5 - magnitude).max(0) as usize;
        write!(f, "{:.*}", decimals, self.0)
    }
}

impl std::fmt::LowerExp for Sig6 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:e}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn linear(alpha: f64) -> DriftModel {
        DriftModel::linear(alpha).unwrap()
    }

    #[test]
    fn restoration_matches_reference_values() {
        // 1 - 0.97^100 = 0.9524474920745942
        assert_abs_diff_eq!(honest_restoration(0.03, 100, 1.0), 0.952, epsilon = 1e-3);
        assert_eq!(honest_restoration(0.5, 0, 1.0), 0.0);
        assert_abs_diff_eq!(honest_restoration(0.03, 1, 1.0), 0.03, epsilon = 1e-15);
    }

    #[test]
    fn drift_matches_reference_values() {
        // 1.004^100 - 1 = 0.4906348856478648
        assert_abs_diff_eq!(adversarial_drift(&linear(0.004), 100, 1.0), 0.490, epsilon = 1e-3);
        assert_eq!(adversarial_drift(&linear(0.0), 1000, 1.0), 0.0);
        assert_abs_diff_eq!(adversarial_drift(&linear(0.01), 2, 1.0), 0.0201, epsilon = 1e-12);
    }

    #[test]
    fn custom_drift_iterates_the_table() {
        // Constant bound 0.1 above v=1: three steps from 1.0 add 0.3.
        let table = DriftModel::custom(vec![(1.0, 0.1)]).unwrap();
        assert_abs_diff_eq!(adversarial_drift(&table, 3, 1.0), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn rho_max_reference_values() {
        let r = rho_max_conservative(0.03, &linear(0.004), 100, 1.0).unwrap();
        assert_abs_diff_eq!(r, 0.660, epsilon = 1e-3);

        let r1 = rho_max_conservative(0.03, &linear(0.004), 1, 1.0).unwrap();
        assert_abs_diff_eq!(r1, 0.882_352_941_176_470_6, epsilon = 1e-4);

        // Zero drift tolerates everything.
        assert_eq!(rho_max_conservative(0.2, &linear(0.0), 37, 1.0).unwrap(), 1.0);

        // Long turns let the compounding drift eclipse the saturating
        // restoration: 1.004^500 - 1 = 6.3596, so the bound lands at 0.1359.
        let r500 = rho_max_conservative(0.03, &linear(0.004), 500, 1.0).unwrap();
        assert_abs_diff_eq!(r500, 0.135_876, epsilon = 1e-3);

        assert_eq!(
            rho_max_conservative(0.03, &linear(0.004), 0, 1.0),
            Err(StabilityError::DegenerateChunk(0))
        );
    }

    #[test]
    fn rho_crit_reference_values() {
        assert_abs_diff_eq!(rho_crit_exact(0.03, 0.004).unwrap(), 0.8841, epsilon = 1e-4);
        // ln2 / (ln2 + ln 1.5)
        assert_abs_diff_eq!(rho_crit_exact(0.5, 0.5).unwrap(), 0.630_929_753_571_457, epsilon = 1e-12);
        assert_eq!(rho_crit_exact(0.1, 0.0), Err(StabilityError::ZeroAlpha));
    }

    #[test]
    fn conservative_bound_never_exceeds_exact_threshold() {
        for gamma in [0.01, 0.03, 0.05, 0.08, 0.1] {
            for alpha in [0.001, 0.002, 0.004, 0.007, 0.01] {
                for k in [1usize, 10, 50, 100, 300] {
                    let rmax = rho_max_conservative(gamma, &linear(alpha), k, 1.0).unwrap();
                    let rcrit = rho_crit_exact(gamma, alpha).unwrap();
                    assert!(
                        rmax <= rcrit + 1e-12,
                        "rho_max {rmax} > rho_crit {rcrit} at gamma={gamma} alpha={alpha} k={k}"
                    );
                }
            }
        }
    }

    #[test]
    fn expected_drift_reference_and_root() {
        let params = OperatorParams::with_linear_drift(0.03, 0.004).unwrap();
        let cfg = StabilityConfig::new(params.clone(), 100, 1.0, 0.6, Schedule::Stochastic).unwrap();
        // 0.4 * (-0.952447) + 0.6 * 0.490635 = -0.086598
        assert_abs_diff_eq!(expected_turn_drift(&cfg), -0.0866, epsilon = 1e-3);

        let rho0 = StabilityConfig::new(params.clone(), 100, 1.0, 0.0, Schedule::Stochastic).unwrap();
        assert_abs_diff_eq!(
            expected_turn_drift(&rho0),
            -honest_restoration(0.03, 100, 1.0),
            epsilon = 1e-15
        );

        let at_root = rho_max_conservative(0.03, &linear(0.004), 100, 1.0).unwrap();
        let cfg = StabilityConfig::new(params, 100, 1.0, at_root, Schedule::Stochastic).unwrap();
        assert_abs_diff_eq!(expected_turn_drift(&cfg), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn three_corrupt_two_honest_converges() {
        let params = OperatorParams::with_linear_drift(0.03, 0.004).unwrap();
        let cfg = StabilityConfig::deterministic(params, 100, 1.0, 3, 5).unwrap();
        let mut rng = rng_from(11);
        let trace = simulate_cycles(&cfg, 1000, &mut rng);
        assert!(matches!(trace.verdict, Verdict::Converged { .. }));
    }

    #[test]
    fn nineteen_corrupt_one_honest_diverges() {
        let params = OperatorParams::with_linear_drift(0.03, 0.004).unwrap();
        let cfg = StabilityConfig::deterministic(params, 100, 1.0, 19, 20).unwrap();
        let mut rng = rng_from(11);
        let trace = simulate_cycles(&cfg, 1000, &mut rng);
        assert!(matches!(trace.verdict, Verdict::Diverged { .. }));
    }

    #[test]
    fn all_honest_converges_monotonically() {
        let params = OperatorParams::with_linear_drift(0.03, 0.004).unwrap();
        let cfg = StabilityConfig::new(params, 10, 1.0, 0.0, Schedule::Stochastic).unwrap();
        let mut rng = rng_from(3);
        let trace = simulate_cycles(&cfg, 1000, &mut rng);
        assert!(matches!(trace.verdict, Verdict::Converged { .. }));
        for pair in trace.samples.windows(2) {
            assert!(pair[1].1 < pair[0].1);
            assert!(pair[1].0 == pair[0].0 + 1);
        }
    }

    #[test]
    fn undecided_runs_are_reported_not_coerced() {
        // rho pinned exactly at the exact threshold: log-drift zero, no
        // verdict in a handful of turns.
        let params = OperatorParams::with_linear_drift(0.03, 0.004).unwrap();
        let rho = rho_crit_exact(0.03, 0.004).unwrap();
        let cfg = StabilityConfig::new(params, 1, 1.0, rho, Schedule::Stochastic).unwrap();
        let mut rng = rng_from(5);
        let trace = simulate_cycles(&cfg, 3, &mut rng);
        assert_eq!(trace.verdict, Verdict::Undecided);
        assert_eq!(trace.samples.len(), 4);
    }

    #[test]
    fn deterministic_final_potential_is_order_invariant() {
        // Same c/n and turn count, different within-cycle positions of the
        // corrupt turns: with linear drift the final v must agree.
        let params = OperatorParams::with_linear_drift(0.05, 0.01).unwrap();
        let k = 7;
        let turns = 60; // multiple of the cycle length
        let run = |corrupt_slots: &[usize]| {
            let mut rng = rng_from(0);
            let mut state = PotentialState::from_v(1.0);
            for turn in 0..turns {
                let corrupt = corrupt_slots.contains(&(turn % 6));
                for _ in 0..k {
                    state = if corrupt {
                        corrupt_step(state, &params, &mut rng)
                    } else {
                        honest_step(state, &params, &mut rng)
                    };
                }
            }
            state.v()
        };
        let a = run(&[0, 1]);
        let b = run(&[2, 5]);
        assert_abs_diff_eq!(a, b, epsilon = 1e-9 * a.abs());
    }

    #[test]
    fn sweep_emits_full_grid_with_thresholds() {
        let cells = phase_sweep(
            0.03,
            0.004,
            &[1, 10],
            &[0.0, 0.5, 1.0],
            5,
            |_| Schedule::Stochastic,
            500,
            77,
        )
        .unwrap();
        assert_eq!(cells.len(), 6);
        for c in &cells {
            assert!(c.frac_converged + c.frac_diverged + c.frac_undecided <= 1.0 + 1e-12);
            assert_abs_diff_eq!(c.rho_crit, 0.8841, epsilon = 1e-4);
        }
        let tsv = sweep_to_tsv(&cells);
        let mut lines = tsv.lines();
        assert_eq!(lines.next().unwrap(), "K\trho\tfrac_converged\trho_max\trho_crit");
        assert_eq!(tsv.lines().count(), 7);
        for line in lines {
            assert_eq!(line.split('\t').count(), 5);
        }
    }

    #[test]
    fn sweep_rejects_empty_grids() {
        let err = phase_sweep(0.03, 0.004, &[], &[0.1], 5, |_| Schedule::Stochastic, 10, 0);
        assert_eq!(err.unwrap_err(), StabilityError::EmptyGrid("k_list"));
        let err = phase_sweep(0.03, 0.004, &[1], &[], 5, |_| Schedule::Stochastic, 10, 0);
        assert_eq!(err.unwrap_err(), StabilityError::EmptyGrid("rho_grid"));
    }

    #[test]
    fn sweep_is_reproducible_across_thread_counts() {
        let run = || {
            phase_sweep(
                0.03,
                0.004,
                &[1, 100],
                &[0.2, 0.6],
                20,
                |_| Schedule::Stochastic,
                2000,
                123,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn config_validation_catches_mismatches() {
        let params = OperatorParams::with_linear_drift(0.03, 0.004).unwrap();
        assert!(matches!(
            StabilityConfig::new(params.clone(), 10, 1.0, 0.5, Schedule::Deterministic { c: 3, n: 5 }),
            Err(StabilityError::RhoScheduleMismatch { .. })
        ));
        assert!(StabilityConfig::new(params.clone(), 0, 1.0, 0.5, Schedule::Stochastic).is_err());
        assert!(StabilityConfig::new(params.clone(), 1, 0.0, 0.5, Schedule::Stochastic).is_err());
        assert!(StabilityConfig::new(params, 1, 1.0, 1.5, Schedule::Stochastic).is_err());
    }

    proptest! {
        // rho_max lives in (0, 1], rises with gamma, falls with alpha and K.
        #[test]
        fn rho_max_bounds_and_monotonicity(
            gamma in 0.005f64..0.2,
            alpha in 1e-4f64..0.05,
            k in 1usize..400,
        ) {
            let d = linear(alpha);
            let r = rho_max_conservative(gamma, &d, k, 1.0).unwrap();
            prop_assert!(r > 0.0 && r <= 1.0);

            let r_gamma = rho_max_conservative(gamma * 1.5, &d, k, 1.0).unwrap();
            // Strict growth in gamma until the restoration term saturates
            // to 1 at float precision.
            if (1.0 - gamma).powi(k as i32) > 1e-12 {
                prop_assert!(r_gamma > r);
            } else {
                prop_assert!(r_gamma >= r);
            }

            let d_alpha = linear(alpha * 1.5);
            let r_alpha = rho_max_conservative(gamma, &d_alpha, k, 1.0).unwrap();
            prop_assert!(r_alpha < r);

            let r_k = rho_max_conservative(gamma, &d, k + 25, 1.0).unwrap();
            prop_assert!(r_k < r);
        }

        // Super-majority clause: drift below restoration forces the bound
        // strictly past one half.
        #[test]
        fn super_majority_when_drift_below_restoration(
            gamma in 0.005f64..0.2,
            alpha in 1e-4f64..0.05,
            k in 1usize..400,
        ) {
            let d = linear(alpha);
            let r_h = honest_restoration(gamma, k, 1.0);
            let dv_c = adversarial_drift(&d, k, 1.0);
            let rmax = rho_max_conservative(gamma, &d, k, 1.0).unwrap();
            if dv_c < r_h {
                prop_assert!(rmax > 0.5);
            } else {
                prop_assert!(rmax <= 0.5);
            }
        }

        // expected_turn_drift is affine in rho with root at rho_max.
        #[test]
        fn expected_drift_is_affine_with_root_at_rho_max(
            gamma in 0.005f64..0.2,
            alpha in 1e-4f64..0.05,
            k in 1usize..200,
            rho in 0.0f64..1.0,
        ) {
            let params = OperatorParams::with_linear_drift(gamma, alpha).unwrap();
            let d = linear(alpha);
            let at = |r: f64| {
                let cfg = StabilityConfig::new(params.clone(), k, 1.0, r, Schedule::Stochastic).unwrap();
                expected_turn_drift(&cfg)
            };
            // Affine: the midpoint value is the mean of the endpoints.
            let mid = at(rho / 2.0);
            let ends = (at(0.0) + at(rho)) / 2.0;
            prop_assert!((mid - ends).abs() <= 1e-12);
            let root = rho_max_conservative(gamma, &d, k, 1.0).unwrap();
            prop_assert!(at(root).abs() <= 1e-9);
        }
    }
}
