//! Scalar latent dynamics of a shared reasoning trajectory.
//!
//! The trajectory's alignment with the correct answer is tracked by a single
//! potential `V = ln(1 + exp(-z))`, where `z` is the projection of the
//! hidden state onto a fixed truth direction. `V` shrinks to 0 as the
//! trajectory locks onto the truth and grows without bound as it drifts off.
//!
//! Two per-token transition operators act on this potential:
//!
//! * an honest step contracts it geometrically, `v' = (1 - gamma_h) * v`;
//! * a corrupted step inflates it through a drift bottleneck,
//!   `v' = v + delta(v)`, where `delta` is monotone with `delta(0) = 0` —
//!   an adversary steering a trajectory that is already locked onto the
//!   truth has no room to move it.
//!
//! The module simulates in potential space only. The full hidden state and
//! the explicit truth direction never appear: every quantity the stability
//! analysis needs is a function of `V`, and `z` is kept purely as a derived
//! view. With `noise_scale = 0` the operators realize the worst-case
//! adversary (drift exactly at the bottleneck) and an exactly-known honest
//! contraction, which keeps the threshold predictions of [`crate::stability`]
//! falsifiable.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatentError {
    #[error("gamma_h must lie strictly inside (0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("alpha must be finite and >= 0, got {0}")]
    InvalidAlpha(f64),
    #[error("tau must be finite and > 0, got {0}")]
    InvalidTau(f64),
    #[error("v_success must lie in (0, ln 2), got {0}")]
    InvalidVSuccess(f64),
    #[error("noise_scale must lie in [0, 1], got {0}")]
    InvalidNoise(f64),
    #[error("drift table invalid: {0}")]
    InvalidDriftTable(String),
}

/// Logistic potential `ln(1 + exp(-z))`.
///
/// Computed in softplus form `max(-z, 0) + ln(1 + exp(-|z|))` so that large
/// `|z|` neither overflows nor collapses to 0 prematurely.
pub fn potential(z: f64) -> f64 {
    (-z).max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Inverse of [`potential`]: the projection `z = -ln(exp(v) - 1)` for `v > 0`.
pub fn z_from_v(v: f64) -> f64 {
    -v.exp_m1().ln()
}

/// The attractor geometry: states with projection `z >= tau` count as locked
/// onto the truth. `v_success = potential(tau)` is the same boundary
/// expressed on the potential axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthFrame {
    tau: f64,
    v_success: f64,
}

impl TruthFrame {
    /// Frame with confidence threshold `tau > 0`.
    pub fn new(tau: f64) -> Result<Self, LatentError> {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(LatentError::InvalidTau(tau));
        }
        Ok(Self { tau, v_success: potential(tau) })
    }

    /// Frame from the success level on the potential axis. Must lie in
    /// `(0, ln 2)` so that the implied `tau` is positive.
    pub fn from_v_success(v_success: f64) -> Result<Self, LatentError> {
        if !v_success.is_finite() || v_success <= 0.0 || v_success >= std::f64::consts::LN_2 {
            return Err(LatentError::InvalidVSuccess(v_success));
        }
        Ok(Self { tau: z_from_v(v_success), v_success })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn v_success(&self) -> f64 {
        self.v_success
    }
}

impl Default for TruthFrame {
    /// `v_success = 0.1`, i.e. `tau ≈ 2.2522`.
    fn default() -> Self {
        Self::from_v_success(0.1).expect("0.1 is a valid success level")
    }
}

/// Current point of a trajectory in potential space.
///
/// `v` is primary; the projection is recovered on demand via [`Self::z`] so
/// the two views can never drift apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialState {
    v: f64,
    step_index: u64,
}

impl PotentialState {
    /// State at potential `v >= 0`, step counter zeroed.
    pub fn from_v(v: f64) -> Self {
        assert!(v.is_finite() && v >= 0.0, "potential must be finite and >= 0");
        Self { v, step_index: 0 }
    }

    /// State at projection `z`, step counter zeroed.
    pub fn from_z(z: f64) -> Self {
        Self { v: potential(z), step_index: 0 }
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    /// Truth projection recovered from the potential.
    pub fn z(&self) -> f64 {
        z_from_v(self.v)
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }
}

/// Per-token adversarial drift bound `delta(V)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DriftModel {
    /// `delta(v) = alpha * v`.
    Linear { alpha: f64 },
    /// Piecewise-linear interpolation of `(v, delta)` knots. An implicit
    /// `(0, 0)` anchor is always present; beyond the last knot the bound is
    /// held constant.
    Custom { knots: Vec<(f64, f64)> },
}

impl DriftModel {
    pub fn linear(alpha: f64) -> Result<Self, LatentError> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(LatentError::InvalidAlpha(alpha));
        }
        Ok(Self::Linear { alpha })
    }

    /// Builds a custom monotone drift table. Knot positions must be strictly
    /// increasing and positive, drift values non-negative and non-decreasing;
    /// monotonicity of the whole curve then follows from the interpolation.
    pub fn custom(knots: Vec<(f64, f64)>) -> Result<Self, LatentError> {
        if knots.is_empty() {
            return Err(LatentError::InvalidDriftTable("empty table".into()));
        }
        let mut prev_v = 0.0;
        let mut prev_d = 0.0;
        for &(v, d) in &knots {
            if !v.is_finite() || !d.is_finite() {
                return Err(LatentError::InvalidDriftTable("non-finite knot".into()));
            }
            if v <= prev_v {
                return Err(LatentError::InvalidDriftTable(format!(
                    "knot positions must be strictly increasing and > 0, got {v} after {prev_v}"
                )));
            }
            if d < prev_d {
                return Err(LatentError::InvalidDriftTable(format!(
                    "drift values must be non-decreasing, got {d} after {prev_d}"
                )));
            }
            prev_v = v;
            prev_d = d;
        }
        Ok(Self::Custom { knots })
    }

    /// Evaluates `delta(v)`.
    pub fn delta(&self, v: f64) -> f64 {
        match self {
            Self::Linear { alpha } => alpha * v,
            Self::Custom { knots } => {
                if v <= 0.0 {
                    return 0.0;
                }
                let mut prev = (0.0, 0.0);
                for &(kv, kd) in knots {
                    if v <= kv {
                        let (pv, pd) = prev;
                        return pd + (kd - pd) * (v - pv) / (kv - pv);
                    }
                    prev = (kv, kd);
                }
                prev.1
            }
        }
    }
}

/// Parameters of the honest and corrupted per-token operators.
///
/// `gamma_h` is the spectral gap of the honest operator — the guaranteed
/// per-token contraction rate toward the attractor. `noise_scale` widens both
/// operators into uniform draws over `[rate * (1 - noise), rate]`; zero keeps
/// them at their extremal values so the analytic bounds apply exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorParams {
    gamma_h: f64,
    drift: DriftModel,
    frame: TruthFrame,
    noise_scale: f64,
}

impl OperatorParams {
    pub fn new(
        gamma_h: f64,
        drift: DriftModel,
        frame: TruthFrame,
        noise_scale: f64,
    ) -> Result<Self, LatentError> {
        if !gamma_h.is_finite() || gamma_h <= 0.0 || gamma_h >= 1.0 {
            return Err(LatentError::InvalidGamma(gamma_h));
        }
        if !noise_scale.is_finite() || !(0.0..=1.0).contains(&noise_scale) {
            return Err(LatentError::InvalidNoise(noise_scale));
        }
        Ok(Self { gamma_h, drift, frame, noise_scale })
    }

    /// Noise-free operators with linear drift and the default frame.
    pub fn with_linear_drift(gamma_h: f64, alpha: f64) -> Result<Self, LatentError> {
        Self::new(gamma_h, DriftModel::linear(alpha)?, TruthFrame::default(), 0.0)
    }

    pub fn gamma_h(&self) -> f64 {
        self.gamma_h
    }

    pub fn drift(&self) -> &DriftModel {
        &self.drift
    }

    pub fn frame(&self) -> &TruthFrame {
        &self.frame
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn with_noise(mut self, noise_scale: f64) -> Result<Self, LatentError> {
        if !noise_scale.is_finite() || !(0.0..=1.0).contains(&noise_scale) {
            return Err(LatentError::InvalidNoise(noise_scale));
        }
        self.noise_scale = noise_scale;
        Ok(self)
    }
}

/// One honest token: contracts the potential by `gamma_h` (or a noisy
/// fraction of it), never increasing `v`.
pub fn honest_step<R: Rng + ?Sized>(
    state: PotentialState,
    params: &OperatorParams,
    rng: &mut R,
) -> PotentialState {
    let gamma_eff = if params.noise_scale == 0.0 {
        params.gamma_h
    } else {
        let lo = params.gamma_h * (1.0 - params.noise_scale);
        rng.random_range(lo..=params.gamma_h)
    };
    PotentialState {
        v: (1.0 - gamma_eff) * state.v,
        step_index: state.step_index + 1,
    }
}

/// One corrupted token: inflates the potential by the drift bound (or a
/// noisy fraction of it), never decreasing `v`.
pub fn corrupt_step<R: Rng + ?Sized>(
    state: PotentialState,
    params: &OperatorParams,
    rng: &mut R,
) -> PotentialState {
    let bound = params.drift.delta(state.v);
    let delta_eff = if params.noise_scale == 0.0 || bound == 0.0 {
        bound
    } else {
        let lo = bound * (1.0 - params.noise_scale);
        rng.random_range(lo..=bound)
    };
    PotentialState {
        v: state.v + delta_eff,
        step_index: state.step_index + 1,
    }
}

/// Whether the state sits inside the attractor half-space (`z >= tau`,
/// boundary inclusive; equivalently `v <= v_success`).
pub fn in_attractor(state: &PotentialState, frame: &TruthFrame) -> bool {
    state.v <= frame.v_success
}
