//! Simulation and analysis library for multi-agent answer aggregation under
//! contextual corruption.
//!
//! The crate models an ensemble of `N` agents solving multiple-choice tasks
//! while a subset of them has been fed an adversarial payload. Two
//! aggregation families are implemented end to end:
//!
//! * **MAJ** — every agent generates independently and the terminal answers
//!   are combined by plurality vote. Collapses deterministically once the
//!   corrupted agents are a majority.
//! * **RR / RRMaj** — agents take turns appending exactly `K` tokens to one
//!   shared trajectory (slot = turn mod N); `M` independent trajectories are
//!   then combined by plurality.
//!
//! The interesting behaviour of the relay is driven by a scalar latent model
//! ([`latent`]): honest turns contract a potential `V` toward a truth
//! attractor at rate `gamma_h` per token, corrupted turns inflate it through
//! a drift bottleneck `delta(V)`. The [`stability`] module computes the
//! closed-form corruption threshold that this race implies and verifies it by
//! Monte-Carlo simulation; [`stats`] holds the voting mathematics (plurality,
//! Condorcet curves, bootstrap scaling, Fisher's exact test, the aggregation
//! impossibility checker); [`protocol`] and [`agents`] run the actual relay
//! over pluggable agent backends; [`experiment`] wires everything into
//! reproducible grid experiments with file-based reports.
//!
//! Everything is deterministic given a root seed: parallel work items derive
//! child seeds from their coordinates, never from shared mutable state.

pub mod agents;
pub mod experiment;
pub mod latent;
pub mod protocol;
pub mod seed;
pub mod stability;
pub mod stats;

pub use latent::{DriftModel, OperatorParams, PotentialState, TruthFrame};
pub use protocol::{Chunk, EnsembleConfig, Role, Task, Trajectory};
pub use stability::{PotentialTrace, Schedule, StabilityConfig, Verdict};
pub use stats::{Label, TiePolicy, VoteOutcome};
