//! Lock-in feedback (LiF): derivative-free tracking of `argmax_x f(x)` in a data stream.
//!
//! The treatment is oscillated around a center, `x_t = x0 + A cos(wt)`, and the
//! observed outcome is demodulated against the same reference. Averaged over one
//! full oscillation the demodulated signal is proportional to `f'(x0)`, which
//! drives the center toward the maximizer and keeps it locked there when `f`
//! drifts.
//!
//! Modules:
//! - [`lockin`]: the optimizer (batched and sliding-window variants), derivative
//!   and curvature estimators, and the simulation driver.
//! - [`env`]: simulated data-generating processes with noiseless oracles.
//! - [`baselines`]: epsilon-first and bootstrap Thompson sampling comparators.
//! - [`metrics`]: regret and replication summaries.
//! - [`harness`]: study presets, config files, seeding and CSV output.

// `!(a < b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod env;
pub mod harness;
pub mod lockin;
pub mod metrics;
pub mod record;

use rand::SeedableRng;

/// RNG used by every simulated run. ChaCha8 keeps streams stable across platforms and crate versions.
pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub use baselines::{BtsConfig, EpsilonFirstConfig, LogisticModel};
pub use env::{
    BernoulliPricingEnv, DriftingParabolaEnv, Environment, NoisyParabolaEnv, Observation,
};
pub use lockin::{Lif, LifConfig, LifError, LifState, Variant};
pub use metrics::{RegretSeries, ReplicationSummary};
pub use record::{RunRecord, Step};
