//! Statistics of proximity-contact classification.
//!
//! The crate models a tracing device that decides, from noisy range
//! observations, whether another device stayed inside a critical zone long
//! enough to count as a critical contact. It provides:
//!
//! - closed-form per-decision missed-detection and false-alarm probabilities
//!   for Bluetooth RSSI under Rice and lognormal fading ([`propagation`]),
//! - episode-level accumulation statistics and performance tables
//!   ([`episode`]),
//! - audio two-way ranging statistics and protocol arithmetic ([`audio`]),
//! - a desk-scale baseband simulation of the spread-spectrum delay estimator
//!   ([`dsp`]),
//! - a seeded Monte Carlo oracle and classifier state machines that
//!   cross-validate every closed form ([`sim`]).
//!
//! All stochastic code is deterministic per seed; trials derive independent
//! RNG streams from their index, so results do not depend on scheduling.

// Negated comparisons are deliberate throughout: `!(x > 0.0)` rejects NaN
// where `x <= 0.0` would let it through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod dsp;
pub mod episode;
pub mod error;
pub mod numerics;
pub mod propagation;
pub mod sim;

pub use error::{Error, Result};
pub use propagation::{
    CrowdLayout, FadingModel, LognormalFading, PropagationConfig, RiceFading,
};
pub use audio::{AudioRangingConfig, DeviceTimingProfile, RangingExchange};
pub use episode::{ContactTimeDistribution, DecisionPolicy, ExposureDistribution, Model};
pub use numerics::Tolerance;
