//! Cache-aided modulation for heterogeneous decentralized coded caching.
//!
//! The crate covers the whole chain from cache placement to symbol error
//! rates over a Gaussian broadcast channel:
//!
//! - [`caching`]: decentralized placement, subfile maps and delivery plans
//!   under symbol-level padding ([`Scheme::Proposed`]) or subfile-level zero
//!   padding ([`Scheme::ZeroPadding`]).
//! - [`modem`]: unit-energy PSK/QAM constellations with set-partitioning
//!   labels and ML demodulation restricted to known label bits.
//! - [`analysis`]: Q-function bounds and per-user symbol error rates in
//!   closed form.
//! - [`mc_sim`]: seeded Monte Carlo estimates and noiseless end-to-end checks.

pub mod analysis;
pub mod caching;
mod error;
pub mod mc_sim;
pub mod modem;

pub use analysis::{SerReport, SnrProfile};
pub use caching::{
    CacheProfile, DeliveryPlan, DemandVector, Library, PlacementRealization, Scheme, SubfileMap,
    UserSet,
};
pub use error::{Error, Result};
pub use modem::{Constellation, Family, KnownMask, MaskShape};
