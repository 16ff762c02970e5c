//! Spatio-temporal model of contention-based random access (RACH) in
//! massive-IoT cellular networks.
//!
//! The crate couples two views of the same system:
//!
//! - [`analysis`] evaluates the single-slot stochastic-geometry quantities
//!   (preamble transmission success, preamble detection, received packets per
//!   BS, optimal BS density) for a given device activity level.
//! - [`queue`] evolves the per-device buffer state across slots for the
//!   baseline, access-class-barring and back-off schemes, feeding each slot's
//!   activity back into [`analysis`].
//!
//! [`sim`] is an independent Monte Carlo realisation of the same network
//! (PPP deployment on a torus, per-device FCFS buffers, Rayleigh fading) used
//! to validate both, and [`experiments`] joins the two into comparison tables.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod io;
pub mod params;
pub mod queue;
pub mod sim;
pub mod special;

pub use analysis::{ActivityState, SlotAnalysis};
pub use error::{Error, Result};
pub use params::{NetworkParams, ParamSet, RawConfig, SchemeConfig, TrafficProfile};
pub use queue::{QueuePmf, SchemeTrace};
