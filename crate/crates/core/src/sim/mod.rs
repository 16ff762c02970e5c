//! Monte Carlo realisation of the network.
//!
//! Base stations and one preamble's device population are dropped as
//! independent PPPs on an `L × L` torus. Devices keep real FIFO buffers,
//! draw Poisson arrivals every slot, are gated by the access scheme, and
//! succeed when their SINR at the serving BS clears the threshold.

mod deployment;
mod ensemble;
mod realization;

pub use deployment::{sample_deployment, torus_distance_sq, Deployment, Point};
pub use ensemble::{run_ensemble, EnsembleConfig, EnsembleResult, Estimate, SlotEstimate};
pub use realization::{run_realization, DeviceState, RealizationOutcome, SlotTally, BACKLOG_BINS};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random sub-streams of one realisation. Arrivals, fading and
/// barring draws never share a stream, so schemes run on common random
/// numbers for the deployment and the traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stream {
    Deployment = 0,
    Arrivals = 1,
    Fading = 2,
    Barring = 3,
}

pub(crate) fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of work item `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}
