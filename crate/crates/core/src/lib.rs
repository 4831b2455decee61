//! Simulator for IRS-assisted millimeter wave downlinks.
//!
//! An intelligent reflecting surface (IRS) is a planar array of passive
//! elements, each re-scattering the incident signal with a configurable phase
//! shift. This crate models a base station with an `N`-antenna ULA serving a
//! single-antenna user with the help of `K` such surfaces, and solves the
//! joint design of the transmit precoder and the per-element phase shifts
//! that maximizes the received signal power.
//!
//! The crate is organized around five modules:
//!
//! - [`channel`]: steering vectors, path-loss and shadowing draws, and
//!   geometric sparse-scattering channel generation for the BS-user, BS-IRS
//!   and IRS-user links.
//! - [`precoding`]: the beamforming solvers — a closed-form optimum for a
//!   single IRS, a near-optimal analytical solution for multiple IRSs, an
//!   SDR baseline with certified upper bound, MRT without IRS, discrete
//!   phase quantization, and brute-force oracles.
//! - [`sdp`]: a self-contained dense solver for the small unit-diagonal
//!   complex semidefinite programs the SDR baseline produces, plus Gaussian
//!   randomization for rank-one extraction.
//! - [`analysis`]: closed-form average received power formulas, the
//!   quantization loss ratio `eta(b)`, throughput and outage metrics.
//! - [`harness`]: a reproducible Monte Carlo experiment runner with CSV
//!   output and a scaling-law verification report.
//!
//! All randomized operations take an explicit [`RandomStream`]; identical
//! seeds produce bit-identical results regardless of thread count.

pub mod analysis;
pub mod channel;
pub mod error;
pub mod harness;
pub mod precoding;
pub mod sdp;

pub use error::{Error, Result};

/// Concrete RNG used throughout the crate.
///
/// A counter-based stream cipher generator: cheap to seed, and two streams
/// derived from different seeds are independent for simulation purposes.
pub type RandomStream = rand_chacha::ChaCha8Rng;

/// Derives a [`RandomStream`] from a base seed and a list of substream
/// indices (sweep index, trial index, purpose salt, ...).
///
/// The mixing is a fixed splitmix64 chain, so derived streams are stable
/// across platforms and releases of this crate.
pub fn derive_stream(seed: u64, parts: &[u64]) -> RandomStream {
    use rand::SeedableRng;
    let mut h = splitmix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for &p in parts {
        h = splitmix64(h ^ p.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    }
    RandomStream::seed_from_u64(h)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
