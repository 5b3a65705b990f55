//! Simulation and analysis of adaptive phase/frequency synchronisation for
//! coherent distributed arrays.
//!
//! The crate models a two-node open-loop array: node A interrogates node B
//! with a two-tone ranging pulse plus a short disambiguation pulse, node B
//! locks its oscillator through a self-mixing receiver and repeats the
//! pulses back, and node A turns the matched-filter delay into a range.
//! A PI loop trades waveform bandwidth against ranging accuracy, and the
//! [`coherence`] module maps ranging accuracy onto beamforming gain.
//!
//! Module map:
//!
//! - [`signal`]: pulse synthesis, mean-squared bandwidth, Cramer-Rao bound
//! - [`channel`]: round-trip propagation, noise, carrier-plan residuals
//! - [`ranging`]: matched filtering, lobe selection, spline refinement
//! - [`freqlock`]: self-mixing frequency transfer and lock state
//! - [`control`]: velocity-form PI controller and Ziegler-Nichols tuning
//! - [`coherence`]: coherent gain and Monte-Carlo probability curves
//! - [`scenario`]: closed-loop runs driven by environment traces

pub mod channel;
pub mod coherence;
pub mod control;
mod error;
pub mod freqlock;
pub mod ranging;
pub mod scenario;
pub mod seed;
pub mod signal;
pub mod spectral;
pub mod spline;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Rounds half-way cases to even, used for every seconds-to-samples
/// conversion so that 143.7 µs at 25 Msps gives 3592 samples.
#[inline]
pub(crate) fn samples_for(duration_s: f64, sample_rate: f64) -> usize {
    let n = (duration_s * sample_rate).round_ties_even();
    if n <= 0.0 {
        0
    } else {
        n as usize
    }
}
