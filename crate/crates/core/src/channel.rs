//! Two-way cooperative link between node A and the repeating node B.
//!
//! The repeater is a point-like, single-path reflector. Everything between
//! the transmitter and node A's receiver (cable loss, antenna gain, repeater
//! noise) is folded into one per-sample SNR figure.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::signal::ComplexBasebandSignal;
use crate::{seed, spectral, Error, Result, SPEED_OF_LIGHT};

/// Outbound/return carriers and node B's oscillator offsets on each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarrierPlan {
    /// Outbound carrier, Hz.
    pub f_c1: f64,
    /// Return carrier, Hz.
    pub f_c2: f64,
    /// `f_c1' - f_c1` at node B, Hz.
    pub offset1: f64,
    /// `f_c2' - f_c2` at node B, Hz.
    pub offset2: f64,
}

impl Default for CarrierPlan {
    fn default() -> Self {
        Self::locked(2.45e9, 5.8e9)
    }
}

impl CarrierPlan {
    /// Frequency-locked plan: node B's carriers equal node A's.
    pub fn locked(f_c1: f64, f_c2: f64) -> Self {
        Self {
            f_c1,
            f_c2,
            offset1: 0.0,
            offset2: 0.0,
        }
    }

    pub fn is_locked(&self) -> bool {
        self.offset1 == 0.0 && self.offset2 == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_c1 > 0.0 && self.f_c2 > 0.0) {
            return Err(Error::invalid("carrier", "carrier frequencies must be positive"));
        }
        if !(self.offset1.is_finite() && self.offset2.is_finite()) {
            return Err(Error::invalid("carrier", "offsets must be finite"));
        }
        Ok(())
    }
}

/// Baseband frequency seen back at node A after down-conversion at B with
/// `f_c1'` and up-conversion with `f_c2'`:
/// `f_b + f_c1 - f_c1' + f_c2' - f_c2 = f_b - offset1 + offset2`.
pub fn residual_baseband_frequency(f_b: f64, carrier: &CarrierPlan) -> f64 {
    f_b - carrier.offset1 + carrier.offset2
}

/// Geometry and link budget for one round trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelState {
    /// One-way distance between the nodes, m.
    pub true_range: f64,
    /// Per-sample SNR at node A's receiver, dB. `+inf` disables noise.
    pub snr_db: f64,
    pub carrier: CarrierPlan,
    /// Amplitude gain of the repeater path.
    pub repeater_gain: f64,
}

impl Default for ChannelState {
    fn default() -> Self {
        Self {
            true_range: 90.0,
            snr_db: f64::INFINITY,
            carrier: CarrierPlan::default(),
            repeater_gain: 1.0,
        }
    }
}

impl ChannelState {
    pub fn validate(&self) -> Result<()> {
        if !(self.true_range.is_finite() && self.true_range >= 0.0) {
            return Err(Error::invalid("true_range", "must be finite and non-negative"));
        }
        if !(self.repeater_gain.is_finite() && self.repeater_gain > 0.0) {
            return Err(Error::invalid("repeater_gain", "must be positive"));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid("snr_db", "must be a number or +inf"));
        }
        self.carrier.validate()
    }

    /// Round-trip delay `2R/c`, s.
    pub fn round_trip_delay(&self) -> f64 {
        2.0 * self.true_range / SPEED_OF_LIGHT
    }
}

/// How much receiver noise to add.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevel {
    Off,
    /// Per-sample SNR relative to the mean power of the (gain-scaled) pulse.
    SnrDb(f64),
    /// Absolute complex noise variance `E|n|²`.
    Variance(f64),
}

impl NoiseLevel {
    pub fn from_snr_db(snr_db: f64) -> Self {
        if snr_db == f64::INFINITY {
            NoiseLevel::Off
        } else {
            NoiseLevel::SnrDb(snr_db)
        }
    }

    fn variance_for(&self, signal_power: f64) -> Option<f64> {
        match *self {
            NoiseLevel::Off => None,
            NoiseLevel::SnrDb(db) => Some(signal_power / 10f64.powf(db / 10.0)),
            NoiseLevel::Variance(v) => Some(v),
        }
    }
}

/// Noise variance that puts `pulse` at `snr_db` per sample after `gain`.
pub fn noise_variance_for(pulse: &ComplexBasebandSignal, gain: f64, snr_db: f64) -> Option<f64> {
    NoiseLevel::from_snr_db(snr_db).variance_for(pulse.mean_power() * gain * gain)
}

/// Sends `pulse` to node B and back, returning a `window_len`-sample
/// receive window starting at the transmit instant.
///
/// Noise is calibrated so the per-sample SNR over the pulse equals
/// `state.snr_db`; identical seeds give identical output.
pub fn propagate_round_trip(
    pulse: &ComplexBasebandSignal,
    state: &ChannelState,
    window_len: usize,
    rng_seed: u64,
) -> Result<ComplexBasebandSignal> {
    propagate(
        pulse,
        state,
        window_len,
        NoiseLevel::from_snr_db(state.snr_db),
        rng_seed,
    )
}

/// As [`propagate_round_trip`] with explicit control over the noise, so two
/// pulses can share one receiver noise floor.
pub fn propagate(
    pulse: &ComplexBasebandSignal,
    state: &ChannelState,
    window_len: usize,
    noise: NoiseLevel,
    rng_seed: u64,
) -> Result<ComplexBasebandSignal> {
    state.validate()?;
    if pulse.is_empty() {
        return Err(Error::Empty("pulse"));
    }
    let fs = pulse.sample_rate();
    let delay_samples = state.round_trip_delay() * fs;
    if delay_samples.ceil() as usize + pulse.len() > window_len {
        return Err(Error::DelayExceedsWindow {
            delay_samples,
            pulse_len: pulse.len(),
            window_len,
        });
    }

    let gain = state.repeater_gain;
    let mut buf = vec![Complex64::new(0.0, 0.0); window_len];
    for (b, s) in buf.iter_mut().zip(pulse.samples()) {
        *b = s * gain;
    }
    spectral::fractional_delay(&mut buf, delay_samples);

    let f_res = residual_baseband_frequency(0.0, &state.carrier);
    if f_res != 0.0 {
        let w = 2.0 * PI * f_res / fs;
        for (k, b) in buf.iter_mut().enumerate() {
            *b *= Complex64::from_polar(1.0, w * k as f64);
        }
    }

    if let Some(var) = noise.variance_for(pulse.mean_power() * gain * gain) {
        if !(var.is_finite() && var >= 0.0) {
            return Err(Error::invalid("noise", format!("variance {var} is not usable")));
        }
        let sd = (0.5 * var).sqrt();
        let mut rng = seed::rng(rng_seed);
        for b in buf.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *b += Complex64::new(re * sd, im * sd);
        }
    }

    ComplexBasebandSignal::new(buf, fs)
}
