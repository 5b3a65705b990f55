//! Behavioral model of self-mixing frequency transfer and node B's
//! oscillator lock state.
//!
//! Two tones `sin(2πf_s1 t + φ1) + sin(2πf_s2 t + φ2)` squared by a mixer
//! leave a difference-frequency term `cos(2π(f_s2 - f_s1)t + φ5)` with
//! `φ5 = φ2 - φ1`. Only that term matters downstream.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfMixInput {
    pub f_s1: f64,
    pub f_s2: f64,
    pub phi1: f64,
    pub phi2: f64,
}

impl SelfMixInput {
    pub fn new(f_s1: f64, f_s2: f64, phi1: f64, phi2: f64) -> Result<Self> {
        if !(f_s1 > 0.0 && f_s2 > f_s1 && f_s2.is_finite()) {
            return Err(Error::invalid(
                "self_mix",
                format!("need 0 < f_s1 < f_s2, got {f_s1} and {f_s2}"),
            ));
        }
        if !(phi1.is_finite() && phi2.is_finite()) {
            return Err(Error::invalid("self_mix", "phases must be finite"));
        }
        Ok(Self {
            f_s1,
            f_s2,
            phi1,
            phi2,
        })
    }

    /// Tones after a free-space path of `distance` metres, zero phase at the
    /// transmitter.
    pub fn over_path(f_s1: f64, f_s2: f64, distance: f64) -> Result<Self> {
        Self::new(
            f_s1,
            f_s2,
            path_phase(f_s1, distance),
            path_phase(f_s2, distance),
        )
    }
}

/// Phase `-2πfd/c` accumulated over `distance`.
pub fn path_phase(frequency: f64, distance: f64) -> f64 {
    -2.0 * PI * frequency * distance / SPEED_OF_LIGHT
}

/// Wraps to `(-π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Reference frequency and phase recovered by the self-mixing receiver.
pub fn self_mix(input: &SelfMixInput) -> (f64, f64) {
    (input.f_s2 - input.f_s1, wrap_phase(input.phi2 - input.phi1))
}

/// How an unlocked oscillator wanders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DriftModel {
    /// `offset += drift_rate · dt`.
    #[default]
    Linear,
    /// Linear drift plus a random walk with this diffusion, Hz/√s.
    RandomWalk { diffusion: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorState {
    pub locked: bool,
    /// Free-running drift, Hz/s.
    pub drift_rate: f64,
    /// Current frequency offset from the reference, Hz.
    pub offset: f64,
    pub drift_model: DriftModel,
}

impl OscillatorState {
    pub fn locked(drift_rate: f64) -> Self {
        Self {
            locked: true,
            drift_rate,
            offset: 0.0,
            drift_model: DriftModel::Linear,
        }
    }

    pub fn free_running(drift_rate: f64, offset: f64) -> Self {
        Self {
            locked: false,
            drift_rate,
            offset,
            drift_model: DriftModel::Linear,
        }
    }

    /// Offset actually applied to the carrier.
    pub fn effective_offset(&self) -> f64 {
        if self.locked {
            0.0
        } else {
            self.offset
        }
    }
}

/// Advances the oscillator by `dt`. Acquisition is instantaneous when the
/// reference is present. The random-walk term needs `rng`; linear drift
/// ignores it.
pub fn lock_state_update<R: Rng + ?Sized>(
    state: OscillatorState,
    ref_available: bool,
    dt: f64,
    rng: &mut R,
) -> Result<OscillatorState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("{dt} is not positive")));
    }
    if ref_available {
        return Ok(OscillatorState {
            locked: true,
            offset: 0.0,
            ..state
        });
    }
    let mut offset = state.offset + state.drift_rate * dt;
    if let DriftModel::RandomWalk { diffusion } = state.drift_model {
        let z: f64 = rng.sample(StandardNormal);
        offset += diffusion * dt.sqrt() * z;
    }
    Ok(OscillatorState {
        locked: false,
        offset,
        ..state
    })
}
