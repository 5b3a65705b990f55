//! Velocity-form PI controller for the tone separation, and
//! Ziegler-Nichols tuning.
//!
//! The controller works in scaled units: the error is expressed in
//! `error_unit_m` metres and the output in `output_unit_hz` hertz, so `k_p`
//! is a plain number. With the defaults (micrometres in, megahertz out) a
//! gain of `1e-5` moves the separation by a fraction of a megahertz for a
//! few millimetres of error.

use serde::{Deserialize, Serialize};

use crate::signal::crlb_sigma_r;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerUnits {
    pub error_unit_m: f64,
    pub output_unit_hz: f64,
}

impl Default for ControllerUnits {
    fn default() -> Self {
        Self {
            error_unit_m: 1e-6,
            output_unit_hz: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PiControllerState {
    /// Proportional gain, output units per error unit.
    pub k_p: f64,
    /// Integration time, s. `None` gives a P-only controller.
    pub t_i: Option<f64>,
    /// Previous output (tone separation `f2 - f1`), Hz.
    pub x_prev: f64,
    /// Previous error, m.
    pub e_prev: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub units: ControllerUnits,
}

impl Default for PiControllerState {
    fn default() -> Self {
        Self {
            k_p: 10e-6,
            t_i: Some(3.3),
            x_prev: 3.48e6,
            e_prev: 0.0,
            x_min: 0.0,
            x_max: 7.5e6,
            units: ControllerUnits::default(),
        }
    }
}

impl PiControllerState {
    pub fn validate(&self) -> Result<()> {
        if !self.k_p.is_finite() {
            return Err(Error::invalid("k_p", "must be finite"));
        }
        if let Some(t_i) = self.t_i {
            if !(t_i > 0.0 && t_i.is_finite()) {
                return Err(Error::invalid("t_i", "must be positive when integral action is on"));
            }
        }
        if !(self.x_min <= self.x_max) {
            return Err(Error::invalid("x_min", "must not exceed x_max"));
        }
        if !(self.x_prev >= self.x_min && self.x_prev <= self.x_max) {
            return Err(Error::invalid(
                "x_prev",
                format!("{} outside [{}, {}]", self.x_prev, self.x_min, self.x_max),
            ));
        }
        if !(self.units.error_unit_m > 0.0 && self.units.output_unit_hz > 0.0) {
            return Err(Error::invalid("units", "scales must be positive"));
        }
        if !self.e_prev.is_finite() {
            return Err(Error::NanInput);
        }
        Ok(())
    }
}

/// One controller update:
/// `x[n] = x[n-1] + K_p·((1 + Δt/T_i)·e[n] - e[n-1])`, clamped.
///
/// `e_n = σ_measured - σ_target`, so a positive error widens the tones.
/// The stored output is the clamped one, so nothing accumulates while the
/// controller sits on a bound.
pub fn pi_step(state: &PiControllerState, e_n: f64, dt: f64) -> Result<(PiControllerState, f64)> {
    if e_n.is_nan() || !e_n.is_finite() {
        return Err(Error::NanInput);
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("{dt} is not positive")));
    }
    state.validate()?;
    let u = state.units;
    let e = e_n / u.error_unit_m;
    let e_prev = state.e_prev / u.error_unit_m;

    let integral = state.t_i.map_or(0.0, |t_i| dt / t_i * e);
    let dx = state.k_p * (e + integral - e_prev) * u.output_unit_hz;
    let x_n = (state.x_prev + dx).clamp(state.x_min, state.x_max);
    Ok((
        PiControllerState {
            x_prev: x_n,
            e_prev: e_n,
            ..*state
        },
        x_n,
    ))
}

/// `(K_p, T_i) = (0.45·K_u, 0.833·T_u)`.
pub fn ziegler_nichols_gains(k_u: f64, t_u: f64) -> Result<(f64, f64)> {
    if !(k_u > 0.0 && k_u.is_finite()) {
        return Err(Error::invalid("k_u", format!("{k_u} is not positive")));
    }
    if !(t_u > 0.0 && t_u.is_finite()) {
        return Err(Error::invalid("t_u", format!("{t_u} is not positive")));
    }
    Ok((0.450 * k_u, 0.833 * t_u))
}

/// A discrete-time system under test for the ultimate-gain search.
pub trait Plant {
    /// Returns to the initial condition; the next experiment must be
    /// reproducible.
    fn reset(&mut self);
    /// Holds `input` for one step and returns the measured output.
    fn step(&mut self, input: f64) -> f64;
}

/// Sign convention linking plant output to controller error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSign {
    /// `e = r - y`.
    #[default]
    SetpointMinusOutput,
    /// `e = y - r`, for plants whose output falls as the input rises.
    OutputMinusSetpoint,
}

/// Closed-loop P-only experiment used at each grid gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OscillationTest {
    pub setpoint: f64,
    /// Input held during the first step.
    pub initial_input: f64,
    /// Controller output at zero error.
    pub bias: f64,
    pub error_sign: ErrorSign,
    /// Optional input saturation `(min, max)`.
    pub input_limits: Option<(f64, f64)>,
    /// Scale applied to the error before the gain.
    pub error_scale: f64,
    pub steps: usize,
    /// Step duration, s.
    pub dt: f64,
    /// Allowed amplitude decay from the first to the last third.
    pub decay_tolerance: f64,
    /// Peak-to-peak amplitude below which the loop counts as settled.
    pub amplitude_floor: f64,
    /// Largest relative spread of half-periods.
    pub period_jitter: f64,
}

impl Default for OscillationTest {
    fn default() -> Self {
        Self {
            setpoint: 1.0,
            initial_input: 0.0,
            bias: 0.0,
            error_sign: ErrorSign::SetpointMinusOutput,
            input_limits: None,
            error_scale: 1.0,
            steps: 300,
            dt: 1.0,
            decay_tolerance: 0.05,
            amplitude_floor: 1e-9,
            period_jitter: 0.25,
        }
    }
}

/// Closed-loop response of `plant` under P-only control with gain `k`.
pub fn closed_loop_response<P: Plant + ?Sized>(plant: &mut P, k: f64, test: &OscillationTest) -> Vec<f64> {
    plant.reset();
    let mut u = test.initial_input;
    let mut ys = Vec::with_capacity(test.steps);
    for _ in 0..test.steps {
        let y = plant.step(u);
        ys.push(y);
        let e = match test.error_sign {
            ErrorSign::SetpointMinusOutput => test.setpoint - y,
            ErrorSign::OutputMinusSetpoint => y - test.setpoint,
        };
        u = test.bias + k * e * test.error_scale;
        if let Some((lo, hi)) = test.input_limits {
            u = u.clamp(lo, hi);
        }
        if !u.is_finite() {
            break;
        }
    }
    ys
}

/// Oscillation period in steps if `ys` oscillates with non-decaying
/// amplitude over at least five periods.
pub fn sustained_period(ys: &[f64], test: &OscillationTest) -> Option<f64> {
    if ys.len() < 30 || ys.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let third = ys.len() / 3;
    let tail = &ys[ys.len() - third..];
    let centre = tail.iter().sum::<f64>() / tail.len() as f64;
    let ptp = |s: &[f64]| {
        s.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - s.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    // skip the first few steps so the initial transient does not dominate
    let head = &ys[third / 4..third];
    let (a_first, a_last) = (ptp(head), ptp(tail));
    if a_last < test.amplitude_floor || a_last < (1.0 - test.decay_tolerance) * a_first {
        return None;
    }

    let crossings: Vec<f64> = ys
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| {
            let (a, b) = (w[0] - centre, w[1] - centre);
            if (a < 0.0 && b >= 0.0) || (a >= 0.0 && b < 0.0) {
                Some(i as f64 + a / (a - b))
            } else {
                None
            }
        })
        .collect();
    if crossings.len() < 10 {
        return None;
    }
    let halves: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = halves.iter().sum::<f64>() / halves.len() as f64;
    let spread = crate::ranging::sample_std(&halves);
    if spread > test.period_jitter * mean {
        return None;
    }
    Some(2.0 * mean)
}

/// Smallest grid gain at which the P-only loop oscillates steadily, and the
/// oscillation period in seconds.
pub fn find_ultimate_gain<P: Plant + ?Sized>(
    plant: &mut P,
    k_grid: &[f64],
    test: &OscillationTest,
) -> Result<(f64, f64)> {
    if k_grid.is_empty() {
        return Err(Error::Empty("gain grid"));
    }
    let mut grid = k_grid.to_vec();
    if grid.iter().any(|k| !k.is_finite()) {
        return Err(Error::invalid("k_grid", "gains must be finite"));
    }
    grid.sort_by(f64::total_cmp);
    for k in grid {
        let ys = closed_loop_response(plant, k, test);
        if let Some(period) = sustained_period(&ys, test) {
            log::debug!("oscillation at k = {k}, period {period} steps");
            return Ok((k, period * test.dt));
        }
    }
    Err(Error::NoOscillation)
}

/// Ranging loop reduced to its mean behaviour: each step reports the
/// averaged bound `σ_r(δf)/√m` for the applied tone separation (in output
/// units), optionally scattered like a sample standard deviation.
#[derive(Debug, Clone)]
pub struct CrlbRangingPlant {
    /// `2E/N0` per pulse.
    pub post_snr: f64,
    /// Pulses per averaged value.
    pub averaged: usize,
    /// Group means per window; sets the spread of the std estimate.
    pub groups: usize,
    pub units: ControllerUnits,
    /// Output reported in `units.error_unit_m` rather than metres.
    pub output_in_error_units: bool,
    pub sampling_noise: Option<u64>,
    rng: Option<rand_chacha::ChaCha8Rng>,
}

impl CrlbRangingPlant {
    pub fn new(post_snr: f64, averaged: usize, groups: usize, units: ControllerUnits) -> Self {
        Self {
            post_snr,
            averaged,
            groups,
            units,
            output_in_error_units: false,
            sampling_noise: None,
            rng: None,
        }
    }

    pub fn with_sampling_noise(mut self, seed: u64) -> Self {
        self.sampling_noise = Some(seed);
        self.rng = Some(crate::seed::rng(seed));
        self
    }

    /// Mean-behaviour σ for a separation in Hz.
    pub fn sigma(&self, separation_hz: f64) -> f64 {
        crlb_sigma_r(separation_hz.max(1.0) / 2.0, self.post_snr).unwrap_or(f64::INFINITY)
            / (self.averaged as f64).sqrt()
    }
}

impl Plant for CrlbRangingPlant {
    fn reset(&mut self) {
        self.rng = self.sampling_noise.map(crate::seed::rng);
    }

    fn step(&mut self, input: f64) -> f64 {
        use rand_distr::{ChiSquared, Distribution};
        let mut s = self.sigma(input * self.units.output_unit_hz);
        if let Some(rng) = self.rng.as_mut() {
            let dof = (self.groups.max(2) - 1) as f64;
            let chi2 = ChiSquared::new(dof).expect("positive dof");
            s *= (chi2.sample(rng) / dof).sqrt();
        }
        if self.output_in_error_units {
            s / self.units.error_unit_m
        } else {
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_holds() {
        let st = PiControllerState::default();
        let (next, x) = pi_step(&st, 0.0, 21.0).unwrap();
        assert_eq!(x, st.x_prev);
        assert_eq!(next.x_prev, st.x_prev);
    }

    #[test]
    fn default_gain_step() {
        let st = PiControllerState {
            x_prev: 3.5e6,
            ..PiControllerState::default()
        };
        let (_, x) = pi_step(&st, 0.005, 21.0).unwrap();
        // 1e-5 · (1 + 21/3.3) · 5000 µm = 0.368181818... MHz
        let oracle = 3.5e6 + 1e-5 * (1.0 + 21.0 / 3.3) * 5000.0 * 1e6;
        assert!((x - oracle).abs() < 1e-6, "{x} vs {oracle}");
        assert!((x - 3_868_181.818_181_818).abs() < 1e-3);
    }

    #[test]
    fn nan_is_rejected() {
        let st = PiControllerState::default();
        assert_eq!(pi_step(&st, f64::NAN, 21.0), Err(Error::NanInput));
        assert!(pi_step(&st, 0.0, 0.0).is_err());
    }

    #[test]
    fn sustained_error_pegs_at_the_clamp() {
        let mut st = PiControllerState::default();
        let mut last = st.x_prev;
        for _ in 0..200 {
            let (next, x) = pi_step(&st, 0.002, 21.0).unwrap();
            assert!(x >= last);
            last = x;
            st = next;
        }
        assert_eq!(last, 7.5e6);
    }

    #[test]
    fn zn_products() {
        assert_eq!(ziegler_nichols_gains(1.0, 1.0).unwrap(), (0.45, 0.833));
        let (kp, ti) = ziegler_nichols_gains(2.22e-5, 3.96).unwrap();
        assert!((kp - 9.99e-6).abs() < 1e-12);
        assert!((ti - 3.29868).abs() < 1e-9);
        assert!(ziegler_nichols_gains(0.0, 1.0).is_err());
        assert!(ziegler_nichols_gains(1.0, -1.0).is_err());
    }
}
