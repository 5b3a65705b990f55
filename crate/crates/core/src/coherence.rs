//! Coherent gain of a distributed array and its Monte-Carlo probability
//! curves.
//!
//! Node 0 is the phase reference. Every other node `n` steers toward angle
//! `θ` using a spacing `d(n)` it believes to be `d(n) + δ(n)`, with `δ` the
//! ranging error. Its phase error is
//!
//! ```text
//! ε(n) = k·d·sinθ − k·(d + δ)·sinθ + δφ(n) + φ0(n),   k = 2π/λ
//! ```
//!
//! where `δφ` is the residual from the frequency-transfer path and `φ0` a
//! calibration error.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed::{self, derive_seed, stream};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// `G_c = |Σ a·e^{jε}|² / |Σ a|²`.
pub fn coherent_gain(phase_errors: &[f64], amplitudes: &[f64]) -> Result<f64> {
    if phase_errors.len() != amplitudes.len() {
        return Err(Error::invalid(
            "amplitudes",
            format!("{} amplitudes for {} phases", amplitudes.len(), phase_errors.len()),
        ));
    }
    if phase_errors.is_empty() {
        return Err(Error::Empty("phase_errors"));
    }
    if amplitudes.iter().any(|a| !(*a >= 0.0)) {
        return Err(Error::invalid("amplitudes", "must be non-negative"));
    }
    let ideal: f64 = amplitudes.iter().sum();
    if ideal == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let sum: Complex64 = phase_errors
        .iter()
        .zip(amplitudes)
        .map(|(&e, &a)| Complex64::from_polar(a, e))
        .sum();
    Ok(sum.norm_sqr() / (ideal * ideal))
}

/// Frequency-transfer phase error `δφ` of each secondary node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "model", deny_unknown_fields)]
pub enum ClockPhaseModel {
    /// The reference tone crosses the same mis-ranged path, so
    /// `δφ = k·D − k·(D + δ)` for the synchronisation distance `D`.
    #[default]
    RangeDerived,
    /// `δφ = 0`.
    None,
    /// Independent `N(0, std²)` per node, rad.
    Gaussian { std: f64 },
}

/// Channel coefficients `h_n` applied as amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelGains {
    #[default]
    Unity,
    /// Rayleigh magnitudes with unit mean power.
    Rayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayScenario {
    pub n_nodes: usize,
    /// Carrier wavelength, m.
    pub wavelength: f64,
    /// Ranging standard deviation, m.
    pub sigma_d: f64,
    /// Steering angle drawn uniformly from `[lo, hi]`, rad. `lo == hi` fixes it.
    pub theta_range: (f64, f64),
    /// Node spacing drawn uniformly from `[lo, hi]`, m.
    pub node_spacing_range: (f64, f64),
    /// Distance between frequency-synchronisation antennas, uniform in
    /// `[lo, hi]`, m.
    pub sync_distance_range: (f64, f64),
    /// Standard deviation of `φ0`, rad.
    pub calib_error: f64,
    pub clock_phase: ClockPhaseModel,
    pub channel: ChannelGains,
}

impl Default for ArrayScenario {
    fn default() -> Self {
        Self::with_wavelength(2, 1.0, 0.0)
    }
}

impl ArrayScenario {
    /// Default randomisation: `θ ∈ [−π/2, π/2]`, spacings in `[λ, 100λ]`.
    pub fn with_wavelength(n_nodes: usize, wavelength: f64, sigma_d: f64) -> Self {
        Self {
            n_nodes,
            wavelength,
            sigma_d,
            theta_range: (-PI / 2.0, PI / 2.0),
            node_spacing_range: (wavelength, 100.0 * wavelength),
            sync_distance_range: (wavelength, 100.0 * wavelength),
            calib_error: 0.0,
            clock_phase: ClockPhaseModel::RangeDerived,
            channel: ChannelGains::Unity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::invalid("n_nodes", "need at least two nodes"));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::invalid("wavelength", "must be positive"));
        }
        if !(self.sigma_d >= 0.0 && self.sigma_d.is_finite()) {
            return Err(Error::invalid("sigma_d", "must be non-negative"));
        }
        for (name, (lo, hi)) in [
            ("theta_range", self.theta_range),
            ("node_spacing_range", self.node_spacing_range),
            ("sync_distance_range", self.sync_distance_range),
        ] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::invalid(name, format!("bad interval [{lo}, {hi}]")));
            }
        }
        if !(self.calib_error >= 0.0) {
            return Err(Error::invalid("calib_error", "must be non-negative"));
        }
        if let ClockPhaseModel::Gaussian { std } = self.clock_phase {
            if !(std >= 0.0) {
                return Err(Error::invalid("clock_phase.std", "must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSample {
    pub g_c: f64,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    // always consume one draw so streams stay aligned when lo == hi
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// Phase errors of all nodes for one trial; node 0 is zero.
pub fn sample_phase_errors<R: Rng + ?Sized>(scenario: &ArrayScenario, rng: &mut R) -> Vec<f64> {
    let k = scenario.wavenumber();
    let theta = uniform(rng, scenario.theta_range);
    let mut eps = Vec::with_capacity(scenario.n_nodes);
    eps.push(0.0);
    for _ in 1..scenario.n_nodes {
        let d = uniform(rng, scenario.node_spacing_range);
        let sync = uniform(rng, scenario.sync_distance_range);
        let z: f64 = StandardNormal.sample(rng);
        let z_clock: f64 = StandardNormal.sample(rng);
        let z_cal: f64 = StandardNormal.sample(rng);
        let delta = scenario.sigma_d * z;
        let steering = k * d * theta.sin() - k * (d + delta) * theta.sin();
        let clock = match scenario.clock_phase {
            ClockPhaseModel::RangeDerived => k * sync - k * (sync + delta),
            ClockPhaseModel::None => 0.0,
            ClockPhaseModel::Gaussian { std } => std * z_clock,
        };
        eps.push(steering + clock + scenario.calib_error * z_cal);
    }
    eps
}

fn sample_amplitudes<R: Rng + ?Sized>(scenario: &ArrayScenario, rng: &mut R) -> Vec<f64> {
    match scenario.channel {
        ChannelGains::Unity => vec![1.0; scenario.n_nodes],
        ChannelGains::Rayleigh => {
            let n = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid");
            (0..scenario.n_nodes)
                .map(|_| {
                    let (re, im): (f64, f64) = (n.sample(rng), n.sample(rng));
                    re.hypot(im)
                })
                .collect()
        }
    }
}

/// One Monte-Carlo draw of the coherent gain.
pub fn sample_gain(scenario: &ArrayScenario, rng_seed: u64) -> Result<GainSample> {
    scenario.validate()?;
    let mut rng = seed::rng(rng_seed);
    let eps = sample_phase_errors(scenario, &mut rng);
    let amps = sample_amplitudes(scenario, &mut rng);
    Ok(GainSample {
        g_c: coherent_gain(&eps, &amps)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Ranging standard deviation, m.
    pub sigma_d: f64,
    /// `P(G_c ≥ X)`.
    pub probability: f64,
    /// Binomial standard error of `probability`.
    pub std_error: f64,
}

/// `P(G_c ≥ threshold)` at each `sigma_d` in the grid.
///
/// Trial `i` uses the same seed at every grid point, so the curve is smooth
/// in `sigma_d` and its monotonicity is not masked by sampling noise.
pub fn probability_curve(
    base: &ArrayScenario,
    sigma_grid: &[f64],
    threshold: f64,
    trials: usize,
    master_seed: u64,
) -> Result<Vec<CurvePoint>> {
    if sigma_grid.is_empty() {
        return Err(Error::Empty("sigma grid"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    if !threshold.is_finite() {
        return Err(Error::invalid("threshold", "must be finite"));
    }
    base.validate()?;
    sigma_grid
        .iter()
        .map(|&sigma_d| {
            let scenario = ArrayScenario { sigma_d, ..*base };
            scenario.validate()?;
            let hits: usize = (0..trials)
                .into_par_iter()
                .map(|i| {
                    let s = derive_seed(master_seed, &[stream::COHERENCE_TRIAL, i as u64]);
                    sample_gain(&scenario, s).map(|g| usize::from(g.g_c >= threshold))
                })
                .sum::<Result<usize>>()?;
            let p = hits as f64 / trials as f64;
            Ok(CurvePoint {
                sigma_d,
                probability: p,
                std_error: (p * (1.0 - p) / trials as f64).sqrt(),
            })
        })
        .collect()
}

/// First `sigma_d` at which the curve falls to `probability`, linearly
/// interpolated between grid points. `None` if it never does.
pub fn threshold_crossing(curve: &[CurvePoint], probability: f64) -> Option<f64> {
    if curve.first()?.probability < probability {
        return Some(curve[0].sigma_d);
    }
    curve.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        if a.probability >= probability && b.probability < probability {
            let t = (a.probability - probability) / (a.probability - b.probability);
            Some(a.sigma_d + t * (b.sigma_d - a.sigma_d))
        } else {
            None
        }
    })
}

/// Ranging accuracy, in wavelengths, needed for `P(G_c ≥ 0.9)` of 0.9, 0.8
/// and 0.7.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceThresholds {
    pub p90: f64,
    pub p80: f64,
    pub p70: f64,
}

impl CoherenceThresholds {
    /// Two-node reference values.
    pub const TWO_NODE: Self = Self {
        p90: 0.0495,
        p80: 0.0725,
        p70: 0.1040,
    };

    /// Reads the crossings off a curve whose `sigma_d` axis is in
    /// wavelengths.
    pub fn from_curve(curve: &[CurvePoint]) -> Result<Self> {
        let get = |p: f64| {
            threshold_crossing(curve, p).ok_or_else(|| {
                Error::invalid("curve", format!("never drops below P = {p}; widen the grid"))
            })
        };
        Ok(Self {
            p90: get(0.9)?,
            p80: get(0.8)?,
            p70: get(0.7)?,
        })
    }

    pub fn for_probability(&self, probability: f64) -> Result<f64> {
        match probability {
            0.9 => Ok(self.p90),
            0.8 => Ok(self.p80),
            0.7 => Ok(self.p70),
            p => Err(Error::UnsupportedProbability(p)),
        }
    }
}

/// Highest carrier at which `sigma_d` still meets `probability`:
/// `f = k(P)·c / σ_d`.
pub fn max_coherent_frequency(
    sigma_d: f64,
    probability: f64,
    thresholds: &CoherenceThresholds,
) -> Result<f64> {
    if !(sigma_d > 0.0 && sigma_d.is_finite()) {
        return Err(Error::invalid("sigma_d", format!("{sigma_d} is not positive")));
    }
    Ok(thresholds.for_probability(probability)? * SPEED_OF_LIGHT / sigma_d)
}
