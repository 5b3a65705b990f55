//! Pulse synthesis and the delay-estimation bound.
//!
//! Two-tone pulses are rendered at complex baseband with the tones at the
//! positive frequencies `f1` and `f2`, both starting at phase zero. The
//! carrier is applied by [`crate::channel`], never here.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{samples_for, spectral, Error, Result, SPEED_OF_LIGHT};

/// A uniformly sampled complex waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexBasebandSignal {
    samples: Vec<Complex64>,
    sample_rate: f64,
}

impl ComplexBasebandSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::invalid("sample_rate", format!("{sample_rate} is not positive")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Discrete energy `Σ|s[k]|²`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    /// Mean `|s[k]|²` over the samples; zero for an empty signal.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }

    pub fn peak_amplitude(&self) -> f64 {
        self.samples.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Rescales to unit peak magnitude (full DAC scale).
    pub fn normalized_peak(&self) -> Result<Self> {
        let peak = self.peak_amplitude();
        if peak == 0.0 {
            return Err(Error::ZeroEnergy);
        }
        Ok(self.scaled(1.0 / peak))
    }
}

/// Tone pair of a two-tone ranging pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoToneSpec {
    /// Lower tone, Hz.
    pub f1: f64,
    /// Upper tone, Hz.
    pub f2: f64,
}

impl TwoToneSpec {
    pub fn new(f1: f64, f2: f64) -> Result<Self> {
        let spec = Self { f1, f2 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f1.is_finite() && self.f2.is_finite()) {
            return Err(Error::invalid("two_tone", "tone frequencies must be finite"));
        }
        if self.f1 < 0.0 || self.f2 < self.f1 {
            return Err(Error::invalid(
                "two_tone",
                format!("need 0 <= f1 <= f2, got f1={} f2={}", self.f1, self.f2),
            ));
        }
        Ok(())
    }

    /// Half the tone separation, `δf = (f2 - f1) / 2`.
    pub fn delta_f(&self) -> f64 {
        0.5 * (self.f2 - self.f1)
    }

    /// Tone separation `2δf`.
    pub fn separation(&self) -> f64 {
        self.f2 - self.f1
    }

    /// Spacing between ambiguity lobes of the two-tone matched filter, s.
    pub fn lobe_spacing(&self) -> f64 {
        1.0 / self.separation()
    }
}

/// Complete description of one ranging cycle's transmit waveforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveformConfig {
    pub two_tone: TwoToneSpec,
    /// Disambiguation tone, Hz.
    pub f_d: f64,
    pub ranging_pulse_width: f64,
    pub disamb_pulse_width: f64,
    /// Pulse repetition interval, s. Also the receive window length.
    pub pri: f64,
    pub sample_rate: f64,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        let two_tone = TwoToneSpec {
            f1: 20e3,
            f2: 7.52e6,
        };
        let f_d = two_tone.delta_f() / 2.0;
        Self {
            two_tone,
            f_d,
            ranging_pulse_width: 143.7e-6,
            disamb_pulse_width: 1.0 / f_d,
            pri: 159.7e-6,
            sample_rate: 25e6,
        }
    }
}

impl WaveformConfig {
    /// Builds a config with the disambiguation tone tied to the tone pair,
    /// `f_d = δf / 2`, and a one-period disambiguation pulse.
    pub fn from_two_tone(
        two_tone: TwoToneSpec,
        ranging_pulse_width: f64,
        pri: f64,
        sample_rate: f64,
    ) -> Result<Self> {
        let f_d = two_tone.delta_f() / 2.0;
        let cfg = Self {
            two_tone,
            f_d,
            ranging_pulse_width,
            disamb_pulse_width: 1.0 / f_d,
            pri,
            sample_rate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same timing, new tone separation `f2 - f1`; `f1` is kept.
    pub fn with_separation(&self, separation: f64) -> Result<Self> {
        let two_tone = TwoToneSpec::new(self.two_tone.f1, self.two_tone.f1 + separation)?;
        Self::from_two_tone(two_tone, self.ranging_pulse_width, self.pri, self.sample_rate)
    }

    pub fn validate(&self) -> Result<()> {
        self.two_tone.validate()?;
        let fs = self.sample_rate;
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::invalid("sample_rate", "must be positive"));
        }
        if self.two_tone.f2 >= fs / 2.0 {
            return Err(Error::Aliasing {
                frequency_hz: self.two_tone.f2,
                sample_rate: fs,
            });
        }
        if !(self.f_d > 0.0 && self.f_d < fs / 2.0) {
            return Err(Error::invalid(
                "f_d",
                format!("disambiguation tone {} Hz outside (0, fs/2)", self.f_d),
            ));
        }
        if (self.disamb_pulse_width - 1.0 / self.f_d).abs() > 1.0 / fs {
            return Err(Error::invalid(
                "disamb_pulse_width",
                "must equal one period of f_d to within one sample",
            ));
        }
        if !(self.ranging_pulse_width > 0.0) {
            return Err(Error::invalid("ranging_pulse_width", "must be positive"));
        }
        if self.pri < self.ranging_pulse_width.max(self.disamb_pulse_width) {
            return Err(Error::invalid("pri", "shorter than a pulse"));
        }
        Ok(())
    }

    pub fn ranging_pulse(&self) -> Result<ComplexBasebandSignal> {
        generate_two_tone(self.two_tone, self.ranging_pulse_width, self.sample_rate)
    }

    pub fn disambiguation_pulse(&self) -> Result<ComplexBasebandSignal> {
        generate_disambiguation(self.f_d, self.sample_rate)
    }

    /// Receive window length in samples, one PRI.
    pub fn window_len(&self) -> usize {
        samples_for(self.pri, self.sample_rate)
    }
}

fn check_tone(f: f64, sample_rate: f64) -> Result<()> {
    if f.abs() >= sample_rate / 2.0 {
        return Err(Error::Aliasing {
            frequency_hz: f,
            sample_rate,
        });
    }
    Ok(())
}

/// Renders `e^{j2πf1 t} + e^{j2πf2 t}` for `round(width * fs)` samples.
pub fn generate_two_tone(
    spec: TwoToneSpec,
    width: f64,
    sample_rate: f64,
) -> Result<ComplexBasebandSignal> {
    spec.validate()?;
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::invalid("sample_rate", "must be positive"));
    }
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::invalid("width", format!("{width} is not positive")));
    }
    check_tone(spec.f2, sample_rate)?;
    let n = samples_for(width, sample_rate);
    if n < 2 {
        return Err(Error::invalid("width", "pulse shorter than two samples"));
    }
    let w1 = 2.0 * PI * spec.f1 / sample_rate;
    let w2 = 2.0 * PI * spec.f2 / sample_rate;
    let samples = (0..n)
        .map(|k| {
            let k = k as f64;
            Complex64::from_polar(1.0, w1 * k) + Complex64::from_polar(1.0, w2 * k)
        })
        .collect();
    ComplexBasebandSignal::new(samples, sample_rate)
}

/// One period of `e^{j2πf_d t}`, `round(fs / f_d)` samples long.
pub fn generate_disambiguation(f_d: f64, sample_rate: f64) -> Result<ComplexBasebandSignal> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::invalid("sample_rate", "must be positive"));
    }
    if !(f_d.is_finite() && f_d > 0.0) {
        return Err(Error::invalid("f_d", format!("{f_d} is not positive")));
    }
    check_tone(f_d, sample_rate)?;
    let n = samples_for(1.0 / f_d, sample_rate);
    let w = 2.0 * PI * f_d / sample_rate;
    let samples = (0..n)
        .map(|k| Complex64::from_polar(1.0, w * k as f64))
        .collect();
    ComplexBasebandSignal::new(samples, sample_rate)
}

/// Discrete mean-squared bandwidth `β²` in (rad/s)², taken about the
/// spectral centroid over the length-N DFT of the signal.
pub fn mean_squared_bandwidth(signal: &ComplexBasebandSignal) -> Result<f64> {
    if signal.is_empty() {
        return Err(Error::Empty("signal"));
    }
    let mut spec = signal.samples().to_vec();
    spectral::fft(&mut spec);
    let n = spec.len();
    let fs = signal.sample_rate();
    let (mut total, mut first) = (0.0, 0.0);
    for (m, s) in spec.iter().enumerate() {
        let p = s.norm_sqr();
        total += p;
        first += spectral::bin_frequency(m, n) * fs * p;
    }
    if total == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let centroid = first / total;
    let second: f64 = spec
        .iter()
        .enumerate()
        .map(|(m, s)| {
            let w = 2.0 * PI * (spectral::bin_frequency(m, n) * fs - centroid);
            w * w * s.norm_sqr()
        })
        .sum();
    Ok(second / total)
}

/// Post-processing SNR `2E/N0` of a pulse received in complex white noise
/// with per-sample variance `noise_variance`.
pub fn post_processing_snr(pulse_energy: f64, noise_variance: f64) -> f64 {
    2.0 * pulse_energy / noise_variance
}

/// `2E/N0` for an `n`-sample pulse at per-sample SNR `snr_db`.
pub fn post_processing_snr_from_db(pulse_len: usize, snr_db: f64) -> f64 {
    2.0 * pulse_len as f64 * 10f64.powf(snr_db / 10.0)
}

fn check_crlb_inputs(delta_f: f64, post_snr: f64) -> Result<()> {
    if !(delta_f > 0.0) || delta_f.is_nan() {
        return Err(Error::invalid("delta_f", format!("{delta_f} is not positive")));
    }
    if !(post_snr > 0.0) || post_snr.is_nan() {
        return Err(Error::invalid("post_snr", format!("{post_snr} is not positive")));
    }
    Ok(())
}

/// Lower bound on the round-trip delay standard deviation, s:
/// `σ_t = 1 / (β·sqrt(2E/N0))` with `β = 2πδf`.
pub fn crlb_sigma_t(delta_f: f64, post_snr: f64) -> Result<f64> {
    check_crlb_inputs(delta_f, post_snr)?;
    Ok(1.0 / (2.0 * PI * delta_f * post_snr.sqrt()))
}

/// Lower bound on the one-way range standard deviation, m:
/// `σ_r = (c/2)·σ_t`.
///
/// The closed form sometimes quoted for this bound, `c / (8(πδf)²·sqrt(2E/N0))`,
/// does not reduce to metres; this derives it from the delay bound instead.
pub fn crlb_sigma_r(delta_f: f64, post_snr: f64) -> Result<f64> {
    Ok(0.5 * SPEED_OF_LIGHT * crlb_sigma_t(delta_f, post_snr)?)
}

/// Smallest `δf` whose bound, after averaging `averaged` pulses, reaches
/// `target_sigma`. Inverse of [`crlb_sigma_r`].
pub fn delta_f_for_sigma(target_sigma: f64, post_snr: f64, averaged: usize) -> Result<f64> {
    if !(target_sigma > 0.0) {
        return Err(Error::invalid("target_sigma", "must be positive"));
    }
    if averaged == 0 {
        return Err(Error::invalid("averaged", "must be at least 1"));
    }
    check_crlb_inputs(1.0, post_snr)?;
    let per_pulse = target_sigma * (averaged as f64).sqrt();
    Ok(0.5 * SPEED_OF_LIGHT / (2.0 * PI * per_pulse * post_snr.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peak_bins(sig: &ComplexBasebandSignal, count: usize) -> Vec<f64> {
        let mut spec = sig.samples().to_vec();
        spectral::fft(&mut spec);
        let n = spec.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| spec[b].norm().total_cmp(&spec[a].norm()));
        // keep distinct local peaks
        let mut picked: Vec<usize> = Vec::new();
        for i in idx {
            if picked.iter().all(|&p| p.abs_diff(i) > 3) {
                picked.push(i);
            }
            if picked.len() == count {
                break;
            }
        }
        let fs = sig.sample_rate();
        let mut f: Vec<f64> = picked
            .into_iter()
            .map(|m| spectral::bin_frequency(m, n) * fs)
            .collect();
        f.sort_by(f64::total_cmp);
        f
    }

    #[test]
    fn default_ranging_pulse_has_3592_samples_and_two_peaks() {
        let spec = TwoToneSpec::new(20e3, 7.52e6).unwrap();
        let pulse = generate_two_tone(spec, 143.7e-6, 25e6).unwrap();
        assert_eq!(pulse.len(), 3592);
        let bin = 25e6 / 3592.0;
        let peaks = peak_bins(&pulse, 2);
        assert!((peaks[0] - 20e3).abs() <= bin, "{peaks:?}");
        assert!((peaks[1] - 7.52e6).abs() <= bin, "{peaks:?}");
    }

    #[test]
    fn coincident_tones_give_constant_envelope() {
        let spec = TwoToneSpec::new(1e6, 1e6).unwrap();
        let pulse = generate_two_tone(spec, 10e-6, 25e6).unwrap();
        for s in pulse.samples() {
            assert!((s.norm() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_tone_energy_matches_direct_summation() {
        let (f1, f2, fs) = (20e3, 3.5e6, 25e6);
        let pulse = generate_two_tone(TwoToneSpec::new(f1, f2).unwrap(), 143.7e-6, fs).unwrap();
        // direct evaluation of |e^{jθ1}+e^{jθ2}|² = 2 + 2cos(θ2-θ1)
        let oracle: f64 = (0..3592)
            .map(|k| {
                let t = k as f64 / fs;
                2.0 + 2.0 * (2.0 * PI * (f2 - f1) * t).cos()
            })
            .sum();
        assert!((pulse.energy() - oracle).abs() / oracle < 1e-10);
    }

    #[test]
    fn two_tone_rejects_aliasing_and_bad_width() {
        let spec = TwoToneSpec::new(20e3, 12.5e6).unwrap();
        assert!(matches!(
            generate_two_tone(spec, 1e-6, 25e6),
            Err(Error::Aliasing { .. })
        ));
        let ok = TwoToneSpec::new(20e3, 1e6).unwrap();
        assert!(generate_two_tone(ok, 0.0, 25e6).is_err());
        assert!(generate_two_tone(ok, -1e-6, 25e6).is_err());
        assert!(TwoToneSpec::new(2e6, 1e6).is_err());
    }

    #[test]
    fn default_disambiguation_pulse_is_one_period() {
        let pulse = generate_disambiguation(1.875e6, 25e6).unwrap();
        assert_eq!(pulse.len(), 13);
        assert!((pulse.duration() - 533e-9).abs() < 1.0 / 25e6);
    }

    #[test]
    fn quarter_rate_disambiguation_traces_one_rotation() {
        let pulse = generate_disambiguation(25e6 / 4.0, 25e6).unwrap();
        let want = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ];
        assert_eq!(pulse.len(), 4);
        for (s, w) in pulse.samples().iter().zip(want) {
            assert!((s - w).norm() < 1e-12);
        }
        assert!(generate_disambiguation(12.5e6, 25e6).is_err());
        assert!(generate_disambiguation(0.0, 25e6).is_err());
    }

    #[test]
    fn disambiguation_autocorrelation_peaks_at_zero_lag() {
        let pulse = generate_disambiguation(1.875e6, 25e6).unwrap();
        let s = pulse.samples();
        let n = s.len() as isize;
        let corr = |lag: isize| -> f64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                let j = k + lag;
                if (0..n).contains(&j) {
                    acc += s[j as usize] * s[k as usize].conj();
                }
            }
            acc.norm()
        };
        let peak = corr(0);
        for lag in -(n - 1)..n {
            if lag != 0 {
                assert!(corr(lag) < peak);
            }
        }
    }

    #[test]
    fn dc_has_zero_bandwidth() {
        let dc = ComplexBasebandSignal::new(vec![Complex64::new(1.0, 0.0); 64], 1e6).unwrap();
        assert!(mean_squared_bandwidth(&dc).unwrap().abs() < 1e-9);
    }

    #[test]
    fn zero_signal_bandwidth_is_rejected() {
        let z = ComplexBasebandSignal::new(vec![Complex64::new(0.0, 0.0); 8], 1e6).unwrap();
        assert_eq!(mean_squared_bandwidth(&z), Err(Error::ZeroEnergy));
    }

    #[test]
    fn symmetric_two_tone_bandwidth_matches_closed_form() {
        // tones at ±3.75 MHz rendered as f1 = -δf, f2 = +δf would alias-check
        // against a negative f1, so build the samples directly.
        let (df, fs, n) = (3.75e6, 25e6, 3592);
        let samples = (0..n)
            .map(|k| {
                let t = k as f64 / fs;
                Complex64::from_polar(1.0, -2.0 * PI * df * t)
                    + Complex64::from_polar(1.0, 2.0 * PI * df * t)
            })
            .collect();
        let sig = ComplexBasebandSignal::new(samples, fs).unwrap();
        let b2 = mean_squared_bandwidth(&sig).unwrap();
        let want = (2.0 * PI * df).powi(2);
        assert!((b2 - want).abs() / want < 0.01, "ratio {}", b2 / want);
    }

    #[test]
    fn crlb_value_and_scaling() {
        // frozen from an independent evaluation: 0.006361793545649257 m
        let s = crlb_sigma_r(3.75e6, 1e6).unwrap();
        let oracle = SPEED_OF_LIGHT / 2.0 / (2.0 * PI * 3.75e6) / 1e3;
        assert!((s - oracle).abs() < 1e-15);
        assert!((s - 6.361_793_545_649e-3).abs() < 1e-14, "{s}");
        let q = crlb_sigma_r(3.75e6, 4e6).unwrap();
        assert!((q - s / 2.0).abs() < 1e-15);
        let d = crlb_sigma_r(7.5e6, 1e6).unwrap();
        assert!((d - s / 2.0).abs() < 1e-15);
        assert!(crlb_sigma_r(3.75e6, 1e300).unwrap() < 1e-140);
        assert!(crlb_sigma_r(0.0, 1.0).is_err());
        assert!(crlb_sigma_r(1.0, -1.0).is_err());
        assert!(crlb_sigma_r(1.0, f64::NAN).is_err());
    }

    #[test]
    fn delta_f_inversion_round_trips() {
        let rho = 3.3e5;
        let df = delta_f_for_sigma(0.01, rho, 5).unwrap();
        let sigma = crlb_sigma_r(df, rho).unwrap() / 5f64.sqrt();
        assert!((sigma - 0.01).abs() < 1e-15);
    }

    #[test]
    fn default_waveform_is_consistent() {
        let w = WaveformConfig::default();
        w.validate().unwrap();
        assert_eq!(w.f_d, 1.875e6);
        assert_eq!(w.window_len(), 3992);
        assert_eq!(w.ranging_pulse().unwrap().len(), 3592);
        assert!((w.two_tone.lobe_spacing() - 1.0 / 7.5e6).abs() < 1e-20);
        let narrow = w.with_separation(3.48e6).unwrap();
        assert_eq!(narrow.two_tone.f2, 3.5e6);
        assert!((narrow.f_d - 0.87e6).abs() < 1e-6);
    }
}
