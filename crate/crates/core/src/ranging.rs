//! Matched filtering, lobe selection, sub-sample refinement and averaging.
//!
//! One ranging cycle sends a two-tone pulse and a one-period disambiguation
//! pulse. The two-tone matched filter has many near-equal lobes spaced
//! `1/(f2 - f1)` apart; the broad single lobe of the disambiguation matched
//! filter picks which of them is the true delay. The chosen lobe is then
//! refined with a cubic spline.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelState, NoiseLevel};
use crate::seed::{derive_seed, stream};
use crate::signal::{ComplexBasebandSignal, WaveformConfig};
use crate::spline::NaturalCubicSpline;
use crate::{spectral, Error, Result, SPEED_OF_LIGHT};

/// Lags kept before zero so a peak at or near zero delay still has
/// neighbours on both sides, in original samples.
const NEGATIVE_LAG_GUARD: usize = 8;

/// Full-overlap cross-correlation of `received` against `template`,
/// lags `0..=len(received) - len(template)`, at the input sample rate.
pub fn matched_filter(
    received: &ComplexBasebandSignal,
    template: &ComplexBasebandSignal,
) -> Result<ComplexBasebandSignal> {
    let mf = MatchedFilter::new(template, received.len(), 1)?;
    let out = mf.correlate(received)?;
    let start = out.first_lag.unsigned_abs() as usize;
    ComplexBasebandSignal::new(out.values[start..].to_vec(), out.sample_rate)
}

/// Correlation values on a uniform lag grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub values: Vec<Complex64>,
    /// Lag-grid rate, Hz (input rate times the upsampling factor).
    pub sample_rate: f64,
    /// Lag index of `values[0]`, in grid steps. Zero or negative.
    pub first_lag: i64,
}

impl Correlation {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Lag of grid position `i` (fractional allowed), s.
    pub fn lag_seconds(&self, i: f64) -> f64 {
        (i + self.first_lag as f64) / self.sample_rate
    }

    /// Grid position of a lag in seconds.
    pub fn position(&self, lag_s: f64) -> f64 {
        lag_s * self.sample_rate - self.first_lag as f64
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn argmax(&self) -> Option<usize> {
        self.values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .map(|(i, _)| i)
    }
}

/// FFT correlator for one template and a fixed receive-window length.
///
/// The output is the band-limited interpolant of the correlation sampled
/// `upsample` times per input sample, obtained by zero-padding the
/// correlation spectrum.
#[derive(Debug, Clone)]
pub struct MatchedFilter {
    template_conj_spectrum: Vec<Complex64>,
    template_len: usize,
    window_len: usize,
    upsample: usize,
    sample_rate: f64,
}

impl MatchedFilter {
    pub fn new(
        template: &ComplexBasebandSignal,
        window_len: usize,
        upsample: usize,
    ) -> Result<Self> {
        if template.is_empty() {
            return Err(Error::Empty("template"));
        }
        if template.energy() == 0.0 {
            return Err(Error::ZeroEnergy);
        }
        if window_len < template.len() {
            return Err(Error::invalid(
                "window_len",
                format!("{window_len} is shorter than the {}-sample template", template.len()),
            ));
        }
        if upsample == 0 {
            return Err(Error::invalid("upsample", "must be at least 1"));
        }
        let mut spec = vec![Complex64::new(0.0, 0.0); window_len];
        spec[..template.len()].copy_from_slice(template.samples());
        spectral::fft(&mut spec);
        for v in spec.iter_mut() {
            *v = v.conj();
        }
        Ok(Self {
            template_conj_spectrum: spec,
            template_len: template.len(),
            window_len,
            upsample,
            sample_rate: template.sample_rate(),
        })
    }

    /// Largest valid lag, in input samples.
    pub fn max_lag(&self) -> usize {
        self.window_len - self.template_len
    }

    pub fn correlate(&self, received: &ComplexBasebandSignal) -> Result<Correlation> {
        if received.is_empty() {
            return Err(Error::Empty("received"));
        }
        if received.len() != self.window_len {
            return Err(Error::invalid(
                "received",
                format!("expected {} samples, got {}", self.window_len, received.len()),
            ));
        }
        if received.sample_rate() != self.sample_rate {
            return Err(Error::invalid("received", "sample rate differs from the template"));
        }
        let mut spec = received.samples().to_vec();
        spectral::fft(&mut spec);
        for (s, t) in spec.iter_mut().zip(&self.template_conj_spectrum) {
            *s *= t;
        }
        let u = self.upsample;
        let mut full = spectral::zero_pad_spectrum(&spec, u);
        spectral::ifft(&mut full);

        // Circular lags -g..=max_lag coincide with the linear correlation as
        // long as g <= max_lag.
        let guard = NEGATIVE_LAG_GUARD.min(self.max_lag()) * u;
        let positive = self.max_lag() * u + 1;
        let big = full.len();
        let mut values = Vec::with_capacity(guard + positive);
        values.extend_from_slice(&full[big - guard..]);
        values.extend_from_slice(&full[..positive]);
        Ok(Correlation {
            values,
            sample_rate: self.sample_rate * u as f64,
            first_lag: -(guard as i64),
        })
    }
}

/// How the two-tone lobe is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LobeSelection {
    /// Lobe nearest the disambiguation peak.
    #[default]
    Disambiguation,
    /// Largest two-tone lobe; ambiguous under noise.
    StrongestLobe,
    /// Lobe nearest an externally supplied coarse delay, s.
    CoarseHint(f64),
}

/// Refinement knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RangingConfig {
    /// Spline half-width around the peak, in input samples. The knots are
    /// the interpolated matched-filter points inside that span.
    pub spline_neighbors: usize,
    /// Dense-scan points per spline interval.
    pub spline_oversample: usize,
    /// Matched-filter interpolation factor.
    pub mf_upsample: usize,
    #[serde(skip)]
    pub lobe_selection: LobeSelection,
}

impl Default for RangingConfig {
    fn default() -> Self {
        Self {
            spline_neighbors: 4,
            spline_oversample: 64,
            mf_upsample: 8,
            lobe_selection: LobeSelection::Disambiguation,
        }
    }
}

impl RangingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spline_neighbors == 0 {
            return Err(Error::invalid("spline_neighbors", "must be at least 1"));
        }
        if self.spline_oversample == 0 {
            return Err(Error::invalid("spline_oversample", "must be at least 1"));
        }
        if self.mf_upsample == 0 {
            return Err(Error::invalid("mf_upsample", "must be at least 1"));
        }
        Ok(())
    }
}

/// One refined range measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeEstimate {
    /// One-way range, m.
    pub range: f64,
    /// Refined round-trip delay, s.
    pub peak_lag: f64,
    /// Selected lobe relative to the strongest two-tone lobe.
    pub ambiguity_index: i64,
    /// Peak-to-noise ratio of the disambiguation matched filter, dB.
    pub snr_post: f64,
}

fn local_maxima(mag: &[f64], lo: usize, hi: usize) -> Vec<usize> {
    let lo = lo.max(1);
    let hi = hi.min(mag.len().saturating_sub(2));
    (lo..=hi)
        .filter(|&i| mag[i] >= mag[i - 1] && mag[i] > mag[i + 1])
        .collect()
}

fn post_snr_db(mf: &Correlation, peak: usize) -> f64 {
    let mut p: Vec<f64> = mf.values.iter().map(|v| v.norm_sqr()).collect();
    let peak_power = p[peak];
    let mid = p.len() / 2;
    let (_, median, _) = p.select_nth_unstable_by(mid, f64::total_cmp);
    // median of an exponential variable is mean·ln 2
    let floor = *median / std::f64::consts::LN_2;
    if floor == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak_power / floor).log10()
    }
}

/// Picks the two-tone lobe, refines its peak and converts the delay to range.
pub fn disambiguate_and_refine(
    mf_ranging: &Correlation,
    mf_disamb: &Correlation,
    waveform: &WaveformConfig,
    config: &RangingConfig,
) -> Result<RangeEstimate> {
    config.validate()?;
    if mf_ranging.is_empty() || mf_disamb.is_empty() {
        return Err(Error::Empty("matched-filter output"));
    }
    if mf_ranging.sample_rate != mf_disamb.sample_rate {
        return Err(Error::invalid(
            "matched-filter output",
            "ranging and disambiguation lag grids differ",
        ));
    }
    let rate = mf_ranging.sample_rate;
    let spacing_s = waveform.two_tone.lobe_spacing();
    if !spacing_s.is_finite() {
        return Err(Error::invalid("two_tone", "coincident tones have no lobe structure"));
    }
    let spacing = spacing_s * rate;
    let mag = mf_ranging.magnitudes();
    let strongest = mf_ranging.argmax().expect("non-empty");

    let disamb_peak = mf_disamb.argmax().expect("non-empty");
    let coarse_s = match config.lobe_selection {
        LobeSelection::Disambiguation => mf_disamb.lag_seconds(disamb_peak as f64),
        LobeSelection::StrongestLobe => mf_ranging.lag_seconds(strongest as f64),
        LobeSelection::CoarseHint(t) => t,
    };
    let coarse = mf_ranging.position(coarse_s);

    let reach = 1.5 * spacing;
    let lo = (coarse - reach).floor().max(0.0) as usize;
    let hi = (coarse + reach).ceil().max(0.0) as usize;
    let selected = local_maxima(&mag, lo, hi)
        .into_iter()
        .min_by(|&a, &b| (a as f64 - coarse).abs().total_cmp(&(b as f64 - coarse).abs()));
    let selected = match selected {
        Some(i) if (i as f64 - coarse).abs() <= spacing / 2.0 => i,
        other => {
            let distance = other.map_or(f64::INFINITY, |i| (i as f64 - coarse).abs() / rate);
            return Err(Error::DisambiguationFailure {
                distance_s: distance,
                half_spacing_s: spacing_s / 2.0,
            });
        }
    };

    let upsample = (rate / waveform.sample_rate).round().max(1.0) as usize;
    let k = config.spline_neighbors * upsample;
    let first = selected.saturating_sub(k);
    let last = (selected + k).min(mag.len() - 1);
    let spline = NaturalCubicSpline::new(first as f64, 1.0, &mag[first..=last])?;
    // fit over the wide neighbourhood, search only inside the selected lobe
    let half = spacing / 2.0;
    let (peak_pos, _) = spline.maximum_in(
        selected as f64 - half,
        selected as f64 + half,
        config.spline_oversample,
    );

    let peak_lag = mf_ranging.lag_seconds(peak_pos);
    let ambiguity_index = ((selected as f64 - strongest as f64) / spacing).round() as i64;
    Ok(RangeEstimate {
        range: (0.5 * SPEED_OF_LIGHT * peak_lag).max(0.0),
        peak_lag,
        ambiguity_index,
        snr_post: post_snr_db(mf_disamb, disamb_peak),
    })
}

/// Transmit pulses and correlators for one waveform, reused across cycles.
#[derive(Debug, Clone)]
pub struct RangingChain {
    waveform: WaveformConfig,
    config: RangingConfig,
    ranging_pulse: ComplexBasebandSignal,
    disamb_pulse: ComplexBasebandSignal,
    ranging_mf: MatchedFilter,
    disamb_mf: MatchedFilter,
}

impl RangingChain {
    /// Both pulses are sent at unit peak amplitude.
    pub fn new(waveform: WaveformConfig, config: RangingConfig) -> Result<Self> {
        waveform.validate()?;
        config.validate()?;
        let ranging_pulse = waveform.ranging_pulse()?.normalized_peak()?;
        let disamb_pulse = waveform.disambiguation_pulse()?.normalized_peak()?;
        let window = waveform.window_len();
        let ranging_mf = MatchedFilter::new(&ranging_pulse, window, config.mf_upsample)?;
        let disamb_mf = MatchedFilter::new(&disamb_pulse, window, config.mf_upsample)?;
        Ok(Self {
            waveform,
            config,
            ranging_pulse,
            disamb_pulse,
            ranging_mf,
            disamb_mf,
        })
    }

    pub fn waveform(&self) -> &WaveformConfig {
        &self.waveform
    }

    pub fn config(&self) -> &RangingConfig {
        &self.config
    }

    pub fn ranging_pulse(&self) -> &ComplexBasebandSignal {
        &self.ranging_pulse
    }

    pub fn disambiguation_pulse(&self) -> &ComplexBasebandSignal {
        &self.disamb_pulse
    }

    /// `2E/N0` of the ranging pulse at the given per-sample SNR.
    pub fn post_processing_snr(&self, snr_db: f64) -> f64 {
        crate::signal::post_processing_snr_from_db(self.ranging_pulse.len(), snr_db)
    }

    /// Per-sample SNR (dB) that gives the ranging pulse a post-processing
    /// SNR of `post_snr`.
    pub fn snr_db_for_post_snr(&self, post_snr: f64) -> f64 {
        10.0 * (post_snr / (2.0 * self.ranging_pulse.len() as f64)).log10()
    }

    /// Runs one full cycle through the channel and the estimator.
    ///
    /// Both pulses see the same receiver noise variance, set by the ranging
    /// pulse and `state.snr_db`.
    pub fn measure(&self, state: &ChannelState, seed: u64) -> Result<RangeEstimate> {
        self.measure_with(state, seed, self.config.lobe_selection)
    }

    pub fn measure_with(
        &self,
        state: &ChannelState,
        seed: u64,
        lobe_selection: LobeSelection,
    ) -> Result<RangeEstimate> {
        let window = self.waveform.window_len();
        let noise = match channel::noise_variance_for(
            &self.ranging_pulse,
            state.repeater_gain,
            state.snr_db,
        ) {
            Some(v) => NoiseLevel::Variance(v),
            None => NoiseLevel::Off,
        };
        let rx_r = channel::propagate(
            &self.ranging_pulse,
            state,
            window,
            noise,
            derive_seed(seed, &[stream::CHANNEL_RANGING]),
        )?;
        let rx_d = channel::propagate(
            &self.disamb_pulse,
            state,
            window,
            noise,
            derive_seed(seed, &[stream::CHANNEL_DISAMBIGUATION]),
        )?;
        let mf_r = self.ranging_mf.correlate(&rx_r)?;
        let mf_d = self.disamb_mf.correlate(&rx_d)?;
        let config = RangingConfig {
            lobe_selection,
            ..self.config
        };
        disambiguate_and_refine(&mf_r, &mf_d, &self.waveform, &config)
    }
}

/// How range estimates in a window are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields, tag = "mode")]
pub enum Averaging {
    /// Consecutive groups of `size` are averaged; `sigma_d` is the spread of
    /// the group means.
    Grouped { size: usize },
    /// All estimates are averaged; `sigma_d` is the standard error of that
    /// mean.
    Plain,
}

impl Default for Averaging {
    fn default() -> Self {
        Averaging::Grouped { size: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    /// Estimates per processing interval.
    pub size: usize,
    pub averaging: Averaging,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            size: 200,
            averaging: Averaging::default(),
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::invalid("window.size", "must be at least 2"));
        }
        if let Averaging::Grouped { size } = self.averaging {
            if size == 0 || !self.size.is_multiple_of(size) || self.size / size < 2 {
                return Err(Error::invalid(
                    "window.averaging.size",
                    format!("{size} must divide {} into at least two groups", self.size),
                ));
            }
        }
        Ok(())
    }

    /// Number of estimates averaged into each reported value.
    pub fn averaged(&self) -> usize {
        match self.averaging {
            Averaging::Grouped { size } => size,
            Averaging::Plain => self.size,
        }
    }
}

/// Statistics of one processing interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeWindowStats {
    pub estimates: Vec<f64>,
    pub group_means: Vec<f64>,
    /// Ranging standard deviation reported to the controller, m.
    pub sigma_d: f64,
    pub mean_range: f64,
    /// Sample standard deviation of the raw estimates, m.
    pub per_pulse_sigma: f64,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation with `N - 1` normalisation.
pub fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (x.len() - 1) as f64).sqrt()
}

/// Order-preserving window statistics.
pub fn window_stats(estimates: &[f64], config: &WindowConfig) -> Result<RangeWindowStats> {
    config.validate()?;
    if estimates.len() != config.size {
        return Err(Error::WindowSize {
            expected: config.size,
            got: estimates.len(),
        });
    }
    if estimates.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("estimates", "non-finite range"));
    }
    let per_pulse_sigma = sample_std(estimates);
    let (group_means, sigma_d) = match config.averaging {
        Averaging::Grouped { size } => {
            let g: Vec<f64> = estimates.chunks(size).map(mean).collect();
            let s = sample_std(&g);
            (g, s)
        }
        Averaging::Plain => (
            vec![mean(estimates)],
            per_pulse_sigma / (estimates.len() as f64).sqrt(),
        ),
    };
    Ok(RangeWindowStats {
        estimates: estimates.to_vec(),
        group_means,
        sigma_d,
        mean_range: mean(estimates),
        per_pulse_sigma,
    })
}
