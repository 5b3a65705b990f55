//! Closed-loop runs: environment traces, processing intervals, controller
//! actions and run logs.
//!
//! Time is simulated. A processing interval is `window.size` pulses sent
//! every `pulse_interval_s`, 200 × 105 ms = 21 s by default. The SNR in
//! force for an interval is held from the last trace record at or before
//! the interval start.

use std::io::{Read, Write};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::coherence::{max_coherent_frequency, CoherenceThresholds};
use crate::control::{pi_step, PiControllerState};
use crate::ranging::{window_stats, RangingChain, RangingConfig, WindowConfig};
use crate::seed::{self, derive_seed, stream};
use crate::signal::WaveformConfig;
use crate::{Error, Result};

/// One row of an environment trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentRecord {
    #[serde(rename = "timestamp_s")]
    pub timestamp: f64,
    pub snr_db: f64,
    #[serde(rename = "wind_mps", default)]
    pub wind_speed: Option<f64>,
    #[serde(rename = "humidity_pct", default)]
    pub humidity: Option<f64>,
    #[serde(rename = "rain_mmhr", default)]
    pub rain_rate: Option<f64>,
    #[serde(rename = "temp_c", default)]
    pub temperature: Option<f64>,
}

impl EnvironmentRecord {
    pub fn snr_only(timestamp: f64, snr_db: f64) -> Self {
        Self {
            timestamp,
            snr_db,
            wind_speed: None,
            humidity: None,
            rain_rate: None,
            temperature: None,
        }
    }
}

pub const TRACE_HEADER: [&str; 6] = [
    "timestamp_s",
    "snr_db",
    "wind_mps",
    "humidity_pct",
    "rain_mmhr",
    "temp_c",
];

pub const RUN_LOG_HEADER: [&str; 7] = [
    "interval",
    "f2_hz",
    "sigma_d_m",
    "mean_range_m",
    "snr_db",
    "error_m",
    "timestamp_s",
];

/// Checks ordering and values of a trace.
pub fn validate_trace(records: &[EnvironmentRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Trace("trace is empty".into()));
    }
    for (i, r) in records.iter().enumerate() {
        if !r.timestamp.is_finite() {
            return Err(Error::Trace(format!("record {i}: timestamp is not finite")));
        }
        if r.snr_db.is_nan() || r.snr_db == f64::NEG_INFINITY {
            return Err(Error::Trace(format!("record {i}: snr_db must be a number or +inf")));
        }
        if i > 0 && r.timestamp <= records[i - 1].timestamp {
            return Err(Error::Trace(format!(
                "record {i}: timestamp {} does not increase",
                r.timestamp
            )));
        }
    }
    Ok(())
}

/// Reads a trace CSV. `timestamp_s` and `snr_db` are required; the weather
/// columns may be absent or empty.
pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<EnvironmentRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for h in headers.iter() {
        if !TRACE_HEADER.contains(&h) {
            return Err(Error::Trace(format!("unknown column `{h}`")));
        }
    }
    for required in &TRACE_HEADER[..2] {
        if !headers.iter().any(|h| h == *required) {
            return Err(Error::Trace(format!("missing column `{required}`")));
        }
    }
    let records = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<EnvironmentRecord>, _>>()?;
    validate_trace(&records)?;
    Ok(records)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Shortest decimal string that parses back to the same `f64`; never uses
/// exponent notation. Infinities print as `inf` / `-inf`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_trace_csv<W: Write>(writer: W, records: &[EnvironmentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        w.write_record([
            fmt_f64(r.timestamp),
            fmt_f64(r.snr_db),
            fmt_opt(r.wind_speed),
            fmt_opt(r.humidity),
            fmt_opt(r.rain_rate),
            fmt_opt(r.temperature),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One processing interval of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessingIntervalLog {
    pub interval: usize,
    #[serde(rename = "f2_hz")]
    pub f2: f64,
    #[serde(rename = "sigma_d_m")]
    pub sigma_d: f64,
    #[serde(rename = "mean_range_m")]
    pub mean_range: f64,
    pub snr_db: f64,
    /// `sigma_d - target`, m.
    #[serde(rename = "error_m")]
    pub controller_error: f64,
    /// End of the interval, s.
    #[serde(rename = "timestamp_s")]
    pub timestamp: f64,
}

pub fn write_run_log_csv<W: Write>(writer: W, logs: &[ProcessingIntervalLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RUN_LOG_HEADER)?;
    for l in logs {
        w.write_record([
            l.interval.to_string(),
            fmt_f64(l.f2),
            fmt_f64(l.sigma_d),
            fmt_f64(l.mean_range),
            fmt_f64(l.snr_db),
            fmt_f64(l.controller_error),
            fmt_f64(l.timestamp),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_run_log_csv<R: Read>(reader: R) -> Result<Vec<ProcessingIntervalLog>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(RUN_LOG_HEADER) {
        return Err(Error::Csv(format!(
            "run log header must be `{}`",
            RUN_LOG_HEADER.join(",")
        )));
    }
    Ok(rdr
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Non-physical weather-to-SNR mapping for qualitative demonstrations.
/// Rain and humidity lower the mean SNR linearly; wind adds Gaussian
/// jitter whose standard deviation grows linearly with wind speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeatherCoupling {
    /// dB per mm/h.
    pub rain_db_per_mmhr: f64,
    /// dB per percent relative humidity.
    pub humidity_db_per_pct: f64,
    /// dB of jitter std per m/s.
    pub wind_jitter_db_per_mps: f64,
}

impl Default for WeatherCoupling {
    fn default() -> Self {
        Self {
            rain_db_per_mmhr: 0.2,
            humidity_db_per_pct: 0.02,
            wind_jitter_db_per_mps: 0.3,
        }
    }
}

impl WeatherCoupling {
    fn apply(&self, r: &EnvironmentRecord, z: f64) -> f64 {
        r.snr_db
            - self.rain_db_per_mmhr * r.rain_rate.unwrap_or(0.0)
            - self.humidity_db_per_pct * r.humidity.unwrap_or(0.0)
            + self.wind_jitter_db_per_mps * r.wind_speed.unwrap_or(0.0) * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub waveform: WaveformConfig,
    pub ranging: RangingConfig,
    pub window: WindowConfig,
    /// Geometry and carrier plan; `snr_db` is taken from the trace.
    pub channel: ChannelState,
    /// Time between ranging cycles, s.
    pub pulse_interval_s: f64,
    pub controller: PiControllerState,
    /// Target ranging standard deviation, m.
    pub target_sigma_m: f64,
    /// Nominal spacing of trace records, s.
    pub record_cadence_s: f64,
    /// A hold longer than this multiple of the cadence is reported.
    pub gap_factor: f64,
    /// Fresh pulses tried after a disambiguation failure.
    pub max_retries: usize,
    pub weather: Option<WeatherCoupling>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            waveform: WaveformConfig::default(),
            ranging: RangingConfig::default(),
            window: WindowConfig::default(),
            channel: ChannelState::default(),
            pulse_interval_s: 0.105,
            controller: PiControllerState {
                x_prev: 3.48e6,
                x_min: 50e3,
                x_max: 7.5e6,
                ..PiControllerState::default()
            },
            target_sigma_m: 0.01,
            record_cadence_s: 60.0,
            gap_factor: 1.5,
            max_retries: 50,
            weather: None,
        }
    }
}

impl ScenarioConfig {
    /// Simulated duration of one processing interval, s.
    pub fn interval_duration(&self) -> f64 {
        self.window.size as f64 * self.pulse_interval_s
    }

    pub fn validate(&self) -> Result<()> {
        self.waveform.validate()?;
        self.ranging.validate()?;
        self.window.validate()?;
        self.controller.validate()?;
        if !(self.pulse_interval_s > 0.0 && self.pulse_interval_s.is_finite()) {
            return Err(Error::invalid("pulse_interval_s", "must be positive"));
        }
        if !(self.target_sigma_m > 0.0) {
            return Err(Error::invalid("target_sigma_m", "must be positive"));
        }
        if !(self.record_cadence_s > 0.0 && self.gap_factor >= 1.0) {
            return Err(Error::invalid("record_cadence_s", "cadence must be positive, gap factor >= 1"));
        }
        if self.controller.x_min <= 0.0 {
            return Err(Error::invalid("controller.x_min", "tone separation must stay positive"));
        }
        let f2_max = self.waveform.two_tone.f1 + self.controller.x_max;
        if f2_max >= self.waveform.sample_rate / 2.0 {
            return Err(Error::Aliasing {
                frequency_hz: f2_max,
                sample_rate: self.waveform.sample_rate,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub intervals: Vec<ProcessingIntervalLog>,
    pub warnings: Vec<String>,
    /// Pulses re-sent after a detected disambiguation failure.
    pub gross_errors: usize,
}

/// Index of the record in force at time `t`.
fn record_at(trace: &[EnvironmentRecord], t: f64) -> usize {
    trace.partition_point(|r| r.timestamp <= t).saturating_sub(1)
}

/// Interval statistics for one waveform and SNR.
fn simulate_interval(
    chain: &RangingChain,
    config: &ScenarioConfig,
    snr_db: f64,
    master_seed: u64,
    interval: usize,
) -> Result<(crate::ranging::RangeWindowStats, usize)> {
    let state = ChannelState {
        snr_db,
        ..config.channel
    };
    let results: Vec<Result<(f64, usize)>> = (0..config.window.size)
        .into_par_iter()
        .map(|pulse| {
            let mut failures = 0;
            loop {
                let s = derive_seed(
                    master_seed,
                    &[stream::SCENARIO_PULSE, interval as u64, pulse as u64, failures as u64],
                );
                match chain.measure(&state, s) {
                    Ok(e) => return Ok((e.range, failures)),
                    Err(Error::DisambiguationFailure { .. }) if failures < config.max_retries => {
                        failures += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        })
        .collect();
    let mut ranges = Vec::with_capacity(results.len());
    let mut gross = 0;
    for r in results {
        let (range, f) = r?;
        ranges.push(range);
        gross += f;
    }
    Ok((window_stats(&ranges, &config.window)?, gross))
}

/// Runs `duration_s` of simulated time against `trace`.
pub fn run(
    config: &ScenarioConfig,
    trace: &[EnvironmentRecord],
    duration_s: f64,
    mode: RunMode,
    master_seed: u64,
) -> Result<RunReport> {
    config.validate()?;
    validate_trace(trace)?;
    let t0 = trace[0].timestamp;
    let coverage_end = trace[trace.len() - 1].timestamp + config.record_cadence_s;
    if !(duration_s > 0.0) || t0 + duration_s > coverage_end {
        return Err(Error::Trace(format!(
            "trace covers {} s from t = {t0}, run needs {duration_s} s",
            coverage_end - t0
        )));
    }
    let interval_s = config.interval_duration();
    let n_intervals = (duration_s / interval_s + 1e-9).floor() as usize;
    if n_intervals == 0 {
        return Err(Error::invalid("duration", "shorter than one processing interval"));
    }

    let mut controller = config.controller;
    let mut waveform = match mode {
        RunMode::Fixed => config.waveform,
        RunMode::Adaptive => config.waveform.with_separation(controller.x_prev)?,
    };
    let mut chain = RangingChain::new(waveform, config.ranging)?;
    let mut weather_rng = seed::rng(derive_seed(master_seed, &[stream::SCENARIO_WEATHER]));
    let mut report = RunReport {
        intervals: Vec::with_capacity(n_intervals),
        warnings: Vec::new(),
        gross_errors: 0,
    };

    for i in 0..n_intervals {
        let start = t0 + i as f64 * interval_s;
        let rec = &trace[record_at(trace, start)];
        let held = start - rec.timestamp;
        if held > config.gap_factor * config.record_cadence_s {
            let msg = format!(
                "interval {i}: holding record from t = {} for {held} s",
                rec.timestamp
            );
            log::warn!("{msg}");
            report.warnings.push(msg);
        }
        let z: f64 = StandardNormal.sample(&mut weather_rng);
        let snr_db = match config.weather {
            Some(w) => w.apply(rec, z),
            None => rec.snr_db,
        };

        let (stats, gross) = simulate_interval(&chain, config, snr_db, master_seed, i)?;
        report.gross_errors += gross;
        let error = stats.sigma_d - config.target_sigma_m;
        report.intervals.push(ProcessingIntervalLog {
            interval: i,
            f2: waveform.two_tone.f2,
            sigma_d: stats.sigma_d,
            mean_range: stats.mean_range,
            snr_db,
            controller_error: error,
            timestamp: t0 + (i + 1) as f64 * interval_s,
        });

        if mode == RunMode::Adaptive {
            let (next, x) = pi_step(&controller, error, interval_s).map_err(|e| Error::Aborted {
                interval: i,
                reason: e.to_string(),
            })?;
            controller = next;
            if x != waveform.two_tone.separation() {
                waveform = config.waveform.with_separation(x)?;
                chain = RangingChain::new(waveform, config.ranging)?;
            }
        }
    }
    Ok(report)
}

/// Constant tone separation taken from `config.waveform`.
pub fn run_fixed_bandwidth(
    config: &ScenarioConfig,
    trace: &[EnvironmentRecord],
    duration_s: f64,
    master_seed: u64,
) -> Result<RunReport> {
    run(config, trace, duration_s, RunMode::Fixed, master_seed)
}

/// PI-controlled tone separation chasing `target_sigma_m`.
pub fn run_adaptive(
    config: &ScenarioConfig,
    trace: &[EnvironmentRecord],
    duration_s: f64,
    target_sigma_m: f64,
    master_seed: u64,
) -> Result<RunReport> {
    let config = ScenarioConfig {
        target_sigma_m,
        ..*config
    };
    run(&config, trace, duration_s, RunMode::Adaptive, master_seed)
}

/// Highest coherent carrier for P = 0.9, 0.8, 0.7, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentFrequencies {
    pub p90_hz: f64,
    pub p80_hz: f64,
    pub p70_hz: f64,
}

/// Run statistics derived only from logged fields, so a re-read log
/// reproduces them exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub intervals: usize,
    pub mean_sigma_d_m: f64,
    pub max_sigma_d_m: f64,
    pub mean_f2_hz: f64,
    pub min_f2_hz: f64,
    pub max_f2_hz: f64,
    pub final_f2_hz: f64,
    /// Evaluated at `mean_sigma_d_m`.
    pub max_coherent_frequency: CoherentFrequencies,
}

impl RunSummary {
    pub fn from_logs(logs: &[ProcessingIntervalLog], thresholds: &CoherenceThresholds) -> Result<Self> {
        if logs.is_empty() {
            return Err(Error::Empty("run log"));
        }
        let n = logs.len() as f64;
        let mean_sigma = logs.iter().map(|l| l.sigma_d).sum::<f64>() / n;
        let f = |p| max_coherent_frequency(mean_sigma, p, thresholds);
        Ok(Self {
            intervals: logs.len(),
            mean_sigma_d_m: mean_sigma,
            max_sigma_d_m: logs.iter().map(|l| l.sigma_d).fold(f64::NEG_INFINITY, f64::max),
            mean_f2_hz: logs.iter().map(|l| l.f2).sum::<f64>() / n,
            min_f2_hz: logs.iter().map(|l| l.f2).fold(f64::INFINITY, f64::min),
            max_f2_hz: logs.iter().map(|l| l.f2).fold(f64::NEG_INFINITY, f64::max),
            final_f2_hz: logs[logs.len() - 1].f2,
            max_coherent_frequency: CoherentFrequencies {
                p90_hz: f(0.9)?,
                p80_hz: f(0.8)?,
                p70_hz: f(0.7)?,
            },
        })
    }
}

/// SNR behaviour inside one trace segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SnrProgram {
    Constant { snr_db: f64 },
    /// Linear from `from_db` at the segment start to `to_db` at its end.
    Ramp { from_db: f64, to_db: f64 },
    /// `x[k+1] = m + φ(x[k] − m) + sqrt(1 − φ²)·s·z`, started from the
    /// stationary distribution `N(m, s²)`.
    Ar1 { mean_db: f64, std_db: f64, phi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub snr: SnrProgram,
    #[serde(default)]
    pub wind_mps: Option<f64>,
    #[serde(default)]
    pub humidity_pct: Option<f64>,
    #[serde(default)]
    pub rain_mmhr: Option<f64>,
    #[serde(default)]
    pub temp_c: Option<f64>,
}

impl TraceSegment {
    pub fn constant(start_s: f64, end_s: f64, snr_db: f64) -> Self {
        Self {
            start_s,
            end_s,
            snr: SnrProgram::Constant { snr_db },
            wind_mps: None,
            humidity_pct: None,
            rain_mmhr: None,
            temp_c: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceProgram {
    #[serde(default = "default_cadence")]
    pub cadence_s: f64,
    pub segments: Vec<TraceSegment>,
}

fn default_cadence() -> f64 {
    60.0
}

/// Renders a piecewise program into records every `cadence_s`, from the
/// first segment start up to (excluding) the last segment end.
pub fn synthesize_trace(program: &TraceProgram, seed: u64) -> Result<Vec<EnvironmentRecord>> {
    let cadence = program.cadence_s;
    if !(cadence > 0.0 && cadence.is_finite()) {
        return Err(Error::Trace("cadence must be positive".into()));
    }
    let segs = &program.segments;
    if segs.is_empty() {
        return Err(Error::Trace("program has no segments".into()));
    }
    for (i, s) in segs.iter().enumerate() {
        if !(s.start_s.is_finite() && s.end_s > s.start_s) {
            return Err(Error::Trace(format!("segment {i}: empty or invalid span")));
        }
        if let SnrProgram::Ar1 { std_db, phi, .. } = s.snr {
            if !(std_db >= 0.0 && phi.abs() < 1.0) {
                return Err(Error::Trace(format!("segment {i}: need std >= 0 and |phi| < 1")));
            }
        }
        if i > 0 {
            let prev = segs[i - 1].end_s;
            if s.start_s < prev {
                return Err(Error::Trace(format!("segment {i} overlaps segment {}", i - 1)));
            }
            if s.start_s > prev {
                return Err(Error::Trace(format!("gap before segment {i}")));
            }
        }
    }

    let t0 = segs[0].start_s;
    let mut out = Vec::new();
    for (idx, s) in segs.iter().enumerate() {
        let mut rng = seed::rng(derive_seed(seed, &[stream::TRACE_SEGMENT, idx as u64]));
        let first = ((s.start_s - t0) / cadence).ceil() as u64;
        let mut ar_state: Option<f64> = None;
        let mut k = first;
        loop {
            let t = t0 + k as f64 * cadence;
            if t >= s.end_s {
                break;
            }
            let snr_db = match s.snr {
                SnrProgram::Constant { snr_db } => snr_db,
                SnrProgram::Ramp { from_db, to_db } => {
                    from_db + (to_db - from_db) * (t - s.start_s) / (s.end_s - s.start_s)
                }
                SnrProgram::Ar1 { mean_db, std_db, phi } => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let x = match ar_state {
                        None => mean_db + std_db * z,
                        Some(prev) => mean_db + phi * (prev - mean_db) + (1.0 - phi * phi).sqrt() * std_db * z,
                    };
                    ar_state = Some(x);
                    x
                }
            };
            out.push(EnvironmentRecord {
                timestamp: t,
                snr_db,
                wind_speed: s.wind_mps,
                humidity: s.humidity_pct,
                rain_rate: s.rain_mmhr,
                temperature: s.temp_c,
            });
            k += 1;
        }
    }
    validate_trace(&out)?;
    Ok(out)
}
