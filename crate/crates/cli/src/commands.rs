use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cohsync::coherence::{probability_curve, threshold_crossing, CoherenceThresholds};
use cohsync::control::{
    find_ultimate_gain, ziegler_nichols_gains, CrlbRangingPlant, ErrorSign, OscillationTest,
};
use cohsync::ranging::{Averaging, RangingChain};
use cohsync::scenario::{
    fmt_f64, read_trace_csv, run, synthesize_trace, write_run_log_csv, write_trace_csv,
    EnvironmentRecord, RunMode, RunSummary,
};
use cohsync::seed::derive_seed;
use cohsync::signal::{crlb_sigma_r, crlb_sigma_t, delta_f_for_sigma};
use serde::Serialize;

use crate::config::{Mode, RunConfig};

pub const RESOLVED_CONFIG: &str = "config.toml";
pub const CRLB_CSV: &str = "crlb.csv";
pub const CURVE_CSV: &str = "curve.csv";
pub const THRESHOLDS_JSON: &str = "thresholds.json";
pub const RUN_LOG_CSV: &str = "run_log.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const TUNE_JSON: &str = "tune.json";
pub const TRACE_CSV: &str = "trace.csv";

const TRACE_STREAM: u64 = 100;
const PLANT_STREAM: u64 = 101;

fn prepare(out: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    cfg.validate()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(RESOLVED_CONFIG);
    fs::write(&path, cfg.to_toml()?).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Bound on delay and range over the configured `2E/N0` grid.
pub fn crlb(cfg: &RunConfig, out: &Path) -> anyhow::Result<PathBuf> {
    prepare(out, cfg)?;
    let path = out.join(CRLB_CSV);
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["post_snr_db", "post_snr", "sigma_t_s", "sigma_r_m"])?;
    for &db in &cfg.crlb.snr_grid_db {
        let rho = 10f64.powf(db / 10.0);
        w.write_record([
            fmt_f64(db),
            fmt_f64(rho),
            fmt_f64(crlb_sigma_t(cfg.crlb.delta_f, rho)?),
            fmt_f64(crlb_sigma_r(cfg.crlb.delta_f, rho)?),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub nodes: usize,
    pub threshold: f64,
    pub trials: usize,
    pub seed: u64,
    /// `σ_d/λ` at which `P(G_c ≥ threshold)` falls to 0.9, 0.8 and 0.7;
    /// absent when the grid never gets there.
    pub p90: Option<f64>,
    pub p80: Option<f64>,
    pub p70: Option<f64>,
}

pub fn montecarlo(cfg: &RunConfig, seed: u64, out: &Path) -> anyhow::Result<ThresholdReport> {
    prepare(out, cfg)?;
    let mc = &cfg.montecarlo;
    if mc.trials < 1000 {
        log::warn!("{} trials is too few for stable thresholds; use at least 1000", mc.trials);
    }
    let curve = probability_curve(&mc.scenario(), &mc.sigma_grid, mc.threshold, mc.trials, seed)?;
    let mut w = csv::Writer::from_writer(create(&out.join(CURVE_CSV))?);
    w.write_record(["sigma_d_lambda", "probability", "std_error"])?;
    for p in &curve {
        w.write_record([fmt_f64(p.sigma_d), fmt_f64(p.probability), fmt_f64(p.std_error)])?;
    }
    w.flush()?;
    let report = ThresholdReport {
        nodes: mc.nodes,
        threshold: mc.threshold,
        trials: mc.trials,
        seed,
        p90: threshold_crossing(&curve, 0.9),
        p80: threshold_crossing(&curve, 0.8),
        p70: threshold_crossing(&curve, 0.7),
    };
    write_json(&out.join(THRESHOLDS_JSON), &report)?;
    Ok(report)
}

/// Environment records for `run`: the trace file if one is set, else the
/// scripted program.
pub fn load_trace(cfg: &RunConfig, seed: u64) -> anyhow::Result<Vec<EnvironmentRecord>> {
    if let Some(path) = &cfg.run.trace {
        let file = File::open(path).with_context(|| format!("opening trace {}", path.display()))?;
        return read_trace_csv(file).with_context(|| format!("reading trace {}", path.display()));
    }
    if let Some(program) = &cfg.trace {
        return Ok(synthesize_trace(program, derive_seed(seed, &[TRACE_STREAM]))?);
    }
    bail!("no trace: pass --trace or add a [trace] program to the config")
}

pub fn write_trace(cfg: &RunConfig, seed: u64, out: &Path) -> anyhow::Result<PathBuf> {
    if cfg.trace.is_none() {
        bail!("config has no [trace] program");
    }
    prepare(out, cfg)?;
    let records = load_trace(&RunConfig { run: Default::default(), ..cfg.clone() }, seed)?;
    let path = out.join(TRACE_CSV);
    write_trace_csv(create(&path)?, &records)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub mode: Mode,
    pub seed: u64,
    pub duration_s: f64,
    pub gross_errors: usize,
    pub warnings: Vec<String>,
    pub summary: RunSummary,
}

pub fn run_scenario(cfg: &RunConfig, seed: u64, out: &Path) -> anyhow::Result<RunOutput> {
    cfg.validate()?;
    let trace = load_trace(cfg, seed)?;
    let covered = trace[trace.len() - 1].timestamp + cfg.scenario.record_cadence_s - trace[0].timestamp;
    let duration_s = cfg.run.duration_s.unwrap_or(covered);
    prepare(out, cfg)?;
    let mode = match cfg.run.mode {
        Mode::Fixed => RunMode::Fixed,
        Mode::Adaptive => RunMode::Adaptive,
    };
    let report = run(&cfg.scenario, &trace, duration_s, mode, seed)?;
    write_run_log_csv(create(&out.join(RUN_LOG_CSV))?, &report.intervals)?;
    let output = RunOutput {
        mode: cfg.run.mode,
        seed,
        duration_s,
        gross_errors: report.gross_errors,
        warnings: report.warnings,
        summary: RunSummary::from_logs(&report.intervals, &CoherenceThresholds::TWO_NODE)?,
    };
    write_json(&out.join(SUMMARY_JSON), &output)?;
    Ok(output)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneReport {
    pub k_u: f64,
    pub t_u_s: f64,
    pub k_p: f64,
    pub t_i_s: f64,
    /// Tone separation at which the bound meets the target, Hz.
    pub operating_point_hz: f64,
    pub post_snr: f64,
    pub error_unit_m: f64,
    pub output_unit_hz: f64,
}

/// Ultimate-gain search on the averaged-bound ranging plant.
pub fn tune(cfg: &RunConfig, seed: u64, out: &Path) -> anyhow::Result<TuneReport> {
    prepare(out, cfg)?;
    let sc = &cfg.scenario;
    let units = sc.controller.units;
    let chain = RangingChain::new(sc.waveform, sc.ranging)?;
    let post_snr = chain.post_processing_snr(cfg.tune.snr_db);
    let averaged = match sc.window.averaging {
        Averaging::Grouped { size } => size,
        Averaging::Plain => 1,
    };
    let groups = sc.window.size / averaged;
    let x_star = (2.0 * delta_f_for_sigma(sc.target_sigma_m, post_snr, averaged)?)
        .clamp(sc.controller.x_min, sc.controller.x_max);

    let mut plant = CrlbRangingPlant::new(post_snr, averaged, groups, units);
    plant.output_in_error_units = true;
    if cfg.tune.sampling_noise {
        plant = plant.with_sampling_noise(derive_seed(seed, &[PLANT_STREAM]));
    }
    let test = OscillationTest {
        setpoint: sc.target_sigma_m / units.error_unit_m,
        initial_input: 0.9 * x_star / units.output_unit_hz,
        bias: x_star / units.output_unit_hz,
        error_sign: ErrorSign::OutputMinusSetpoint,
        input_limits: Some((
            sc.controller.x_min / units.output_unit_hz,
            sc.controller.x_max / units.output_unit_hz,
        )),
        steps: cfg.tune.steps,
        dt: sc.interval_duration(),
        decay_tolerance: cfg.tune.decay_tolerance,
        period_jitter: cfg.tune.period_jitter,
        ..OscillationTest::default()
    };
    let (k_u, t_u) = find_ultimate_gain(&mut plant, &cfg.tune.k_grid, &test)
        .context("no sustained oscillation on the gain grid; extend --k-grid")?;
    let (k_p, t_i) = ziegler_nichols_gains(k_u, t_u)?;
    let report = TuneReport {
        k_u,
        t_u_s: t_u,
        k_p,
        t_i_s: t_i,
        operating_point_hz: x_star,
        post_snr,
        error_unit_m: units.error_unit_m,
        output_unit_hz: units.output_unit_hz,
    };
    write_json(&out.join(TUNE_JSON), &report)?;
    Ok(report)
}
