//! TOML run configuration.
//!
//! Every section is optional and every field defaults to the values used
//! in the desk-scale experiments. Unknown keys are rejected with the line
//! and column of the offending key.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cohsync::coherence::{ArrayScenario, ChannelGains, ClockPhaseModel};
use cohsync::scenario::{ScenarioConfig, TraceProgram};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "COHSYNC_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub scenario: ScenarioConfig,
    pub run: RunSection,
    /// Scripted environment used when no trace file is given.
    pub trace: Option<TraceProgram>,
    pub crlb: CrlbSection,
    pub montecarlo: MonteCarloSection,
    pub tune: TuneSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fixed,
    #[default]
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Trace CSV; relative paths resolve against the config file.
    pub trace: Option<PathBuf>,
    /// Simulated seconds; the whole trace when absent.
    pub duration_s: Option<f64>,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrlbSection {
    /// Half the tone separation, Hz.
    pub delta_f: f64,
    /// `2E/N0` grid in dB.
    pub snr_grid_db: Vec<f64>,
}

impl Default for CrlbSection {
    fn default() -> Self {
        Self {
            delta_f: 3.75e6,
            snr_grid_db: (0..=16).map(|i| 5.0 * i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloSection {
    pub nodes: usize,
    /// Coherent-gain level `X` in `P(G_c ≥ X)`.
    pub threshold: f64,
    pub trials: usize,
    /// Ranging standard deviations, in wavelengths.
    pub sigma_grid: Vec<f64>,
    pub theta_range: (f64, f64),
    /// In wavelengths.
    pub node_spacing_range: (f64, f64),
    /// In wavelengths.
    pub sync_distance_range: (f64, f64),
    pub calib_error: f64,
    pub clock_phase: ClockPhaseModel,
    pub channel: ChannelGains,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        let s = ArrayScenario::with_wavelength(2, 1.0, 0.0);
        Self {
            nodes: 2,
            threshold: 0.9,
            trials: 10_000,
            sigma_grid: (0..=60).map(|i| 0.0025 * i as f64).collect(),
            theta_range: s.theta_range,
            node_spacing_range: s.node_spacing_range,
            sync_distance_range: s.sync_distance_range,
            calib_error: s.calib_error,
            clock_phase: s.clock_phase,
            channel: s.channel,
        }
    }
}

impl MonteCarloSection {
    /// Scenario with unit wavelength, so `sigma_d` is in wavelengths.
    pub fn scenario(&self) -> ArrayScenario {
        ArrayScenario {
            n_nodes: self.nodes,
            wavelength: 1.0,
            sigma_d: 0.0,
            theta_range: self.theta_range,
            node_spacing_range: self.node_spacing_range,
            sync_distance_range: self.sync_distance_range,
            calib_error: self.calib_error,
            clock_phase: self.clock_phase,
            channel: self.channel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneSection {
    /// Proportional gains tried, MHz per µm with the default units.
    pub k_grid: Vec<f64>,
    /// Per-sample receive SNR of the operating point, dB.
    pub snr_db: f64,
    /// Closed-loop steps per gain.
    pub steps: usize,
    /// Scatter the plant output like a windowed std estimate.
    pub sampling_noise: bool,
    pub decay_tolerance: f64,
    pub period_jitter: f64,
}

impl Default for TuneSection {
    fn default() -> Self {
        Self {
            k_grid: (0..=400).map(|i| 1e-7 * 10f64.powf(i as f64 / 100.0)).collect(),
            snr_db: 22.5,
            steps: 300,
            sampling_noise: false,
            decay_tolerance: 0.05,
            period_jitter: 0.25,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| anyhow::anyhow!("{origin}: {e}"))?;
        Ok(cfg)
    }

    /// Reads `path`; relative trace paths are rebased onto its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        if let Some(trace) = cfg.run.trace.as_mut() {
            if trace.is_relative() {
                if let Some(dir) = path.parent() {
                    *trace = dir.join(&*trace);
                }
            }
        }
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> anyhow::Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        toml::to_string(self).context("serializing resolved config")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.scenario.validate().context("[scenario]")?;
        if self.crlb.snr_grid_db.is_empty() {
            bail!("[crlb] snr_grid_db is empty");
        }
        if !(self.crlb.delta_f > 0.0) {
            bail!("[crlb] delta_f must be positive");
        }
        let mc = &self.montecarlo;
        mc.scenario().validate().context("[montecarlo]")?;
        if mc.sigma_grid.is_empty() || mc.trials == 0 {
            bail!("[montecarlo] needs a non-empty sigma_grid and at least one trial");
        }
        if self.tune.k_grid.is_empty() {
            bail!("[tune] k_grid is empty");
        }
        Ok(())
    }
}

/// Seed precedence: flag, then config, then `COHSYNC_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> anyhow::Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(_) => Ok(0),
    }
}

/// Parses `a,b,c`, `start:stop:step` (inclusive), or
/// `geom:start:stop:count`.
pub fn parse_grid(spec: &str) -> anyhow::Result<Vec<f64>> {
    let spec = spec.trim();
    let num = |s: &str| -> anyhow::Result<f64> {
        let v: f64 = s.trim().parse().with_context(|| format!("bad number {s:?} in grid {spec:?}"))?;
        if !v.is_finite() {
            bail!("non-finite value in grid {spec:?}");
        }
        Ok(v)
    };
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        ["geom", a, b, n] => {
            let (a, b) = (num(a)?, num(b)?);
            let n: usize = n.trim().parse().with_context(|| format!("bad count in {spec:?}"))?;
            if !(a > 0.0 && b > a && n >= 2) {
                bail!("geometric grid {spec:?} needs 0 < start < stop and count >= 2");
            }
            let r = (b / a).powf(1.0 / (n - 1) as f64);
            (0..n).map(|i| a * r.powi(i as i32)).collect()
        }
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0 && b >= a) {
                bail!("range grid {spec:?} needs start <= stop and a positive step");
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| a + step * i as f64).collect()
        }
        [list] => list.split(',').map(num).collect::<anyhow::Result<Vec<_>>>()?,
        _ => bail!("unrecognised grid {spec:?}"),
    };
    if grid.is_empty() {
        bail!("grid {spec:?} is empty");
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1,2.5, 3").unwrap(), vec![1.0, 2.5, 3.0]);
        assert_eq!(parse_grid("0:1:0.5").unwrap(), vec![0.0, 0.5, 1.0]);
        let g = parse_grid("geom:1:100:3").unwrap();
        assert!((g[1] - 10.0).abs() < 1e-12 && (g[2] - 100.0).abs() < 1e-9);
        for bad in ["", "1,x", "1:0:1", "0:1:0", "geom:0:1:3", "a:b:c:d:e", "nan"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let err = RunConfig::parse("seed = 1\n\n[scenario]\nwindow_size = 3\n", "x.toml")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 4"), "{err}");
        assert!(err.contains("window_size"), "{err}");
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::parse(&text, "resolved").unwrap(), cfg);
        cfg.validate().unwrap();
    }
}
