use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cohsync::scenario::read_run_log_csv;
use cohsync_cli::config::RunConfig;

fn cohsync(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cohsync"));
    cmd.args(args).env_remove("COHSYNC_SEED").env("RUST_LOG", "warn");
    if let Some(s) = env_seed {
        cmd.env("COHSYNC_SEED", s);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_RUN: &str = r#"
[scenario.window]
size = 20

[run]
mode = "fixed"
duration_s = 8.4

[trace]
segments = [{ start_s = 0.0, end_s = 120.0, snr = { kind = "constant", snr_db = 25.0 } }]
"#;

#[test]
fn crlb_writes_the_bound_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    ok(&cohsync(&["crlb", "--out", s(&out), "--delta-f", "3.75e6", "--snr-grid", "40:80:20"], None));
    let text = fs::read_to_string(out.join("crlb.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "post_snr_db,post_snr,sigma_t_s,sigma_r_m");
    assert_eq!(lines.len(), 4);
    let sigma: f64 = lines[1].split(',').nth(3).unwrap().parse().unwrap();
    assert!((sigma - 6.361_793_545_649e-2).abs() < 1e-12);
    // the resolved config carries the flag values
    let cfg = RunConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(cfg.crlb.snr_grid_db, vec![40.0, 60.0, 80.0]);
}

#[test]
fn bad_grid_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = cohsync(&["crlb", "--out", s(dir.path()), "--snr-grid", "80:40:5"], None);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("80:40:5"));
}

#[test]
fn unknown_config_keys_are_reported_by_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 3\n\n[montecarlo]\nnodes = 2\ntrails = 100\n").unwrap();
    let out = cohsync(&["montecarlo", "--config", s(&cfg), "--out", s(&dir.path().join("o"))], None);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5") && err.contains("trails"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn montecarlo_seed_precedence_and_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mc.toml");
    fs::write(&cfg, "seed = 7\n[montecarlo]\ntrials = 200\nsigma_grid = [0.0, 0.05, 0.1]\n").unwrap();
    let run = |name: &str, extra: &[&str], env: Option<&str>| {
        let out = dir.path().join(name);
        let mut args = vec!["montecarlo", "--config", s(&cfg), "--out", s(&out)];
        args.extend_from_slice(extra);
        let o = cohsync(&args, env);
        ok(&o);
        (fs::read(out.join("curve.csv")).unwrap(), RunConfig::load(&out.join("config.toml")).unwrap(), o)
    };
    let (a, cfg_a, o) = run("a", &[], Some("99"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("too few"));
    assert_eq!(cfg_a.seed, Some(7), "config beats the environment");
    let (b, cfg_b, _) = run("b", &["--seed", "8"], Some("99"));
    assert_eq!(cfg_b.seed, Some(8), "flag beats the config");
    let (c, _, _) = run("c", &["--seed", "7"], None);
    assert_eq!(a, c);
    assert_ne!(a, b);

    // no seed anywhere but the environment
    let bare = dir.path().join("bare.toml");
    fs::write(&bare, "[montecarlo]\ntrials = 50\nsigma_grid = [0.0]\n").unwrap();
    let out = dir.path().join("env");
    ok(&cohsync(&["montecarlo", "--config", s(&bare), "--out", s(&out)], Some("1234")));
    assert_eq!(RunConfig::load(&out.join("config.toml")).unwrap().seed, Some(1234));
    let bad = cohsync(&["montecarlo", "--config", s(&bare), "--out", s(&out)], Some("x"));
    assert!(!bad.status.success());
}

#[test]
fn run_writes_log_summary_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, SMALL_RUN).unwrap();
    let out = dir.path().join("r");
    ok(&cohsync(&["run", "--config", s(&cfg), "--out", s(&out), "--seed", "5"], None));
    let logs = read_run_log_csv(fs::File::open(out.join("run_log.csv")).unwrap()).unwrap();
    assert_eq!(logs.len(), 4);
    assert!(logs.iter().all(|l| l.f2 == 7.52e6));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["mode"], "fixed");
    assert_eq!(summary["summary"]["intervals"], 4);
    assert!(summary["summary"]["max_coherent_frequency"]["p90_hz"].as_f64().unwrap() > 0.0);

    // --adaptive overrides the config, and the resolved config says so
    let out2 = dir.path().join("r2");
    ok(&cohsync(&["run", "--config", s(&cfg), "--out", s(&out2), "--seed", "5", "--adaptive"], None));
    let resolved = RunConfig::load(&out2.join("config.toml")).unwrap();
    assert_eq!(resolved.run.mode, cohsync_cli::config::Mode::Adaptive);

    // rerunning from the resolved config reproduces the log
    let out3 = dir.path().join("r3");
    ok(&cohsync(&["run", "--config", s(&out.join("config.toml")), "--out", s(&out3)], None));
    assert_eq!(fs::read(out.join("run_log.csv")).unwrap(), fs::read(out3.join("run_log.csv")).unwrap());
}

#[test]
fn run_against_a_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    fs::write(&trace, "timestamp_s,snr_db,wind_mps,humidity_pct,rain_mmhr,temp_c\n0,25,3,40,,12\n60,24,,,,\n").unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[scenario.window]\nsize = 20\n").unwrap();
    let out = dir.path().join("r");
    ok(&cohsync(&["run", "--config", s(&cfg), "--trace", s(&trace), "--fixed", "--out", s(&out)], None));
    let logs = read_run_log_csv(fs::File::open(out.join("run_log.csv")).unwrap()).unwrap();
    // 120 s of coverage in 2.1 s intervals
    assert_eq!(logs.len(), 57);

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "timestamp_s,snr_db\n").unwrap();
    let o = cohsync(&["run", "--config", s(&cfg), "--trace", s(&empty), "--out", s(&dir.path().join("e"))], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"));

    let o = cohsync(&["run", "--out", s(&dir.path().join("n"))], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no trace"));
}

#[test]
fn trace_command_renders_the_program() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, SMALL_RUN).unwrap();
    let out = dir.path().join("t");
    ok(&cohsync(&["trace", "--config", s(&cfg), "--out", s(&out)], None));
    let text = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(text, "timestamp_s,snr_db,wind_mps,humidity_pct,rain_mmhr,temp_c\n0,25,,,,\n60,25,,,,\n");
}

#[test]
fn tune_reports_zn_gains() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("z");
    ok(&cohsync(&["tune", "--out", s(&out), "--k-grid", "geom:1e-6:1e-2:801"], None));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("tune.json")).unwrap()).unwrap();
    let (k_u, t_u) = (r["k_u"].as_f64().unwrap(), r["t_u_s"].as_f64().unwrap());
    // σ ∝ 1/x around the operating point: K_u = x*/σ* in MHz per µm.
    // The 10% starting offset sees the curvature, so allow a couple of
    // grid steps above the linearised value.
    let analytic = r["operating_point_hz"].as_f64().unwrap() / 1e6 / 1e4;
    assert!(k_u >= analytic * 0.999 && k_u < analytic * 1.03, "{k_u} vs {analytic}");
    assert!((t_u - 42.0).abs() < 1.0);
    assert!((r["k_p"].as_f64().unwrap() - 0.45 * k_u).abs() < 1e-15);
    assert!((r["t_i_s"].as_f64().unwrap() - 0.833 * t_u).abs() < 1e-9);

    let o = cohsync(&["tune", "--out", s(&dir.path().join("n")), "--k-grid", "1e-9,2e-9"], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no sustained oscillation"));
}
