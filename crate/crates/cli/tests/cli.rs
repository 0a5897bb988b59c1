use std::path::Path;
use std::process::{Command, Output};

use rdbs_cli::commands::{self, kernel_set};
use rdbs_cli::config::{ExperimentConfig, Mode, RawConfig};
use rdbs_cli::output::{lookup, read_kv, read_table};
use rdbs_cli::verify::{run_suite, Fault};
use rdbs_core::pdesim::TrajectoryLog;

fn rdbs(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdbs"))
        .args(args)
        .current_dir(dir)
        .env_remove("RD_OUT_DIR")
        .output()
        .unwrap()
}

fn preset_in(name: &str, dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        out_dir: dir.to_path_buf(),
        ..ExperimentConfig::preset(name).unwrap()
    }
}

#[test]
fn event_preset_values() {
    let c = ExperimentConfig::preset("paper-event-eta1").unwrap();
    assert_eq!((c.eta, c.gamma, c.vartheta, c.m0), (1.0, 1e5, 0.1, -0.5));
    assert_eq!((c.epsilon, c.lambda, c.q), (1.0, 10.0, 5.1));
    assert_eq!(c.mode, Mode::Event);
}

#[test]
fn q_below_threshold_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[plant]\nq = 4.9\n").unwrap();
    let out = rdbs(&["simulate", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("q > lambda/(2 eps)"), "{err}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("typo.toml"), "[trigger]\netaa = 3.0\n").unwrap();
    let out = rdbs(&["kernels", "--config", "typo.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("etaa"));
}

#[test]
fn empty_config_gives_defaults_and_echoes_them() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.toml"), "").unwrap();
    let raw = RawConfig::from_file(&dir.path().join("empty.toml")).unwrap();
    let c = ExperimentConfig::resolve(Some(&raw), &RawConfig::default()).unwrap();
    assert_eq!(c, ExperimentConfig::default());

    let out = rdbs(
        &["certificate", "--config", "empty.toml", "--out-dir", "o"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("# q = 5.1"), "{text}");
    assert!(text.contains("# intervals = 161"), "{text}");
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rdbs"))
        .args(["certificate", "--intervals", "32"])
        .current_dir(dir.path())
        .env("RD_OUT_DIR", "from_env")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("from_env/constants.csv").exists());
}

#[test]
fn kernel_csvs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset_in("paper-certificate", dir.path());
    cfg.intervals = 40;
    commands::kernels(&cfg).unwrap();
    let ks = kernel_set(&cfg).unwrap();

    let (header, rows) = read_table(&dir.path().join("kernels.csv")).unwrap();
    assert_eq!(header, ["x", "y", "P", "Q", "K", "L"]);
    assert_eq!(rows.len(), 41 * 41);
    for (n, row) in rows.iter().enumerate() {
        let (i, j) = (n / 41, n % 41);
        assert_eq!(row[2], ks.p.get(i, j));
        assert_eq!(row[3], ks.q.get(i, j));
        assert_eq!(row[4], ks.k.get(i, j));
        assert_eq!(row[5], ks.l.get(i, j));
    }

    let (_, gains) = read_table(&dir.path().join("gains.csv")).unwrap();
    let g: Vec<f64> = gains.iter().map(|r| r[5]).collect();
    assert_eq!(g, ks.g.values());

    let scalars = read_kv(&dir.path().join("scalars.csv")).unwrap();
    assert_eq!(lookup(&scalars, "norm_g_sq"), Some(ks.norm_g_sq));
}

#[test]
fn trajectory_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset_in("paper-event-eta1", dir.path());
    cfg.horizon = 0.2;
    let run = commands::simulate(&cfg).unwrap();
    let back =
        TrajectoryLog::read_csv(std::fs::File::open(dir.path().join("trajectory.csv")).unwrap())
            .unwrap();
    assert_eq!(back.times, run.log.times);
    assert_eq!(back.norm_u, run.log.norm_u);
    assert_eq!(back.m, run.log.m);
    assert_eq!(back.d, run.log.d);
    assert_eq!(back.event, run.log.event);
    assert_eq!(back.events, run.log.events);
}

#[test]
fn certificate_constants_file() {
    let dir = tempfile::tempdir().unwrap();
    commands::certificate(&preset_in("paper-certificate", dir.path())).unwrap();
    let kv = read_kv(&dir.path().join("constants.csv")).unwrap();
    let c1 = lookup(&kv, "C1").unwrap();
    let tstar = lookup(&kv, "Tstar").unwrap();
    assert!((c1 - 0.5302).abs() <= 1e-3, "C1 = {c1}");
    assert!((tstar - 8e-4).abs() <= 0.2 * 8e-4, "T* = {tstar}");

    let (header, rows) = read_table(&dir.path().join("gamma.csv")).unwrap();
    assert_eq!(header, ["T", "gamma1", "gamma2"]);
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));
}

#[test]
fn sampling_far_beyond_certificate_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset_in("paper-sampled", dir.path());
    let ks = kernel_set(&cfg).unwrap();
    let tstar = commands::certificate_for(&cfg, &ks).unwrap().tstar;
    cfg.period = Some(60.0 * tstar);
    let run = commands::simulate(&cfg).unwrap();
    let check = run
        .checks
        .iter()
        .find(|c| c.name == "certified_decay")
        .unwrap();
    assert!(!check.passed, "{}", check.detail);

    let manifest: toml::Table = std::fs::read_to_string(dir.path().join("manifest.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(
        manifest["checks"]["certified_decay"]["passed"].as_bool(),
        Some(false)
    );
    let c1 = manifest["derived"]["C1"].as_float().unwrap();
    assert_eq!(c1, commands::certificate_for(&cfg, &ks).unwrap().c1);
}

#[test]
fn larger_eta_gives_more_events() {
    let dir = tempfile::tempdir().unwrap();
    let slow = commands::simulate(&preset_in("paper-event-eta1", &dir.path().join("a"))).unwrap();
    let fast = commands::simulate(&preset_in("paper-event-eta100", &dir.path().join("b"))).unwrap();
    assert!(
        fast.log.events.len() > slow.log.events.len(),
        "{} vs {}",
        fast.log.events.len(),
        slow.log.events.len()
    );
}

#[test]
fn verify_is_deterministic() {
    let ks = kernel_set(&ExperimentConfig::preset("paper-event-eta1").unwrap()).unwrap();
    let a = run_suite(&ks).to_string();
    let b = run_suite(&ks).to_string();
    assert_eq!(a, b);
}

#[test]
fn negated_observer_kernel_breaks_round_trip() {
    let mut ks = kernel_set(&ExperimentConfig::preset("paper-event-eta1").unwrap()).unwrap();
    assert!(
        run_suite(&ks)
            .item("kernels.observer_round_trip")
            .unwrap()
            .passed
    );
    Fault::NegateQ.apply(&mut ks);
    let report = run_suite(&ks);
    assert!(!report.item("kernels.observer_round_trip").unwrap().passed);
    assert!(!report.passed());
}

#[test]
fn verify_exit_code_matches_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = rdbs(&["verify"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    let failed = text.lines().any(|l| l.starts_with("[FAIL]"));
    assert_eq!(
        out.status.code(),
        Some(if failed { 3 } else { 0 }),
        "{text}"
    );
}
