//! `kernels`, `certificate` and `simulate`.

use std::path::PathBuf;

use rdbs_core::kernels::{build_kernel_set, KernelSet, PlantParams};
use rdbs_core::pdesim::{
    fit_decay_rate, run, InitialCondition, Scheduler, SimConfig, TrajectoryLog,
};
use rdbs_core::spectral::{build_certificate, CertificateOptions, SamplingCertificate};
use rdbs_core::trigger::{dwell_stats, max_gap, TriggerDesign, TriggerParams};

use crate::config::{ExperimentConfig, Mode};
use crate::error::CliError;
use crate::output::{create, ensure_dir, write_kv, write_table};

/// Files written by a command plus a human-readable summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub fn plant(cfg: &ExperimentConfig) -> Result<PlantParams<f64>, CliError> {
    Ok(PlantParams::new(cfg.epsilon, cfg.lambda, cfg.q)?)
}

pub fn kernel_set(cfg: &ExperimentConfig) -> Result<KernelSet<f64>, CliError> {
    Ok(build_kernel_set(plant(cfg)?, cfg.intervals)?)
}

pub fn certificate_for(
    cfg: &ExperimentConfig,
    ks: &KernelSet<f64>,
) -> Result<SamplingCertificate<f64>, CliError> {
    Ok(build_certificate(
        ks,
        CertificateOptions {
            sigma: cfg.sigma,
            modes: cfg.modes,
        },
    )?)
}

pub fn trigger_params(
    cfg: &ExperimentConfig,
    ks: &KernelSet<f64>,
) -> Result<TriggerParams<f64>, CliError> {
    Ok(TriggerParams::synthesize(
        ks,
        TriggerDesign {
            eta: cfg.eta,
            gamma: cfg.gamma,
            vartheta: cfg.vartheta,
            m0: cfg.m0,
            b: cfg.b,
            kappas: [cfg.kappa1, cfg.kappa2, cfg.kappa3],
            betas: cfg.betas(),
        },
    )?)
}

fn kernel_rows(ks: &KernelSet<f64>) -> Vec<(String, f64)> {
    let n = &ks.norms;
    vec![
        ("norm_g_sq".into(), ks.norm_g_sq),
        ("l_tilde".into(), n.l_tilde),
        ("p_tilde".into(), n.p_tilde),
        ("q_tilde".into(), n.q_tilde),
        ("k_tilde".into(), n.k_tilde),
        ("px_sq_int".into(), n.px_sq_int),
        ("qx_sq_int".into(), n.qx_sq_int),
        ("r".into(), ks.r),
        ("p10".into(), ks.p10),
        ("norm_k".into(), ks.norm_k()),
        ("norm_p1".into(), ks.norm_p1()),
        ("k_at_one".into(), ks.k_gain.at_right()),
        ("k_prime_at_one".into(), ks.k_prime.at_right()),
    ]
}

fn certificate_rows(c: &SamplingCertificate<f64>) -> Vec<(String, f64)> {
    let mut rows = vec![
        ("sigma1".into(), c.sigma1),
        ("sigma2".into(), c.sigma2),
        ("sigma".into(), c.sigma),
        ("mu_tilde1".into(), c.bounds.mu_tilde1),
        ("mu_q1".into(), c.bounds.mu_q1),
        ("mu_r1".into(), c.bounds.mu_r1),
        ("M1".into(), c.m1),
        ("C1".into(), c.c1),
        ("C2".into(), c.c2),
        ("N".into(), c.modes as f64),
        ("tail".into(), c.tail),
        ("tail_parseval".into(), c.modal.tail_parseval),
        ("small_gain".into(), c.curves.small_gain()),
        ("S1".into(), c.curves.s1),
        ("S2".into(), c.curves.s2),
        ("gamma1_at_0".into(), c.curves.gamma1(0.0)),
        ("Tstar".into(), c.tstar),
        ("Omega1".into(), c.constants.omega1),
        ("Omega2".into(), c.constants.omega2),
        ("Xi".into(), c.constants.xi),
        ("M_of_Tstar".into(), c.constants.m_of_tstar),
    ];
    for (i, k) in c.modal.coeffs.iter().enumerate() {
        rows.push((format!("k_{}", i + 1), *k));
    }
    rows
}

fn trigger_rows(t: &TriggerParams<f64>) -> Vec<(String, f64)> {
    vec![
        ("eta".into(), t.eta),
        ("gamma".into(), t.gamma),
        ("vartheta".into(), t.vartheta),
        ("m0".into(), t.m0),
        ("rho".into(), t.rho),
        ("rho1".into(), t.rho1),
        ("alpha1".into(), t.alpha1),
        ("alpha2".into(), t.alpha2),
        ("alpha3".into(), t.alpha3),
        ("beta1".into(), t.beta1),
        ("beta2".into(), t.beta2),
        ("beta3".into(), t.beta3),
        ("B".into(), t.b),
        ("kappa1".into(), t.kappa1),
        ("kappa2".into(), t.kappa2),
        ("kappa3".into(), t.kappa3),
        ("A_min".into(), t.a_min),
        ("design_margin".into(), t.margin),
        ("design_feasible".into(), if t.feasible { 1.0 } else { 0.0 }),
    ]
}

/// `kernels.csv` (P, Q, K, L on the grid), `gains.csv` and `scalars.csv`.
pub fn kernels(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let ks = kernel_set(cfg)?;
    let dir = &cfg.out_dir;
    ensure_dir(dir)?;
    let n = ks.grid.nodes();
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            rows.push(vec![
                ks.grid.x(i),
                ks.grid.x(j),
                ks.p.get(i, j),
                ks.q.get(i, j),
                ks.k.get(i, j),
                ks.l.get(i, j),
            ]);
        }
    }
    let mut files = vec![write_table(
        &dir.join("kernels.csv"),
        &["x", "y", "P", "Q", "K", "L"],
        &rows,
    )?];
    let gains: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            vec![
                ks.grid.x(i),
                ks.k_gain[i],
                ks.k_prime[i],
                ks.k_second[i],
                ks.p1[i],
                ks.g[i],
            ]
        })
        .collect();
    files.push(write_table(
        &dir.join("gains.csv"),
        &["x", "k", "k_prime", "k_second", "p1", "g"],
        &gains,
    )?);
    let mut scalars = kernel_rows(&ks);
    let tc = rdbs_core::trigger::trigger_constants(&ks);
    scalars.extend([
        ("rho1".to_string(), tc.rho1),
        ("alpha1".to_string(), tc.alpha1),
        ("alpha2".to_string(), tc.alpha2),
        ("alpha3".to_string(), tc.alpha3),
    ]);
    files.push(write_kv(&dir.join("scalars.csv"), &scalars)?);
    let summary = format!(
        "||g||^2 = {:.6e}, Lt = {:.6}, Kt = {:.6}, k(1) = {:.6}",
        ks.norm_g_sq,
        ks.norms.l_tilde,
        ks.norms.k_tilde,
        ks.k_gain.at_right()
    );
    Ok(Outputs { files, summary })
}

/// `constants.csv` and `gamma.csv` (T, gamma1, gamma2 on a log grid).
pub fn certificate(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let ks = kernel_set(cfg)?;
    let cert = certificate_for(cfg, &ks)?;
    let dir = &cfg.out_dir;
    ensure_dir(dir)?;
    let mut rows = certificate_rows(&cert);
    rows.extend(kernel_rows(&ks));
    let mut files = vec![write_kv(&dir.join("constants.csv"), &rows)?];
    let hi = (cert.tstar * 10.0).min(1.0);
    let table: Vec<Vec<f64>> = cert
        .curves
        .table(cert.tstar * 1e-3, hi, 241)
        .into_iter()
        .map(|(t, a, b)| vec![t, a, b])
        .collect();
    files.push(write_table(
        &dir.join("gamma.csv"),
        &["T", "gamma1", "gamma2"],
        &table,
    )?);
    let summary = format!(
        "sigma = {:.6}, C1 = {:.6}, N = {}, 2 C1 Lt ||k-h|| = {:.6}, T* = {:.6e}",
        cert.sigma,
        cert.c1,
        cert.modes,
        cert.curves.small_gain(),
        cert.tstar
    );
    Ok(Outputs { files, summary })
}

/// Pass/fail record written to the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub outputs: Outputs,
    pub log: TrajectoryLog<f64>,
    pub checks: Vec<Check>,
}

pub fn sim_config(cfg: &ExperimentConfig) -> Result<SimConfig<f64>, CliError> {
    Ok(SimConfig {
        params: plant(cfg)?,
        intervals: cfg.intervals,
        dt: cfg.dt,
        horizon: cfg.horizon,
        u0: InitialCondition::Polynomial(cfg.u0.clone()),
        uhat0: InitialCondition::Polynomial(cfg.uhat0.clone()),
        snapshot_every: cfg.snapshot_every,
    })
}

/// Closed-loop run: `trajectory.csv`, `constants.csv`, `manifest.toml` and
/// optionally `snapshots.csv`.
pub fn simulate(cfg: &ExperimentConfig) -> Result<SimulateOutcome, CliError> {
    let ks = kernel_set(cfg)?;
    let cert = certificate_for(cfg, &ks)?;
    let tp = trigger_params(cfg, &ks)?;
    let diameter = cfg.period.unwrap_or(cert.tstar);
    let scheduler = match cfg.mode {
        Mode::Event => Scheduler::Event(tp),
        Mode::Periodic => Scheduler::Periodic { period: diameter },
        Mode::Jitter => Scheduler::Jitter {
            diameter,
            seed: cfg.seed,
        },
        Mode::OpenLoop => Scheduler::OpenLoop,
    };
    let sim = sim_config(cfg)?;
    let log = run(&sim, &ks, &scheduler)?;

    let dir = &cfg.out_dir;
    ensure_dir(dir)?;
    let traj = dir.join("trajectory.csv");
    log.write_csv(create(&traj)?)?;
    let mut files = vec![traj];
    if !log.snapshots.is_empty() {
        let p = dir.join("snapshots.csv");
        log.write_snapshots_csv(create(&p)?, ks.grid)?;
        files.push(p);
    }

    let checks = run_checks(cfg, &cert, &tp, &log, diameter);
    let mut derived = kernel_rows(&ks);
    derived.extend(certificate_rows(&cert));
    derived.extend(trigger_rows(&tp));
    derived.push(("effective_dt".into(), log.dt));
    derived.push(("event_count".into(), log.events.len() as f64));
    if let Ok(s) = dwell_stats(&log.events) {
        derived.push(("min_dwell".into(), s.min));
        derived.push(("mean_dwell".into(), s.mean));
    }
    if let Some(r) = fit_decay_rate(&log.times, &log.lyapunov_norm(), 0.0) {
        derived.push(("fitted_rate".into(), r));
    }
    files.push(write_kv(&dir.join("constants.csv"), &derived)?);
    let manifest = dir.join("manifest.toml");
    std::fs::write(&manifest, manifest_text(cfg, &derived, &checks))
        .map_err(|e| CliError::io(&manifest, e))?;
    files.push(manifest);

    let summary = format!(
        "mode {}: {} steps (dt {:.4e}), {} updates, ||u|| {:.4e} -> {:.4e}",
        cfg.mode,
        log.len(),
        log.dt,
        log.events.len(),
        log.norm_u[0],
        log.norm_u.last().copied().unwrap_or(f64::NAN)
    );
    Ok(SimulateOutcome {
        outputs: Outputs { files, summary },
        log,
        checks,
    })
}

fn run_checks(
    cfg: &ExperimentConfig,
    cert: &SamplingCertificate<f64>,
    tp: &TriggerParams<f64>,
    log: &TrajectoryLog<f64>,
    diameter: f64,
) -> Vec<Check> {
    let rate = fit_decay_rate(&log.times, &log.lyapunov_norm(), 0.0).unwrap_or(f64::NAN);
    let need = 0.5 * cert.sigma;
    let mut checks = Vec::new();
    match cfg.mode {
        Mode::Periodic | Mode::Jitter => {
            let gap = max_gap(&log.events);
            let within = gap <= cert.tstar * (1.0 + 1e-9);
            checks.push(Check {
                name: "certified_decay",
                passed: within && rate >= need,
                detail: format!(
                    "sampling diameter {gap:.6e} (requested {diameter:.6e}) {} T* = {:.6e}; fitted rate {rate:.6} vs sigma/2 = {need:.6}",
                    if within { "<=" } else { "exceeds" },
                    cert.tstar
                ),
            });
        }
        Mode::Event => {
            checks.push(Check {
                name: "decay",
                passed: rate >= need,
                detail: format!("fitted rate {rate:.6} vs sigma/2 = {need:.6}"),
            });
            checks.push(Check {
                name: "trigger_invariants",
                passed: log.violations == 0,
                detail: format!("{} violating steps", log.violations),
            });
            checks.push(Check {
                name: "design_feasible",
                passed: tp.feasible,
                detail: format!("margin {:.6e}", tp.margin),
            });
        }
        Mode::OpenLoop => {
            let (a, b) = (log.norm_u[0], *log.norm_u.last().unwrap_or(&f64::NAN));
            checks.push(Check {
                name: "open_loop_growth",
                passed: b > a,
                detail: format!("||u|| {a:.6e} -> {b:.6e}"),
            });
        }
    }
    checks
}

fn manifest_text(cfg: &ExperimentConfig, derived: &[(String, f64)], checks: &[Check]) -> String {
    let mut derived_tab = toml::Table::new();
    for (k, v) in derived {
        derived_tab.insert(k.clone(), toml::Value::Float(*v));
    }
    let mut checks_tab = toml::Table::new();
    for c in checks {
        let mut t = toml::Table::new();
        t.insert("passed".into(), toml::Value::Boolean(c.passed));
        t.insert("detail".into(), toml::Value::String(c.detail.clone()));
        checks_tab.insert(c.name.into(), toml::Value::Table(t));
    }
    let mut root = toml::Table::new();
    root.insert(
        "config".into(),
        toml::Value::try_from(cfg).unwrap_or(toml::Value::Table(Default::default())),
    );
    root.insert("derived".into(), toml::Value::Table(derived_tab));
    root.insert("checks".into(), toml::Value::Table(checks_tab));
    toml::to_string(&root).unwrap_or_default()
}
