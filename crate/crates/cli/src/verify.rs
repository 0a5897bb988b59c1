//! End-to-end invariant suite behind `rdbs verify`.

use std::fmt;

use rdbs_core::kernels::KernelSet;
use rdbs_core::pdesim::{run, Scheduler, SimConfig, TrajectoryLog};
use rdbs_core::specfun::{g1, g1_prime, g1_second, g1_series, MAX_ARGUMENT};
use rdbs_core::spectral::{build_certificate, sl_root, CertificateOptions, SlSpectrum};
use rdbs_core::trigger::{dwell_stats, TriggerDesign, TriggerParams};

use crate::output::num;

/// Deliberate corruption applied before the suite runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Flip the sign of the observer kernel `Q`.
    NegateQ,
    /// Flip the sign of the controller kernel `K`.
    NegateK,
}

impl Fault {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "negate-q" => Some(Self::NegateQ),
            "negate-k" => Some(Self::NegateK),
            _ => None,
        }
    }

    pub fn apply(self, ks: &mut KernelSet<f64>) {
        match self {
            Self::NegateQ => ks.q.negate(),
            Self::NegateK => ks.k.negate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub items: Vec<Item>,
}

impl Report {
    fn check(&mut self, name: &'static str, passed: bool, detail: String) {
        self.items.push(Item {
            name,
            passed,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn failures(&self) -> usize {
        self.items.iter().filter(|i| !i.passed).count()
    }

    pub fn item(&self, name: &str) -> Option<&Item> {
        self.items.iter().find(|i| i.name == name)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.items {
            let tag = if i.passed { "PASS" } else { "FAIL" };
            writeln!(f, "[{tag}] {}: {}", i.name, i.detail)?;
        }
        write!(f, "{} checks, {} failed", self.items.len(), self.failures())
    }
}

fn smooth(x: f64) -> f64 {
    (std::f64::consts::PI * x / 2.0).sin() * x + x * x * (1.0 - x)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Runs every check against `ks`, which is normally the reference plant on the
/// reference grid but may have been corrupted on purpose.
pub fn run_suite(ks: &KernelSet<f64>) -> Report {
    let mut r = Report::default();
    specfun_checks(&mut r);
    kernel_checks(&mut r, ks);
    spectral_checks(&mut r, ks);
    simulation_checks(&mut r, ks);
    r
}

fn specfun_checks(r: &mut Report) {
    // s g'' + 2 g' = g, relative to the size of the absolute series
    let mut worst = 0.0f64;
    for i in -40..=40 {
        let s = i as f64 * 2.5;
        let (g, gp, gpp) = (g1(s).unwrap(), g1_prime(s).unwrap(), g1_second(s).unwrap());
        let a = s.abs();
        let scale = a * g1_second(a).unwrap() + 2.0 * g1_prime(a).unwrap() + g1(a).unwrap();
        worst = worst.max((s * gpp + 2.0 * gp - g).abs() / scale);
    }
    r.check(
        "specfun.ode_identity",
        worst < 1e-12,
        format!("max relative residual {worst:.2e} on [-100, 100]"),
    );

    let mut trunc = 0.0f64;
    for s in [-100.0, -1.0, 0.5, 10.0, 100.0] {
        trunc = trunc.max(g1_series(s, 0).unwrap().truncation);
    }
    r.check(
        "specfun.truncation",
        trunc <= 1e-14,
        format!("worst truncation estimate {trunc:.2e}"),
    );

    let rejected = g1(2.0 * MAX_ARGUMENT).is_err();
    r.check(
        "specfun.domain",
        rejected,
        format!("argument {} rejected: {rejected}", 2.0 * MAX_ARGUMENT),
    );
}

fn kernel_checks(r: &mut Report, ks: &KernelSet<f64>) {
    let f = ks.grid.sample(smooth);
    let kl = max_abs_diff(
        &ks.controller_from_target(&ks.controller_to_target(f.values())),
        f.values(),
    );
    r.check(
        "kernels.controller_round_trip",
        kl < 1e-3,
        format!("max error {kl:.3e} (M = {})", ks.grid.intervals()),
    );
    let pq = max_abs_diff(
        &ks.observer_from_target(&ks.observer_to_target(f.values())),
        f.values(),
    );
    r.check(
        "kernels.observer_round_trip",
        pq < 1e-3,
        format!("max error {pq:.3e} (M = {})", ks.grid.intervals()),
    );
    let finite = [&ks.k_gain, &ks.k_prime, &ks.k_second, &ks.p1, &ks.g]
        .iter()
        .all(|g| g.values().iter().all(|v| v.is_finite()));
    r.check(
        "kernels.gains_finite",
        finite && ks.norm_g_sq.is_finite(),
        format!("||g||^2 = {:.6e}", ks.norm_g_sq),
    );
}

fn spectral_checks(r: &mut Report, ks: &KernelSet<f64>) {
    let mut residual = 0.0f64;
    let mut ordered = true;
    for theta in [0.1f64, 1.0, 5.1, 50.0] {
        for n in 1..=20 {
            let nu = sl_root(theta, n).unwrap();
            let lo = (2 * n - 1) as f64 * std::f64::consts::FRAC_PI_2;
            ordered &= nu > lo && nu < n as f64 * std::f64::consts::PI;
            residual = residual.max((nu / nu.tan() + theta).abs());
        }
    }
    r.check(
        "spectral.roots",
        residual < 1e-10 && ordered,
        format!("residual {residual:.2e}, bracketed {ordered}"),
    );

    let p = ks.params;
    let sp = SlSpectrum::new(p.q, p.lambda, p.epsilon, 9).unwrap();
    let phis: Vec<_> = (1..=9).map(|n| sp.sample(n, ks.grid)).collect();
    let mut ortho = 0.0f64;
    for (i, a) in phis.iter().enumerate() {
        for (j, b) in phis.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            ortho = ortho.max((a.inner(b) - target).abs());
        }
    }
    r.check(
        "spectral.orthonormal",
        ortho < 1e-3,
        format!("max |<phi_i, phi_j> - delta_ij| = {ortho:.2e}"),
    );

    match build_certificate(
        ks,
        CertificateOptions {
            sigma: Some(0.0266),
            modes: Some(9),
        },
    ) {
        Ok(c) => {
            let (g1_0, g2_0) = c.curves.gammas(0.0);
            let inside = (1..=50).all(|i| {
                let (a, b) = c.curves.gammas(c.tstar * i as f64 / 51.0);
                a > 0.0 && b > 0.0
            });
            let (a, b) = c.curves.gammas(c.tstar * 1.001);
            r.check(
                "spectral.certificate",
                g1_0 > 0.0 && g2_0 == 1.0 && inside && (a <= 0.0 || b <= 0.0),
                format!(
                    "gamma1(0) = {g1_0:.4}, gamma2(0) = {g2_0}, T* = {:.6e}, small gain {:.4}",
                    c.tstar,
                    c.curves.small_gain()
                ),
            );
        }
        Err(e) => r.check("spectral.certificate", false, e.to_string()),
    }
}

fn event_run(
    ks: &KernelSet<f64>,
    cfg: &SimConfig<f64>,
) -> Option<(TriggerParams<f64>, TrajectoryLog<f64>)> {
    let tp = TriggerParams::synthesize(ks, TriggerDesign::reference()).ok()?;
    let log = run(cfg, ks, &Scheduler::Event(tp)).ok()?;
    Some((tp, log))
}

fn simulation_checks(r: &mut Report, ks: &KernelSet<f64>) {
    let cfg = SimConfig {
        params: ks.params,
        intervals: ks.grid.intervals(),
        ..SimConfig::reference()
    };
    let Some((tp, log)) = event_run(ks, &cfg) else {
        r.check("trigger.invariants", false, "event-mode run failed".into());
        return;
    };

    let bad = log
        .m
        .iter()
        .zip(&log.d)
        .filter(|(&m, &d)| !(m < 0.0 && d * d <= -tp.gamma * m))
        .count();
    r.check(
        "trigger.invariants",
        bad == 0 && log.violations == 0,
        format!(
            "{bad} steps with m >= 0 or d^2 > -gamma m over {} steps",
            log.len()
        ),
    );

    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let dwell = dwell_stats(&log.events).ok();
    let min_dwell = dwell.as_ref().map_or(f64::INFINITY, |s| s.min);
    r.check(
        "trigger.dwell",
        log.events.len() < steps && min_dwell >= cfg.dt * (1.0 - 1e-9),
        format!("{} events, min dwell {min_dwell:.4e}", log.events.len()),
    );

    let mut scaled = cfg.clone();
    scaled.u0 = cfg.u0.scaled(10.0);
    scaled.uhat0 = cfg.uhat0.scaled(10.0);
    match event_run(ks, &scaled).and_then(|(_, l)| dwell_stats(&l.events).ok()) {
        Some(s) => {
            let shift = ((s.min - min_dwell) / cfg.dt).abs().round();
            r.check(
                "trigger.dwell_scaling",
                shift <= 1.0,
                format!(
                    "min dwell {min_dwell:.4e} vs {:.4e} with data x10 ({shift} steps)",
                    s.min
                ),
            );
        }
        None => r.check("trigger.dwell_scaling", false, "scaled run failed".into()),
    }

    let (u0, u1) = (log.norm_u[0], *log.norm_u.last().unwrap());
    let (e0, e1) = (log.norm_utilde[0], *log.norm_utilde.last().unwrap());
    r.check(
        "pdesim.decay",
        u1 < 0.05 * u0 && e1 < 0.05 * e0,
        format!("||u|| {u0:.4e} -> {u1:.4e}, ||u~|| {e0:.4e} -> {e1:.4e}"),
    );

    let again = event_run(ks, &cfg).map(|(_, l)| l);
    r.check(
        "pdesim.determinism",
        again.as_ref() == Some(&log),
        "repeat run bitwise identical".into(),
    );

    r.check(
        "csv.trajectory_round_trip",
        trajectory_round_trip(&log),
        format!("{} rows", log.len()),
    );
    let kv: Vec<(String, f64)> = vec![
        ("a".into(), std::f64::consts::PI),
        ("b".into(), -1.0e-300),
        ("c".into(), ks.norm_g_sq),
    ];
    r.check(
        "csv.key_value_round_trip",
        kv_round_trip(&kv),
        format!("{} keys", kv.len()),
    );

    let open = run(&cfg, ks, &Scheduler::OpenLoop);
    match open {
        Ok(l) => {
            let (a, b) = (l.norm_u[0], *l.norm_u.last().unwrap());
            r.check(
                "pdesim.open_loop",
                b > a,
                format!("||u|| {a:.4e} -> {b:.4e} without control"),
            );
        }
        Err(e) => r.check("pdesim.open_loop", false, e.to_string()),
    }
}

fn trajectory_round_trip(log: &TrajectoryLog<f64>) -> bool {
    let mut buf = Vec::new();
    if log.write_csv(&mut buf).is_err() {
        return false;
    }
    let Ok(back) = TrajectoryLog::read_csv(buf.as_slice()) else {
        return false;
    };
    back.times == log.times
        && back.norm_u == log.norm_u
        && back.norm_uhat == log.norm_uhat
        && back.norm_utilde == log.norm_utilde
        && back.norm_utilde_x == log.norm_utilde_x
        && back.input == log.input
        && back.d == log.d
        && back.m == log.m
        && back.event == log.event
        && back.norm_what == log.norm_what
        && back.norm_wtilde == log.norm_wtilde
}

fn kv_round_trip(rows: &[(String, f64)]) -> bool {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (k, v) in rows {
        if w.write_record([k.as_str(), &num(*v)]).is_err() {
            return false;
        }
    }
    let Ok(bytes) = w.into_inner() else {
        return false;
    };
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(bytes.as_slice());
    let back: Vec<(String, f64)> = rd
        .records()
        .filter_map(|r| r.ok())
        .filter_map(|r| Some((r[0].to_string(), r[1].parse().ok()?)))
        .collect();
    back == rows
}
