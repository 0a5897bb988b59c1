//! Implicit-Euler simulation of the coupled plant and observer under a
//! sample-and-hold input.
//!
//! Plant `u_t = eps u_xx + lambda u`, `u(0) = 0`, `u_x(1) + q u(1) = U`.
//! Observer `u^_t = eps u^_xx + lambda u^ + p1(x) (u(1) - u^(1))`,
//! `u^(0) = 0`, `u^_x(1) + q u^(1) = U + p10 (u(1) - u^(1))`.
//!
//! Both are discretized with second-order central differences on the
//! interior nodes `1..=M`; the Robin condition is folded into row `M`
//! through a ghost node.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::kernels::{KernelSet, PlantParams};
use crate::linalg::{Lu, Matrix};
use crate::scalar::{c, Real};
use crate::trigger::{TargetNorms, TriggerParams, TriggerRuntime};

const COMPAT_TOL: f64 = 1e-12;

/// Jittered gaps are drawn on at least this many levels per diameter.
pub const JITTER_LEVELS: usize = 4;

/// Initial profile on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition<T> {
    /// Ascending coefficients `c0 + c1 x + c2 x^2 + ...`.
    Polynomial(Vec<T>),
    /// Values on the simulation grid, `x = 0` included.
    Tabulated(Vec<T>),
}

impl<T: Real> InitialCondition<T> {
    /// `10 x^2 (x - 1)^2`.
    pub fn reference_plant() -> Self {
        Self::Polynomial(
            [0.0, 0.0, 10.0, -20.0, 10.0]
                .iter()
                .map(|&v| c(v))
                .collect(),
        )
    }

    /// `15 x^2 (x - 1)^2 + 15 x^3 (x - 1)^3`.
    pub fn reference_observer() -> Self {
        Self::Polynomial(
            [0.0, 0.0, 15.0, -45.0, 60.0, -45.0, 15.0]
                .iter()
                .map(|&v| c(v))
                .collect(),
        )
    }

    pub fn scaled(&self, k: T) -> Self {
        match self {
            Self::Polynomial(v) => Self::Polynomial(v.iter().map(|&a| a * k).collect()),
            Self::Tabulated(v) => Self::Tabulated(v.iter().map(|&a| a * k).collect()),
        }
    }

    /// Samples on `grid` and checks `f(0) = 0`.
    pub fn sample(&self, grid: Grid, which: &'static str) -> Result<GridFunction<T>> {
        let f = match self {
            Self::Polynomial(coef) => {
                grid.sample(|x| coef.iter().rev().fold(T::zero(), |acc, &a| acc * x + a))
            }
            Self::Tabulated(v) => GridFunction::from_values(grid, v.clone())?,
        };
        if f[0].abs() > c::<T>(COMPAT_TOL) {
            return Err(Error::Compatibility {
                which,
                value: f[0].to_f64_lossy(),
            });
        }
        Ok(f)
    }
}

/// Simulation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub params: PlantParams<T>,
    pub intervals: usize,
    pub dt: T,
    pub horizon: T,
    pub u0: InitialCondition<T>,
    pub uhat0: InitialCondition<T>,
    /// Store `(u, u^)` every this many steps.
    pub snapshot_every: Option<usize>,
}

impl<T: Real> SimConfig<T> {
    /// `eps = 1, lambda = 10, q = 5.1`, `M = 161`, `dt = 1e-3`, horizon 1 s.
    pub fn reference() -> Self {
        Self {
            params: PlantParams::reference(),
            intervals: crate::grid::DEFAULT_INTERVALS,
            dt: c(1e-3),
            horizon: T::one(),
            u0: InitialCondition::reference_plant(),
            uhat0: InitialCondition::reference_observer(),
            snapshot_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals < 16 {
            return Err(Error::InvalidParameter {
                name: "M",
                value: self.intervals as f64,
                reason: "need at least 16 intervals",
            });
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: self.dt.to_f64_lossy(),
                reason: "must be positive",
            });
        }
        if !(self.horizon >= self.dt) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter {
                name: "horizon",
                value: self.horizon.to_f64_lossy(),
                reason: "must be at least one time step",
            });
        }
        Ok(())
    }
}

/// Factored implicit-Euler operator `(I - dt A) X_next = X + dt b U`.
#[derive(Debug, Clone)]
pub struct CoupledSystem<T> {
    m: usize,
    dt: T,
    a: Matrix<T>,
    b: Vec<T>,
    lu: Lu<T>,
}

impl<T: Real> CoupledSystem<T> {
    /// Builds and factors the operator for `kset`'s grid and gains.
    pub fn assemble(kset: &KernelSet<T>, dt: T) -> Result<Self> {
        let p = &kset.params;
        let m = kset.grid.intervals();
        let n = 2 * m;
        let h = kset.grid.step::<T>();
        let (eps, lam, q) = (p.epsilon, p.lambda, p.q);
        let p10 = p.p10();
        let two = T::two();
        let diff = eps / (h * h);

        let mut a = Matrix::zeros(n);
        let mut b = vec![T::zero(); n];
        // plant rows 0..m, observer rows m..2m; row index r <-> node r + 1
        for block in 0..2 {
            let o = block * m;
            for r in 0..m {
                let row = o + r;
                if r + 1 < m {
                    a[(row, row)] = -two * diff + lam;
                    a[(row, row + 1)] = diff;
                    if r > 0 {
                        a[(row, row - 1)] = diff;
                    }
                } else {
                    a[(row, row)] = -two * diff * (T::one() + h * q) + lam;
                    a[(row, row - 1)] = two * diff;
                    b[row] = two * eps / h;
                }
            }
        }
        let (u_m, uh_m) = (m - 1, n - 1);
        let boundary = two * eps * p10 / h;
        a[(uh_m, uh_m)] = a[(uh_m, uh_m)] - boundary;
        a[(uh_m, u_m)] = a[(uh_m, u_m)] + boundary;
        for r in 0..m {
            let g = kset.p1[r + 1];
            a[(m + r, u_m)] = a[(m + r, u_m)] + g;
            a[(m + r, uh_m)] = a[(m + r, uh_m)] - g;
        }

        let mut lhs = Matrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                lhs[(i, j)] = lhs[(i, j)] - dt * a[(i, j)];
            }
        }
        let lu = Lu::factor(lhs)?;
        Ok(Self { m, dt, a, b, lu })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Semi-discrete generator `A` (rows: plant nodes then observer nodes).
    pub fn generator(&self) -> &Matrix<T> {
        &self.a
    }

    /// One implicit-Euler step with held input `input`.
    pub fn step(&self, state: &SimState<T>, input: T) -> Result<SimState<T>> {
        let m = self.m;
        let mut rhs = Vec::with_capacity(2 * m);
        rhs.extend_from_slice(&state.u[1..]);
        rhs.extend_from_slice(&state.uhat[1..]);
        for (r, &bv) in rhs.iter_mut().zip(&self.b) {
            *r = *r + self.dt * bv * input;
        }
        let x = self.lu.solve(&rhs)?;
        let mut u = Vec::with_capacity(m + 1);
        u.push(T::zero());
        u.extend_from_slice(&x[..m]);
        let mut uhat = Vec::with_capacity(m + 1);
        uhat.push(T::zero());
        uhat.extend_from_slice(&x[m..]);
        Ok(SimState { u, uhat })
    }
}

/// Plant and observer profiles on all grid nodes, `x = 0` included.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState<T> {
    pub u: Vec<T>,
    pub uhat: Vec<T>,
}

impl<T: Real> SimState<T> {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            u: vec![T::zero(); grid.nodes()],
            uhat: vec![T::zero(); grid.nodes()],
        }
    }

    pub fn utilde(&self) -> Vec<T> {
        self.u
            .iter()
            .zip(&self.uhat)
            .map(|(&a, &b)| a - b)
            .collect()
    }
}

/// Norms and traces of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement<T> {
    pub norm_u: T,
    pub norm_uhat: T,
    pub norm_utilde: T,
    pub norm_utilde_x: T,
    pub u_one: T,
    pub uhat_one: T,
    pub norm_what: T,
    pub what_one: T,
    pub norm_wtilde: T,
    pub wtilde_one: T,
}

impl<T: Real> Measurement<T> {
    pub fn target_norms(&self) -> TargetNorms<T> {
        TargetNorms {
            what: self.norm_what,
            what_one: self.what_one.abs(),
            wtilde_one: self.wtilde_one.abs(),
        }
    }
}

/// Trapezoid norms, first-difference `||u~_x||`, and the target-state
/// quantities obtained through the backstepping transforms.
pub fn measure<T: Real>(state: &SimState<T>, kset: &KernelSet<T>) -> Measurement<T> {
    let grid = kset.grid;
    let wrap = |v: Vec<T>| GridFunction::from_values(grid, v).expect("grid-sized state");
    let u = wrap(state.u.clone());
    let uhat = wrap(state.uhat.clone());
    let ut = wrap(state.utilde());
    let what = wrap(kset.controller_to_target(uhat.values()));
    let wt = wrap(kset.observer_to_target(ut.values()));
    Measurement {
        norm_u: u.norm(),
        norm_uhat: uhat.norm(),
        norm_utilde: ut.norm(),
        norm_utilde_x: ut.derivative_norm(),
        u_one: u.at_right(),
        uhat_one: uhat.at_right(),
        norm_what: what.norm(),
        what_one: what.at_right(),
        norm_wtilde: wt.norm(),
        wtilde_one: wt.at_right(),
    }
}

/// When the held input is refreshed.
#[derive(Debug, Clone, PartialEq)]
pub enum Scheduler<T> {
    /// Dynamic event trigger.
    Event(TriggerParams<T>),
    /// Every `period` seconds.
    Periodic { period: T },
    /// Gaps drawn uniformly among the step multiples not exceeding `diameter`;
    /// the step is refined so that at least [`JITTER_LEVELS`] gap lengths exist.
    Jitter { diameter: T, seed: u64 },
    /// `U = 0` throughout.
    OpenLoop,
}

impl<T: Real> Scheduler<T> {
    /// Step actually used: for sampled schedules the configured step is
    /// shrunk so that the period (or diameter) is a whole number of steps.
    pub fn effective_dt(&self, dt: T) -> T {
        let steps = |s: T| (s / dt - c::<T>(1e-9)).ceil().max(T::one());
        match self {
            Self::Periodic { period: s } => *s / steps(*s),
            Self::Jitter { diameter: s, .. } => {
                *s / steps(*s).max(T::from_usize_lossy(JITTER_LEVELS))
            }
            _ => dt,
        }
    }

    fn validate(&self, horizon: T) -> Result<()> {
        match self {
            Self::Periodic { period: s } | Self::Jitter { diameter: s, .. } => {
                if !(*s > T::zero()) || *s > horizon {
                    return Err(Error::InvalidParameter {
                        name: "period",
                        value: s.to_f64_lossy(),
                        reason: "must lie in (0, horizon]",
                    });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Stored profiles at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub t: T,
    pub u: Vec<T>,
    pub uhat: Vec<T>,
}

/// Per-step record of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog<T> {
    pub times: Vec<T>,
    pub norm_u: Vec<T>,
    pub norm_uhat: Vec<T>,
    pub norm_utilde: Vec<T>,
    pub norm_utilde_x: Vec<T>,
    pub input: Vec<T>,
    pub d: Vec<T>,
    pub m: Vec<T>,
    pub event: Vec<bool>,
    pub norm_what: Vec<T>,
    pub norm_wtilde: Vec<T>,
    pub events: Vec<T>,
    pub snapshots: Vec<Snapshot<T>>,
    /// Step used after adjustment for sampled schedules.
    pub dt: T,
    /// Logged steps where `m >= 0` or `d^2 > -gamma m` (event mode only).
    pub violations: usize,
}

pub const CSV_COLUMNS: [&str; 11] = [
    "t",
    "norm_u",
    "norm_uhat",
    "norm_utilde",
    "norm_utilde_x",
    "U",
    "d",
    "m",
    "event",
    "norm_what",
    "norm_wtilde",
];

impl<T: Real> TrajectoryLog<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, t: T, me: &Measurement<T>, input: T, d: T, m: T, event: bool) {
        self.times.push(t);
        self.norm_u.push(me.norm_u);
        self.norm_uhat.push(me.norm_uhat);
        self.norm_utilde.push(me.norm_utilde);
        self.norm_utilde_x.push(me.norm_utilde_x);
        self.input.push(input);
        self.d.push(d);
        self.m.push(m);
        self.event.push(event);
        self.norm_what.push(me.norm_what);
        self.norm_wtilde.push(me.norm_wtilde);
        if event {
            self.events.push(t);
        }
    }

    /// `||u^|| + ||u~|| + ||u~_x||` per step.
    pub fn lyapunov_norm(&self) -> Vec<T> {
        (0..self.len())
            .map(|i| self.norm_uhat[i] + self.norm_utilde[i] + self.norm_utilde_x[i])
            .collect()
    }

    /// Writes the trajectory CSV. Values are printed at full precision so
    /// that reading them back is exact.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(CSV_COLUMNS)?;
        for i in 0..self.len() {
            let f = |v: T| format!("{:?}", v.to_f64_lossy());
            wr.write_record([
                f(self.times[i]),
                f(self.norm_u[i]),
                f(self.norm_uhat[i]),
                f(self.norm_utilde[i]),
                f(self.norm_utilde_x[i]),
                f(self.input[i]),
                f(self.d[i]),
                f(self.m[i]),
                (self.event[i] as u8).to_string(),
                f(self.norm_what[i]),
                f(self.norm_wtilde[i]),
            ])?;
        }
        wr.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }

    /// Snapshot CSV in long format: `t, x, u, uhat`.
    pub fn write_snapshots_csv<W: Write>(&self, w: W, grid: Grid) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "x", "u", "uhat"])?;
        for s in &self.snapshots {
            for (i, (&u, &uh)) in s.u.iter().zip(&s.uhat).enumerate() {
                wr.write_record([
                    format!("{:?}", s.t.to_f64_lossy()),
                    format!("{:?}", grid.x::<f64>(i)),
                    format!("{:?}", u.to_f64_lossy()),
                    format!("{:?}", uh.to_f64_lossy()),
                ])?;
            }
        }
        wr.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }
}

impl TrajectoryLog<f64> {
    /// Parses a CSV written by [`TrajectoryLog::write_csv`]. Only the
    /// per-step columns are restored; `dt` is inferred from the first gap.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != CSV_COLUMNS {
            return Err(Error::Csv(format!("unexpected header {:?}", headers)));
        }
        let mut log = Self::default();
        for rec in rd.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Csv(format!("column {}: {e}", CSV_COLUMNS[i])))
            };
            let t = num(0)?;
            let event = match &rec[8] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Csv(format!("event flag {other:?}"))),
            };
            log.times.push(t);
            log.norm_u.push(num(1)?);
            log.norm_uhat.push(num(2)?);
            log.norm_utilde.push(num(3)?);
            log.norm_utilde_x.push(num(4)?);
            log.input.push(num(5)?);
            log.d.push(num(6)?);
            log.m.push(num(7)?);
            log.event.push(event);
            log.norm_what.push(num(9)?);
            log.norm_wtilde.push(num(10)?);
            if event {
                log.events.push(t);
            }
        }
        if log.times.len() > 1 {
            log.dt = log.times[1] - log.times[0];
        }
        Ok(log)
    }
}

/// Runs the closed loop from `cfg`'s initial data to its horizon.
pub fn run<T: Real>(
    cfg: &SimConfig<T>,
    kset: &KernelSet<T>,
    scheduler: &Scheduler<T>,
) -> Result<TrajectoryLog<T>> {
    cfg.validate()?;
    scheduler.validate(cfg.horizon)?;
    if kset.grid.intervals() != cfg.intervals {
        return Err(Error::Dimension {
            expected: cfg.intervals,
            got: kset.grid.intervals(),
        });
    }
    let dt = scheduler.effective_dt(cfg.dt);
    let sys = CoupledSystem::assemble(kset, dt)?;
    let grid = kset.grid;
    let mut state = SimState {
        u: cfg.u0.sample(grid, "u0")?.into_values(),
        uhat: cfg.uhat0.sample(grid, "uhat0")?.into_values(),
    };
    let steps = (cfg.horizon / dt + c::<T>(1e-9))
        .floor()
        .to_usize()
        .unwrap_or(0);

    let closed = !matches!(scheduler, Scheduler::OpenLoop);
    let mut held = if closed {
        kset.control_law(&state.uhat)
    } else {
        T::zero()
    };
    let mut runtime = match scheduler {
        Scheduler::Event(tp) => Some(TriggerRuntime::new(
            *tp,
            T::zero(),
            held,
            state.uhat.clone(),
        )),
        _ => None,
    };
    let sample_steps = match scheduler {
        Scheduler::Periodic { period: s } | Scheduler::Jitter { diameter: s, .. } => (*s / dt
            + c::<T>(1e-6))
        .floor()
        .to_usize()
        .unwrap_or(1)
        .max(1),
        _ => 0,
    };
    let mut rng = match scheduler {
        Scheduler::Jitter { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let mut next_sample = match &mut rng {
        Some(r) => r.gen_range(1..=sample_steps),
        None => sample_steps,
    };

    let mut log = TrajectoryLog {
        dt,
        ..Default::default()
    };
    let mut me = measure(&state, kset);
    let m0 = runtime.as_ref().map_or(T::zero(), |r| r.m());
    log.push(T::zero(), &me, held, T::zero(), m0, closed);
    if cfg.snapshot_every.is_some() {
        log.snapshots.push(Snapshot {
            t: T::zero(),
            u: state.u.clone(),
            uhat: state.uhat.clone(),
        });
    }

    for s in 1..=steps {
        let t = T::from_usize_lossy(s) * dt;
        let start_norms = me.target_norms();
        state = sys.step(&state, held)?;
        me = measure(&state, kset);
        let feedback = kset.control_law(&state.uhat);
        let mut d = held - feedback;
        let fire = match scheduler {
            Scheduler::Event(_) => {
                let rt = runtime.as_mut().expect("event runtime");
                rt.advance(d, &start_norms, dt, t)?
            }
            Scheduler::Periodic { .. } => s % sample_steps == 0,
            Scheduler::Jitter { .. } => {
                if s == next_sample {
                    let r = rng.as_mut().expect("jitter rng");
                    next_sample = s + r.gen_range(1..=sample_steps);
                    true
                } else {
                    false
                }
            }
            Scheduler::OpenLoop => false,
        };
        if fire {
            held = feedback;
            d = T::zero();
            if let Some(rt) = runtime.as_mut() {
                rt.record_event(t, held, state.uhat.clone());
            }
        }
        let m = match runtime.as_ref() {
            Some(rt) => {
                if !rt.invariant_holds() {
                    log.violations += 1;
                }
                rt.m()
            }
            None => T::zero(),
        };
        log.push(t, &me, held, d, m, fire);
        if let Some(k) = cfg.snapshot_every {
            if k > 0 && s % k == 0 {
                log.snapshots.push(Snapshot {
                    t,
                    u: state.u.clone(),
                    uhat: state.uhat.clone(),
                });
            }
        }
    }
    Ok(log)
}

/// Least-squares rate `a` in `v(t) ~ C e^{-a t}` over samples with
/// `t >= t_from` and `v > 0`.
pub fn fit_decay_rate<T: Real>(times: &[T], values: &[T], t_from: T) -> Option<T> {
    let pts: Vec<(T, T)> = times
        .iter()
        .zip(values)
        .filter(|(&t, &v)| t >= t_from && v > T::zero() && v.is_finite())
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = T::from_usize_lossy(pts.len());
    let mt = pts.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let my = pts.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let sxx = pts
        .iter()
        .fold(T::zero(), |a, p| a + (p.0 - mt) * (p.0 - mt));
    let sxy = pts
        .iter()
        .fold(T::zero(), |a, p| a + (p.0 - mt) * (p.1 - my));
    if sxx == T::zero() {
        return None;
    }
    Some(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::build_kernel_set;

    fn small_set(lambda: f64, q: f64, m: usize) -> KernelSet<f64> {
        build_kernel_set(PlantParams::new(1.0, lambda, q).unwrap(), m).unwrap()
    }

    fn cfg(ks: &KernelSet<f64>, horizon: f64) -> SimConfig<f64> {
        SimConfig {
            params: ks.params,
            intervals: ks.grid.intervals(),
            dt: 1e-3,
            horizon,
            u0: InitialCondition::reference_plant(),
            uhat0: InitialCondition::reference_observer(),
            snapshot_every: None,
        }
    }

    #[test]
    fn reference_initial_polynomials() {
        let g = Grid::new(161).unwrap();
        let u0 = InitialCondition::<f64>::reference_plant()
            .sample(g, "u0")
            .unwrap();
        let uh0 = InitialCondition::<f64>::reference_observer()
            .sample(g, "uhat0")
            .unwrap();
        for i in 0..g.nodes() {
            let x: f64 = g.x(i);
            let a = 10.0 * x * x * (x - 1.0).powi(2);
            let b = 15.0 * x * x * (x - 1.0).powi(2) + 15.0 * x.powi(3) * (x - 1.0).powi(3);
            assert!((u0[i] - a).abs() < 1e-13);
            assert!((uh0[i] - b).abs() < 1e-13);
        }
        let bad = InitialCondition::Polynomial(vec![0.1f64, 1.0]);
        assert!(matches!(
            bad.sample(g, "u0"),
            Err(Error::Compatibility { which: "u0", .. })
        ));
    }

    #[test]
    fn measurement_basics() {
        let ks = small_set(10.0, 5.1, 161);
        let one = SimState {
            u: vec![1.0; 162],
            uhat: vec![0.0; 162],
        };
        let me = measure(&one, &ks);
        assert!((me.norm_u - 1.0).abs() < 1e-14);
        let lin: Vec<f64> = ks.grid.points();
        let st = SimState {
            u: lin.clone(),
            uhat: vec![0.0; 162],
        };
        assert!((measure(&st, &ks).norm_utilde_x - 1.0).abs() < 1e-13);
        let st = SimState {
            u: lin.iter().map(|x| x.sin()).collect(),
            uhat: lin.iter().map(|x| x * x).collect(),
        };
        let direct: Vec<f64> = lin.iter().map(|x| x.sin() - x * x).collect();
        assert_eq!(st.utilde(), direct);
    }

    #[test]
    fn input_enters_boundary_rows() {
        let ks = small_set(10.0, 5.1, 32);
        let sys = CoupledSystem::assemble(&ks, 1e-3).unwrap();
        let next = sys.step(&SimState::zeros(ks.grid), 1.0).unwrap();
        assert!(next.u[32] > 0.0);
        assert!(next.uhat[32] > 0.0);
        assert_eq!(next.u[0], 0.0);
    }

    #[test]
    fn zero_data_stays_zero() {
        let ks = small_set(10.0, 5.1, 32);
        let mut c = cfg(&ks, 0.05);
        c.u0 = InitialCondition::Polynomial(vec![0.0]);
        c.uhat0 = InitialCondition::Polynomial(vec![0.0]);
        let tp =
            TriggerParams::synthesize(&ks, crate::trigger::TriggerDesign::reference()).unwrap();
        for sch in [Scheduler::Event(tp), Scheduler::Periodic { period: 2e-3 }] {
            let log = run(&c, &ks, &sch).unwrap();
            assert!(log.norm_u.iter().all(|&v| v == 0.0));
            assert!(log.input.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn matched_initial_data_keeps_zero_error() {
        let ks = small_set(10.0, 5.1, 64);
        let mut c = cfg(&ks, 0.2);
        c.uhat0 = c.u0.clone();
        let log = run(&c, &ks, &Scheduler::Periodic { period: 1e-3 }).unwrap();
        assert!(log.norm_utilde.iter().all(|&v| v < 1e-14));
    }

    #[test]
    fn heat_equation_decays() {
        let ks = small_set(1e-12, 1.0, 64);
        let mut c = cfg(&ks, 0.3);
        c.u0 = InitialCondition::Polynomial(vec![0.0, 1.0, 0.0, -0.4]);
        c.uhat0 = c.u0.clone();
        let log = run(&c, &ks, &Scheduler::OpenLoop).unwrap();
        assert!(log.norm_u.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn observer_error_ignores_input() {
        let ks = small_set(10.0, 5.1, 64);
        let c = cfg(&ks, 0.1);
        let a = run(&c, &ks, &Scheduler::OpenLoop).unwrap();
        let b = run(&c, &ks, &Scheduler::Periodic { period: 1e-3 }).unwrap();
        for (x, y) in a.norm_utilde.iter().zip(&b.norm_utilde) {
            assert!((x - y).abs() <= 1e-12 * x.max(1e-300));
        }
        assert_ne!(a.norm_u, b.norm_u);
    }

    #[test]
    fn first_order_in_time() {
        let ks = small_set(10.0, 5.1, 32);
        let terminal = |dt: f64| {
            let sys = CoupledSystem::assemble(&ks, dt).unwrap();
            let mut st = SimState {
                u: InitialCondition::<f64>::reference_plant()
                    .sample(ks.grid, "u0")
                    .unwrap()
                    .into_values(),
                uhat: InitialCondition::<f64>::reference_observer()
                    .sample(ks.grid, "uhat0")
                    .unwrap()
                    .into_values(),
            };
            for _ in 0..(0.05 / dt).round() as usize {
                st = sys.step(&st, 0.3).unwrap();
            }
            st.u
        };
        let reference = terminal(0.05 / 1600.0);
        let err = |dt: f64| {
            terminal(dt)
                .iter()
                .zip(&reference)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
        };
        let ratio = err(0.05 / 50.0) / err(0.05 / 100.0);
        assert!((1.7..2.3).contains(&ratio), "{ratio}");
    }

    #[test]
    fn step_increment_is_small() {
        let ks = small_set(10.0, 5.1, 64);
        let smooth = SimState {
            u: InitialCondition::<f64>::reference_plant()
                .sample(ks.grid, "u0")
                .unwrap()
                .into_values(),
            uhat: InitialCondition::<f64>::reference_plant()
                .sample(ks.grid, "u0")
                .unwrap()
                .into_values(),
        };
        let inc = |dt: f64| {
            let next = CoupledSystem::assemble(&ks, dt)
                .unwrap()
                .step(&smooth, 0.0)
                .unwrap();
            let d: Vec<f64> = next.u.iter().zip(&smooth.u).map(|(a, b)| a - b).collect();
            GridFunction::from_values(ks.grid, d).unwrap().norm()
        };
        let (a, b) = (inc(1e-4), inc(5e-5));
        assert!(a < 1e-2 && (a / b - 2.0).abs() < 0.1);
    }

    #[test]
    fn deterministic_and_round_trips() {
        let ks = small_set(10.0, 5.1, 32);
        let c = cfg(&ks, 0.05);
        let sch = Scheduler::Jitter {
            diameter: 3e-3,
            seed: 11,
        };
        let a = run(&c, &ks, &sch).unwrap();
        let b = run(&c, &ks, &sch).unwrap();
        assert_eq!(a, b);
        assert!(crate::trigger::max_gap(&a.events) <= 3e-3 + 1e-12);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let back = TrajectoryLog::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.times, a.times);
        assert_eq!(back.norm_utilde_x, a.norm_utilde_x);
        assert_eq!(back.m, a.m);
        assert_eq!(back.event, a.event);
        assert_eq!(back.events, a.events);
    }

    #[test]
    fn effective_step_divides_period() {
        let s = Scheduler::Periodic { period: 8e-4f64 };
        assert!((s.effective_dt(1e-3) - 8e-4).abs() < 1e-18);
        let s = Scheduler::Periodic { period: 2.5e-3f64 };
        assert!((s.effective_dt(1e-3) - 2.5e-3 / 3.0).abs() < 1e-18);
        let s = Scheduler::Jitter {
            diameter: 8e-4f64,
            seed: 0,
        };
        assert!((s.effective_dt(1e-3) - 2e-4).abs() < 1e-18);
        let s = Scheduler::<f64>::OpenLoop;
        assert_eq!(s.effective_dt(1e-3), 1e-3);
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let v: Vec<f64> = t.iter().map(|t| 3.0 * (-2.5 * t).exp()).collect();
        assert!((fit_decay_rate(&t, &v, 0.0).unwrap() - 2.5).abs() < 1e-12);
        assert!(fit_decay_rate(&t[..1], &v[..1], 0.0).is_none());
    }
}
