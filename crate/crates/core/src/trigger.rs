//! Dynamic event trigger and sampling schedules.
//!
//! The trigger keeps an internal variable `m < 0` driven by
//!
//! ```text
//! m' = -eta m + rho d^2 - beta1 ||w^||^2 - beta2 w^(1)^2 - beta3 w~(1)^2
//! ```
//!
//! and fires as soon as `d^2 > -gamma m`, where `d` is the gap between the
//! held input and the continuous feedback.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{KernelSet, PlantParams};
use crate::scalar::{c, Real};

/// `(rho1, alpha1, alpha2, alpha3)` of the Lyapunov derivative bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerConstants<T> {
    pub rho1: T,
    pub alpha1: T,
    pub alpha2: T,
    pub alpha3: T,
}

impl<T: Real> TriggerConstants<T> {
    pub fn alphas(&self) -> [T; 3] {
        [self.alpha1, self.alpha2, self.alpha3]
    }
}

/// Computes `rho1` and the three `alpha`s from the tabulated gains.
///
/// ```text
/// alpha1 = 3 Lt^2 int (eps k'' + eps k(1) k + lambda k)^2 + 6 (eps q k(1) + eps k'(1))^2 int L(1,y)^2
/// alpha2 = 6 (eps q k(1) + eps k'(1))^2
/// alpha3 = 6 (lambda k(1)/2 + int k p1)^2
/// rho1   = 6 eps^2 k(1)^2
/// ```
pub fn trigger_constants<T: Real>(kset: &KernelSet<T>) -> TriggerConstants<T> {
    let p = &kset.params;
    let (eps, lam, q) = (p.epsilon, p.lambda, p.q);
    let h = kset.grid.step::<T>();
    let k = kset.k_gain.values();
    let k1 = kset.k_gain.at_right();
    let kp1 = kset.k_prime.at_right();
    let six = c::<T>(6.0);

    let inner: Vec<T> = kset
        .k_second
        .values()
        .iter()
        .zip(k)
        .map(|(&kpp, &kv)| eps * kpp + eps * k1 * kv + lam * kv)
        .collect();
    let inner_sq = crate::grid::trapezoid_product(&inner, &inner, h);
    let l_row = kset.l.row(kset.grid.intervals());
    let l_sq = crate::grid::trapezoid_product(l_row, l_row, h);
    let boundary = eps * q * k1 + eps * kp1;
    let lt = kset.norms.l_tilde;

    let kp = kset.k_gain.inner(&kset.p1);
    TriggerConstants {
        rho1: six * eps * eps * k1 * k1,
        alpha1: c::<T>(3.0) * lt * lt * inner_sq + six * boundary * boundary * l_sq,
        alpha2: six * boundary * boundary,
        alpha3: six * (lam * k1 * T::half() + kp) * (lam * k1 * T::half() + kp),
    }
}

/// `beta_i = alpha_i / (gamma (1 - vartheta))`.
pub fn synthesize_betas<T: Real>(alphas: [T; 3], gamma: T, vartheta: T) -> Result<[T; 3]> {
    if !(vartheta > T::zero() && vartheta < T::one()) {
        return Err(Error::InvalidParameter {
            name: "vartheta",
            value: vartheta.to_f64_lossy(),
            reason: "must lie in (0, 1)",
        });
    }
    if !(gamma > T::zero()) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            value: gamma.to_f64_lossy(),
            reason: "must be positive",
        });
    }
    let s = gamma * (T::one() - vartheta);
    Ok([alphas[0] / s, alphas[1] / s, alphas[2] / s])
}

/// Outcome of the Lyapunov design inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility<T> {
    pub ok: bool,
    pub margin: T,
    pub rho: T,
    pub a_min: T,
}

/// Evaluates
/// `B (eps min{r, 1/2} - eps/(2 k1) - lambda/(4 k2) - ||g||^2/k3) - 2 beta1 - beta2`,
/// `rho = eps k1 B / 2` and `A_min = (lambda k2 B + 2 k3 B + 4 beta3) / (eps q)`.
///
/// An infeasible design is a result, not an error.
pub fn feasibility_check<T: Real>(
    p: &PlantParams<T>,
    norm_g_sq: T,
    b: T,
    kappas: [T; 3],
    betas: [T; 3],
) -> Feasibility<T> {
    let eps = p.epsilon;
    let [k1, k2, k3] = kappas;
    let two = T::two();
    let margin = b
        * (eps * p.r().min(T::half())
            - eps / (two * k1)
            - p.lambda / (c::<T>(4.0) * k2)
            - norm_g_sq / k3)
        - two * betas[0]
        - betas[1];
    Feasibility {
        ok: margin > T::zero(),
        margin,
        rho: eps * k1 * b / two,
        a_min: (p.lambda * k2 * b + two * k3 * b + c::<T>(4.0) * betas[2]) / (eps * p.q),
    }
}

/// User-facing design knobs of the trigger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerDesign<T> {
    pub eta: T,
    pub gamma: T,
    pub vartheta: T,
    pub m0: T,
    pub b: T,
    pub kappas: [T; 3],
    /// Replaces the synthesized betas when set.
    pub betas: Option<[T; 3]>,
}

impl<T: Real> TriggerDesign<T> {
    /// eta = 1, gamma = 1e5, vartheta = 0.1, m0 = -0.5, B = 0.644,
    /// kappas = (11, 1e4, 1e8).
    pub fn reference() -> Self {
        Self {
            eta: T::one(),
            gamma: c(1.0e5),
            vartheta: c(0.1),
            m0: c(-0.5),
            b: c(0.644),
            kappas: [c(11.0), c(1.0e4), c(1.0e8)],
            betas: None,
        }
    }
}

/// Resolved trigger parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerParams<T> {
    pub eta: T,
    pub gamma: T,
    pub vartheta: T,
    pub rho: T,
    pub rho1: T,
    pub alpha1: T,
    pub alpha2: T,
    pub alpha3: T,
    pub beta1: T,
    pub beta2: T,
    pub beta3: T,
    pub m0: T,
    pub b: T,
    pub kappa1: T,
    pub kappa2: T,
    pub kappa3: T,
    pub a_min: T,
    pub margin: T,
    pub feasible: bool,
}

impl<T: Real> TriggerParams<T> {
    pub fn synthesize(kset: &KernelSet<T>, design: TriggerDesign<T>) -> Result<Self> {
        if !(design.eta > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "eta",
                value: design.eta.to_f64_lossy(),
                reason: "must be positive",
            });
        }
        if !(design.m0 < T::zero()) {
            return Err(Error::InvalidParameter {
                name: "m0",
                value: design.m0.to_f64_lossy(),
                reason: "must be negative",
            });
        }
        for (name, v) in [
            ("B", design.b),
            ("kappa1", design.kappas[0]),
            ("kappa2", design.kappas[1]),
            ("kappa3", design.kappas[2]),
        ] {
            if !(v > T::zero()) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v.to_f64_lossy(),
                    reason: "must be positive",
                });
            }
        }
        let tc = trigger_constants(kset);
        let synthesized = synthesize_betas(tc.alphas(), design.gamma, design.vartheta)?;
        let betas = design.betas.unwrap_or(synthesized);
        if betas.iter().any(|&b| !(b > T::zero())) {
            return Err(Error::InvalidParameter {
                name: "beta",
                value: betas
                    .iter()
                    .fold(f64::INFINITY, |a, b| a.min(b.to_f64_lossy())),
                reason: "betas must be positive",
            });
        }
        let f = feasibility_check(&kset.params, kset.norm_g_sq, design.b, design.kappas, betas);
        Ok(Self {
            eta: design.eta,
            gamma: design.gamma,
            vartheta: design.vartheta,
            rho: f.rho,
            rho1: tc.rho1,
            alpha1: tc.alpha1,
            alpha2: tc.alpha2,
            alpha3: tc.alpha3,
            beta1: betas[0],
            beta2: betas[1],
            beta3: betas[2],
            m0: design.m0,
            b: design.b,
            kappa1: design.kappas[0],
            kappa2: design.kappas[1],
            kappa3: design.kappas[2],
            a_min: f.a_min,
            margin: f.margin,
            feasible: f.ok,
        })
    }

    /// `beta1 ||w^||^2 + beta2 w^(1)^2 + beta3 w~(1)^2`.
    pub fn state_drain(&self, norms: &TargetNorms<T>) -> T {
        self.beta1 * norms.what * norms.what
            + self.beta2 * norms.what_one * norms.what_one
            + self.beta3 * norms.wtilde_one * norms.wtilde_one
    }
}

/// Target-state quantities read by the trigger.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TargetNorms<T> {
    /// `||w^||`
    pub what: T,
    /// `|w^(1)|`
    pub what_one: T,
    /// `|w~(1)|`
    pub wtilde_one: T,
}

/// One explicit-Euler step of the `m`-ODE followed by the firing test.
///
/// Returns `(fire, m_next)`; a tie `d^2 = -gamma m_next` does not fire.
pub fn trigger_step<T: Real>(
    m: T,
    d: T,
    norms: &TargetNorms<T>,
    params: &TriggerParams<T>,
    dt: T,
    t: T,
) -> Result<(bool, T)> {
    let m_next = m + dt * (-params.eta * m + params.rho * d * d - params.state_drain(norms));
    if !(m_next < T::zero()) {
        return Err(Error::TriggerInvariant {
            t: t.to_f64_lossy(),
            m: m_next.to_f64_lossy(),
            d_sq: (d * d).to_f64_lossy(),
            threshold: (-params.gamma * m_next).to_f64_lossy(),
        });
    }
    Ok((d * d > -params.gamma * m_next, m_next))
}

/// Mutable trigger state advanced once per simulation step.
///
/// Within a step the `m`-ODE is sub-stepped so that
/// `delta (eta + rho gamma) <= 1/2`, with `d` interpolated linearly between
/// the step endpoints and the target norms frozen at the step start. The
/// firing test runs at every sub-step; an event is reported at the end of
/// the step and `d` is reset to zero there.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerRuntime<T> {
    params: TriggerParams<T>,
    held: T,
    snapshot: Vec<T>,
    m: T,
    d: T,
    events: Vec<T>,
}

impl<T: Real> TriggerRuntime<T> {
    /// Starts with an event at `t0` holding `held` computed from `snapshot`.
    pub fn new(params: TriggerParams<T>, t0: T, held: T, snapshot: Vec<T>) -> Self {
        Self {
            m: params.m0,
            params,
            held,
            snapshot,
            d: T::zero(),
            events: vec![t0],
        }
    }

    pub fn params(&self) -> &TriggerParams<T> {
        &self.params
    }

    pub fn held_input(&self) -> T {
        self.held
    }

    pub fn snapshot(&self) -> &[T] {
        &self.snapshot
    }

    pub fn m(&self) -> T {
        self.m
    }

    pub fn d(&self) -> T {
        self.d
    }

    pub fn events(&self) -> &[T] {
        &self.events
    }

    /// Sub-steps used for a step of length `dt`.
    pub fn substeps(&self, dt: T) -> usize {
        let stiff = T::two() * dt * (self.params.eta + self.params.rho * self.params.gamma);
        stiff.ceil().to_usize().unwrap_or(1).max(1)
    }

    /// Advances `m` across `[t - dt, t]` given the holding error `d_end` at
    /// `t`. Returns whether the trigger fired; the caller then supplies the
    /// new input through [`TriggerRuntime::record_event`].
    pub fn advance(&mut self, d_end: T, norms: &TargetNorms<T>, dt: T, t: T) -> Result<bool> {
        let n = self.substeps(dt);
        let nf = T::from_usize_lossy(n);
        let delta = dt / nf;
        let drain = self.params.state_drain(norms);
        let (eta, rho, gamma) = (self.params.eta, self.params.rho, self.params.gamma);
        let d0 = self.d;
        let mut m = self.m;
        let mut fired = false;
        for k in 0..n {
            let d_a = if fired {
                T::zero()
            } else {
                d0 + (d_end - d0) * T::from_usize_lossy(k) / nf
            };
            m = m + delta * (-eta * m + rho * d_a * d_a - drain);
            if !(m < T::zero()) {
                return Err(Error::TriggerInvariant {
                    t: t.to_f64_lossy(),
                    m: m.to_f64_lossy(),
                    d_sq: (d_a * d_a).to_f64_lossy(),
                    threshold: (-gamma * m).to_f64_lossy(),
                });
            }
            if !fired {
                let d_b = d0 + (d_end - d0) * T::from_usize_lossy(k + 1) / nf;
                fired = d_b * d_b > -gamma * m;
            }
        }
        self.m = m;
        self.d = if fired { T::zero() } else { d_end };
        Ok(fired)
    }

    /// Stores the new held input after an event at `t`.
    pub fn record_event(&mut self, t: T, held: T, snapshot: Vec<T>) {
        self.held = held;
        self.snapshot = snapshot;
        self.d = T::zero();
        self.events.push(t);
    }

    /// `m < 0` and `d^2 <= -gamma m`.
    pub fn invariant_holds(&self) -> bool {
        self.m < T::zero() && self.d * self.d <= -self.params.gamma * self.m
    }
}

fn check_period<T: Real>(period: T, horizon: T) -> Result<()> {
    if !(period > T::zero()) || !period.is_finite() {
        return Err(Error::InvalidParameter {
            name: "period",
            value: period.to_f64_lossy(),
            reason: "must be positive",
        });
    }
    if period > horizon {
        return Err(Error::InvalidParameter {
            name: "period",
            value: period.to_f64_lossy(),
            reason: "must not exceed the horizon",
        });
    }
    Ok(())
}

/// `t_j = j T` for `0 <= t_j <= horizon`.
pub fn periodic_schedule<T: Real>(period: T, horizon: T) -> Result<Vec<T>> {
    check_period(period, horizon)?;
    let count = (horizon / period + c::<T>(1e-9))
        .floor()
        .to_usize()
        .unwrap_or(0);
    Ok((0..=count)
        .map(|j| T::from_usize_lossy(j) * period)
        .collect())
}

/// Aperiodic schedule with gaps drawn uniformly from `(0, T]`.
pub fn jitter_schedule<T: Real>(diameter: T, horizon: T, seed: u64) -> Result<Vec<T>> {
    check_period(diameter, horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = T::zero();
    let mut out = vec![t];
    loop {
        let u: f64 = rng.gen();
        t = t + diameter * c::<T>(1.0 - u);
        if t > horizon {
            break;
        }
        out.push(t);
    }
    Ok(out)
}

/// Largest consecutive gap.
pub fn max_gap<T: Real>(times: &[T]) -> T {
    times
        .windows(2)
        .fold(T::zero(), |acc, w| acc.max(w[1] - w[0]))
}

/// Inter-event statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwellStats<T> {
    pub min: T,
    pub mean: T,
    pub count: usize,
}

pub fn dwell_stats<T: Real>(events: &[T]) -> Result<DwellStats<T>> {
    if events.len() < 2 {
        return Err(Error::InsufficientEvents(events.len()));
    }
    let gaps: Vec<T> = events.windows(2).map(|w| w[1] - w[0]).collect();
    let min = gaps.iter().fold(T::infinity(), |a, &g| a.min(g));
    let sum = gaps.iter().fold(T::zero(), |a, &g| a + g);
    Ok(DwellStats {
        min,
        mean: sum / T::from_usize_lossy(gaps.len()),
        count: gaps.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::build_kernel_set;

    fn unit_params() -> TriggerParams<f64> {
        TriggerParams {
            eta: 1.0,
            gamma: 1e5,
            vartheta: 0.1,
            rho: 3.542,
            rho1: 0.0,
            alpha1: 0.0,
            alpha2: 0.0,
            alpha3: 0.0,
            beta1: 0.015,
            beta2: 0.0022,
            beta3: 0.1328,
            m0: -0.5,
            b: 0.644,
            kappa1: 11.0,
            kappa2: 1e4,
            kappa3: 1e8,
            a_min: 0.0,
            margin: 0.0,
            feasible: true,
        }
    }

    #[test]
    fn pure_decay_step() {
        let p = unit_params();
        let (fire, m) = trigger_step(-0.5, 0.0, &TargetNorms::default(), &p, 1e-3, 0.0).unwrap();
        assert!(!fire);
        assert!((m + 0.4995).abs() < 1e-15);
    }

    #[test]
    fn tie_does_not_fire() {
        let mut p = unit_params();
        p.rho = 0.0;
        p.gamma = 4.0;
        let m_next = -0.5 + 1e-3 * 0.5;
        // d^2 = -gamma m_next exactly: 4 * 0.4995 = 1.998
        let d = (-p.gamma * m_next).sqrt();
        let (fire, m) = trigger_step(-0.5, d, &TargetNorms::default(), &p, 1e-3, 0.0).unwrap();
        assert_eq!(m, m_next);
        assert_eq!(d * d, -p.gamma * m);
        assert!(!fire);
        let (fire, _) = trigger_step(
            -0.5,
            d * (1.0 + 1e-12),
            &TargetNorms::default(),
            &p,
            1e-3,
            0.0,
        )
        .unwrap();
        assert!(fire);
    }

    #[test]
    fn overshoot_is_reported() {
        let p = unit_params();
        let err = trigger_step(-0.5, 1.0, &TargetNorms::default(), &p, 1.0, 0.3).unwrap_err();
        assert!(matches!(err, Error::TriggerInvariant { .. }));
    }

    #[test]
    fn betas_are_exact_algebra() {
        let a = [1.3511e3f64, 1.9642e2, 1.1956e4];
        let b = synthesize_betas(a, 1e5, 0.1).unwrap();
        assert!((b[0] - 0.015).abs() / 0.015 < 1e-2);
        assert!((b[1] - 0.0022).abs() / 0.0022 < 1e-2);
        assert!((b[2] - 0.1328).abs() / 0.1328 < 1e-2);
        for i in 0..3 {
            assert!((b[i] * 1e5 * 0.9 - a[i]).abs() <= 1e-12 * a[i]);
        }
        assert!(synthesize_betas(a, 1e5, 1.0).is_err());
        assert!(synthesize_betas(a, 1e5, 0.0).is_err());
        let big = synthesize_betas(a, 1e300, 0.5).unwrap();
        assert!(big.iter().all(|&v| v < 1e-290));
    }

    #[test]
    fn feasibility_with_printed_values() {
        let p = PlantParams::<f64>::reference();
        let f = feasibility_check(
            &p,
            3.0042e4,
            0.644,
            [11.0, 1e4, 1e8],
            [0.015, 0.0022, 0.1328],
        );
        // 0.644 (0.1 - 1/22 - 10/4e4 - 3.0042e4/1e8) - 0.03 - 0.0022
        let oracle = 0.644 * (0.1 - 1.0 / 22.0 - 2.5e-4 - 3.0042e-4) - 0.0322;
        assert!((f.margin - oracle).abs() < 1e-15);
        assert!(f.ok);
        assert!((f.rho - 3.542).abs() < 1e-12);
        let zero_b =
            feasibility_check(&p, 3.0042e4, 0.0, [11.0, 1e4, 1e8], [0.015, 0.0022, 0.1328]);
        assert!(!zero_b.ok);
        assert!((zero_b.margin + 0.0322).abs() < 1e-15);
    }

    #[test]
    fn vanishing_reaction_gives_zero_alphas() {
        let p = PlantParams::<f64>::new(1.0, 1e-200, 1.0).unwrap();
        let ks = build_kernel_set(p, 64).unwrap();
        let tc = trigger_constants(&ks);
        for v in [tc.rho1, tc.alpha1, tc.alpha2, tc.alpha3] {
            assert!(v.abs() < 1e-300);
        }
    }

    #[test]
    fn schedules() {
        assert_eq!(periodic_schedule(8e-4f64, 0.1).unwrap().len(), 126);
        assert!(periodic_schedule(0.0f64, 0.1).is_err());
        let j = jitter_schedule(8e-4f64, 0.1, 7).unwrap();
        assert!(max_gap(&j) <= 8e-4);
        assert!(j.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(j, jitter_schedule(8e-4f64, 0.1, 7).unwrap());
    }

    #[test]
    fn dwell_arithmetic() {
        let s = dwell_stats(&[0.0f64, 0.01, 0.03]).unwrap();
        assert!((s.min - 0.01).abs() < 1e-15);
        assert!((s.mean - 0.015).abs() < 1e-15);
        assert_eq!(s.count, 2);
        assert!(matches!(
            dwell_stats(&[0.0f64]),
            Err(Error::InsufficientEvents(1))
        ));
    }

    #[test]
    fn runtime_keeps_invariant_under_large_gap() {
        let p = unit_params();
        let mut rt = TriggerRuntime::new(p, 0.0, 0.0, vec![]);
        let mut d = 0.0;
        let mut t = 0.0;
        let mut fired = 0;
        for _ in 0..1000 {
            d += 0.05;
            t += 1e-3;
            if rt.advance(d, &TargetNorms::default(), 1e-3, t).unwrap() {
                rt.record_event(t, 0.0, vec![]);
                d = 0.0;
                fired += 1;
            }
            assert!(rt.invariant_holds());
        }
        assert!(fired > 0);
        assert!(rt.substeps(1e-3) >= 709);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn runtime_invariant_for_arbitrary_errors(
                ds in proptest::collection::vec(-5.0f64..5.0, 1..200),
                w in 0.0f64..10.0,
                eta in 0.1f64..200.0,
            ) {
                let mut p = unit_params();
                p.eta = eta;
                let norms = TargetNorms { what: w, what_one: w, wtilde_one: w };
                let mut rt = TriggerRuntime::new(p, 0.0, 0.0, vec![]);
                for (i, &d) in ds.iter().enumerate() {
                    let t = (i + 1) as f64 * 1e-3;
                    if rt.advance(d, &norms, 1e-3, t).unwrap() {
                        rt.record_event(t, 0.0, vec![]);
                    }
                    prop_assert!(rt.invariant_holds());
                }
            }
        }
    }
}
