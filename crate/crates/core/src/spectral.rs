//! Sturm-Liouville spectra and the small-gain certificate for sample-and-hold
//! implementation of the output feedback.
//!
//! The Robin problem `-eps f'' - omega f = mu f`, `f(0) = 0`,
//! `f'(1) + theta f(1) = 0` has eigenfunctions
//! `phi_n(x) = sqrt(2 theta / (theta + cos^2 nu_n)) sin(nu_n x)` where
//! `nu_n cot nu_n = -theta`, `nu_n in ((2n-1) pi/2, n pi)`, and eigenvalues
//! `eps nu_n^2 - omega`.

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::kernels::{KernelSet, PlantParams};
use crate::scalar::{c, Real};

const BISECTION_STEPS: usize = 60;

/// `n`-th positive root of `nu cot(nu) = -theta`.
///
/// Bisection of `nu cos(nu) + theta sin(nu)` on `((2n-1) pi/2, n pi)`, where
/// `sin` does not vanish, so the root set is unchanged.
pub fn sl_root<T: Real>(theta: T, n: usize) -> Result<T> {
    if !(theta > T::zero()) || !theta.is_finite() {
        return Err(Error::InvalidParameter {
            name: "theta",
            value: theta.to_f64_lossy(),
            reason: "Robin parameter must be positive",
        });
    }
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: 0.0,
            reason: "mode index starts at 1",
        });
    }
    let f = |nu: T| nu * nu.cos() + theta * nu.sin();
    let nf = T::from_usize_lossy(n);
    let mut lo = (T::two() * nf - T::one()) * T::FRAC_PI_2();
    let mut hi = nf * T::PI();
    let f_lo = f(lo);
    for _ in 0..BISECTION_STEPS {
        let mid = T::half() * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > T::zero()) == (f_lo > T::zero()) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(T::half() * (lo + hi))
}

/// First `N` eigenpairs of the Robin Sturm-Liouville operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SlSpectrum<T> {
    pub theta: T,
    pub omega: T,
    pub epsilon: T,
    pub nu: Vec<T>,
    pub mu: Vec<T>,
    /// `sqrt(2 theta / (theta + cos^2 nu_n))`
    pub norm: Vec<T>,
}

impl<T: Real> SlSpectrum<T> {
    pub fn new(theta: T, omega: T, epsilon: T, modes: usize) -> Result<Self> {
        let nu = (1..=modes)
            .map(|n| sl_root(theta, n))
            .collect::<Result<Vec<T>>>()?;
        let mu = nu.iter().map(|&v| epsilon * v * v - omega).collect();
        let norm = nu
            .iter()
            .map(|&v| (T::two() * theta / (theta + v.cos() * v.cos())).sqrt())
            .collect();
        Ok(Self {
            theta,
            omega,
            epsilon,
            nu,
            mu,
            norm,
        })
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    /// `phi_n(x)`, `n` counted from 1.
    pub fn eigenfunction(&self, n: usize, x: T) -> T {
        self.norm[n - 1] * (self.nu[n - 1] * x).sin()
    }

    pub fn sample(&self, n: usize, grid: crate::grid::Grid) -> GridFunction<T> {
        grid.sample(|x| self.eigenfunction(n, x))
    }
}

/// `mu~_n = eps (n - 1/2)^2 pi^2 + 2 eps q`.
pub fn tilde_spectrum<T: Real>(p: &PlantParams<T>, n: usize) -> T {
    let k = T::from_usize_lossy(n) - T::half();
    p.epsilon * k * k * T::PI() * T::PI() + T::two() * p.epsilon * p.q
}

/// Smallest eigenvalues that bound the admissible decay rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayBounds<T> {
    /// `mu~_1`
    pub mu_tilde1: T,
    /// `eps nu_{q,1}^2`
    pub mu_q1: T,
    /// `eps nu_{r,1}^2`
    pub mu_r1: T,
}

impl<T: Real> DecayBounds<T> {
    pub fn new(p: &PlantParams<T>) -> Result<Self> {
        p.check_robin_gain()?;
        let nq = sl_root(p.q, 1)?;
        let nr = sl_root(p.r(), 1)?;
        Ok(Self {
            mu_tilde1: tilde_spectrum(p, 1),
            mu_q1: p.epsilon * nq * nq,
            mu_r1: p.epsilon * nr * nr,
        })
    }

    /// `0.01 min(mu~_1, mu_q1, mu_r1)`.
    pub fn default_sigma(&self) -> T {
        c::<T>(0.01) * self.mu_tilde1.min(self.mu_q1).min(self.mu_r1)
    }
}

/// Constants of the observer-error and controller-target decay estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayConstants<T> {
    pub m1: T,
    pub c1: T,
    pub c2: T,
    pub bounds: DecayBounds<T>,
}

/// `M1`, `C1`, `C2` for decay rates `sigma1`, `sigma2` and `||g||`.
pub fn decay_constants<T: Real>(
    p: &PlantParams<T>,
    sigma1: T,
    sigma2: T,
    norm_g: T,
) -> Result<DecayConstants<T>> {
    let b = DecayBounds::new(p)?;
    if sigma1 < T::zero() {
        return Err(Error::Range {
            name: "sigma1 >= 0",
            value: sigma1.to_f64_lossy(),
            bound: 0.0,
        });
    }
    if sigma2 < T::zero() {
        return Err(Error::Range {
            name: "sigma2 >= 0",
            value: sigma2.to_f64_lossy(),
            bound: 0.0,
        });
    }
    if !(sigma1 < b.mu_tilde1) {
        return Err(Error::Range {
            name: "sigma1 < mu~_1",
            value: sigma1.to_f64_lossy(),
            bound: b.mu_tilde1.to_f64_lossy(),
        });
    }
    if !(sigma1 < b.mu_q1) {
        return Err(Error::Range {
            name: "sigma1 < eps nu_{q,1}^2",
            value: sigma1.to_f64_lossy(),
            bound: b.mu_q1.to_f64_lossy(),
        });
    }
    if !(sigma2 < b.mu_r1) {
        return Err(Error::Range {
            name: "sigma2 < eps nu_{r,1}^2",
            value: sigma2.to_f64_lossy(),
            bound: b.mu_r1.to_f64_lossy(),
        });
    }
    let eps = p.epsilon;
    let q = p.q;
    let r = p.r();
    let sqrt3 = c::<T>(3.0).sqrt();
    let m1 = T::two() * q + T::two() * eps * q * q / (b.mu_tilde1 - sigma1);
    let c1 = b.mu_r1 / (sqrt3 * (T::one() + r) * (b.mu_r1 - sigma2));
    let c2 = (b.mu_r1 * p.lambda + T::two() * sqrt3 * eps * (T::one() + r) * norm_g)
        / (T::two() * sqrt3 * eps * (T::one() + r) * (b.mu_r1 - sigma2));
    Ok(DecayConstants {
        m1,
        c1,
        c2,
        bounds: b,
    })
}

/// Projection of the control gain onto the `phi_{q,n}` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalGains<T> {
    /// `k_n = int k phi_{q,n}`
    pub coeffs: Vec<T>,
    /// `phi_{q,n}(1)`
    pub phi_at_one: Vec<T>,
    /// `eps nu_{q,n}^2 - omega`
    pub mu: Vec<T>,
    /// `||k - h||` by quadrature of the residual.
    pub tail: T,
    /// `sqrt(||k||^2 - sum k_n^2)`, clamped at zero.
    pub tail_parseval: T,
}

/// Projects `k` on the first `spectrum.len()` eigenfunctions.
pub fn modal_gains<T: Real>(k: &GridFunction<T>, spectrum: &SlSpectrum<T>) -> ModalGains<T> {
    let grid = k.grid();
    let mut residual = k.clone();
    let mut coeffs = Vec::with_capacity(spectrum.len());
    let mut phi_at_one = Vec::with_capacity(spectrum.len());
    for n in 1..=spectrum.len() {
        let phi = spectrum.sample(n, grid);
        let kn = k.inner(&phi);
        for (r, &v) in residual.values_mut().iter_mut().zip(phi.values()) {
            *r = *r - kn * v;
        }
        coeffs.push(kn);
        phi_at_one.push(spectrum.eigenfunction(n, T::one()));
    }
    let captured = coeffs.iter().fold(T::zero(), |acc, &v| acc + v * v);
    ModalGains {
        tail: residual.norm(),
        tail_parseval: (k.inner(k) - captured).max(T::zero()).sqrt(),
        coeffs,
        phi_at_one,
        mu: spectrum.mu.clone(),
    }
}

/// Coefficient bundle of the two small-gain curves.
///
/// ```text
/// gamma1(T) = 1 - C1 Lt T e^{sigma T} S1 - C1 Lt ||k-h|| (e^{sigma T} + 1)
/// gamma2(T) = 1 - C1 T e^{sigma T} S2 / sqrt(2)
/// S1 = sum (eps ||k|| |k_n phi_n(1)| + |mu_n k_n|)
/// S2 = sum (lambda/2 |k_n phi_n(1)| + ||p1|| |k_n|)
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaCurves<T> {
    pub c1: T,
    pub l_tilde: T,
    pub sigma: T,
    pub tail: T,
    pub s1: T,
    pub s2: T,
}

impl<T: Real> GammaCurves<T> {
    pub fn new(kset: &KernelSet<T>, c1: T, sigma: T, modal: &ModalGains<T>) -> Self {
        let p = &kset.params;
        let norm_k = kset.norm_k();
        let norm_p1 = kset.norm_p1();
        let mut s1 = T::zero();
        let mut s2 = T::zero();
        for ((&kn, &phi1), &mu) in modal.coeffs.iter().zip(&modal.phi_at_one).zip(&modal.mu) {
            s1 = s1 + p.epsilon * norm_k * (kn * phi1).abs() + (mu * kn).abs();
            s2 = s2 + p.lambda * T::half() * (kn * phi1).abs() + norm_p1 * kn.abs();
        }
        Self {
            c1,
            l_tilde: kset.norms.l_tilde,
            sigma,
            tail: modal.tail,
            s1,
            s2,
        }
    }

    pub fn gamma1(&self, t: T) -> T {
        let e = (self.sigma * t).exp();
        T::one()
            - self.c1 * self.l_tilde * t * e * self.s1
            - self.c1 * self.l_tilde * self.tail * (e + T::one())
    }

    pub fn gamma2(&self, t: T) -> T {
        T::one() - self.c1 * t * (self.sigma * t).exp() * self.s2 / T::SQRT_2()
    }

    pub fn gammas(&self, t: T) -> (T, T) {
        (self.gamma1(t), self.gamma2(t))
    }

    /// `Xi(T) = min(gamma1(T), gamma2(T))`.
    pub fn xi(&self, t: T) -> T {
        self.gamma1(t).min(self.gamma2(t))
    }

    /// `2 C1 Lt ||k - h||`; must stay below one.
    pub fn small_gain(&self) -> T {
        T::two() * self.c1 * self.l_tilde * self.tail
    }

    /// `(T, gamma1, gamma2)` on `points` log-spaced samples of `[t_min, t_max]`.
    pub fn table(&self, t_min: T, t_max: T, points: usize) -> Vec<(T, T, T)> {
        let (a, b) = (t_min.ln(), t_max.ln());
        let denom = T::from_usize_lossy(points.max(2) - 1);
        (0..points)
            .map(|i| {
                let t = (a + (b - a) * T::from_usize_lossy(i) / denom).exp();
                (t, self.gamma1(t), self.gamma2(t))
            })
            .collect()
    }
}

/// Supremum of `{T in (0, 1] : gamma1(T) > 0 and gamma2(T) > 0}` by bisection.
///
/// Both curves decrease in `T`, so the admissible set is an interval. The
/// returned value sits on the admissible side of the bracket.
pub fn find_tstar<T: Real>(curves: &GammaCurves<T>, modes: usize) -> Result<T> {
    if !(curves.gamma1(T::zero()) > T::zero()) {
        return Err(Error::IncreaseModes {
            value: curves.small_gain().to_f64_lossy(),
            modes,
        });
    }
    let mut lo = T::zero();
    let mut hi = T::one();
    if curves.xi(hi) > T::zero() {
        return Ok(hi);
    }
    let tol = c::<T>(1e-12);
    while hi - lo > tol {
        let mid = T::half() * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if curves.xi(mid) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Constants in the closed-loop estimate `||u^|| + ||u~|| + ||u~_x|| <= M(T*) (...) e^{-sigma t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateConstants<T> {
    pub omega1: T,
    pub omega2: T,
    pub xi: T,
    pub m_of_tstar: T,
}

/// Evaluates `Omega1`, `Omega2`, `Xi(t)` and `Omega1 Omega2 / Xi(t)`.
///
/// `m` is the decay-estimate constant `M1`.
pub fn certificate_constants<T: Real>(
    kset: &KernelSet<T>,
    curves: &GammaCurves<T>,
    c2: T,
    m: T,
    t: T,
) -> CertificateConstants<T> {
    let n = &kset.norms;
    let p10 = kset.params.p10();
    let omega1 = n
        .l_tilde
        .max(n.p_tilde + p10 + n.px_sq_int.sqrt())
        .max(T::one());
    let c2s = c2 / T::SQRT_2() + T::one();
    let omega2 = n
        .k_tilde
        .max(c2s * ((m + T::one()) * n.q_tilde + p10 + n.qx_sq_int.sqrt()))
        .max(c2s);
    let xi = curves.xi(t);
    CertificateConstants {
        omega1,
        omega2,
        xi,
        m_of_tstar: omega1 * omega2 / xi,
    }
}

/// Options for [`build_certificate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateOptions<T> {
    /// Common decay rate `sigma = sigma1 = sigma2`; defaults to [`DecayBounds::default_sigma`].
    pub sigma: Option<T>,
    /// Modal truncation `N`; defaults to the smallest `N <= 64` with
    /// `2 C1 Lt ||k-h|| < 0.9`.
    pub modes: Option<usize>,
}

impl<T> Default for CertificateOptions<T> {
    fn default() -> Self {
        Self {
            sigma: None,
            modes: None,
        }
    }
}

pub const MAX_AUTO_MODES: usize = 64;
const AUTO_MODES_TARGET: f64 = 0.9;

/// The full sampled-data certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingCertificate<T> {
    pub sigma1: T,
    pub sigma2: T,
    pub sigma: T,
    pub m1: T,
    pub c1: T,
    pub c2: T,
    pub bounds: DecayBounds<T>,
    pub modes: usize,
    pub modal: ModalGains<T>,
    pub tail: T,
    pub curves: GammaCurves<T>,
    pub tstar: T,
    pub constants: CertificateConstants<T>,
}

/// Assembles the certificate from a kernel set.
pub fn build_certificate<T: Real>(
    kset: &KernelSet<T>,
    opts: CertificateOptions<T>,
) -> Result<SamplingCertificate<T>> {
    let p = &kset.params;
    let bounds = DecayBounds::new(p)?;
    let sigma = opts.sigma.unwrap_or_else(|| bounds.default_sigma());
    let dc = decay_constants(p, sigma, sigma, kset.norm_g_sq.sqrt())?;

    let project = |n: usize| -> Result<(ModalGains<T>, GammaCurves<T>)> {
        let spec = SlSpectrum::new(p.q, p.lambda, p.epsilon, n)?;
        let modal = modal_gains(&kset.k_gain, &spec);
        let curves = GammaCurves::new(kset, dc.c1, sigma, &modal);
        Ok((modal, curves))
    };

    let (modes, modal, curves) = match opts.modes {
        Some(n) => {
            if n == 0 {
                return Err(Error::InvalidParameter {
                    name: "N",
                    value: 0.0,
                    reason: "at least one mode",
                });
            }
            let (m, c) = project(n)?;
            (n, m, c)
        }
        None => {
            let mut found = None;
            for n in 1..=MAX_AUTO_MODES {
                let (m, cv) = project(n)?;
                if cv.small_gain() < c::<T>(AUTO_MODES_TARGET) {
                    found = Some((n, m, cv));
                    break;
                }
            }
            found.ok_or(Error::ModesExhausted {
                max_modes: MAX_AUTO_MODES,
                target: AUTO_MODES_TARGET,
            })?
        }
    };

    let tstar = find_tstar(&curves, modes)?;
    let constants = certificate_constants(kset, &curves, dc.c2, dc.m1, tstar);
    Ok(SamplingCertificate {
        sigma1: sigma,
        sigma2: sigma,
        sigma,
        m1: dc.m1,
        c1: dc.c1,
        c2: dc.c2,
        bounds,
        modes,
        tail: modal.tail,
        modal,
        curves,
        tstar,
        constants,
    })
}
