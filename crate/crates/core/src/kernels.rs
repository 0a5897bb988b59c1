//! Backstepping kernels, observer/controller gains and the norm constants
//! built from them.
//!
//! With `a = lambda/(4 eps)` every kernel is `-2a` times a coordinate times
//! [`g1`](crate::specfun::g1) of `+-a (x^2 - y^2)`:
//!
//! | kernel | triangle | value |
//! |--------|----------|-------|
//! | `P(x,y)` | `x <= y` | `-2a x g1(a(y^2 - x^2))` |
//! | `Q(x,y)` | `x <= y` | `-2a x g1(-a(y^2 - x^2))` |
//! | `K(x,y)` | `y <= x` | `-2a y g1(a(x^2 - y^2))` |
//! | `L(x,y)` | `y <= x` | `-2a y g1(-a(x^2 - y^2))` |
//!
//! Derivatives follow from the chain rule in `s`; finite differences are
//! only used by the tests.

use crate::error::{Error, Result};
use crate::grid::{trapezoid, trapezoid_product, Grid, GridFunction};
use crate::scalar::{c, Real};
use crate::specfun::{g1, g1_derivative};

/// Coefficients of `u_t = eps u_xx + lambda u`, `u(0) = 0`, `u_x(1) + q u(1) = U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams<T> {
    pub epsilon: T,
    pub lambda: T,
    pub q: T,
}

impl<T: Real> PlantParams<T> {
    pub fn new(epsilon: T, lambda: T, q: T) -> Result<Self> {
        for (name, v) in [("epsilon", epsilon), ("lambda", lambda), ("q", q)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value: v.to_f64_lossy(),
                    reason: "must be positive and finite",
                });
            }
        }
        Ok(Self { epsilon, lambda, q })
    }

    /// `eps = 1, lambda = 10, q = 5.1`.
    pub fn reference() -> Self {
        Self {
            epsilon: T::one(),
            lambda: c(10.0),
            q: c(5.1),
        }
    }

    /// `lambda / (2 eps)`; also the observer boundary gain `p10 = -P(1,1)`.
    pub fn p10(&self) -> T {
        self.lambda / (T::two() * self.epsilon)
    }

    /// `r = q - lambda/(2 eps)`.
    pub fn r(&self) -> T {
        self.q - self.p10()
    }

    /// Fails unless `q > lambda/(2 eps)`.
    pub fn check_robin_gain(&self) -> Result<()> {
        if self.r() > T::zero() {
            Ok(())
        } else {
            Err(Error::RobinGainTooSmall {
                q: self.q.to_f64_lossy(),
                threshold: self.p10().to_f64_lossy(),
            })
        }
    }

    #[inline]
    fn a(&self) -> T {
        self.lambda / (c::<T>(4.0) * self.epsilon)
    }
}

fn unit<T: Real>(x: T) -> Result<()> {
    if x >= T::zero() && x <= T::one() {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            x: x.to_f64_lossy(),
        })
    }
}

fn upper<T: Real>(kernel: &'static str, x: T, y: T) -> Result<()> {
    unit(x)?;
    unit(y)?;
    if x <= y {
        Ok(())
    } else {
        Err(Error::Ordering {
            kernel,
            x: x.to_f64_lossy(),
            y: y.to_f64_lossy(),
        })
    }
}

fn lower<T: Real>(kernel: &'static str, x: T, y: T) -> Result<()> {
    upper(kernel, y, x).map_err(|e| match e {
        Error::Ordering { kernel, x: a, y: b } => Error::Ordering { kernel, x: b, y: a },
        other => other,
    })
}

/// Observer kernel `P(x,y)`, `0 <= x <= y <= 1`.
pub fn kernel_p<T: Real>(x: T, y: T, p: &PlantParams<T>) -> Result<T> {
    upper("P", x, y)?;
    let a = p.a();
    Ok(-T::two() * a * x * g1(a * (y * y - x * x))?)
}

/// Inverse observer kernel `Q(x,y)`, `0 <= x <= y <= 1`.
pub fn kernel_q<T: Real>(x: T, y: T, p: &PlantParams<T>) -> Result<T> {
    upper("Q", x, y)?;
    let a = p.a();
    Ok(-T::two() * a * x * g1(-a * (y * y - x * x))?)
}

/// Controller kernel `K(x,y)`, `0 <= y <= x <= 1`.
pub fn kernel_k<T: Real>(x: T, y: T, p: &PlantParams<T>) -> Result<T> {
    lower("K", x, y)?;
    let a = p.a();
    Ok(-T::two() * a * y * g1(a * (x * x - y * y))?)
}

/// Inverse controller kernel `L(x,y)`, `0 <= y <= x <= 1`.
pub fn kernel_l<T: Real>(x: T, y: T, p: &PlantParams<T>) -> Result<T> {
    lower("L", x, y)?;
    let a = p.a();
    Ok(-T::two() * a * y * g1(-a * (x * x - y * y))?)
}

/// `dP/dy`.
pub fn kernel_p_y<T: Real>(x: T, y: T, p: &PlantParams<T>) -> Result<T> {
    upper("P", x, y)?;
    let a = p.a();
    let s = a * (y * y - x * x);
    Ok(-c::<T>(4.0) * a * a * x * y * g1_derivative(s, 1)?)
}

/// `dP/dx`.
pub fn kernel_p_x<T: Real>(x: T, y: T, p: &PlantParams<T>) -> Result<T> {
    upper("P", x, y)?;
    let a = p.a();
    let s = a * (y * y - x * x);
    Ok(-T::two() * a * (g1(s)? - T::two() * a * x * x * g1_derivative(s, 1)?))
}

/// `dQ/dx`.
pub fn kernel_q_x<T: Real>(x: T, y: T, p: &PlantParams<T>) -> Result<T> {
    upper("Q", x, y)?;
    let a = p.a();
    let s = a * (x * x - y * y);
    Ok(-T::two() * a * (g1(s)? + T::two() * a * x * x * g1_derivative(s, 1)?))
}

/// `dK/dx`.
pub fn kernel_k_x<T: Real>(x: T, y: T, p: &PlantParams<T>) -> Result<T> {
    lower("K", x, y)?;
    let a = p.a();
    let s = a * (x * x - y * y);
    Ok(-c::<T>(4.0) * a * a * x * y * g1_derivative(s, 1)?)
}

/// Observer gain `p1(x) = -eps q P(x,1) - eps P_y(x,1)`.
pub fn gain_p1<T: Real>(x: T, p: &PlantParams<T>) -> Result<T> {
    unit(x)?;
    let a = p.a();
    let s = a * (T::one() - x * x);
    Ok(T::two() * a * p.epsilon * x * (p.q * g1(s)? + T::two() * a * g1_derivative(s, 1)?))
}

// r g^(j)(s) + 2a g^(j+1)(s) at s = a(1 - y^2)
fn k_inner<T: Real>(y: T, j: usize, p: &PlantParams<T>) -> Result<T> {
    let a = p.a();
    let s = a * (T::one() - y * y);
    Ok(p.r() * g1_derivative(s, j)? + T::two() * a * g1_derivative(s, j + 1)?)
}

/// Control gain `k(y) = r K(1,y) + K_x(1,y)`.
pub fn gain_k<T: Real>(y: T, p: &PlantParams<T>) -> Result<T> {
    p.check_robin_gain()?;
    unit(y)?;
    Ok(-T::two() * p.a() * y * k_inner(y, 0, p)?)
}

/// `k'(y)`.
pub fn gain_k_prime<T: Real>(y: T, p: &PlantParams<T>) -> Result<T> {
    p.check_robin_gain()?;
    unit(y)?;
    let a = p.a();
    Ok(-T::two() * a * (k_inner(y, 0, p)? - T::two() * a * y * y * k_inner(y, 1, p)?))
}

/// `k''(y)`.
pub fn gain_k_second<T: Real>(y: T, p: &PlantParams<T>) -> Result<T> {
    p.check_robin_gain()?;
    unit(y)?;
    let a = p.a();
    let inner = -c::<T>(6.0) * a * y * k_inner(y, 1, p)?
        + c::<T>(4.0) * a * a * y * y * y * k_inner(y, 2, p)?;
    Ok(-T::two() * a * inner)
}

/// Which half of the unit square a [`KernelTable`] lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Triangle {
    /// `x <= y`
    Upper,
    /// `y <= x`
    Lower,
}

/// Kernel sampled on grid pairs `(x_i, y_j)` of one triangle.
///
/// Stored as a dense square with zeros off the triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable<T> {
    n: usize,
    triangle: Triangle,
    data: Vec<T>,
}

impl<T: Real> KernelTable<T> {
    fn build<F>(grid: Grid, triangle: Triangle, f: F) -> Result<Self>
    where
        F: Fn(T, T) -> Result<T>,
    {
        let n = grid.nodes();
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            let x = grid.x::<T>(i);
            let (lo, hi) = match triangle {
                Triangle::Upper => (i, n),
                Triangle::Lower => (0, i + 1),
            };
            for j in lo..hi {
                data[i * n + j] = f(x, grid.x(j))?;
            }
        }
        Ok(Self { n, triangle, data })
    }

    #[inline]
    pub fn triangle(&self) -> Triangle {
        self.triangle
    }

    /// Value at `(x_i, y_j)`; zero off the triangle.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    /// Row `i` restricted to the triangle (`j = i..n` or `j = 0..=i`).
    pub fn row(&self, i: usize) -> &[T] {
        let row = &self.data[i * self.n..(i + 1) * self.n];
        match self.triangle {
            Triangle::Upper => &row[i..],
            Triangle::Lower => &row[..=i],
        }
    }

    pub fn negate(&mut self) {
        self.data.iter_mut().for_each(|v| *v = -*v);
    }

    /// `int int F^2` over the triangle: partial-row trapezoid inside, trapezoid outside.
    pub fn square_integral(&self, h: T) -> T {
        let inner: Vec<T> = (0..self.n)
            .map(|i| {
                let row = self.row(i);
                trapezoid_product(row, row, h)
            })
            .collect();
        trapezoid(&inner, h)
    }

    /// `(T f)(x_i) = int over the triangle row of F(x_i, y) f(y) dy`.
    pub fn apply(&self, f: &[T], h: T) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                let row = self.row(i);
                let fs = match self.triangle {
                    Triangle::Upper => &f[i..],
                    Triangle::Lower => &f[..=i],
                };
                trapezoid_product(row, fs, h)
            })
            .collect()
    }
}

/// Norm constants of the kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelNorms<T> {
    pub l_tilde: T,
    pub p_tilde: T,
    pub q_tilde: T,
    pub k_tilde: T,
    /// `int_0^1 int_x^1 P_x^2 dy dx`
    pub px_sq_int: T,
    /// `int_0^1 int_x^1 Q_x^2 dy dx`
    pub qx_sq_int: T,
}

/// Kernel norm constants `1 + sqrt(int int F^2)` and the `P_x^2`, `Q_x^2`
/// double integrals. Intended for `M >= 64`.
pub fn kernel_norms<T: Real>(p: &PlantParams<T>, grid: Grid) -> Result<KernelNorms<T>> {
    let h = grid.step::<T>();
    let sq = |tri, f: fn(T, T, &PlantParams<T>) -> Result<T>| -> Result<T> {
        Ok(KernelTable::build(grid, tri, |x, y| f(x, y, p))?.square_integral(h))
    };
    Ok(KernelNorms {
        l_tilde: T::one() + sq(Triangle::Lower, kernel_l)?.sqrt(),
        p_tilde: T::one() + sq(Triangle::Upper, kernel_p)?.sqrt(),
        q_tilde: T::one() + sq(Triangle::Upper, kernel_q)?.sqrt(),
        k_tilde: T::one() + sq(Triangle::Lower, kernel_k)?.sqrt(),
        px_sq_int: sq(Triangle::Upper, kernel_p_x)?,
        qx_sq_int: sq(Triangle::Upper, kernel_q_x)?,
    })
}

/// `g(x) = p1(x) - int_0^x K(x,y) p1(y) dy` on the grid.
pub fn gain_g<T: Real>(p: &PlantParams<T>, grid: Grid) -> Result<GridFunction<T>> {
    let p1 = grid.try_sample(|x| gain_p1(x, p))?;
    let k = KernelTable::build(grid, Triangle::Lower, |x, y| kernel_k(x, y, p))?;
    g_from_tables(&p1, &k)
}

fn g_from_tables<T: Real>(p1: &GridFunction<T>, k: &KernelTable<T>) -> Result<GridFunction<T>> {
    let grid = p1.grid();
    let kp = k.apply(p1.values(), grid.step());
    GridFunction::from_values(
        grid,
        p1.values().iter().zip(kp).map(|(&a, b)| a - b).collect(),
    )
}

/// Everything the certificate, trigger and simulator need from the kernels.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct KernelSet<T> {
    pub params: PlantParams<T>,
    pub grid: Grid,
    pub p: KernelTable<T>,
    pub q: KernelTable<T>,
    pub k: KernelTable<T>,
    pub l: KernelTable<T>,
    /// Control gain `k(y)`.
    pub k_gain: GridFunction<T>,
    pub k_prime: GridFunction<T>,
    pub k_second: GridFunction<T>,
    pub p1: GridFunction<T>,
    pub g: GridFunction<T>,
    pub r: T,
    pub p10: T,
    pub norms: KernelNorms<T>,
    /// `||g||^2`
    pub norm_g_sq: T,
}

/// Builds the full [`KernelSet`] on `intervals` grid cells.
pub fn build_kernel_set<T: Real>(params: PlantParams<T>, intervals: usize) -> Result<KernelSet<T>> {
    params.check_robin_gain()?;
    if intervals < 16 {
        return Err(Error::InvalidParameter {
            name: "M",
            value: intervals as f64,
            reason: "kernel tables need at least 16 intervals",
        });
    }
    let grid = Grid::new(intervals)?;
    let p = &params;
    let ptab = KernelTable::build(grid, Triangle::Upper, |x, y| kernel_p(x, y, p))?;
    let qtab = KernelTable::build(grid, Triangle::Upper, |x, y| kernel_q(x, y, p))?;
    let ktab = KernelTable::build(grid, Triangle::Lower, |x, y| kernel_k(x, y, p))?;
    let ltab = KernelTable::build(grid, Triangle::Lower, |x, y| kernel_l(x, y, p))?;
    let p1 = grid.try_sample(|x| gain_p1(x, p))?;
    let g = g_from_tables(&p1, &ktab)?;
    let norm_g_sq = g.inner(&g);
    Ok(KernelSet {
        params,
        grid,
        k_gain: grid.try_sample(|y| gain_k(y, p))?,
        k_prime: grid.try_sample(|y| gain_k_prime(y, p))?,
        k_second: grid.try_sample(|y| gain_k_second(y, p))?,
        norms: kernel_norms(p, grid)?,
        p: ptab,
        q: qtab,
        k: ktab,
        l: ltab,
        p1,
        g,
        r: params.r(),
        p10: params.p10(),
        norm_g_sq,
    })
}

impl<T: Real> KernelSet<T> {
    fn h(&self) -> T {
        self.grid.step()
    }

    /// `w~ = u~ + int_x^1 Q u~`.
    pub fn observer_to_target(&self, utilde: &[T]) -> Vec<T> {
        let i = self.q.apply(utilde, self.h());
        utilde.iter().zip(i).map(|(&f, v)| f + v).collect()
    }

    /// `u~ = w~ - int_x^1 P w~`.
    pub fn observer_from_target(&self, wtilde: &[T]) -> Vec<T> {
        let i = self.p.apply(wtilde, self.h());
        wtilde.iter().zip(i).map(|(&f, v)| f - v).collect()
    }

    /// `w^ = u^ - int_0^x K u^`.
    pub fn controller_to_target(&self, uhat: &[T]) -> Vec<T> {
        let i = self.k.apply(uhat, self.h());
        uhat.iter().zip(i).map(|(&f, v)| f - v).collect()
    }

    /// `u^ = w^ + int_0^x L w^`.
    pub fn controller_from_target(&self, what: &[T]) -> Vec<T> {
        let i = self.l.apply(what, self.h());
        what.iter().zip(i).map(|(&f, v)| f + v).collect()
    }

    /// Continuous-time feedback `int_0^1 k(y) u^(y) dy`.
    pub fn control_law(&self, uhat: &[T]) -> T {
        trapezoid_product(self.k_gain.values(), uhat, self.h())
    }

    pub fn norm_k(&self) -> T {
        self.k_gain.norm()
    }

    pub fn norm_p1(&self) -> T {
        self.p1.norm()
    }
}
