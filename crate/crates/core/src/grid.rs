//! Uniform grid on `[0, 1]` and the composite-trapezoid quadratures used by
//! every table, gain and norm in the crate.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default number of intervals: `h = 1/161 ~ 0.0062`.
pub const DEFAULT_INTERVALS: usize = 161;

/// Uniform grid with `intervals + 1` nodes `x_i = i h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    intervals: usize,
}

impl Grid {
    pub fn new(intervals: usize) -> Result<Self> {
        if intervals < 2 {
            return Err(Error::InvalidParameter {
                name: "M",
                value: intervals as f64,
                reason: "grid needs at least 2 intervals",
            });
        }
        Ok(Self { intervals })
    }

    #[inline]
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.intervals + 1
    }

    #[inline]
    pub fn step<T: Real>(&self) -> T {
        T::one() / T::from_usize_lossy(self.intervals)
    }

    #[inline]
    pub fn x<T: Real>(&self, i: usize) -> T {
        T::from_usize_lossy(i) / T::from_usize_lossy(self.intervals)
    }

    pub fn points<T: Real>(&self) -> Vec<T> {
        (0..self.nodes()).map(|i| self.x(i)).collect()
    }

    /// Samples `f` on the nodes.
    pub fn sample<T: Real, F: FnMut(T) -> T>(&self, mut f: F) -> GridFunction<T> {
        GridFunction {
            grid: *self,
            values: (0..self.nodes()).map(|i| f(self.x(i))).collect(),
        }
    }

    pub fn try_sample<T: Real, F: FnMut(T) -> Result<T>>(
        &self,
        mut f: F,
    ) -> Result<GridFunction<T>> {
        let values = (0..self.nodes())
            .map(|i| f(self.x(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(GridFunction {
            grid: *self,
            values,
        })
    }
}

/// Trapezoid rule over consecutive samples spaced `h` apart.
pub fn trapezoid<T: Real>(values: &[T], h: T) -> T {
    match values.len() {
        0 | 1 => T::zero(),
        n => {
            let inner = values[1..n - 1].iter().fold(T::zero(), |acc, &v| acc + v);
            h * (inner + T::half() * (values[0] + values[n - 1]))
        }
    }
}

/// Trapezoid rule of `a_i * b_i`.
pub fn trapezoid_product<T: Real>(a: &[T], b: &[T], h: T) -> T {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 1..n - 1 {
        acc = acc + a[i] * b[i];
    }
    h * (acc + T::half() * (a[0] * b[0] + a[n - 1] * b[n - 1]))
}

/// Real function sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T> {
    grid: Grid,
    values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![T::zero(); grid.nodes()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.nodes() {
            return Err(Error::Dimension {
                expected: grid.nodes(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Value at `x = 1`.
    #[inline]
    pub fn at_right(&self) -> T {
        self.values[self.values.len() - 1]
    }

    pub fn integral(&self) -> T {
        trapezoid(&self.values, self.grid.step())
    }

    pub fn inner(&self, other: &Self) -> T {
        trapezoid_product(&self.values, &other.values, self.grid.step())
    }

    /// Trapezoid `L^2` norm.
    pub fn norm(&self) -> T {
        self.inner(self).sqrt()
    }

    /// `L^2` norm of the first-difference derivative (piecewise constant on
    /// each cell, so exact for piecewise-linear interpolants).
    pub fn derivative_norm(&self) -> T {
        let h = self.grid.step::<T>();
        let sum = self
            .values
            .windows(2)
            .fold(T::zero(), |acc, w| acc + (w[1] - w[0]) * (w[1] - w[0]));
        (sum / h).sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| v * k).collect(),
        }
    }
}

impl<T> std::ops::Index<usize> for GridFunction<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}
