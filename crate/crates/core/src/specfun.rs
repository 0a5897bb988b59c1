//! Entire series behind the modified and ordinary Bessel kernels.
//!
//! Both families are carried by one function of a real argument,
//!
//! ```text
//! g1(s) = sum_{k >= 0} s^k / (k! (k+1)!)
//! ```
//!
//! so that `I1(z)/z = g1(z^2/4)/2` and `J1(z)/z = g1(-z^2/4)/2`. The kernels
//! are analytic in `x^2 - y^2`, and working in `s` keeps the diagonal
//! `x = y` free of `0/0` forms.
//!
//! The `j`-th derivative is again an entire series,
//! `g1^(j)(s) = sum_{m >= 0} s^m / (m! (m+j+1)!)`.

use crate::error::{Error, Result};
use crate::scalar::{c, Real};

/// Largest `|s|` accepted. Kernel arguments are bounded by `lambda/(4 eps)`.
pub const MAX_ARGUMENT: f64 = 1.0e3;

/// Hard cap on the number of series terms.
pub const MAX_TERMS: usize = 64;

const REL_STOP: f64 = 1.0e-15;

/// A converged series evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue<T> {
    pub value: T,
    pub argument: T,
    /// Number of terms summed.
    pub terms: usize,
    /// `|first omitted term| / max(|value|, tiny)`.
    pub truncation: T,
}

fn check_domain<T: Real>(s: T) -> Result<()> {
    if !s.is_finite() || s.abs() > c::<T>(MAX_ARGUMENT) {
        return Err(Error::SeriesDomain {
            s: s.to_f64_lossy(),
            bound: MAX_ARGUMENT,
        });
    }
    Ok(())
}

fn leading_term<T: Real>(order: usize) -> T {
    // 1 / (order + 1)!
    (1..=order + 1).fold(T::one(), |acc, k| acc / T::from_usize_lossy(k))
}

/// Evaluates the `order`-th derivative of `g1` with the adaptive truncation
/// policy: stop once the next term falls below `1e-15` relative or after
/// [`MAX_TERMS`] terms.
pub fn g1_series<T: Real>(s: T, order: usize) -> Result<SeriesValue<T>> {
    check_domain(s)?;
    let stop = c::<T>(REL_STOP);
    let mut term = leading_term::<T>(order);
    let mut sum = T::zero();
    let mut terms = 0;
    while terms < MAX_TERMS {
        sum = sum + term;
        terms += 1;
        let m = T::from_usize_lossy(terms);
        let next = term * s / (m * (m + T::from_usize_lossy(order + 1)));
        term = next;
        if next.abs() <= stop * sum.abs() || next == T::zero() {
            break;
        }
    }
    let scale = sum.abs().max(T::min_positive_value());
    Ok(SeriesValue {
        value: sum,
        argument: s,
        terms,
        truncation: term.abs() / scale,
    })
}

/// Fixed-length partial sum of the `order`-th derivative series.
///
/// No domain check; used to probe truncation stability.
pub fn g1_partial_sum<T: Real>(s: T, order: usize, terms: usize) -> T {
    let mut term = leading_term::<T>(order);
    let mut sum = T::zero();
    for k in 0..terms {
        sum = sum + term;
        let m = T::from_usize_lossy(k + 1);
        term = term * s / (m * (m + T::from_usize_lossy(order + 1)));
    }
    sum
}

/// `g1(s) = sum s^k/(k!(k+1)!)`.
pub fn g1<T: Real>(s: T) -> Result<T> {
    g1_series(s, 0).map(|v| v.value)
}

/// First derivative of [`g1`].
pub fn g1_prime<T: Real>(s: T) -> Result<T> {
    g1_series(s, 1).map(|v| v.value)
}

/// Second derivative of [`g1`].
pub fn g1_second<T: Real>(s: T) -> Result<T> {
    g1_series(s, 2).map(|v| v.value)
}

/// Derivative of arbitrary order.
pub fn g1_derivative<T: Real>(s: T, order: usize) -> Result<T> {
    g1_series(s, order).map(|v| v.value)
}
