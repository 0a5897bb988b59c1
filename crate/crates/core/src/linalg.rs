//! Dense LU factorization with partial pivoting.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(x).fold(T::zero(), |a, (&r, &v)| a + r * v))
            .collect()
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// `P A = L U`, with `L` unit lower triangular stored below the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn factor(mut a: Matrix<T>) -> Result<Self> {
        let n = a.n;
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.data.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tiny = scale * T::epsilon() * T::from_usize_lossy(n.max(1));
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, a[(i, k)].abs()))
                    .fold(
                        (k, -T::one()),
                        |best, c| if c.1 > best.1 { c } else { best },
                    );
            if !(pivot > tiny) {
                return Err(Error::Singular(k));
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = a[(k, k)];
            for i in k + 1..n {
                let f = a[(i, k)] / d;
                a[(i, k)] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let v = a[(k, j)];
                        a[(i, j)] = a[(i, j)] - f * v;
                    }
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.lu.n;
        if b.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: b.len(),
            });
        }
        let mut x: Vec<T> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let row = &self.lu.data[i * n..i * n + i];
            let s = row
                .iter()
                .zip(&x[..i])
                .fold(T::zero(), |a, (&l, &v)| a + l * v);
            x[i] = x[i] - s;
        }
        for i in (0..n).rev() {
            let row = &self.lu.data[i * n + i + 1..(i + 1) * n];
            let s = row
                .iter()
                .zip(&x[i + 1..])
                .fold(T::zero(), |a, (&u, &v)| a + u * v);
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_with_pivoting() {
        let mut a = Matrix::<f64>::zeros(3);
        let rows = [[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = rows[i][j];
            }
        }
        let x_true = [1.0, -2.0, 0.5];
        let b = a.mul_vec(&x_true);
        let x = Lu::factor(a).unwrap().solve(&b).unwrap();
        for (u, v) in x.iter().zip(x_true) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_is_reported() {
        let mut a = Matrix::<f64>::zeros(2);
        a[(0, 0)] = 1.0;
        a[(0, 1)] = 2.0;
        a[(1, 0)] = 2.0;
        a[(1, 1)] = 4.0;
        assert!(matches!(Lu::factor(a), Err(Error::Singular(1))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn diagonally_dominant_round_trip(
                vals in proptest::collection::vec(-1.0f64..1.0, 36),
                x in proptest::collection::vec(-10.0f64..10.0, 6),
            ) {
                let mut a = Matrix::<f64>::zeros(6);
                for i in 0..6 {
                    for j in 0..6 {
                        a[(i, j)] = vals[i * 6 + j] + if i == j { 7.0 } else { 0.0 };
                    }
                }
                let b = a.mul_vec(&x);
                let y = Lu::factor(a).unwrap().solve(&b).unwrap();
                for (u, v) in y.iter().zip(&x) {
                    prop_assert!((u - v).abs() < 1e-11);
                }
            }
        }
    }
}
