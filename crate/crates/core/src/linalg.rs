//! Dense linear solve for exact policy evaluation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solves `A x = b` for a dense row-major `n x n` matrix by Gaussian
/// elimination with partial pivoting. `a` and `b` are consumed as scratch.
pub fn solve_dense<T: Scalar>(mut a: Vec<T>, mut b: Vec<T>) -> Result<Vec<T>> {
    let n = b.len();
    assert_eq!(a.len(), n * n, "matrix must be n x n");
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty pivot range");
        let pivot_val = a[pivot * n + col];
        if !(pivot_val.abs() > T::zero()) || !pivot_val.is_finite() {
            return Err(Error::SingularSystem(col));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            b.swap(pivot, col);
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot_val;
            if factor == T::zero() {
                continue;
            }
            a[row * n + col] = T::zero();
            for k in col + 1..n {
                a[row * n + k] = a[row * n + k] - factor * a[col * n + k];
            }
            b[row] = b[row] - factor * b[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc = acc - a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}
