//! Small dense linear algebra over any [`Scalar`].
//!
//! Matrices here are tiny (at most the ambient dimension plus the number of
//! constraints), so plain Gaussian elimination with magnitude pivoting is
//! enough. Floating-point eigen and singular value work goes through
//! `nalgebra` instead.

use nalgebra::DMatrix;

use crate::scalar::Scalar;

/// Row-major dense matrix.
pub type Matrix<T> = Vec<Vec<T>>;

/// Determinant by elimination. The 0×0 determinant is one.
pub fn determinant<T: Scalar>(m: &Matrix<T>) -> T {
    let n = m.len();
    if n == 0 {
        return T::one();
    }
    let mut a = m.clone();
    let mut det = T::one();
    for col in 0..n {
        let Some(p) = pivot_row(&a, col, col) else {
            return T::zero();
        };
        if p != col {
            a.swap(p, col);
            det = -det;
        }
        let piv = a[col][col].clone();
        det = det * piv.clone();
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].clone() / piv.clone();
            for c in col..n {
                let v = a[col][c].clone();
                a[r][c] = a[r][c].clone() - factor.clone() * v;
            }
        }
    }
    det
}

/// Inverse of a square matrix, or `None` when a pivot vanishes exactly.
pub fn inverse<T: Scalar>(m: &Matrix<T>) -> Option<Matrix<T>> {
    let n = m.len();
    let mut a = m.clone();
    let mut inv: Matrix<T> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    for col in 0..n {
        let p = pivot_row(&a, col, col)?;
        a.swap(p, col);
        inv.swap(p, col);
        let piv = a[col][col].clone();
        for c in 0..n {
            a[col][c] = a[col][c].clone() / piv.clone();
            inv[col][c] = inv[col][c].clone() / piv.clone();
        }
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].clone();
            for c in 0..n {
                let av = a[col][c].clone();
                let iv = inv[col][c].clone();
                a[r][c] = a[r][c].clone() - factor.clone() * av;
                inv[r][c] = inv[r][c].clone() - factor.clone() * iv;
            }
        }
    }
    Some(inv)
}

/// Matrix product.
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    (0..inner).fold(T::zero(), |acc, k| acc + row[k].clone() * b[k][j].clone())
                })
                .collect()
        })
        .collect()
}

/// Matrix-vector product.
pub fn matvec<T: Scalar>(a: &Matrix<T>, x: &[T]) -> Vec<T> {
    a.iter()
        .map(|row| row.iter().zip(x).fold(T::zero(), |acc, (r, v)| acc + r.clone() * v.clone()))
        .collect()
}

/// Leading principal minor of order `k`.
pub fn leading_minor<T: Scalar>(m: &Matrix<T>, k: usize) -> T {
    let sub: Matrix<T> = m.iter().take(k).map(|row| row[..k].to_vec()).collect();
    determinant(&sub)
}

/// Product of the Euclidean row norms: Hadamard's bound on `|det|`.
pub fn hadamard_bound<T: Scalar>(m: &Matrix<T>) -> f64 {
    m.iter()
        .map(|row| row.iter().map(|v| v.to_f64().powi(2)).sum::<f64>().sqrt())
        .product()
}

/// Converts to an `nalgebra` matrix of doubles.
pub fn to_dmatrix<T: Scalar>(m: &Matrix<T>) -> DMatrix<f64> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, cols, |i, j| m[i][j].to_f64())
}

fn pivot_row<T: Scalar>(a: &Matrix<T>, col: usize, start: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (r, row) in a.iter().enumerate().skip(start) {
        if row[col].is_zero() {
            continue;
        }
        let mag = row[col].magnitude();
        if best.is_none_or(|(_, m)| mag > m) {
            best = Some((r, mag));
        }
    }
    best.map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;
    use num_rational::BigRational;

    #[test]
    fn exact_inverse_round_trips() {
        let m: Matrix<BigRational> = vec![
            vec![ratio(2, 1), ratio(1, 3), ratio(0, 1)],
            vec![ratio(-1, 2), ratio(0, 1), ratio(4, 1)],
            vec![ratio(0, 1), ratio(5, 1), ratio(1, 1)],
        ];
        let inv = inverse(&m).unwrap();
        let id = matmul(&m, &inv);
        for (i, row) in id.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, if i == j { ratio(1, 1) } else { ratio(0, 1) });
            }
        }
    }

    #[test]
    fn determinant_against_cofactor_expansion() {
        let m = vec![vec![1.0, 2.0, 3.0], vec![0.5, -1.0, 4.0], vec![2.0, 2.0, -2.0]];
        let cof = 1.0 * (-1.0 * -2.0 - 4.0 * 2.0) - 2.0 * (0.5 * -2.0 - 4.0 * 2.0)
            + 3.0 * (0.5 * 2.0 - -1.0 * 2.0);
        assert!((determinant(&m) - cof).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_has_no_inverse() {
        let m = vec![vec![ratio(1, 1), ratio(2, 1)], vec![ratio(2, 1), ratio(4, 1)]];
        assert!(inverse(&m).is_none());
        assert_eq!(determinant(&m), ratio(0, 1));
    }

    #[test]
    fn empty_determinant_is_one() {
        let m: Matrix<f64> = Vec::new();
        assert_eq!(determinant(&m), 1.0);
    }
}
