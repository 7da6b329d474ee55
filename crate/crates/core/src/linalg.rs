//! Small dense linear algebra on plain arrays, generic over the scalar.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];

#[inline]
pub fn mat_vec<T: Scalar>(m: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    let mut out = [T::zero(); 3];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
    }
    out
}

#[inline]
pub fn mat_mul<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

#[inline]
pub fn sub3<T: Scalar>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn norm3<T: Scalar>(v: &Vec3<T>) -> T {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[inline]
pub fn norm_inf<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Determinant of the matrix whose columns are `a`, `b`, `c`.
pub fn det_columns<T: Scalar>(a: &Vec3<T>, b: &Vec3<T>, c: &Vec3<T>) -> T {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - b[0] * (a[1] * c[2] - a[2] * c[1])
        + c[0] * (a[1] * b[2] - a[2] * b[1])
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// `a` is row-major `n x n`.
pub fn solve<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::Numeric("solve: dimension mismatch".into()));
    }
    let scale = a.iter().flatten().fold(T::zero(), |m, x| m.max(x.abs()));
    let tiny = scale * T::epsilon() * T::from_usize_lossy(n.max(1));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()).unwrap();
        if !(a[piv][col].abs() > tiny) {
            return Err(Error::Numeric(format!("singular system at column {col}")));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Singular values (descending) of the `3 x n` matrix with the given
/// columns, by one-sided Jacobi rotations on its three rows.
pub fn singular_values_3xn<T: Scalar>(columns: &[Vec3<T>]) -> Vec3<T> {
    let mut rows: [Vec<T>; 3] = std::array::from_fn(|r| columns.iter().map(|c| c[r]).collect());
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + *x * *y);
    let tol = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..2 {
            for q in p + 1..3 {
                let alpha = dot(&rows[p], &rows[p]);
                let beta = dot(&rows[q], &rows[q]);
                let gamma = dot(&rows[p], &rows[q]);
                if gamma.abs() <= tol * (alpha * beta).sqrt() || gamma == T::zero() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::cst(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = rows.split_at_mut(q);
                for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv = [0, 1, 2].map(|r| dot(&rows[r], &rows[r]).sqrt());
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Numerical rank with singular values above `rel_tol * sigma_max`.
pub fn rank_3xn<T: Scalar>(columns: &[Vec3<T>], rel_tol: T) -> usize {
    if columns.is_empty() {
        return 0;
    }
    let sv = singular_values_3xn(columns);
    if !(sv[0] > T::zero()) {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * sv[0]).count()
}
