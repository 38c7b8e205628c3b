//! Small dense kernels. The rank is a few tens at most, so plain loops over
//! `ndarray` views are all that is needed here.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::scalar::Scalar;

/// Solves `a x = b` for symmetric positive-definite `a` by Cholesky
/// factorization. Returns `None` when a pivot is not strictly positive.
pub fn cholesky_solve<T: Scalar>(a: ArrayView2<T>, b: ArrayView1<T>) -> Option<Array1<T>> {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), n);
    debug_assert_eq!(b.len(), n);
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / d;
        }
    }
    let mut y = Array1::<T>::zeros(n);
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[[i, k]] * y[k];
        }
        y[i] = v / l[[i, i]];
    }
    let mut x = Array1::<T>::zeros(n);
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in (i + 1)..n {
            v -= l[[k, i]] * x[k];
        }
        x[i] = v / l[[i, i]];
    }
    Some(x)
}

/// Orthonormal basis for the column span of `a` by modified Gram-Schmidt
/// with one re-orthogonalization pass.
///
/// A column is dropped when its component orthogonal to the columns already
/// accepted is shorter than `rel_tol` times the largest input column norm,
/// so exactly or numerically null directions never enter the basis. The
/// result has `p` rows and between zero and `a.ncols()` columns.
pub fn orthonormal_basis<T: Scalar>(a: ArrayView2<T>, rel_tol: T) -> Array2<T> {
    let p = a.nrows();
    let lead = a
        .axis_iter(Axis(1))
        .map(|c| norm(c))
        .fold(T::zero(), |m, v| if v > m { v } else { m });
    let mut q = Array2::<T>::zeros((p, a.ncols()));
    let mut kept = 0;
    if lead == T::zero() {
        return q.slice(s![.., ..0]).to_owned();
    }
    let floor = rel_tol * lead;
    for col in a.axis_iter(Axis(1)) {
        let mut v = col.to_owned();
        for _pass in 0..2 {
            for k in 0..kept {
                let qk = q.column(k);
                let c = qk.dot(&v);
                v.scaled_add(-c, &qk);
            }
        }
        let nv = norm(v.view());
        if nv > floor {
            v.mapv_inplace(|x| x / nv);
            q.column_mut(kept).assign(&v);
            kept += 1;
        }
    }
    q.slice(s![.., ..kept]).to_owned()
}

/// Euclidean norm.
pub fn norm<T: Scalar>(v: ArrayView1<T>) -> T {
    v.dot(&v).sqrt()
}

/// Largest absolute entry, zero for an empty vector.
pub fn max_abs<T: Scalar>(v: ArrayView1<T>) -> T {
    v.iter().fold(T::zero(), |m, &x| if x.abs() > m { x.abs() } else { m })
}

/// Median of the absolute entries, zero for an empty vector.
pub fn median_abs<T: Scalar>(v: ArrayView1<T>) -> T {
    let mut a: Vec<T> = v.iter().map(|x| x.abs()).collect();
    let n = a.len();
    if n == 0 {
        return T::zero();
    }
    let cmp = |x: &T, y: &T| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal);
    let mid = n / 2;
    let (lo, m, _) = a.select_nth_unstable_by(mid, cmp);
    let m = *m;
    if n % 2 == 1 {
        m
    } else {
        let below = lo.iter().fold(T::neg_infinity(), |acc, &x| if x > acc { x } else { acc });
        (below + m) / T::lit(2.0)
    }
}

/// Gershgorin upper bound on the spectral radius of a square matrix: the
/// largest absolute row sum.
pub fn gershgorin_bound<T: Scalar>(a: ArrayView2<T>) -> T {
    a.axis_iter(Axis(0))
        .map(|row| row.iter().fold(T::zero(), |s, &x| s + x.abs()))
        .fold(T::zero(), |m, v| if v > m { v } else { m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let x_true = array![1.0, -2.0, 0.5];
        let b = a.dot(&x_true);
        let x = cholesky_solve(a.view(), b.view()).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(x[i], x_true[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky_solve(a.view(), array![1.0, 1.0].view()).is_none());
    }

    #[test]
    fn basis_drops_dependent_columns() {
        let a = array![[1.0, 2.0, 0.0], [0.0, 0.0, 1.0], [1.0, 2.0, 0.0]];
        let q = orthonormal_basis(a.view(), 1e-10);
        assert_eq!(q.ncols(), 2);
        let gram = q.t().dot(&q);
        assert_abs_diff_eq!(gram[[0, 0]], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(gram[[0, 1]], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn basis_of_zero_matrix_is_empty() {
        let a = Array2::<f64>::zeros((4, 3));
        assert_eq!(orthonormal_basis(a.view(), 1e-10).ncols(), 0);
    }

    #[test]
    fn median_of_odd_and_even_lengths() {
        assert_eq!(median_abs(array![3.0, -1.0, 2.0].view()), 2.0);
        assert_eq!(median_abs(array![-4.0, 1.0, 2.0, 3.0].view()), 2.5);
        assert_eq!(median_abs(Array1::<f64>::zeros(0).view()), 0.0);
    }

    #[test]
    fn gershgorin_is_max_row_sum() {
        let a = array![[1.0, -2.0], [0.5, 0.5]];
        assert_eq!(gershgorin_bound(a.view()), 3.0);
    }
}
