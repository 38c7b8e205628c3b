//! Subspace and support recovery metrics.

use std::io::Write;

use ndarray::{ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::linalg::orthonormal_basis;
use crate::scalar::Scalar;

/// Columns shorter than this fraction of the longest column are treated as
/// numerically null when orthonormalizing.
pub const RANK_TOL: f64 = 1e-10;

/// Explained variance of the column span of `l_est` against that of
/// `u_true`: `||Q_est^T Q_true||_F^2 / r_true` with both factors
/// orthonormalized.
///
/// Equals the normalized trace of the product of the two orthogonal
/// projectors, so it lies in `[0, 1]`, does not depend on the choice of basis
/// and is 1 exactly when the true subspace is contained in the estimate.
/// `r_true` counts the numerically independent columns of `u_true`. An
/// all-zero estimate (or truth) yields 0.
pub fn explained_variance<T: Scalar>(l_est: ArrayView2<T>, u_true: ArrayView2<T>) -> T {
    let tol = T::lit(RANK_TOL);
    let qe = orthonormal_basis(l_est, tol);
    let qt = orthonormal_basis(u_true, tol);
    if qe.ncols() == 0 || qt.ncols() == 0 {
        return T::zero();
    }
    let cross = qe.t().dot(&qt);
    let total = cross.iter().fold(T::zero(), |s, &x| s + x * x);
    total / T::count(qt.ncols())
}

/// Numerical rank of `a` at the threshold used by [`explained_variance`].
/// A rank of zero marks the degenerate all-zero case.
pub fn numerical_rank<T: Scalar>(a: ArrayView2<T>) -> usize {
    orthonormal_basis(a, T::lit(RANK_TOL)).ncols()
}

/// F1 score of the detected support `{|e_est| > threshold}` against the true
/// support `{e_true != 0}`. Two empty supports score 1.
pub fn support_f1<T: Scalar>(e_est: ArrayView2<T>, e_true: ArrayView2<T>, threshold: T) -> Result<f64> {
    if e_est.dim() != e_true.dim() {
        return Err(Error::Dimension {
            context: "support_f1",
            expected: e_true.len(),
            found: e_est.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    Zip::from(e_est).and(e_true).for_each(|&est, &tru| {
        match (est.abs() > threshold, tru != T::zero()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    });
    if tp + fp + fn_ == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// Explained-variance curve of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct EvTrace {
    /// One value per processed sample.
    pub values: Vec<f64>,
    /// Seed of the run, if any.
    pub seed: Option<u64>,
    /// Algorithm label.
    pub label: String,
}

impl EvTrace {
    /// Value after sample `t` (1-based).
    pub fn at(&self, t: usize) -> Option<f64> {
        t.checked_sub(1).and_then(|i| self.values.get(i).copied())
    }

    /// Writes the trace as CSV with header `sample,ev`, 1-based sample
    /// indices and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "sample,ev")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{:.16e}", i + 1, v)?;
        }
        Ok(())
    }
}

/// Pointwise mean of equally long traces. The result keeps the label of the
/// first trace and drops the seed.
pub fn mean_trace(traces: &[EvTrace]) -> Result<EvTrace> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Config("mean of an empty set of traces".into()))?;
    let n = first.values.len();
    for t in traces {
        if t.values.len() != n {
            return Err(Error::Dimension {
                context: "mean_trace",
                expected: n,
                found: t.values.len(),
            });
        }
    }
    let k = traces.len() as f64;
    let values = (0..n)
        .map(|i| traces.iter().map(|t| t.values[i]).sum::<f64>() / k)
        .collect();
    Ok(EvTrace {
        values,
        seed: None,
        label: first.label.clone(),
    })
}
