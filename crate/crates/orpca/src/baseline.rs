//! Explicit-regularization online robust PCA, the reference the implicit
//! engine is compared against.
//!
//! Per sample it alternates an exact ridge solve for the coefficients with a
//! soft-threshold for the outliers, then accumulates `A = sum r r^T` and
//! `B = sum (z - e) r^T` and takes one block-coordinate pass over the basis
//! columns. A zero basis is seeded column by column exactly as in the
//! implicit engine so that both methods start from the same footing.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::engine::{stack_cols, stack_rows, History, StreamReport};
use crate::error::{check_len, Error, Result};
use crate::linalg::{cholesky_solve, norm, orthonormal_basis};
use crate::metrics::explained_variance;
use crate::model::{fidelity_loss, ExplicitParams, SampleDecomposition, SubspaceState};
use crate::scalar::Scalar;

/// `sign(x_i) * max(|x_i| - tau, 0)`, the minimizer of
/// `0.5 (x_i - e_i)^2 + tau |e_i|`.
pub fn soft_threshold<T: Scalar>(x: ArrayView1<T>, tau: T) -> Array1<T> {
    x.mapv(|v| {
        let m = v.abs() - tau;
        if m > T::zero() {
            v.signum() * m
        } else {
            T::zero()
        }
    })
}

/// Exact minimizer `(L^T L + lambda1 I)^-1 L^T y` of
/// `0.5 ||y - L r||^2 + 0.5 lambda1 ||r||^2`.
pub fn solve_r_ridge<T: Scalar>(y: ArrayView1<T>, l: ArrayView2<T>, lambda1: T) -> Result<Array1<T>> {
    check_len("solve_r_ridge basis rows", y.len(), l.nrows())?;
    if !(lambda1 > T::zero()) {
        return Err(Error::Config("lambda1 must be positive".into()));
    }
    let mut a = l.t().dot(&l);
    for j in 0..a.nrows() {
        a[[j, j]] += lambda1;
    }
    let b = l.t().dot(&y);
    cholesky_solve(a.view(), b.view()).ok_or(Error::NonFinite("ridge normal equations"))
}

/// Basis and accumulators of the baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineState<T> {
    /// Basis, `p x r`.
    pub l: Array2<T>,
    /// Accumulated `sum r r^T`, `r x r`.
    pub a: Array2<T>,
    /// Accumulated `sum (z - e) r^T`, `p x r`.
    pub b: Array2<T>,
    /// Outliers of the previous sample.
    pub prev_e: Array1<T>,
    /// Samples processed.
    pub t: usize,
}

impl<T: Scalar> BaselineState<T> {
    /// Zero basis and accumulators.
    pub fn new(p: usize, rank: usize) -> Self {
        Self {
            l: Array2::zeros((p, rank)),
            a: Array2::zeros((rank, rank)),
            b: Array2::zeros((p, rank)),
            prev_e: Array1::zeros(p),
            t: 0,
        }
    }
}

/// Adds the sample to the accumulators and runs one coordinate pass
/// `L_j += (B_j - L (A + lambda1 I)_j) / (A_jj + lambda1)` over the columns.
pub fn baseline_update_l<T: Scalar>(
    state: &mut BaselineState<T>,
    y: ArrayView1<T>,
    r: ArrayView1<T>,
    lambda1: T,
) -> Result<()> {
    let (p, k) = state.l.dim();
    check_len("baseline_update_l sample", p, y.len())?;
    check_len("baseline_update_l coefficients", k, r.len())?;
    for i in 0..k {
        for j in 0..k {
            state.a[[i, j]] += r[i] * r[j];
        }
    }
    for i in 0..p {
        for j in 0..k {
            state.b[[i, j]] += y[i] * r[j];
        }
    }
    let mut at = state.a.clone();
    for j in 0..k {
        at[[j, j]] += lambda1;
    }
    for j in 0..k {
        let lcol = state.l.dot(&at.column(j));
        let d = at[[j, j]];
        for i in 0..p {
            state.l[[i, j]] += (state.b[[i, j]] - lcol[i]) / d;
        }
    }
    Ok(())
}

/// Surrogate `0.5 tr(L^T L (A + lambda1 I)) - tr(L^T B)` minimized by the
/// coordinate pass.
pub fn surrogate_objective<T: Scalar>(state: &BaselineState<T>, lambda1: T) -> T {
    let mut at = state.a.clone();
    for j in 0..at.nrows() {
        at[[j, j]] += lambda1;
    }
    let ltl = state.l.t().dot(&state.l);
    let quad = (&ltl * &at).sum();
    let lin = (&state.l * &state.b).sum();
    T::lit(0.5) * quad - lin
}

/// Settings of a baseline run.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig<T> {
    /// Target rank.
    pub rank: usize,
    /// Penalty weights.
    pub params: ExplicitParams<T>,
    /// Maximum alternation rounds per sample.
    pub t0: usize,
    /// Relative-change threshold ending the alternation.
    pub conv_tol: T,
    /// Relative residual norm above which an unused column is seeded.
    pub seed_tol: T,
    /// Keep every coefficient vector and outlier vector.
    pub accumulate_outputs: bool,
}

impl<T: Scalar> BaselineConfig<T> {
    /// Defaults for the given rank and weights.
    pub fn new(rank: usize, params: ExplicitParams<T>) -> Self {
        Self {
            rank,
            params,
            t0: 50,
            conv_tol: T::lit(1e-3),
            seed_tol: T::lit(1e-2),
            accumulate_outputs: false,
        }
    }
}

/// The explicit-regularization streaming baseline.
#[derive(Clone, Debug)]
pub struct ExplicitRpca<T> {
    config: BaselineConfig<T>,
    state: BaselineState<T>,
    history: Option<History<T>>,
}

impl<T: Scalar> ExplicitRpca<T> {
    /// Fresh baseline for samples of dimension `p`.
    pub fn new(p: usize, config: BaselineConfig<T>) -> Result<Self> {
        if config.rank == 0 || config.rank > p {
            return Err(Error::Config(format!("rank must lie in 1..={p}, got {}", config.rank)));
        }
        ExplicitParams::new(config.params.lambda1, config.params.lambda2)?;
        if config.t0 == 0 || !(config.conv_tol > T::zero()) {
            return Err(Error::Config("t0 and conv_tol must be positive".into()));
        }
        let history = config.accumulate_outputs.then(History::default);
        Ok(Self {
            state: BaselineState::new(p, config.rank),
            config,
            history,
        })
    }

    /// Current state.
    pub fn state(&self) -> &BaselineState<T> {
        &self.state
    }

    /// Processes one sample: ridge and soft-threshold alternation started
    /// from zero outliers, then seeding or one basis pass.
    pub fn process(&mut self, z: ArrayView1<T>) -> Result<SampleDecomposition<T>> {
        let (p, k) = self.state.l.dim();
        check_len("baseline sample", p, z.len())?;
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("baseline sample"));
        }
        let ExplicitParams { lambda1, lambda2 } = self.config.params;
        let zn = {
            let n = norm(z);
            if n > T::zero() {
                n
            } else {
                T::one()
            }
        };
        let l = self.state.l.clone();
        let mut e = Array1::zeros(p);
        let mut r = Array1::zeros(k);
        let mut r_ref = r.clone();
        let mut e_ref = e.clone();
        let mut rounds = 0;
        while rounds < self.config.t0 {
            rounds += 1;
            r = solve_r_ridge((&z - &e).view(), l.view(), lambda1)?;
            e = soft_threshold((&z - &l.dot(&r)).view(), lambda2);
            let d = (norm((&r - &r_ref).view()) / zn).max(norm((&e - &e_ref).view()) / zn);
            r_ref.assign(&r);
            e_ref.assign(&e);
            if d < self.config.conv_tol {
                break;
            }
        }
        let fidelity = fidelity_loss(z, l.dot(&r).view(), e.view())?;
        let cleaned = &z - &e;
        if !self.seed(cleaned.view(), r.view()) {
            baseline_update_l(&mut self.state, cleaned.view(), r.view(), lambda1)?;
        }
        if let Some(h) = self.history.as_mut() {
            h.r.push(r.clone());
            h.e.push(e.clone());
        }
        self.state.prev_e = e.clone();
        self.state.t += 1;
        Ok(SampleDecomposition {
            r_coef: r,
            e,
            inner_iters: rounds,
            fidelity,
            diverged: false,
        })
    }

    fn seed(&mut self, cleaned: ArrayView1<T>, r: ArrayView1<T>) -> bool {
        let l = &self.state.l;
        let k = l.ncols();
        let Some(j) = (0..k).find(|&c| l.column(c).iter().all(|&x| x == T::zero())) else {
            return false;
        };
        let mut res = &cleaned - &l.dot(&r);
        let used: Vec<usize> = (0..k).filter(|&c| l.column(c).iter().any(|&x| x != T::zero())).collect();
        if !used.is_empty() {
            let q = orthonormal_basis(l.select(Axis(1), &used).view(), T::lit(1e-10));
            let coef = q.t().dot(&res);
            res = res - q.dot(&coef);
        }
        let rn = norm(res.view());
        if rn > T::zero() && rn > self.config.seed_tol * norm(cleaned) {
            self.state.l.column_mut(j).assign(&res.mapv(|x| x / rn));
            true
        } else {
            false
        }
    }
}

/// Streams the columns of `z` through a fresh baseline.
pub fn run_baseline<T: Scalar>(
    z: ArrayView2<T>,
    config: &BaselineConfig<T>,
    truth: Option<ArrayView2<T>>,
) -> Result<StreamReport<T>> {
    let (p, n) = z.dim();
    if n == 0 {
        return Err(Error::Config("stream must contain at least one sample".into()));
    }
    let start = Instant::now();
    let mut model = ExplicitRpca::new(p, config.clone())?;
    let mut ev = Vec::new();
    let mut inner_iters = Vec::with_capacity(n);
    let mut fidelity = Vec::with_capacity(n);
    for col in z.axis_iter(Axis(1)) {
        let d = model.process(col)?;
        inner_iters.push(d.inner_iters);
        fidelity.push(d.fidelity);
        if let Some(u) = truth {
            ev.push(explained_variance(model.state.l.view(), u));
        }
    }
    let basis = model.state.l.clone();
    let (r, e) = match model.history.take() {
        Some(h) => (Some(stack_rows(&h.r, config.rank)), Some(stack_cols(&h.e, p))),
        None => (None, None),
    };
    Ok(StreamReport {
        subspace: SubspaceState {
            g: Array1::ones(p),
            v: basis.clone(),
        },
        basis,
        r,
        e,
        ev,
        inner_iters,
        fidelity,
        diverged: vec![false; n],
        wall_time: start.elapsed(),
    })
}
