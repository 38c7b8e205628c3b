//! Implicit-regularization gradient solvers.
//!
//! * [`hp_grad`] recovers a sparse vector from a noisy copy of itself by
//!   writing `e = m^2 - n^2` and running multiplicative gradient steps from
//!   `m = n = alpha`. Small entries stay pinned near `alpha^2`, large ones are
//!   tracked: early stopping acts as an l1 penalty.
//! * [`hp_mom_grad`] fits coefficients `r = u^2 - v^2` against a basis with
//!   heavy-ball momentum; stopping at time `t` behaves like ridge with weight
//!   `2 / t^2`.
//! * [`hp_group_grad`] moves the basis factors `g` and `V` of
//!   `L = (g^2 1^T) * V` along the gradient of the fidelity loss.
//!
//! Every solver aborts with [`Error::Divergence`] when an iterate turns
//! non-finite or the loss grows past `100 * (initial + 1)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{check_len, Error, Result};
use crate::linalg::{cholesky_solve, gershgorin_bound, max_abs, median_abs};
use crate::model::{derive_basis, SubspaceState};
use crate::scalar::Scalar;

const RUNAWAY_FACTOR: f64 = 1e2;

fn runaway<T: Scalar>(loss: T, initial: T) -> bool {
    !loss.is_finite() || loss > T::lit(RUNAWAY_FACTOR) * (initial + T::one())
}

/// Positive and negative Hadamard factors of a sparse vector.
#[derive(Clone, Debug, PartialEq)]
pub struct HadamardPair<T> {
    /// Positive-part factor.
    pub m: Array1<T>,
    /// Negative-part factor.
    pub n: Array1<T>,
}

impl<T: Scalar> HadamardPair<T> {
    /// Both factors equal to `alpha`, so the represented vector is zero.
    pub fn new(len: usize, alpha: T) -> Self {
        Self {
            m: Array1::from_elem(len, alpha),
            n: Array1::from_elem(len, alpha),
        }
    }

    /// The represented vector `m^2 - n^2`.
    pub fn value(&self) -> Array1<T> {
        Zip::from(&self.m).and(&self.n).map_collect(|&m, &n| m * m - n * n)
    }

    /// One multiplicative step `m *= 1 + eta_i d_i`, `n *= 1 - eta_i d_i`.
    pub fn step(&mut self, delta: ArrayView1<T>, eta: impl Fn(usize) -> T) {
        for i in 0..self.m.len() {
            let s = eta(i) * delta[i];
            self.m[i] *= T::one() + s;
            self.n[i] *= T::one() - s;
        }
    }
}

/// Loss minimized by [`hp_grad`]: `(1/p) * ||target - e||^2`.
pub fn hadamard_loss<T: Scalar>(target: ArrayView1<T>, pair: &HadamardPair<T>) -> T {
    let p = T::count(target.len().max(1));
    let e = pair.value();
    let mut acc = T::zero();
    for i in 0..target.len() {
        let d = target[i] - e[i];
        acc += d * d;
    }
    acc / p
}

/// Analytic gradient of [`hadamard_loss`] with respect to `(m, n)`.
pub fn hadamard_gradient<T: Scalar>(
    target: ArrayView1<T>,
    pair: &HadamardPair<T>,
) -> (Array1<T>, Array1<T>) {
    let delta = hadamard_delta(target, &pair.value());
    let gm = Zip::from(&delta).and(&pair.m).map_collect(|&d, &m| -d * m);
    let gn = Zip::from(&delta).and(&pair.n).map_collect(|&d, &n| d * n);
    (gm, gn)
}

fn hadamard_delta<T: Scalar>(target: ArrayView1<T>, e: &Array1<T>) -> Array1<T> {
    let c = T::lit(4.0) / T::count(target.len().max(1));
    Zip::from(target).and(e).map_collect(|&t, &e| c * (t - e))
}

/// Sparse recovery with one learning rate shared by every coordinate.
///
/// Runs `budget` multiplicative steps from `m = n = alpha` on
/// `(1/p) * ||target - e||^2` and returns `e`. A zero budget returns zeros.
pub fn hp_grad<T: Scalar>(target: ArrayView1<T>, budget: usize, eta: T, alpha: T) -> Result<Array1<T>> {
    hp_grad_with(target, budget, alpha, |_| eta)
}

/// Sparse recovery with a separate learning rate per coordinate.
pub fn hp_grad_scaled<T: Scalar>(
    target: ArrayView1<T>,
    budget: usize,
    eta: ArrayView1<T>,
    alpha: T,
) -> Result<Array1<T>> {
    check_len("hp_grad_scaled eta", target.len(), eta.len())?;
    hp_grad_with(target, budget, alpha, |i| eta[i])
}

fn hp_grad_with<T: Scalar>(
    target: ArrayView1<T>,
    budget: usize,
    alpha: T,
    eta: impl Fn(usize) -> T,
) -> Result<Array1<T>> {
    let p = target.len();
    let mut pair = HadamardPair::new(p, alpha);
    let mut e = Array1::zeros(p);
    let initial = hadamard_loss(target, &pair);
    let mut last = initial;
    for k in 0..budget {
        let delta = hadamard_delta(target, &e);
        pair.step(delta.view(), &eta);
        e = pair.value();
        let loss = hadamard_loss(target, &pair);
        if runaway(loss, initial) {
            return Err(Error::Divergence {
                solver: "hp_grad",
                iteration: k + 1,
                last_loss: last.to_f64_lossy(),
            });
        }
        last = loss;
    }
    Ok(e)
}

/// Shared rate `p / (8 (max|target| + 1))`, which keeps `eta * |delta|`
/// below one half at the first step.
pub fn auto_eta_e<T: Scalar>(target: ArrayView1<T>) -> T {
    let p = T::count(target.len());
    p / (T::lit(8.0) * (max_abs(target) + T::one()))
}

/// Per-coordinate rates `p / (8 (|target_i| + s))` with the robust scale
/// `s = max(scale_factor * median|target|, alpha^2)`.
///
/// Coordinates far above the typical residual reach their target within a
/// few dozen steps while coordinates at the typical level grow only by a
/// bounded factor, so the effective threshold tracks the data scale instead
/// of a fixed constant.
pub fn robust_eta_e<T: Scalar>(target: ArrayView1<T>, scale_factor: T, alpha: T) -> Array1<T> {
    let p = T::count(target.len());
    let s = (scale_factor * median_abs(target)).max(alpha * alpha);
    target.mapv(|t| p / (T::lit(8.0) * (t.abs() + s)))
}

/// Early-stopping budget
/// `min(cap, ceil(15/16 * p * log2((max_abs - alpha^2) / (alpha * eta))))`,
/// falling back to 1 when `max_abs <= alpha^2` or the log argument is at most 1.
pub fn hp_grad_budget<T: Scalar>(max_abs: T, p: usize, eta: T, alpha: T, cap: usize) -> usize {
    let a2 = alpha * alpha;
    if !(max_abs > a2) {
        return 1;
    }
    let arg = (max_abs - a2) / (alpha * eta);
    if !(arg > T::one()) || !arg.is_finite() {
        return 1;
    }
    let steps = (T::lit(15.0 / 16.0) * T::count(p) * arg.log2()).ceil();
    let steps = steps.to_f64_lossy();
    if steps >= cap as f64 {
        cap.max(1)
    } else {
        (steps as usize).max(1)
    }
}

/// Hadamard factors and velocities of the coefficient solver.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumPair<T> {
    /// Positive-part factor.
    pub u: Array1<T>,
    /// Negative-part factor.
    pub v: Array1<T>,
    /// Velocity of `u`.
    pub vel_u: Array1<T>,
    /// Velocity of `v`.
    pub vel_v: Array1<T>,
}

impl<T: Scalar> MomentumPair<T> {
    /// Factors at `alpha`, velocities at zero.
    pub fn new(len: usize, alpha: T) -> Self {
        Self {
            u: Array1::from_elem(len, alpha),
            v: Array1::from_elem(len, alpha),
            vel_u: Array1::zeros(len),
            vel_v: Array1::zeros(len),
        }
    }

    /// The represented coefficients `u^2 - v^2`.
    pub fn value(&self) -> Array1<T> {
        Zip::from(&self.u).and(&self.v).map_collect(|&u, &v| u * u - v * v)
    }

    /// One heavy-ball step with gradient signal `delta`.
    pub fn step(&mut self, delta: ArrayView1<T>, mu: T, eta: T) {
        for j in 0..self.u.len() {
            self.vel_u[j] = mu * self.vel_u[j] + eta * self.u[j] * delta[j];
            self.u[j] += self.vel_u[j];
            self.vel_v[j] = mu * self.vel_v[j] - eta * self.v[j] * delta[j];
            self.v[j] += self.vel_v[j];
        }
    }
}

/// Loss minimized by [`hp_mom_grad`]: `(1/p) * ||target - L r||^2`.
pub fn momentum_loss<T: Scalar>(target: ArrayView1<T>, l: ArrayView2<T>, r: ArrayView1<T>) -> T {
    let res = &target - &l.dot(&r);
    res.dot(&res) / T::count(target.len().max(1))
}

/// Analytic gradient of [`momentum_loss`] with respect to `(u, v)`.
pub fn momentum_gradient<T: Scalar>(
    target: ArrayView1<T>,
    l: ArrayView2<T>,
    pair: &MomentumPair<T>,
) -> (Array1<T>, Array1<T>) {
    let r = pair.value();
    let res = &target - &l.dot(&r);
    let c = T::lit(4.0) / T::count(target.len().max(1));
    let delta = l.t().dot(&res).mapv(|x| c * x);
    let gu = Zip::from(&delta).and(&pair.u).map_collect(|&d, &u| -d * u);
    let gv = Zip::from(&delta).and(&pair.v).map_collect(|&d, &v| d * v);
    (gu, gv)
}

/// Coefficient fit with heavy-ball momentum.
///
/// Iterates `delta = (4/p) L^T (target - L r)` with the velocity updates of
/// [`MomentumPair::step`] from `u = v = alpha`. Columns of `L` that are zero
/// simply receive zero gradient.
pub fn hp_mom_grad<T: Scalar>(
    target: ArrayView1<T>,
    l: ArrayView2<T>,
    mu: T,
    budget: usize,
    eta: T,
    alpha: T,
) -> Result<Array1<T>> {
    check_len("hp_mom_grad basis rows", target.len(), l.nrows())?;
    let gram = l.t().dot(&l);
    let proj = l.t().dot(&target);
    momentum_solve(gram.view(), proj.view(), target.dot(&target), target.len(), mu, budget, eta, alpha)
}

/// [`hp_mom_grad`] expressed through the Gram matrix `G = L^T L`, the
/// projection `b = L^T target` and `||target||^2`. Each iteration costs
/// `O(r^2)` instead of `O(p r)`.
#[allow(clippy::too_many_arguments)]
pub fn momentum_solve<T: Scalar>(
    gram: ArrayView2<T>,
    proj: ArrayView1<T>,
    target_sq: T,
    p: usize,
    mu: T,
    budget: usize,
    eta: T,
    alpha: T,
) -> Result<Array1<T>> {
    let r = proj.len();
    let pf = T::count(p.max(1));
    let c = T::lit(4.0) / pf;
    let loss_of = |x: &Array1<T>| (target_sq - T::lit(2.0) * x.dot(&proj) + x.dot(&gram.dot(x))) / pf;
    let mut pair = MomentumPair::new(r, alpha);
    let mut x = Array1::zeros(r);
    let initial = target_sq / pf;
    let mut last = initial;
    for k in 0..budget {
        let delta = (&proj - &gram.dot(&x)).mapv(|d| c * d);
        pair.step(delta.view(), mu, eta);
        x = pair.value();
        let loss = loss_of(&x);
        if runaway(loss, initial) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                solver: "hp_mom_grad",
                iteration: k + 1,
                last_loss: last.to_f64_lossy(),
            });
        }
        last = loss;
    }
    Ok(x)
}

/// Automatic coefficient rate for Gram matrix `gram` and projection `proj`:
/// `coef_step * (1 - mu) * p / (8 * max(R, alpha^2) * lambda)`.
///
/// `lambda` is the Gershgorin bound on the curvature of the Gram matrix and
/// `R` the largest magnitude of the least-squares coefficients, which is the
/// largest value the Hadamard factors must reach. The `(1 - mu)` factor
/// accounts for the momentum amplification of the effective step.
pub fn auto_eta_r<T: Scalar>(
    gram: ArrayView2<T>,
    proj: ArrayView1<T>,
    p: usize,
    mu: T,
    alpha: T,
    coef_step: T,
) -> T {
    let lambda = gershgorin_bound(gram);
    if !(lambda > T::zero()) {
        return T::zero();
    }
    let r = proj.len();
    let trace = (0..r).fold(T::zero(), |s, j| s + gram[[j, j]]);
    let mut shifted = gram.to_owned();
    let ridge = T::lit(1e-12) * trace.max(T::min_positive_value());
    for j in 0..r {
        shifted[[j, j]] += ridge;
    }
    let reach = cholesky_solve(shifted.view(), proj)
        .map(|x| max_abs(x.view()))
        .filter(|v| v.is_finite())
        .unwrap_or_else(|| max_abs(proj) / lambda);
    coef_step * (T::one() - mu) * T::count(p) / (T::lit(8.0) * reach.max(alpha * alpha) * lambda)
}

/// Loss minimized by [`hp_group_grad`]: `0.5 * ||target - L r||^2`.
pub fn group_loss<T: Scalar>(target: ArrayView1<T>, r: ArrayView1<T>, state: &SubspaceState<T>) -> T {
    let res = derive_basis(state).dot(&r) - target;
    T::lit(0.5) * res.dot(&res)
}

/// Analytic gradient of [`group_loss`] with respect to `(g, V)`.
pub fn group_gradient<T: Scalar>(
    target: ArrayView1<T>,
    r: ArrayView1<T>,
    state: &SubspaceState<T>,
) -> (Array1<T>, Array2<T>) {
    let (grad_rows, resid_outer) = group_terms(target, r, state);
    let grad_g = grad_rows.mapv(|x| T::lit(2.0) * x);
    let mut grad_v = resid_outer;
    for (mut row, &gi) in grad_v.rows_mut().into_iter().zip(state.g.iter()) {
        let w = gi * gi;
        row.mapv_inplace(|x| x * w);
    }
    (grad_g, grad_v)
}

/// Row term `g_i * sum_j G_ij V_ij` and the residual outer product
/// `G = (L r - target) r^T`.
fn group_terms<T: Scalar>(
    target: ArrayView1<T>,
    r: ArrayView1<T>,
    state: &SubspaceState<T>,
) -> (Array1<T>, Array2<T>) {
    let res = derive_basis(state).dot(&r) - target;
    let p = state.dim();
    let k = state.rank();
    let mut outer = Array2::zeros((p, k));
    let mut rows = Array1::zeros(p);
    for i in 0..p {
        let mut acc = T::zero();
        for j in 0..k {
            let gij = res[i] * r[j];
            outer[[i, j]] = gij;
            acc += gij * state.v[[i, j]];
        }
        rows[i] = state.g[i] * acc;
    }
    (rows, outer)
}

/// Learning rates for the two factor groups of one basis step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupSteps<T> {
    /// Rate applied to `g`.
    pub eta_g: T,
    /// Rate applied to `V`.
    pub eta_v: T,
}

/// Result of a basis update.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupOutcome<T> {
    /// Updated factors.
    pub state: SubspaceState<T>,
    /// Iterations performed.
    pub iterations: usize,
    /// Fidelity after the last iteration.
    pub loss: T,
}

/// Basis update with one rate shared by `g` and `V`.
///
/// Per iteration, with `G = (L r - target) r^T`:
/// `g -= (eta/p) * rowsum(G * g * V)` and `V -= (eta/p) * G * g^2`. The loop
/// stops after `budget` iterations or as soon as the fidelity leaves the open
/// band `(band.0, band.1)`.
pub fn hp_group_grad<T: Scalar>(
    target: ArrayView1<T>,
    r: ArrayView1<T>,
    budget: usize,
    eta_l: T,
    band: (T, T),
    state: &SubspaceState<T>,
) -> Result<GroupOutcome<T>> {
    hp_group_grad_with(target, r, budget, band, state, |_| GroupSteps {
        eta_g: eta_l,
        eta_v: eta_l,
    })
}

/// Basis update whose rates are chosen by `rule` from the state at the start
/// of every iteration.
pub fn hp_group_grad_with<T: Scalar>(
    target: ArrayView1<T>,
    r: ArrayView1<T>,
    budget: usize,
    band: (T, T),
    state: &SubspaceState<T>,
    mut rule: impl FnMut(&GroupStepContext<'_, T>) -> GroupSteps<T>,
) -> Result<GroupOutcome<T>> {
    check_len("hp_group_grad target", state.dim(), target.len())?;
    check_len("hp_group_grad coefficients", state.rank(), r.len())?;
    let p = T::count(state.dim());
    let mut st = state.clone();
    let initial = group_loss(target, r, &st);
    let mut loss = initial;
    let mut iterations = 0;
    for k in 0..budget {
        let (rows, outer) = group_terms(target, r, &st);
        let steps = rule(&GroupStepContext {
            state: &st,
            row_terms: &rows,
        });
        let cg = steps.eta_g / p;
        let cv = steps.eta_v / p;
        for i in 0..st.dim() {
            let w = st.g[i] * st.g[i];
            for j in 0..st.rank() {
                st.v[[i, j]] -= cv * outer[[i, j]] * w;
            }
            st.g[i] -= cg * rows[i];
        }
        iterations = k + 1;
        let next = group_loss(target, r, &st);
        if runaway(next, initial) || st.g.iter().chain(st.v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Divergence {
                solver: "hp_group_grad",
                iteration: iterations,
                last_loss: loss.to_f64_lossy(),
            });
        }
        loss = next;
        if !(loss > band.0 && loss < band.1) {
            break;
        }
    }
    Ok(GroupOutcome {
        state: st,
        iterations,
        loss,
    })
}

/// What a step rule sees at the start of a basis iteration.
pub struct GroupStepContext<'a, T> {
    /// Factors before the step.
    pub state: &'a SubspaceState<T>,
    /// `g_i * sum_j G_ij V_ij`, the update direction of `g`.
    pub row_terms: &'a Array1<T>,
}

/// Descent-safe shared rate `p / (2 max_i lambda_i)` for one basis step.
///
/// The fidelity loss separates over rows. Row `i` is a function of
/// `(g_i, V_i)` whose Hessian is bounded by
/// `lambda_i = 4 g_i^2 s_i^2 + g_i^4 ||r||^2 + |res_i| (2|s_i| + 4|g_i| ||r||)`
/// with `s_i = V_i . r`, so half the inverse bound is a safe step for every
/// row at once. Returns `p` when every bound is zero (nothing can move).
pub fn auto_eta_l<T: Scalar>(target: ArrayView1<T>, r: ArrayView1<T>, state: &SubspaceState<T>) -> T {
    let p = T::count(state.dim());
    let res = derive_basis(state).dot(&r) - target;
    let s = state.v.dot(&r);
    let rn = r.dot(&r).sqrt();
    let mut worst = T::zero();
    for i in 0..state.dim() {
        let g = state.g[i];
        let g2 = g * g;
        let lam = T::lit(4.0) * g2 * s[i] * s[i]
            + g2 * g2 * rn * rn
            + res[i].abs() * (T::lit(2.0) * s[i].abs() + T::lit(4.0) * g.abs() * rn);
        if lam > worst {
            worst = lam;
        }
    }
    if worst > T::zero() {
        p / (T::lit(2.0) * worst)
    } else {
        p
    }
}
