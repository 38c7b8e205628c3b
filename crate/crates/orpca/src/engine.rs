//! The streaming driver.
//!
//! Each revealed sample `z` goes through three phases.
//!
//! 1. **Alternation.** The sparse part is first estimated against the
//!    previous sample's coefficients, then coefficient fits and sparse fits
//!    alternate until both stop moving (relative change below `conv_tol`) or
//!    `t0` rounds have run.
//! 2. **Rank seeding.** While some column of `V` is still exactly zero, the
//!    part of the cleaned sample `z - e` that the current basis cannot
//!    explain is written into that column (scaled so the basis column has
//!    unit norm). Columns fill one at a time, each with a direction the
//!    others do not span. Without this, a zero-initialized basis yields zero
//!    coefficients, zero basis gradients and a basis that never moves.
//! 3. **Basis step.** Once the basis is seeded (or the sample brings nothing
//!    new), `g` and `V` take a gradient step on the fidelity of the cleaned
//!    sample. The automatic rates divide by the running sum of squared
//!    coefficient norms, which turns the sequence of per-sample steps into a
//!    stochastic approximation of the batch least-squares basis.
//!
//! With automatic rates the sparse solver runs with per-coordinate steps
//! scaled by the median residual magnitude (see
//! [`robust_eta_e`]) and the coefficient solver runs on a column-normalized
//! copy of the basis, so neither depends on the absolute scale of the data.

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{check_len, Error, Result};
use crate::linalg::{max_abs, norm, orthonormal_basis};
use crate::metrics::explained_variance;
use crate::model::{
    derive_basis, fidelity_loss, Budget, ImplicitHyperParams, SampleDecomposition, StepRule,
    StreamSample, SubspaceState,
};
use crate::scalar::Scalar;
use crate::solvers::{
    auto_eta_e, auto_eta_r, hp_grad, hp_grad_budget, hp_grad_scaled, hp_group_grad_with,
    momentum_solve, robust_eta_e, GroupSteps,
};

/// Numerical-rank threshold used when projecting out the current basis.
const SPAN_TOL: f64 = 1e-10;

/// Configuration of one engine instance.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig<T> {
    /// Target rank `r`.
    pub rank: usize,
    /// Solver hyperparameters.
    pub hyper: ImplicitHyperParams<T>,
    /// Threshold on the relative change that ends the alternation.
    pub conv_tol: T,
    /// Maximum alternation rounds per sample.
    pub t0: usize,
    /// Keep every coefficient vector and outlier vector.
    pub accumulate_outputs: bool,
}

impl<T: Scalar> EngineConfig<T> {
    /// Default configuration for the given rank.
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            hyper: ImplicitHyperParams::default(),
            conv_tol: T::lit(1e-3),
            t0: 50,
            accumulate_outputs: false,
        }
    }

    /// Checks the configuration for ambient dimension `p`.
    pub fn validate(&self, p: usize) -> Result<()> {
        if p == 0 {
            return Err(Error::Config("ambient dimension must be positive".into()));
        }
        if self.rank == 0 || self.rank > p {
            return Err(Error::Config(format!(
                "rank must lie in 1..={p}, got {}",
                self.rank
            )));
        }
        if !(self.conv_tol > T::zero()) {
            return Err(Error::Config("conv_tol must be positive".into()));
        }
        if self.t0 == 0 {
            return Err(Error::Config("t0 must be at least 1".into()));
        }
        self.hyper.validate()
    }
}

/// Optional record of every sample's outputs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct History<T> {
    /// Coefficient vectors in arrival order.
    pub r: Vec<Array1<T>>,
    /// Outlier vectors in arrival order.
    pub e: Vec<Array1<T>>,
}

/// Everything carried from one sample to the next.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineState<T> {
    /// Basis factors.
    pub subspace: SubspaceState<T>,
    /// Coefficients of the previous sample.
    pub prev_r: Array1<T>,
    /// Outliers of the previous sample.
    pub prev_e: Array1<T>,
    /// Samples processed.
    pub t: usize,
    /// Running sum of squared coefficient norms over basis steps.
    pub coef_energy: T,
    /// Samples whose solvers diverged and fell back to the previous estimate.
    pub diverged: usize,
    /// Accumulated outputs when enabled.
    pub history: Option<History<T>>,
}

/// The implicit-regularization streaming engine.
#[derive(Clone, Debug)]
pub struct OnlineRpca<T> {
    config: EngineConfig<T>,
    state: EngineState<T>,
}

struct Split<T> {
    r: Array1<T>,
    e: Array1<T>,
    rounds: usize,
}

impl<T: Scalar> OnlineRpca<T> {
    /// Fresh engine for samples of dimension `p`: `g = g0`, `V = 0`, zero
    /// carried estimates.
    pub fn new(p: usize, config: EngineConfig<T>) -> Result<Self> {
        config.validate(p)?;
        let r = config.rank;
        let state = EngineState {
            subspace: SubspaceState::new(p, r, config.hyper.g0),
            prev_r: Array1::zeros(r),
            prev_e: Array1::zeros(p),
            t: 0,
            coef_energy: T::zero(),
            diverged: 0,
            history: config.accumulate_outputs.then(History::default),
        };
        Ok(Self { config, state })
    }

    /// The configuration in use.
    pub fn config(&self) -> &EngineConfig<T> {
        &self.config
    }

    /// The carried state.
    pub fn state(&self) -> &EngineState<T> {
        &self.state
    }

    /// The current basis `L`.
    pub fn basis(&self) -> Array2<T> {
        derive_basis(&self.state.subspace)
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.state.subspace.dim()
    }

    /// Processes a validated sample.
    pub fn process_sample(&mut self, sample: &StreamSample<T>) -> Result<SampleDecomposition<T>> {
        self.process(sample.z.view())
    }

    /// Processes one data vector and advances the stream.
    pub fn process(&mut self, z: ArrayView1<T>) -> Result<SampleDecomposition<T>> {
        check_len("engine sample", self.dim(), z.len())?;
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("engine sample"));
        }
        let l = self.basis();
        let outcome = self
            .alternate(z, l.view())
            .and_then(|split| self.update_basis(z, l.view(), &split).map(|sub| (split, sub)));
        let (r, e, rounds, diverged) = match outcome {
            Ok((split, sub)) => {
                self.state.subspace = sub;
                (split.r, split.e, split.rounds, false)
            }
            Err(Error::Divergence { .. }) => {
                self.state.diverged += 1;
                (self.state.prev_r.clone(), self.state.prev_e.clone(), self.config.t0, true)
            }
            Err(other) => return Err(other),
        };
        let fidelity = fidelity_loss(z, l.dot(&r).view(), e.view())?;
        if let Some(h) = self.state.history.as_mut() {
            h.r.push(r.clone());
            h.e.push(e.clone());
        }
        self.state.prev_r = r.clone();
        self.state.prev_e = e.clone();
        self.state.t += 1;
        Ok(SampleDecomposition {
            r_coef: r,
            e,
            inner_iters: rounds,
            fidelity,
            diverged,
        })
    }

    fn alternate(&self, z: ArrayView1<T>, l: ArrayView2<T>) -> Result<Split<T>> {
        let zn = {
            let n = norm(z);
            if n > T::zero() {
                n
            } else {
                T::one()
            }
        };
        let mut e = self.sparse_step((&z - &l.dot(&self.state.prev_r)).view())?;
        let mut r_ref = self.state.prev_r.clone();
        let mut e_ref = e.clone();
        let mut r = r_ref.clone();
        let mut rounds = 0;
        while rounds < self.config.t0 {
            rounds += 1;
            r = self.coefficient_step((&z - &e).view(), l)?;
            e = self.sparse_step((&z - &l.dot(&r)).view())?;
            let dr = norm((&r - &r_ref).view()) / zn;
            let de = norm((&e - &e_ref).view()) / zn;
            r_ref.assign(&r);
            e_ref.assign(&e);
            if dr.max(de) < self.config.conv_tol {
                break;
            }
        }
        Ok(Split { r, e, rounds })
    }

    fn sparse_step(&self, target: ArrayView1<T>) -> Result<Array1<T>> {
        let h = &self.config.hyper;
        let p = target.len();
        match h.eta_e {
            StepRule::Fixed(eta) => {
                let budget = resolve_budget(h.t_e, max_abs(target), p, eta, h.alpha_e);
                hp_grad(target, budget, eta, h.alpha_e)
            }
            StepRule::Auto => {
                let eta = robust_eta_e(target, h.scale_factor, h.alpha_e);
                let budget = match h.t_e {
                    Budget::Fixed(n) => n,
                    Budget::Formula { cap } => {
                        let slowest = eta.iter().fold(T::infinity(), |m, &x| m.min(x));
                        let slowest = if slowest.is_finite() { slowest } else { auto_eta_e(target) };
                        hp_grad_budget(max_abs(target), p, slowest, h.alpha_e, cap)
                    }
                };
                hp_grad_scaled(target, budget, eta.view(), h.alpha_e)
            }
        }
    }

    fn coefficient_step(&self, target: ArrayView1<T>, l: ArrayView2<T>) -> Result<Array1<T>> {
        let h = &self.config.hyper;
        let p = target.len();
        let k = l.ncols();
        if let StepRule::Fixed(eta) = h.eta_r {
            let gram = l.t().dot(&l);
            let proj = l.t().dot(&target);
            let budget = resolve_budget(h.t_r, max_abs(proj.view()), p, eta, h.alpha_r);
            return momentum_solve(gram.view(), proj.view(), target.dot(&target), p, h.mu, budget, eta, h.alpha_r);
        }
        // Solve on unit-norm columns and map back, so the step size does not
        // depend on how unevenly the basis columns are scaled.
        let norms: Vec<T> = l.axis_iter(Axis(1)).map(norm).collect();
        let active: Vec<usize> = (0..k).filter(|&j| norms[j] > T::zero()).collect();
        let mut out = Array1::zeros(k);
        if active.is_empty() {
            return Ok(out);
        }
        let mut ln = Array2::zeros((p, active.len()));
        for (c, &j) in active.iter().enumerate() {
            let nj = norms[j];
            ln.column_mut(c).assign(&l.column(j).mapv(|x| x / nj));
        }
        let proj = ln.t().dot(&target);
        if proj.iter().all(|&x| x == T::zero()) {
            return Ok(out);
        }
        let gram = ln.t().dot(&ln);
        let eta = auto_eta_r(gram.view(), proj.view(), p, h.mu, h.alpha_r, h.coef_step);
        let budget = resolve_budget(h.t_r, max_abs(proj.view()), p, eta, h.alpha_r);
        let x = momentum_solve(gram.view(), proj.view(), target.dot(&target), p, h.mu, budget, eta, h.alpha_r)?;
        for (c, &j) in active.iter().enumerate() {
            out[j] = x[c] / norms[j];
        }
        Ok(out)
    }

    fn update_basis(
        &mut self,
        z: ArrayView1<T>,
        l: ArrayView2<T>,
        split: &Split<T>,
    ) -> Result<SubspaceState<T>> {
        let h = self.config.hyper.clone();
        let sub = &self.state.subspace;
        let cleaned = &z - &split.e;
        let null_col = (0..sub.rank()).find(|&j| sub.v.column(j).iter().all(|&x| x == T::zero()));
        if let Some(j) = null_col {
            let mut res = &cleaned - &l.dot(&split.r);
            let used: Vec<usize> = (0..sub.rank()).filter(|&c| c != j && sub.v.column(c).iter().any(|&x| x != T::zero())).collect();
            if !used.is_empty() {
                let span = l.select(Axis(1), &used);
                let q = orthonormal_basis(span.view(), T::lit(SPAN_TOL));
                let coef = q.t().dot(&res);
                res = res - q.dot(&coef);
            }
            let rn = norm(res.view());
            if rn > T::zero() && rn > h.seed_tol * norm(cleaned.view()) && sub.g.iter().all(|&g| g != T::zero()) {
                let mut next = sub.clone();
                for i in 0..next.dim() {
                    let g2 = next.g[i] * next.g[i];
                    next.v[[i, j]] = res[i] / rn / g2;
                }
                return Ok(next);
            }
        }
        let energy = split.r.dot(&split.r);
        if !(energy > T::zero()) {
            return Ok(sub.clone());
        }
        self.state.coef_energy += energy;
        let acc = self.state.coef_energy;
        let p = T::count(sub.dim());
        let band = (h.loss_exit_low, h.loss_exit_high);
        let auto_v = {
            let g4 = sub.g.iter().fold(T::zero(), |m, &g| m.max(g * g * g * g));
            p / (g4 * acc)
        };
        let budget = match h.t_l {
            Budget::Fixed(n) => n,
            Budget::Formula { cap } => {
                let eta = match h.eta_l {
                    StepRule::Fixed(eta) => eta,
                    StepRule::Auto => auto_v,
                };
                hp_grad_budget(max_abs(cleaned.view()), sub.dim(), eta, h.g0, cap)
            }
        };
        let outcome = hp_group_grad_with(cleaned.view(), split.r.view(), budget, band, sub, |ctx| match h.eta_l {
            StepRule::Fixed(eta) => GroupSteps { eta_g: eta, eta_v: eta },
            StepRule::Auto => tracking_steps(ctx.state, ctx.row_terms, acc, h.g_step_cap),
        })?;
        Ok(outcome.state)
    }
}

/// Automatic basis rates under the accumulated coefficient energy `acc`.
///
/// `V` moves with `p / (max g^4 * acc)`: with `T_L = 1` this is the classic
/// `1/t` stochastic-approximation step on `L`. `g` uses the analogous
/// curvature bound and, when `cap > 0`, is further limited so that no entry
/// of `g` changes by more than the fraction `cap` of itself in one step.
fn tracking_steps<T: Scalar>(state: &SubspaceState<T>, rows: &Array1<T>, acc: T, cap: T) -> GroupSteps<T> {
    let p = T::count(state.dim());
    let g4 = state.g.iter().fold(T::zero(), |m, &g| m.max(g * g * g * g));
    let eta_v = if g4 > T::zero() { p / (g4 * acc) } else { T::zero() };
    let mut curv = T::zero();
    let mut rel = T::zero();
    for i in 0..state.dim() {
        let g = state.g[i];
        let vv = state.v.row(i).dot(&state.v.row(i));
        curv = curv.max(T::lit(4.0) * g * g * vv);
        if g != T::zero() {
            rel = rel.max((rows[i] / g).abs());
        }
    }
    curv *= acc;
    let mut eta_g = if curv > T::zero() { p / curv } else { T::zero() };
    if cap > T::zero() && rel > T::zero() {
        eta_g = eta_g.min(cap * p / rel);
    }
    GroupSteps { eta_g, eta_v }
}

fn resolve_budget<T: Scalar>(budget: Budget, max_abs: T, p: usize, eta: T, alpha: T) -> usize {
    match budget {
        Budget::Fixed(n) => n,
        Budget::Formula { cap } => hp_grad_budget(max_abs, p, eta, alpha, cap),
    }
}

/// Summary of a whole stream.
#[derive(Clone, Debug)]
pub struct StreamReport<T> {
    /// Final basis factors.
    pub subspace: SubspaceState<T>,
    /// Final basis `L`.
    pub basis: Array2<T>,
    /// Coefficients, one row per sample, when accumulation is enabled.
    pub r: Option<Array2<T>>,
    /// Outliers, one column per sample, when accumulation is enabled.
    pub e: Option<Array2<T>>,
    /// Explained variance against the supplied truth after every sample.
    pub ev: Vec<T>,
    /// Alternation rounds per sample.
    pub inner_iters: Vec<usize>,
    /// Fidelity per sample.
    pub fidelity: Vec<T>,
    /// Divergence fallback flag per sample.
    pub diverged: Vec<bool>,
    /// Wall-clock duration of the run.
    pub wall_time: Duration,
}

/// Streams the columns of `z` through a fresh engine in index order.
///
/// When `truth` is given, the explained variance of the current basis
/// against it is recorded after every sample.
pub fn run_stream<T: Scalar>(
    z: ArrayView2<T>,
    config: &EngineConfig<T>,
    truth: Option<ArrayView2<T>>,
) -> Result<StreamReport<T>> {
    let (p, n) = z.dim();
    if n == 0 {
        return Err(Error::Config("stream must contain at least one sample".into()));
    }
    if let Some(u) = truth {
        check_len("ground-truth basis rows", p, u.nrows())?;
    }
    let start = Instant::now();
    let mut engine = OnlineRpca::new(p, config.clone())?;
    let mut ev = Vec::new();
    let mut inner_iters = Vec::with_capacity(n);
    let mut fidelity = Vec::with_capacity(n);
    let mut diverged = Vec::with_capacity(n);
    for col in z.axis_iter(Axis(1)) {
        let d = engine.process(col)?;
        inner_iters.push(d.inner_iters);
        fidelity.push(d.fidelity);
        diverged.push(d.diverged);
        if let Some(u) = truth {
            ev.push(explained_variance(engine.basis().view(), u));
        }
    }
    let basis = engine.basis();
    let (r, e) = match engine.state.history.take() {
        Some(h) => (Some(stack_rows(&h.r, config.rank)), Some(stack_cols(&h.e, p))),
        None => (None, None),
    };
    Ok(StreamReport {
        subspace: engine.state.subspace.clone(),
        basis,
        r,
        e,
        ev,
        inner_iters,
        fidelity,
        diverged,
        wall_time: start.elapsed(),
    })
}

pub(crate) fn stack_rows<T: Scalar>(rows: &[Array1<T>], width: usize) -> Array2<T> {
    let mut out = Array2::zeros((rows.len(), width));
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).assign(r);
    }
    out
}

pub(crate) fn stack_cols<T: Scalar>(cols: &[Array1<T>], height: usize) -> Array2<T> {
    let mut out = Array2::zeros((height, cols.len()));
    for (j, c) in cols.iter().enumerate() {
        out.column_mut(j).assign(c);
    }
    out
}
