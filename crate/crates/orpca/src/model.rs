//! Domain types shared by the solvers, the engine and the baseline.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

/// One revealed data column `z_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamSample<T> {
    /// 1-based arrival index.
    pub index: usize,
    /// The observed vector.
    pub z: Array1<T>,
}

impl<T: Scalar> StreamSample<T> {
    /// Wraps a vector, rejecting NaN and infinities.
    pub fn new(index: usize, z: Array1<T>) -> Result<Self> {
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("stream sample"));
        }
        Ok(Self { index, z })
    }
}

/// Persistent basis factors. The basis itself is always derived as
/// `L[i][j] = g[i]^2 * V[i][j]` and never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceState<T> {
    /// Row-coupling factor, length `p`.
    pub g: Array1<T>,
    /// Element factor, `p x r`.
    pub v: Array2<T>,
}

impl<T: Scalar> SubspaceState<T> {
    /// `g = g0` everywhere and `V = 0`, so the initial basis is zero.
    pub fn new(p: usize, rank: usize, g0: T) -> Self {
        Self {
            g: Array1::from_elem(p, g0),
            v: Array2::zeros((p, rank)),
        }
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    /// Target rank.
    pub fn rank(&self) -> usize {
        self.v.ncols()
    }

    /// The basis `L` implied by the current factors.
    pub fn basis(&self) -> Array2<T> {
        derive_basis(self)
    }
}

/// `L[i][j] = g[i]^2 * V[i][j]`.
pub fn derive_basis<T: Scalar>(state: &SubspaceState<T>) -> Array2<T> {
    let mut l = state.v.clone();
    for (mut row, &gi) in l.rows_mut().into_iter().zip(state.g.iter()) {
        let w = gi * gi;
        row.mapv_inplace(|x| w * x);
    }
    l
}

/// Data fidelity `0.5 * ||z - x - e||^2`.
pub fn fidelity_loss<T: Scalar>(z: ArrayView1<T>, x: ArrayView1<T>, e: ArrayView1<T>) -> Result<T> {
    check_len("fidelity_loss x", z.len(), x.len())?;
    check_len("fidelity_loss e", z.len(), e.len())?;
    let mut acc = T::zero();
    for i in 0..z.len() {
        let d = z[i] - x[i] - e[i];
        acc += d * d;
    }
    Ok(T::lit(0.5) * acc)
}

/// Output of one streamed sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleDecomposition<T> {
    /// Row coefficient `r_t`, length `r`.
    pub r_coef: Array1<T>,
    /// Sparse outlier `e_t`, length `p`.
    pub e: Array1<T>,
    /// Number of alternation rounds used.
    pub inner_iters: usize,
    /// `0.5 * ||z - L r - e||^2` against the basis used for this sample.
    pub fidelity: T,
    /// Set when a solver diverged and the previous estimate was reused.
    pub diverged: bool,
}

/// Learning-rate choice for one solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule<T> {
    /// Derived from the current data (see the engine documentation).
    Auto,
    /// A fixed positive rate.
    Fixed(T),
}

/// Iteration budget for one solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Budget {
    /// A fixed number of iterations.
    Fixed(usize),
    /// The logarithmic early-stopping budget of
    /// [`hp_grad_budget`](crate::solvers::hp_grad_budget), clipped at `cap`.
    Formula { cap: usize },
}

/// Hyperparameters of the implicit-regularization engine.
///
/// The defaults are the values the engine was calibrated with and are meant
/// to be left alone: the same settings serve synthetic streams and video.
#[derive(Clone, Debug, PartialEq)]
pub struct ImplicitHyperParams<T> {
    /// Initial Hadamard scale of the sparse solver.
    pub alpha_e: T,
    /// Initial Hadamard scale of the coefficient solver.
    pub alpha_r: T,
    /// Initial value of every entry of `g`.
    pub g0: T,
    /// Sparse-solver rate.
    pub eta_e: StepRule<T>,
    /// Coefficient-solver rate.
    pub eta_r: StepRule<T>,
    /// Basis-solver rate.
    pub eta_l: StepRule<T>,
    /// Sparse-solver iterations.
    pub t_e: Budget,
    /// Coefficient-solver iterations.
    pub t_r: Budget,
    /// Basis-solver iterations per sample.
    pub t_l: Budget,
    /// Momentum of the coefficient solver.
    pub mu: T,
    /// Lower edge of the basis-solver loss band.
    pub loss_exit_low: T,
    /// Upper edge of the basis-solver loss band.
    pub loss_exit_high: T,
    /// Multiple of the median absolute residual that sets the sparse
    /// solver's per-coordinate step scale.
    pub scale_factor: T,
    /// Fraction of the stable step used by the automatic coefficient rate.
    pub coef_step: T,
    /// Largest relative change of any `g` entry in one automatic step.
    pub g_step_cap: T,
    /// Relative residual norm above which an unused basis column is seeded.
    pub seed_tol: T,
}

impl<T: Scalar> Default for ImplicitHyperParams<T> {
    fn default() -> Self {
        Self {
            alpha_e: T::lit(1e-2),
            alpha_r: T::lit(1e-2),
            g0: T::lit(1e-1),
            eta_e: StepRule::Auto,
            eta_r: StepRule::Auto,
            eta_l: StepRule::Auto,
            t_e: Budget::Fixed(40),
            t_r: Budget::Fixed(100),
            t_l: Budget::Fixed(1),
            mu: T::lit(0.9),
            loss_exit_low: T::lit(1e-2),
            loss_exit_high: T::lit(1e2),
            scale_factor: T::lit(50.0),
            coef_step: T::lit(0.5),
            g_step_cap: T::lit(1e-2),
            seed_tol: T::lit(1e-2),
        }
    }
}

impl<T: Scalar> ImplicitHyperParams<T> {
    /// Checks every field against its admissible range.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha_e", self.alpha_e),
            ("alpha_r", self.alpha_r),
            ("g0", self.g0),
            ("loss_exit_low", self.loss_exit_low),
            ("loss_exit_high", self.loss_exit_high),
            ("scale_factor", self.scale_factor),
            ("coef_step", self.coef_step),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite")));
            }
        }
        for (name, v) in [("g_step_cap", self.g_step_cap), ("seed_tol", self.seed_tol)] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be non-negative and finite")));
            }
        }
        if !(self.g_step_cap < T::one()) {
            return Err(Error::Config("g_step_cap must be below 1".into()));
        }
        if !(self.mu >= T::zero() && self.mu < T::one()) {
            return Err(Error::Config("mu must lie in [0, 1)".into()));
        }
        if !(self.loss_exit_low < self.loss_exit_high) {
            return Err(Error::Config("loss_exit_low must be below loss_exit_high".into()));
        }
        for (name, rule) in [("eta_e", self.eta_e), ("eta_r", self.eta_r), ("eta_l", self.eta_l)] {
            if let StepRule::Fixed(v) = rule {
                if !(v > T::zero()) || !v.is_finite() {
                    return Err(Error::Config(format!("{name} must be positive and finite")));
                }
            }
        }
        for (name, b) in [("t_e", self.t_e), ("t_r", self.t_r), ("t_l", self.t_l)] {
            match b {
                Budget::Fixed(0) | Budget::Formula { cap: 0 } => {
                    return Err(Error::Config(format!("{name} must be at least 1")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Penalty weights of the explicit baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExplicitParams<T> {
    /// Weight on the basis and coefficient norms.
    pub lambda1: T,
    /// Weight on the outlier l1 norm.
    pub lambda2: T,
}

impl<T: Scalar> ExplicitParams<T> {
    /// Validated constructor.
    pub fn new(lambda1: T, lambda2: T) -> Result<Self> {
        if !(lambda1 > T::zero() && lambda2 > T::zero()) || !lambda1.is_finite() || !lambda2.is_finite() {
            return Err(Error::Config("lambda1 and lambda2 must be positive".into()));
        }
        Ok(Self { lambda1, lambda2 })
    }

    /// The customary default `1/sqrt(p)` for both weights.
    pub fn default_for_dim(p: usize) -> Self {
        let l = T::one() / T::count(p).sqrt();
        Self {
            lambda1: l,
            lambda2: l,
        }
    }

    /// Both weights equal to one.
    pub fn tuned() -> Self {
        Self {
            lambda1: T::one(),
            lambda2: T::one(),
        }
    }
}
