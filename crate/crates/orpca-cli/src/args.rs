//! Flags shared by several subcommands.

use clap::{Args, ValueEnum};
use orpca::{Budget, ExplicitParams, HyperParams, StepRule};
use serde::Serialize;

use crate::{CliError, CliResult};

/// Budget cap used by `formula` when no cap is given.
pub const DEFAULT_FORMULA_CAP: usize = 2000;

/// Parses `auto` or a positive number.
pub fn parse_step_rule(s: &str) -> Result<StepRule<f64>, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(StepRule::Auto);
    }
    let v: f64 = s.parse().map_err(|_| format!("expected `auto` or a number, got {s:?}"))?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(format!("step size must be positive and finite, got {s}"));
    }
    Ok(StepRule::Fixed(v))
}

/// Parses an iteration count, `formula` or `formula:CAP`.
pub fn parse_budget(s: &str) -> Result<Budget, String> {
    if let Some(rest) = s.strip_prefix("formula") {
        let cap = match rest.strip_prefix(':') {
            Some(c) => c.parse().map_err(|_| format!("bad formula cap in {s:?}"))?,
            None if rest.is_empty() => DEFAULT_FORMULA_CAP,
            None => return Err(format!("expected `formula` or `formula:CAP`, got {s:?}")),
        };
        if cap == 0 {
            return Err("formula cap must be at least 1".into());
        }
        return Ok(Budget::Formula { cap });
    }
    let n: usize = s
        .parse()
        .map_err(|_| format!("expected an iteration count or `formula[:CAP]`, got {s:?}"))?;
    if n == 0 {
        return Err("iteration count must be at least 1".into());
    }
    Ok(Budget::Fixed(n))
}

fn rule_label(r: StepRule<f64>) -> String {
    match r {
        StepRule::Auto => "auto".into(),
        StepRule::Fixed(v) => format!("{v}"),
    }
}

fn budget_label(b: Budget) -> String {
    match b {
        Budget::Fixed(n) => n.to_string(),
        Budget::Formula { cap } => format!("formula:{cap}"),
    }
}

/// Overrides for the implicit engine. Unset flags keep the library defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct HyperArgs {
    /// Initial scale of the sparse solver.
    #[arg(long)]
    pub alpha_e: Option<f64>,
    /// Initial scale of the coefficient solver.
    #[arg(long)]
    pub alpha_r: Option<f64>,
    /// Initial value of the basis gain.
    #[arg(long)]
    pub g0: Option<f64>,
    /// Sparse-solver step: `auto` or a number.
    #[arg(long, value_parser = parse_step_rule)]
    pub eta_e: Option<StepRule<f64>>,
    /// Coefficient-solver step: `auto` or a number.
    #[arg(long, value_parser = parse_step_rule)]
    pub eta_r: Option<StepRule<f64>>,
    /// Basis-solver step: `auto` or a number.
    #[arg(long, value_parser = parse_step_rule)]
    pub eta_l: Option<StepRule<f64>>,
    /// Sparse-solver iterations: a count or `formula[:CAP]`.
    #[arg(long, value_parser = parse_budget)]
    pub t_e: Option<Budget>,
    /// Coefficient-solver iterations: a count or `formula[:CAP]`.
    #[arg(long, value_parser = parse_budget)]
    pub t_r: Option<Budget>,
    /// Basis-solver iterations per sample.
    #[arg(long, value_parser = parse_budget)]
    pub t_l: Option<Budget>,
    /// Momentum of the coefficient solver.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Maximum alternation rounds per sample.
    #[arg(long)]
    pub t0: Option<usize>,
    /// Relative change that ends the alternation.
    #[arg(long)]
    pub conv_tol: Option<f64>,
}

impl HyperArgs {
    /// Engine configuration for `rank` with the overrides applied.
    pub fn engine_config(&self, rank: usize) -> orpca::Config {
        let mut cfg = orpca::Config::new(rank);
        let h: &mut HyperParams = &mut cfg.hyper;
        if let Some(v) = self.alpha_e {
            h.alpha_e = v;
        }
        if let Some(v) = self.alpha_r {
            h.alpha_r = v;
        }
        if let Some(v) = self.g0 {
            h.g0 = v;
        }
        if let Some(v) = self.eta_e {
            h.eta_e = v;
        }
        if let Some(v) = self.eta_r {
            h.eta_r = v;
        }
        if let Some(v) = self.eta_l {
            h.eta_l = v;
        }
        if let Some(v) = self.t_e {
            h.t_e = v;
        }
        if let Some(v) = self.t_r {
            h.t_r = v;
        }
        if let Some(v) = self.t_l {
            h.t_l = v;
        }
        if let Some(v) = self.mu {
            h.mu = v;
        }
        if let Some(v) = self.t0 {
            cfg.t0 = v;
        }
        if let Some(v) = self.conv_tol {
            cfg.conv_tol = v;
        }
        cfg
    }
}

/// Fully resolved engine settings, as recorded in manifests.
#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct ResolvedEngine {
    pub rank: usize,
    pub alpha_e: f64,
    pub alpha_r: f64,
    pub g0: f64,
    pub eta_e: String,
    pub eta_r: String,
    pub eta_l: String,
    pub t_e: String,
    pub t_r: String,
    pub t_l: String,
    pub mu: f64,
    pub t0: usize,
    pub conv_tol: f64,
    pub loss_exit_low: f64,
    pub loss_exit_high: f64,
    pub scale_factor: f64,
    pub coef_step: f64,
    pub g_step_cap: f64,
    pub seed_tol: f64,
}

impl ResolvedEngine {
    pub fn from_config(cfg: &orpca::Config) -> Self {
        let h = &cfg.hyper;
        Self {
            rank: cfg.rank,
            alpha_e: h.alpha_e,
            alpha_r: h.alpha_r,
            g0: h.g0,
            eta_e: rule_label(h.eta_e),
            eta_r: rule_label(h.eta_r),
            eta_l: rule_label(h.eta_l),
            t_e: budget_label(h.t_e),
            t_r: budget_label(h.t_r),
            t_l: budget_label(h.t_l),
            mu: h.mu,
            t0: cfg.t0,
            conv_tol: cfg.conv_tol,
            loss_exit_low: h.loss_exit_low,
            loss_exit_high: h.loss_exit_high,
            scale_factor: h.scale_factor,
            coef_step: h.coef_step,
            g_step_cap: h.g_step_cap,
            seed_tol: h.seed_tol,
        }
    }
}

/// Named choice of baseline penalty weights.
#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaPreset {
    /// Both weights `1/sqrt(p)`.
    #[default]
    Default,
    /// Both weights 1.
    Tuned,
}

/// Baseline weight flags.
#[derive(Args, Debug, Clone, Default)]
pub struct LambdaArgs {
    /// Preset penalty weights for the explicit baseline.
    #[arg(long, value_enum, default_value_t = LambdaPreset::Default)]
    pub lambda: LambdaPreset,
    /// Override of the basis and coefficient weight.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Override of the outlier weight.
    #[arg(long)]
    pub lambda2: Option<f64>,
}

impl LambdaArgs {
    /// Resolved weights for dimension `p` and the label used in file names.
    pub fn resolve(&self, p: usize) -> CliResult<(ExplicitParams<f64>, &'static str)> {
        let base = match self.lambda {
            LambdaPreset::Default => ExplicitParams::default_for_dim(p),
            LambdaPreset::Tuned => ExplicitParams::tuned(),
        };
        let custom = self.lambda1.is_some() || self.lambda2.is_some();
        let params = ExplicitParams::new(
            self.lambda1.unwrap_or(base.lambda1),
            self.lambda2.unwrap_or(base.lambda2),
        )
        .map_err(CliError::from)?;
        let label = match (custom, self.lambda) {
            (true, _) => "custom",
            (false, LambdaPreset::Default) => "default",
            (false, LambdaPreset::Tuned) => "tuned",
        };
        Ok((params, label))
    }
}
