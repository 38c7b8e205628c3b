//! `simulate`: seeded synthetic experiments with explained-variance curves.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use orpca::baseline::{run_baseline, BaselineConfig};
use orpca::{generate, mean_trace, preset, run_stream, Dataset, EvTrace, Report, SyntheticConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{HyperArgs, LambdaArgs, ResolvedEngine};
use crate::manifest::RunManifest;
use crate::{ensure_dir, write_atomic, CliError, CliResult};

/// Which algorithms to run.
#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgoChoice {
    Implicit,
    Explicit,
    Both,
}

impl AlgoChoice {
    fn implicit(self) -> bool {
        matches!(self, AlgoChoice::Implicit | AlgoChoice::Both)
    }
    fn explicit(self) -> bool {
        matches!(self, AlgoChoice::Explicit | AlgoChoice::Both)
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Named problem size: `small` or `mid`.
    #[arg(long, default_value = "small")]
    pub preset: String,
    /// Ambient dimension (overrides the preset).
    #[arg(long)]
    pub p: Option<usize>,
    /// Number of samples (overrides the preset).
    #[arg(long)]
    pub n: Option<usize>,
    /// Rank (overrides the preset).
    #[arg(long)]
    pub rank: Option<usize>,
    /// Outlier fraction (overrides the preset).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Outlier half-range (overrides the preset).
    #[arg(long)]
    pub magnitude: Option<f64>,
    /// Algorithms to run.
    #[arg(long, value_enum, default_value_t = AlgoChoice::Implicit)]
    pub algo: AlgoChoice,
    #[command(flatten)]
    pub lambda: LambdaArgs,
    /// Number of seeds.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    /// First seed; seeds are consecutive from here.
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Serialize)]
struct ResolvedSimulate<'a> {
    data: DataSummary,
    algo: AlgoChoice,
    engine: Option<ResolvedEngine>,
    baseline: Option<BaselineSummary<'a>>,
}

#[derive(Serialize)]
struct DataSummary {
    p: usize,
    n: usize,
    rank: usize,
    rho: f64,
    magnitude: f64,
}

#[derive(Serialize)]
struct BaselineSummary<'a> {
    label: &'a str,
    lambda1: f64,
    lambda2: f64,
}

struct SeedResult {
    implicit: Option<EvTrace>,
    explicit: Option<EvTrace>,
}

fn data_config(a: &SimulateArgs) -> CliResult<SyntheticConfig> {
    let mut c = preset(&a.preset)?;
    if let Some(v) = a.p {
        c.p = v;
    }
    if let Some(v) = a.n {
        c.n = v;
    }
    if let Some(v) = a.rank {
        c.rank = v;
    }
    if let Some(v) = a.rho {
        c.rho = v;
    }
    if let Some(v) = a.magnitude {
        c.magnitude = v;
    }
    c.validate()?;
    Ok(c)
}

fn trace(report: &Report, seed: u64, label: &str) -> CliResult<EvTrace> {
    if report.basis.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Diverged(format!("{label} basis is not finite for seed {seed}")));
    }
    Ok(EvTrace { values: report.ev.clone(), seed: Some(seed), label: label.into() })
}

fn run_seed(
    data: &Dataset,
    engine: Option<&orpca::Config>,
    baseline: Option<&BaselineConfig<f64>>,
) -> CliResult<SeedResult> {
    let implicit = match engine {
        Some(cfg) => {
            let rep = run_stream(data.z.view(), cfg, Some(data.u.view()))?;
            Some(trace(&rep, data.seed, "implicit")?)
        }
        None => None,
    };
    let explicit = match baseline {
        Some(cfg) => {
            let rep = run_baseline(data.z.view(), cfg, Some(data.u.view()))?;
            Some(trace(&rep, data.seed, "explicit")?)
        }
        None => None,
    };
    Ok(SeedResult { implicit, explicit })
}

fn write_trace(path: &Path, t: &EvTrace) -> CliResult<()> {
    let mut buf = Vec::new();
    t.write_csv(&mut buf).expect("writing to memory cannot fail");
    write_atomic(path, &buf)
}

pub fn execute(a: &SimulateArgs) -> CliResult<()> {
    let start = Instant::now();
    if a.seeds == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()));
    }
    let data = data_config(a)?;
    let engine = a.algo.implicit().then(|| a.hyper.engine_config(data.rank));
    if let Some(cfg) = &engine {
        cfg.validate(data.p)?;
    }
    let (params, label) = a.lambda.resolve(data.p)?;
    let baseline = a.algo.explicit().then(|| BaselineConfig::new(data.rank, params));
    let seeds: Vec<u64> = (0..a.seeds as u64)
        .map(|k| {
            a.seed_base
                .checked_add(k)
                .ok_or_else(|| CliError::Config("seed range overflows u64".into()))
        })
        .collect::<CliResult<_>>()?;

    ensure_dir(&a.out)?;
    let results: Vec<SeedResult> = seeds
        .par_iter()
        .map(|&s| {
            let ds: Dataset = generate(&data.with_seed(s))?;
            run_seed(&ds, engine.as_ref(), baseline.as_ref())
        })
        .collect::<CliResult<_>>()?;

    let mut outputs = Vec::new();
    let mut summary = Vec::new();
    type Pick = fn(&SeedResult) -> Option<&EvTrace>;
    let families: [(&str, Pick); 2] = [
        ("implicit", |r| r.implicit.as_ref()),
        ("explicit", |r| r.explicit.as_ref()),
    ];
    for (family, pick) in families {
        let traces: Vec<EvTrace> = results.iter().filter_map(|r| pick(r).cloned()).collect();
        if traces.is_empty() {
            continue;
        }
        let stem = if family == "implicit" { "ev_implicit".to_string() } else { format!("ev_explicit_{label}") };
        for t in &traces {
            let name = format!("{stem}_seed{}.csv", t.seed.expect("per-seed trace"));
            write_trace(&a.out.join(&name), t)?;
            outputs.push(name);
        }
        let mean = mean_trace(&traces)?;
        let name = format!("{stem}_mean.csv");
        write_trace(&a.out.join(&name), &mean)?;
        outputs.push(name);
        summary.push(format!("{stem}: final mean EV {:.4}", mean.values.last().copied().unwrap_or(0.0)));
    }

    let resolved = ResolvedSimulate {
        data: DataSummary { p: data.p, n: data.n, rank: data.rank, rho: data.rho, magnitude: data.magnitude },
        algo: a.algo,
        engine: engine.as_ref().map(ResolvedEngine::from_config),
        baseline: baseline.as_ref().map(|b| BaselineSummary {
            label,
            lambda1: b.params.lambda1,
            lambda2: b.params.lambda2,
        }),
    };
    let mut manifest = RunManifest::new(
        "simulate",
        serde_json::to_value(&resolved).map_err(|e| CliError::Config(e.to_string()))?,
    );
    manifest.seeds = seeds;
    manifest.outputs = outputs;
    manifest.write(&a.out, start.elapsed().as_secs_f64())?;
    for line in summary {
        println!("{line}");
    }
    Ok(())
}
