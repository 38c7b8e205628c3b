//! `run`: decompose a matrix file whose columns are samples.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use ndarray::Array2;
use orpca::baseline::{run_baseline, BaselineConfig};
use orpca::io::{matrix_from_bytes, matrix_to_bytes, read_csv_matrix, ORPM_MAGIC};
use orpca::{run_stream, Report};
use serde::Serialize;

use crate::args::{HyperArgs, LambdaArgs, ResolvedEngine};
use crate::manifest::RunManifest;
use crate::{ensure_dir, io_err, write_atomic, CliError, CliResult};

/// Algorithm used by `run` and `frames`.
#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Implicit,
    Explicit,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Input matrix, `ORPM` or CSV (detected from the contents).
    #[arg(long)]
    pub input: PathBuf,
    /// Target rank.
    #[arg(long)]
    pub rank: usize,
    /// Algorithm.
    #[arg(long, value_enum, default_value_t = Algo::Implicit)]
    pub algo: Algo,
    #[command(flatten)]
    pub lambda: LambdaArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

/// Reads a matrix, choosing the format from the leading bytes.
pub fn load_matrix(path: &Path) -> CliResult<(Array2<f64>, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let m = if bytes.starts_with(&ORPM_MAGIC) {
        matrix_from_bytes(&bytes)?
    } else {
        read_csv_matrix(bytes.as_slice())?
    };
    Ok((m, bytes))
}

/// Decomposes `z` with the chosen algorithm, keeping every output.
pub fn decompose(
    z: &Array2<f64>,
    rank: usize,
    algo: Algo,
    hyper: &HyperArgs,
    lambda: &LambdaArgs,
) -> CliResult<(Report, serde_json::Value)> {
    let p = z.nrows();
    if z.ncols() == 0 || p == 0 {
        return Err(CliError::Config("input matrix is empty".into()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Config("input matrix contains non-finite values".into()));
    }
    let (report, resolved) = match algo {
        Algo::Implicit => {
            let mut cfg = hyper.engine_config(rank);
            cfg.accumulate_outputs = true;
            cfg.validate(p)?;
            let rep = run_stream(z.view(), &cfg, None)?;
            (rep, serde_json::to_value(ResolvedEngine::from_config(&cfg)))
        }
        Algo::Explicit => {
            let (params, label) = lambda.resolve(p)?;
            let mut cfg = BaselineConfig::new(rank, params);
            cfg.accumulate_outputs = true;
            let rep = run_baseline(z.view(), &cfg, None)?;
            let summary = serde_json::json!({
                "rank": rank,
                "label": label,
                "lambda1": params.lambda1,
                "lambda2": params.lambda2,
                "t0": cfg.t0,
                "conv_tol": cfg.conv_tol,
            });
            (rep, Ok(summary))
        }
    };
    let fatal = report.basis.iter().any(|v| !v.is_finite())
        || report.diverged.iter().all(|&d| d);
    if fatal {
        return Err(CliError::Diverged("no usable estimate was produced".into()));
    }
    let resolved = resolved.map_err(|e| CliError::Config(e.to_string()))?;
    Ok((report, resolved))
}

fn diagnostics_csv(report: &Report) -> String {
    let mut s = String::from("sample,fidelity,inner_iters,diverged\n");
    for (i, ((f, it), d)) in report
        .fidelity
        .iter()
        .zip(&report.inner_iters)
        .zip(&report.diverged)
        .enumerate()
    {
        writeln!(s, "{},{:.16e},{},{}", i + 1, f, it, u8::from(*d)).expect("string write");
    }
    s
}

pub fn execute(a: &RunArgs) -> CliResult<()> {
    let start = Instant::now();
    let (z, bytes) = load_matrix(&a.input)?;
    let (report, resolved) = decompose(&z, a.rank, a.algo, &a.hyper, &a.lambda)?;
    ensure_dir(&a.out)?;
    let r = report.r.as_ref().expect("outputs are accumulated");
    let e = report.e.as_ref().expect("outputs are accumulated");
    write_atomic(&a.out.join("L.orpm"), &matrix_to_bytes(report.basis.view()))?;
    write_atomic(&a.out.join("R.orpm"), &matrix_to_bytes(r.view()))?;
    write_atomic(&a.out.join("E.orpm"), &matrix_to_bytes(e.view()))?;
    write_atomic(&a.out.join("diagnostics.csv"), diagnostics_csv(&report).as_bytes())?;

    let config = serde_json::json!({ "algo": a.algo, "settings": resolved });
    let mut manifest = RunManifest::new("run", config);
    manifest.add_input(&a.input, &bytes);
    manifest.outputs = ["L.orpm", "R.orpm", "E.orpm", "diagnostics.csv"].map(String::from).to_vec();
    manifest.write(&a.out, start.elapsed().as_secs_f64())?;
    let n_div = report.diverged.iter().filter(|&&d| d).count();
    println!(
        "decomposed {} samples of dimension {} at rank {} ({} fallbacks)",
        z.ncols(),
        z.nrows(),
        a.rank,
        n_div
    );
    Ok(())
}
