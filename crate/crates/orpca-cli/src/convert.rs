//! `convert`: matrix conversion between `ORPM` and CSV.

use std::path::{Path, PathBuf};

use clap::Args;
use orpca::io::{matrix_to_bytes, write_csv_matrix};

use crate::run::load_matrix;
use crate::{write_atomic, CliError, CliResult};

#[derive(Args, Debug)]
pub struct ConvertArgs {
    /// Source matrix, `ORPM` or CSV (detected from the contents).
    pub input: PathBuf,
    /// Destination; `.csv` writes CSV, anything else writes `ORPM`.
    pub output: PathBuf,
}

fn wants_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn execute(a: &ConvertArgs) -> CliResult<()> {
    let (m, _) = load_matrix(&a.input)?;
    let bytes = if wants_csv(&a.output) {
        let mut buf = Vec::new();
        write_csv_matrix(&mut buf, m.view()).map_err(CliError::from)?;
        buf
    } else {
        matrix_to_bytes(m.view())
    };
    write_atomic(&a.output, &bytes)
}
