//! `frames`: background subtraction on a sequence of grayscale frames.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use ndarray::{Array2, Axis};
use orpca::io::{read_pgm_frame, write_pgm_frame, FrameSpec};

use crate::args::{HyperArgs, LambdaArgs};
use crate::manifest::RunManifest;
use crate::run::{decompose, Algo};
use crate::{ensure_dir, io_err, write_atomic, CliError, CliResult};

#[derive(Args, Debug)]
pub struct FramesArgs {
    /// PGM files, directories of PGM files or glob patterns.
    pub inputs: Vec<String>,
    /// Text file listing one frame path per line, processed in listed order
    /// after any positional inputs.
    #[arg(long)]
    pub list: Option<PathBuf>,
    /// Width frames are resampled to.
    #[arg(long, default_value_t = 72)]
    pub width: usize,
    /// Height frames are resampled to.
    #[arg(long, default_value_t = 48)]
    pub height: usize,
    /// Target rank.
    #[arg(long, default_value_t = 2)]
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

fn is_pgm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn expand(entry: &str, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let path = Path::new(entry);
    if path.is_dir() {
        let rd = std::fs::read_dir(path).map_err(|e| io_err(path, e))?;
        for item in rd {
            let p = item.map_err(|e| io_err(path, e))?.path();
            if p.is_file() && is_pgm(&p) {
                out.push(p);
            }
        }
    } else if entry.contains(['*', '?', '[']) {
        let paths = glob::glob(entry).map_err(|e| CliError::Config(format!("bad pattern {entry:?}: {e}")))?;
        for p in paths {
            let p = p.map_err(|e| CliError::Io(e.to_string()))?;
            if p.is_file() {
                out.push(p);
            }
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

/// Expands the positional inputs into a sorted, duplicate-free list, then
/// appends the entries of the list file in the order they are written.
pub fn collect_frames(inputs: &[String], list: Option<&Path>) -> CliResult<Vec<PathBuf>> {
    let mut frames = Vec::new();
    for e in inputs {
        expand(e, &mut frames)?;
    }
    frames.sort();
    frames.dedup();
    if let Some(l) = list {
        let text = std::fs::read_to_string(l).map_err(|e| io_err(l, e))?;
        for entry in text.lines().map(str::trim).filter(|s| !s.is_empty()) {
            expand(entry, &mut frames)?;
        }
    }
    if frames.is_empty() {
        return Err(CliError::Config("no input frames".into()));
    }
    Ok(frames)
}

pub fn execute(a: &FramesArgs) -> CliResult<()> {
    let start = Instant::now();
    let spec = FrameSpec { width: a.width, height: a.height };
    if spec.width == 0 || spec.height == 0 {
        return Err(CliError::Config("frame size must be positive".into()));
    }
    let paths = collect_frames(&a.inputs, a.list.as_deref())?;
    let p = spec.width * spec.height;
    let mut z = Array2::<f64>::zeros((p, paths.len()));
    let mut manifest_inputs = Vec::with_capacity(paths.len());
    let mut source_dims = None;
    for (k, path) in paths.iter().enumerate() {
        let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
        let frame = read_pgm_frame(&bytes, spec)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let dims = (frame.source_width, frame.source_height);
        match source_dims {
            None => source_dims = Some(dims),
            Some(d) if d != dims => {
                return Err(CliError::Config(format!(
                    "{} is {}x{} but earlier frames are {}x{}",
                    path.display(),
                    dims.0,
                    dims.1,
                    d.0,
                    d.1
                )))
            }
            Some(_) => {}
        }
        z.column_mut(k).assign(&frame.pixels);
        manifest_inputs.push((path.clone(), bytes));
    }

    let (report, resolved) = decompose(&z, a.rank, a.algo, &a.hyper, &a.lambda)?;
    let r = report.r.as_ref().expect("outputs are accumulated");
    let e = report.e.as_ref().expect("outputs are accumulated");
    let background = report.basis.dot(&r.t());

    ensure_dir(&a.out)?;
    let mut outputs = Vec::with_capacity(2 * paths.len());
    for k in 0..paths.len() {
        let bg = write_pgm_frame(background.column(k), spec.width, spec.height)?;
        let fg_values = e.index_axis(Axis(1), k).mapv(f64::abs);
        let fg = write_pgm_frame(fg_values.view(), spec.width, spec.height)?;
        let bg_name = format!("background_{:05}.pgm", k + 1);
        let fg_name = format!("foreground_{:05}.pgm", k + 1);
        write_atomic(&a.out.join(&bg_name), &bg)?;
        write_atomic(&a.out.join(&fg_name), &fg)?;
        outputs.push(bg_name);
        outputs.push(fg_name);
    }

    let config = serde_json::json!({
        "algo": a.algo,
        "width": spec.width,
        "height": spec.height,
        "settings": resolved,
    });
    let mut manifest = RunManifest::new("frames", config);
    for (path, bytes) in &manifest_inputs {
        manifest.add_input(path, bytes);
    }
    manifest.outputs = outputs;
    manifest.write(&a.out, start.elapsed().as_secs_f64())?;
    println!("separated {} frames at {}x{}", paths.len(), spec.width, spec.height);
    Ok(())
}
