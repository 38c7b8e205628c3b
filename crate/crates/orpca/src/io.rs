//! File formats: the `ORPM` binary matrix container, CSV matrices and
//! 8-bit grayscale PGM frames.
//!
//! `ORPM` layout, all little-endian:
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `ORPM` |
//! | 4 | 2 | version, `1` |
//! | 6 | 2 | reserved, `0` |
//! | 8 | 4 | rows (`u32`) |
//! | 12 | 4 | cols (`u32`) |
//! | 16 | 8 rows cols | binary64 values, column-major |
//!
//! Column-major order puts each sample (column) in one contiguous block.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};

use crate::error::{Error, Result};

/// Magic bytes of the binary matrix container.
pub const ORPM_MAGIC: [u8; 4] = *b"ORPM";
/// Current container version.
pub const ORPM_VERSION: u16 = 1;
/// Header length in bytes.
pub const ORPM_HEADER_LEN: usize = 16;

/// Serializes a matrix into the `ORPM` container.
pub fn write_matrix<W: Write>(mut w: W, m: ArrayView2<f64>) -> Result<()> {
    let (rows, cols) = m.dim();
    let rows32 = u32::try_from(rows).map_err(|_| Error::Config("matrix has too many rows".into()))?;
    let cols32 = u32::try_from(cols).map_err(|_| Error::Config("matrix has too many columns".into()))?;
    let mut buf = Vec::with_capacity(ORPM_HEADER_LEN + 8 * rows * cols);
    buf.extend_from_slice(&ORPM_MAGIC);
    buf.extend_from_slice(&ORPM_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&rows32.to_le_bytes());
    buf.extend_from_slice(&cols32.to_le_bytes());
    for j in 0..cols {
        for i in 0..rows {
            buf.extend_from_slice(&m[[i, j]].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Serializes a matrix into a byte vector.
pub fn matrix_to_bytes(m: ArrayView2<f64>) -> Vec<u8> {
    let mut out = Vec::new();
    write_matrix(&mut out, m).expect("writing to memory cannot fail");
    out
}

/// Parses an `ORPM` container from a byte slice.
pub fn matrix_from_bytes(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: ORPM_HEADER_LEN,
            found: bytes.len(),
        });
    }
    if bytes[..4] != ORPM_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < ORPM_HEADER_LEN {
        return Err(Error::Truncated {
            expected: ORPM_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != ORPM_VERSION {
        return Err(Error::BadVersion(version));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let expected = ORPM_HEADER_LEN + 8 * rows * cols;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::TrailingData(bytes.len() - expected));
    }
    let data: Vec<f64> = bytes[ORPM_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols).f(), data).expect("length checked above"))
}

/// Reads an `ORPM` container from a stream.
pub fn read_matrix<R: Read>(mut r: R) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    matrix_from_bytes(&bytes)
}

/// Reads an `ORPM` file.
pub fn read_matrix_file(path: &Path) -> Result<Array2<f64>> {
    matrix_from_bytes(&std::fs::read(path)?)
}

/// Writes an `ORPM` file.
pub fn write_matrix_file(path: &Path, m: ArrayView2<f64>) -> Result<()> {
    std::fs::write(path, matrix_to_bytes(m))?;
    Ok(())
}

/// Parses a CSV matrix: one row per line, comma separated, no header. An
/// empty input is the 0 x 0 matrix.
pub fn read_csv_matrix<R: Read>(r: R) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Csv(format!(
                    "row {} has {} fields, expected {c}",
                    line + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Csv(format!("row {}: cannot parse {field:?}", line + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Ok(Array2::from_shape_vec((rows, cols), data).expect("row lengths checked above"))
}

/// Writes a CSV matrix with 17 significant digits per value, which
/// round-trips every binary64 exactly.
pub fn write_csv_matrix<W: Write>(w: W, m: ArrayView2<f64>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in m.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writer.write_record(&fields).map_err(|e| Error::Csv(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Target frame size after downscaling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameSpec {
    /// Output width in pixels.
    pub width: usize,
    /// Output height in pixels.
    pub height: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            width: 72,
            height: 48,
        }
    }
}

/// A decoded grayscale image with values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    /// Width in pixels.
    pub width: usize,
    /// Height in pixels.
    pub height: usize,
    /// `width * height` values, row by row.
    pub pixels: Vec<f64>,
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn next_uint(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Pgm(format!("cannot parse {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Pgm(format!("cannot parse {what}")))
    }
}

/// Decodes a binary (`P5`) or ASCII (`P2`) PGM with maxval 255.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(Error::Pgm("not a P5 or P2 file".into())),
    };
    let mut tok = Tokens { bytes, pos: 2 };
    let width = tok.next_uint("width")?;
    let height = tok.next_uint("height")?;
    let maxval = tok.next_uint("maxval")?;
    if maxval != 255 {
        return Err(Error::Pgm(format!("maxval must be 255, got {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Pgm("empty image".into()));
    }
    let n = width * height;
    let raw: Vec<u8> = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let start = tok.pos + 1;
        let body = bytes
            .get(start..start + n)
            .ok_or_else(|| Error::Pgm(format!("raster truncated: need {n} bytes")))?;
        body.to_vec()
    } else {
        (0..n)
            .map(|_| {
                let v = tok.next_uint("pixel")?;
                u8::try_from(v).map_err(|_| Error::Pgm(format!("pixel {v} exceeds maxval")))
            })
            .collect::<Result<_>>()?
    };
    Ok(GrayImage {
        width,
        height,
        pixels: raw.iter().map(|&b| f64::from(b) / 255.0).collect(),
    })
}

/// Area-weighted resampling of a row-major image.
///
/// Output pixel `(oy, ox)` is the mean of the source over the rectangle
/// `[ox W/w, (ox+1) W/w) x [oy H/h, (oy+1) H/h)`, with partially covered
/// source pixels weighted by their covered area. Overlaps are computed in
/// integer units of `1/w` (and `1/h`) source pixels, so the weights are
/// exact.
pub fn box_resample(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    let wx = overlap_weights(sw, dw);
    let wy = overlap_weights(sh, dh);
    let mut tmp = vec![0.0; sh * dw];
    for sy in 0..sh {
        for (ox, row) in wx.iter().enumerate() {
            let mut acc = 0.0;
            for &(sx, w) in row {
                acc += w as f64 * src[sy * sw + sx];
            }
            tmp[sy * dw + ox] = acc;
        }
    }
    let denom = sw as f64 * sh as f64;
    let mut out = vec![0.0; dw * dh];
    for (oy, col) in wy.iter().enumerate() {
        for ox in 0..dw {
            let mut acc = 0.0;
            for &(sy, w) in col {
                acc += w as f64 * tmp[sy * dw + ox];
            }
            out[oy * dw + ox] = acc / denom;
        }
    }
    out
}

/// For each output cell, the source cells it overlaps and the overlap
/// length in units of `1/dst` source pixels. Lengths per output cell sum to
/// `src`.
fn overlap_weights(src: usize, dst: usize) -> Vec<Vec<(usize, usize)>> {
    (0..dst)
        .map(|o| {
            let lo = o * src;
            let hi = (o + 1) * src;
            let first = lo / dst;
            let last = (hi - 1) / dst;
            (first..=last)
                .filter_map(|s| {
                    let a = (s * dst).max(lo);
                    let b = ((s + 1) * dst).min(hi);
                    (b > a).then_some((s, b - a))
                })
                .collect()
        })
        .collect()
}

/// A decoded frame resampled to the target size.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    /// Width of the source image.
    pub source_width: usize,
    /// Height of the source image.
    pub source_height: usize,
    /// Row-major pixels of the resampled frame as one column vector.
    pub pixels: Array1<f64>,
}

/// Decodes a PGM and resamples it to `spec` when the sizes differ.
pub fn read_pgm_frame(bytes: &[u8], spec: FrameSpec) -> Result<Frame> {
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::Config("frame size must be positive".into()));
    }
    let img = read_pgm(bytes)?;
    let pixels = if img.width == spec.width && img.height == spec.height {
        img.pixels
    } else {
        box_resample(&img.pixels, img.width, img.height, spec.width, spec.height)
    };
    Ok(Frame {
        source_width: img.width,
        source_height: img.height,
        pixels: Array1::from(pixels),
    })
}

/// Encodes row-major values as a binary PGM: clamp to `[0, 1]`, scale by
/// 255 and round half away from zero.
pub fn write_pgm_frame(values: ArrayView1<f64>, width: usize, height: usize) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::Dimension {
            context: "write_pgm_frame",
            expected: width * height,
            found: values.len(),
        });
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| quantize(v)));
    Ok(out)
}

/// The byte a value in `[0, 1]` is stored as.
pub fn quantize(v: f64) -> u8 {
    let c = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (c * 255.0).round() as u8
}
