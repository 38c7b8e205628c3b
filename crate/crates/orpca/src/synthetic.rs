//! Seeded low-rank plus sparse test streams.
//!
//! Random numbers come from ChaCha20 (`rand_chacha` 0.9) seeded with
//! `seed_from_u64(seed)`; each quantity draws from its own stream, selected
//! with `set_stream`, in column-major order:
//!
//! | stream | quantity | distribution |
//! |---|---|---|
//! | 0 | `U` (`p x r`) | normal, mean 0, variance `1/n` |
//! | 1 | `Vc` (`n x r`) | normal, mean 0, variance `1/n` |
//! | 2 | outlier support | `round(rho p n)` distinct cells, `rand::seq::index::sample` |
//! | 3 | outlier values | uniform on `[-magnitude, magnitude]`, in support order |
//!
//! Support cells are linear column-major indices `i + p j`. Values are drawn
//! in `f64` and converted to the target scalar type, so `f32` and `f64`
//! datasets share the same underlying draws.

use ndarray::Array2;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::Normal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Stream label of the ground-truth basis.
pub const STREAM_U: u64 = 0;
/// Stream label of the ground-truth coefficients.
pub const STREAM_VC: u64 = 1;
/// Stream label of the outlier support.
pub const STREAM_SUPPORT: u64 = 2;
/// Stream label of the outlier values.
pub const STREAM_VALUES: u64 = 3;

/// Parameters of a synthetic stream.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    /// Ambient dimension.
    pub p: usize,
    /// Number of samples.
    pub n: usize,
    /// Rank of the clean part.
    pub rank: usize,
    /// Fraction of corrupted entries.
    pub rho: f64,
    /// Half-width of the uniform outlier range.
    pub magnitude: f64,
    /// Generator seed.
    pub seed: u64,
}

impl SyntheticConfig {
    /// Checks the parameter ranges.
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n == 0 || self.rank == 0 {
            return Err(Error::Config("p, n and rank must be positive".into()));
        }
        if self.rank > self.p.min(self.n) {
            return Err(Error::Config(format!(
                "rank {} exceeds min(p, n) = {}",
                self.rank,
                self.p.min(self.n)
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if !(self.magnitude > 0.0) || !self.magnitude.is_finite() {
            return Err(Error::Config("magnitude must be positive".into()));
        }
        Ok(())
    }

    /// Number of corrupted entries, `round(rho p n)`.
    pub fn outlier_count(&self) -> usize {
        (self.rho * (self.p * self.n) as f64).round() as usize
    }

    /// Same configuration with another seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Named experiment sizes: `small` is (p, n, r, rho) = (40, 200, 10, 0.01)
/// and `mid` is (400, 1000, 10, 0.01). Outliers are uniform on +-1000 and the
/// seed is 0.
pub fn preset(name: &str) -> Result<SyntheticConfig> {
    let (p, n) = match name {
        "small" => (40, 200),
        "mid" => (400, 1000),
        other => return Err(Error::Config(format!("unknown preset {other:?}"))),
    };
    Ok(SyntheticConfig {
        p,
        n,
        rank: 10,
        rho: 0.01,
        magnitude: 1000.0,
        seed: 0,
    })
}

/// A generated stream with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset<T> {
    /// Ground-truth basis, `p x r`.
    pub u: Array2<T>,
    /// Ground-truth coefficients, `n x r`.
    pub vc: Array2<T>,
    /// Clean data `U Vc^T`.
    pub x: Array2<T>,
    /// Sparse corruption.
    pub e: Array2<T>,
    /// Observations `X + E`, one sample per column.
    pub z: Array2<T>,
    /// Seed that produced the dataset.
    pub seed: u64,
}

fn stream(seed: u64, label: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng
}

fn gaussian<T: Scalar>(rows: usize, cols: usize, sd: f64, rng: &mut ChaCha20Rng) -> Array2<T> {
    let dist = Normal::new(0.0, sd).expect("finite positive standard deviation");
    let mut out = Array2::zeros((rows, cols));
    for j in 0..cols {
        for i in 0..rows {
            out[[i, j]] = T::lit(dist.sample(rng));
        }
    }
    out
}

/// Draws a dataset. Identical configurations give bit-identical results.
pub fn generate<T: Scalar>(config: &SyntheticConfig) -> Result<SyntheticDataset<T>> {
    config.validate()?;
    let SyntheticConfig { p, n, rank, .. } = *config;
    let sd = (1.0 / n as f64).sqrt();
    let u = gaussian::<T>(p, rank, sd, &mut stream(config.seed, STREAM_U));
    let vc = gaussian::<T>(n, rank, sd, &mut stream(config.seed, STREAM_VC));
    let x = u.dot(&vc.t());

    let count = config.outlier_count();
    let cells = rand::seq::index::sample(&mut stream(config.seed, STREAM_SUPPORT), p * n, count).into_vec();
    let values = Uniform::new_inclusive(-config.magnitude, config.magnitude)
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut vrng = stream(config.seed, STREAM_VALUES);
    let mut e = Array2::zeros((p, n));
    for cell in cells {
        let mut v = values.sample(&mut vrng);
        // A value of exactly zero would silently shrink the support.
        while v == 0.0 {
            v = values.sample(&mut vrng);
        }
        e[[cell % p, cell / p]] = T::lit(v);
    }
    let z = &x + &e;
    Ok(SyntheticDataset {
        u,
        vc,
        x,
        e,
        z,
        seed: config.seed,
    })
}
