//! Scalar noise paths on a uniform time grid.
//!
//! Gaussian families (fBm, bifBm) are sampled exactly on the grid by dense
//! Cholesky factorization of the covariance Gram matrix. Hermite processes
//! are built from a discretized multiple Wiener–Itô integral of the
//! tensorized fBm kernel, see [`hermite`].

mod gaussian;
pub mod hermite;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceKernel;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

pub use gaussian::{min_eigenvalue, sample_gaussian, GaussianSampler, MAX_GAUSSIAN_STEPS};
pub use hermite::{
    continuum_normalization, kernel_derivative, normalization_constant, sample_hermite,
    FbmKernelSpec, HermiteSampler,
};

/// Uniform grid `t_i = i T / n`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("time grid needs n >= 1 steps".into()));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Config(format!(
                "time horizon must be positive, got {horizon}"
            )));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.point(i)).collect()
    }

    /// Nearest grid index, halves rounded up.
    pub fn snap(&self, t: f64) -> usize {
        let x = t / self.dt();
        let i = (x + 0.5).floor();
        i.clamp(0.0, self.steps as f64) as usize
    }
}

/// Law of a scalar path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseSource {
    Gaussian {
        kernel: CovarianceKernel,
    },
    Hermite {
        hurst: f64,
        order: u32,
        inner: usize,
    },
    /// A deterministic or externally supplied path.
    External,
}

/// One sampled trajectory on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub source: NoiseSource,
    pub seed: u64,
}

impl NoisePath {
    /// Wraps given values; `values[0]` must be zero.
    pub fn from_values(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(Error::GridMismatch(format!(
                "path has {} values, grid has {} points",
                values.len(),
                grid.steps() + 1
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::Config("paths must start at zero".into()));
        }
        Ok(NoisePath {
            grid,
            values,
            source: NoiseSource::External,
            seed: 0,
        })
    }

    pub fn zero(grid: TimeGrid) -> Self {
        NoisePath {
            grid,
            values: vec![0.0; grid.steps() + 1],
            source: NoiseSource::External,
            seed: 0,
        }
    }

    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// CSV with header `t,value`, one row per grid point, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", fmt_f64(self.grid.point(i)), fmt_f64(*v))?;
        }
        Ok(())
    }
}

/// Fixed 17-significant-digit scientific format used by every CSV export.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Anything that can produce scalar paths from a seed.
pub trait ScalarSampler: Sync {
    fn grid(&self) -> TimeGrid;
    fn sample(&self, seed: u64) -> NoisePath;

    /// `count` paths with seeds `derive_seed(seed, i)`, generated in parallel.
    fn sample_many(&self, seed: u64, count: usize) -> Vec<NoisePath> {
        use rayon::prelude::*;
        (0..count)
            .into_par_iter()
            .map(|i| self.sample(derive_seed(seed, i as u64)))
            .collect()
    }

    /// Self-similarity index of the law.
    fn self_similarity(&self) -> f64;
}

/// Law of a scalar driver, as a buildable description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScalarLaw {
    Gaussian(CovarianceKernel),
    Hermite {
        hurst: f64,
        order: u32,
        inner: usize,
    },
    /// The zero process.
    Zero,
    /// Values supplied by the caller; cannot be sampled.
    External,
}

impl ScalarLaw {
    pub fn sampler(&self, grid: TimeGrid) -> Result<Box<dyn ScalarSampler>> {
        Ok(match *self {
            ScalarLaw::Gaussian(k) => Box::new(GaussianSampler::new(k, grid)?),
            ScalarLaw::Hermite {
                hurst,
                order,
                inner,
            } => Box::new(HermiteSampler::new(hurst, order, grid, inner)?),
            ScalarLaw::Zero => Box::new(ZeroSampler { grid }),
            ScalarLaw::External => {
                return Err(Error::Config("external noise cannot be sampled".into()))
            }
        })
    }

    /// Covariance shared by every law in scope (Hermite processes have the
    /// fBm covariance).
    pub fn covariance(&self) -> Option<CovarianceKernel> {
        match *self {
            ScalarLaw::Gaussian(k) => Some(k),
            ScalarLaw::Hermite { hurst, order, .. } => {
                Some(CovarianceKernel::Hermite { hurst, order })
            }
            _ => None,
        }
    }

    /// Self-similarity index, zero for the zero process.
    pub fn self_similarity(&self) -> f64 {
        self.covariance().map_or(0.0, |k| k.self_similarity())
    }
}

struct ZeroSampler {
    grid: TimeGrid,
}

impl ScalarSampler for ZeroSampler {
    fn grid(&self) -> TimeGrid {
        self.grid
    }

    fn sample(&self, seed: u64) -> NoisePath {
        let mut p = NoisePath::zero(self.grid);
        p.seed = seed;
        p
    }

    fn self_similarity(&self) -> f64 {
        0.0
    }
}

/// Path-wise regularity estimate: half the slope of the log mean squared
/// increment against the log lag, over the lags `lags` (in grid steps).
pub fn path_holder_estimate(values: &[f64], dt: f64, lags: &[usize]) -> Result<f64> {
    if lags.len() < 2 {
        return Err(Error::Statistics("need at least two lags".into()));
    }
    let mut x = Vec::with_capacity(lags.len());
    let mut y = Vec::with_capacity(lags.len());
    for &lag in lags {
        if lag == 0 || lag >= values.len() {
            return Err(Error::Statistics(format!("lag {lag} out of range")));
        }
        let msq: f64 = values
            .windows(lag + 1)
            .map(|w| {
                let d = w[lag] - w[0];
                d * d
            })
            .sum::<f64>()
            / (values.len() - lag) as f64;
        if !(msq > 0.0) {
            return Err(Error::Statistics("zero increments".into()));
        }
        x.push((lag as f64 * dt).ln());
        y.push(msq.ln());
    }
    Ok(crate::stats::fit_line(&x, &y)?.slope / 2.0)
}
