use nalgebra::DMatrix;

use super::{NoisePath, NoiseSource, ScalarSampler, TimeGrid};
use crate::covariance::CovarianceKernel;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, standard_normals};

/// Largest grid the dense factorization accepts.
pub const MAX_GAUSSIAN_STEPS: usize = 4096;

/// Exact sampler for a centered Gaussian process on a fixed grid.
///
/// The lower Cholesky factor of the Gram matrix on `t_1..t_n` is computed
/// once; each path costs one triangular matrix-vector product.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    kernel: CovarianceKernel,
    grid: TimeGrid,
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(kernel: CovarianceKernel, grid: TimeGrid) -> Result<Self> {
        kernel.validate()?;
        if matches!(kernel, CovarianceKernel::Hermite { .. }) {
            return Err(Error::Unsupported(
                "hermite family is not Gaussian; use HermiteSampler".into(),
            ));
        }
        let n = grid.steps();
        if n > MAX_GAUSSIAN_STEPS {
            return Err(Error::Config(format!(
                "dense Gaussian sampling supports n <= {MAX_GAUSSIAN_STEPS}, got {n}"
            )));
        }
        let t: Vec<f64> = (1..=n).map(|i| grid.point(i)).collect();
        let gram = DMatrix::from_fn(n, n, |i, j| kernel.cov_unchecked(t[i], t[j]));
        let factor = cholesky_with_jitter(gram)?;
        Ok(GaussianSampler {
            kernel,
            grid,
            factor,
        })
    }

    pub fn kernel(&self) -> CovarianceKernel {
        self.kernel
    }

    /// Path from a given vector of `n` standard normals.
    pub fn path_from_normals(&self, z: &[f64]) -> Vec<f64> {
        let n = self.grid.steps();
        let mut values = vec![0.0; n + 1];
        for i in 0..n {
            let row = self.factor.row(i);
            let mut acc = 0.0;
            for j in 0..=i {
                acc += row[j] * z[j];
            }
            values[i + 1] = acc;
        }
        values
    }
}

impl ScalarSampler for GaussianSampler {
    fn grid(&self) -> TimeGrid {
        self.grid
    }

    fn sample(&self, seed: u64) -> NoisePath {
        let mut rng = rng_from_seed(seed);
        let z = standard_normals(&mut rng, self.grid.steps());
        NoisePath {
            grid: self.grid,
            values: self.path_from_normals(&z),
            source: NoiseSource::Gaussian {
                kernel: self.kernel,
            },
            seed,
        }
    }

    fn self_similarity(&self) -> f64 {
        self.kernel.self_similarity()
    }
}

/// One path of a fBm or bifBm on `grid`.
pub fn sample_gaussian(kernel: CovarianceKernel, grid: TimeGrid, seed: u64) -> Result<NoisePath> {
    Ok(GaussianSampler::new(kernel, grid)?.sample(seed))
}

/// Lower Cholesky factor; retries with diagonal jitter up to `1e-8 * trace`.
pub(crate) fn cholesky_with_jitter(gram: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let trace = gram.trace();
    if let Some(c) = gram.clone().cholesky() {
        return Ok(c.unpack());
    }
    for rel in [1e-14, 1e-12, 1e-10, 1e-8] {
        let mut g = gram.clone();
        let jitter = rel * trace;
        for i in 0..g.nrows() {
            g[(i, i)] += jitter;
        }
        if let Some(c) = g.cholesky() {
            return Ok(c.unpack());
        }
    }
    Err(Error::NumericalPsd(format!(
        "Cholesky failed for a {}x{} Gram matrix after jitter 1e-8 * trace",
        gram.nrows(),
        gram.ncols()
    )))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}
