//! State-space valued noise `X_t = Σ_j √λ_j x_j(t) e_j` with a trace-class
//! covariance operator `Q` and independent scalar drivers `x_j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise1d::{ScalarLaw, TimeGrid};
use crate::space::{BlockKind, StateSpace};

/// Eigenvalues of `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum EigenLaw {
    /// `λ_j = j^{-r}`, `r > 1`.
    Power { r: f64 },
    /// An explicit strictly decreasing positive list.
    Explicit { values: Vec<f64> },
}

/// Choice of orthonormal eigenvectors `e_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// Normalized coordinate vectors in coordinate order.
    Canonical,
    /// Discrete sine modes on each field block, interleaved by mode number,
    /// followed after the first round by normalized scalar coordinates.
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSpec {
    pub eigen: EigenLaw,
    pub truncation: usize,
    pub basis: Basis,
}

/// Default truncation level.
pub const DEFAULT_TRUNCATION: usize = 32;

impl Default for QSpec {
    fn default() -> Self {
        QSpec {
            eigen: EigenLaw::Power { r: 2.0 },
            truncation: DEFAULT_TRUNCATION,
            basis: Basis::Sine,
        }
    }
}

/// Truncated trace with the tail of the eigenvalue series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    /// `Σ_{j<=J} λ_j`.
    pub partial: f64,
    /// Estimate of `Σ_{j>J} λ_j`.
    pub tail_estimate: f64,
    /// Upper bound on `Σ_{j>J} λ_j`.
    pub tail_bound: f64,
}

impl TraceReport {
    pub fn total_estimate(&self) -> f64 {
        self.partial + self.tail_estimate
    }
}

impl QSpec {
    pub fn power(r: f64, truncation: usize, basis: Basis) -> Result<Self> {
        let q = QSpec {
            eigen: EigenLaw::Power { r },
            truncation,
            basis,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.truncation == 0 {
            return Err(Error::Config("truncation J must be at least 1".into()));
        }
        match &self.eigen {
            EigenLaw::Power { r } => {
                if !(*r > 1.0) || !r.is_finite() {
                    return Err(Error::Config(format!(
                        "eigenvalue decay r must exceed 1 for a trace-class Q, got {r}"
                    )));
                }
            }
            EigenLaw::Explicit { values } => {
                if values.len() < self.truncation {
                    return Err(Error::Config(format!(
                        "{} eigenvalues given for truncation {}",
                        values.len(),
                        self.truncation
                    )));
                }
                if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(Error::Config("eigenvalues must be positive".into()));
                }
                if !values.windows(2).all(|w| w[1] < w[0]) {
                    return Err(Error::Config(
                        "eigenvalues must be strictly decreasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `λ_j`, `j >= 1`.
    pub fn eigenvalue(&self, j: usize) -> f64 {
        match &self.eigen {
            EigenLaw::Power { r } => (j as f64).powf(-r),
            EigenLaw::Explicit { values } => values.get(j - 1).copied().unwrap_or(0.0),
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.truncation).map(|j| self.eigenvalue(j)).collect()
    }

    /// Truncated trace and tail. For `λ_j = j^{-r}` the tail estimate is
    /// `(J + 1/2)^{1-r}/(r-1)` and the bound `J^{1-r}/(r-1)`; an explicit
    /// list contributes its remaining entries.
    pub fn trace(&self) -> TraceReport {
        let partial = self.eigenvalues().iter().sum();
        let j = self.truncation as f64;
        match &self.eigen {
            EigenLaw::Power { r } => TraceReport {
                partial,
                tail_estimate: (j + 0.5).powf(1.0 - r) / (r - 1.0),
                tail_bound: j.powf(1.0 - r) / (r - 1.0),
            },
            EigenLaw::Explicit { values } => {
                let tail: f64 = values[self.truncation.min(values.len())..].iter().sum();
                TraceReport {
                    partial,
                    tail_estimate: tail,
                    tail_bound: tail,
                }
            }
        }
    }
}

/// `trace(qspec)`.
pub fn trace(qspec: &QSpec) -> TraceReport {
    qspec.trace()
}

/// The first `count` basis vectors of `space`, orthonormal in its weighted
/// inner product.
pub fn basis_vectors(space: &StateSpace, basis: Basis, count: usize) -> Result<Vec<Vec<f64>>> {
    let dim = space.dim();
    let w = space.weights();
    let unit = |i: usize| {
        let mut e = vec![0.0; dim];
        e[i] = 1.0 / w[i].sqrt();
        e
    };
    let mut out = Vec::with_capacity(count);
    match basis {
        Basis::Canonical => {
            for b in space.blocks().iter().filter(|b| b.noisy) {
                for i in b.offset..b.offset + b.len {
                    out.push(unit(i));
                }
            }
        }
        Basis::Sine => {
            let fields: Vec<_> = space
                .blocks()
                .iter()
                .filter(|b| b.noisy)
                .filter_map(|b| match &b.kind {
                    BlockKind::Field { positions } => Some((b, positions)),
                    BlockKind::Scalar => None,
                })
                .collect();
            let modes = fields
                .iter()
                .map(|(_, p)| p.iter().filter(|x| **x > 0.0 && **x < 1.0).count())
                .max()
                .unwrap_or(0);
            let scalars: Vec<usize> = space
                .blocks()
                .iter()
                .filter(|b| b.noisy && b.kind == BlockKind::Scalar)
                .flat_map(|b| b.offset..b.offset + b.len)
                .collect();
            for j in 1..=modes.max(1) {
                for (b, positions) in &fields {
                    let interior = positions.iter().filter(|x| **x > 0.0 && **x < 1.0).count();
                    if j > interior {
                        continue;
                    }
                    let mut e = vec![0.0; dim];
                    for (i, x) in positions.iter().enumerate() {
                        e[b.offset + i] =
                            std::f64::consts::SQRT_2 * (j as f64 * std::f64::consts::PI * x).sin();
                    }
                    out.push(e);
                }
                if j == 1 {
                    out.extend(scalars.iter().map(|&i| unit(i)));
                }
            }
        }
    }
    if out.len() < count {
        return Err(Error::Config(format!(
            "truncation J = {count} exceeds the {} available basis vectors",
            out.len()
        )));
    }
    out.truncate(count);
    Ok(out)
}

/// A sampled state-space valued noise path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorNoisePath {
    pub grid: TimeGrid,
    /// `values[i]` is `X(t_i)`.
    pub values: Vec<Vec<f64>>,
    /// Scalar driver of each mode, `modes[j][i] = x_{j+1}(t_i)`.
    pub modes: Vec<Vec<f64>>,
    pub qspec: QSpec,
    pub law: ScalarLaw,
    pub seed: u64,
}

impl VectorNoisePath {
    /// The identically zero path.
    pub fn zero(grid: TimeGrid, dim: usize) -> Self {
        VectorNoisePath {
            grid,
            values: vec![vec![0.0; dim]; grid.steps() + 1],
            modes: Vec::new(),
            qspec: QSpec {
                eigen: EigenLaw::Explicit { values: vec![] },
                truncation: 0,
                basis: Basis::Canonical,
            },
            law: ScalarLaw::Zero,
            seed: 0,
        }
    }

    /// Wraps explicit values; row 0 must vanish.
    pub fn from_values(grid: TimeGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(Error::GridMismatch(format!(
                "noise has {} rows, grid has {} points",
                values.len(),
                grid.steps() + 1
            )));
        }
        if values[0].iter().any(|v| *v != 0.0) {
            return Err(Error::Config("noise paths must start at zero".into()));
        }
        let mut z = Self::zero(grid, values[0].len());
        z.values = values;
        z.law = ScalarLaw::External;
        Ok(z)
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn increment(&self, i: usize) -> Vec<f64> {
        self.values[i + 1]
            .iter()
            .zip(&self.values[i])
            .map(|(a, b)| a - b)
            .collect()
    }

    /// `a X + b Y` on a common grid.
    pub fn linear_combination(a: f64, x: &Self, b: f64, y: &Self) -> Result<Self> {
        if x.grid != y.grid || x.dim() != y.dim() {
            return Err(Error::GridMismatch(
                "noise paths live on different grids".into(),
            ));
        }
        let values = x
            .values
            .iter()
            .zip(&y.values)
            .map(|(r, s)| r.iter().zip(s).map(|(p, q)| a * p + b * q).collect())
            .collect();
        Self::from_values(x.grid, values)
    }

    /// Same path with all increments after step `k` removed.
    pub fn truncated_after(&self, k: usize) -> Self {
        let mut out = self.clone();
        let keep = out.values[k.min(out.values.len() - 1)].clone();
        for row in out.values.iter_mut().skip(k + 1) {
            row.clone_from(&keep);
        }
        out
    }
}

/// `X_t = Σ_{j<=J} √λ_j x_j(t) e_j` with independent drivers of law `law`,
/// mode `j` seeded by `derive_seed(seed, j)`.
pub fn sample_qnoise(
    law: &ScalarLaw,
    qspec: &QSpec,
    grid: TimeGrid,
    space: &StateSpace,
    seed: u64,
) -> Result<VectorNoisePath> {
    qspec.validate()?;
    let basis = basis_vectors(space, qspec.basis, qspec.truncation)?;
    let sampler = law.sampler(grid)?;
    let modes: Vec<Vec<f64>> = sampler
        .sample_many(seed, qspec.truncation)
        .into_iter()
        .map(|p| p.values)
        .collect();
    Ok(assemble(grid, &basis, qspec, law, modes, seed))
}

/// As [`sample_qnoise`] with a sampler built once and reused across seeds.
pub struct QNoiseSampler {
    grid: TimeGrid,
    basis: Vec<Vec<f64>>,
    qspec: QSpec,
    law: ScalarLaw,
    sampler: Box<dyn crate::noise1d::ScalarSampler>,
}

impl QNoiseSampler {
    pub fn new(law: &ScalarLaw, qspec: &QSpec, grid: TimeGrid, space: &StateSpace) -> Result<Self> {
        qspec.validate()?;
        Ok(QNoiseSampler {
            grid,
            basis: basis_vectors(space, qspec.basis, qspec.truncation)?,
            qspec: qspec.clone(),
            law: law.clone(),
            sampler: law.sampler(grid)?,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Sequential over modes; callers parallelize over seeds.
    pub fn sample(&self, seed: u64) -> VectorNoisePath {
        let modes = (0..self.qspec.truncation)
            .map(|j| {
                self.sampler
                    .sample(crate::rng::derive_seed(seed, j as u64))
                    .values
            })
            .collect();
        assemble(self.grid, &self.basis, &self.qspec, &self.law, modes, seed)
    }
}

fn assemble(
    grid: TimeGrid,
    basis: &[Vec<f64>],
    qspec: &QSpec,
    law: &ScalarLaw,
    modes: Vec<Vec<f64>>,
    seed: u64,
) -> VectorNoisePath {
    let dim = basis.first().map_or(0, |e| e.len());
    let lambdas = qspec.eigenvalues();
    let mut values = vec![vec![0.0; dim]; grid.steps() + 1];
    for (j, e) in basis.iter().enumerate() {
        let s = lambdas[j].sqrt();
        for (i, row) in values.iter_mut().enumerate() {
            let x = s * modes[j][i];
            if x != 0.0 {
                for (v, ek) in row.iter_mut().zip(e) {
                    *v += x * ek;
                }
            }
        }
    }
    VectorNoisePath {
        grid,
        values,
        modes,
        qspec: qspec.clone(),
        law: law.clone(),
        seed,
    }
}
