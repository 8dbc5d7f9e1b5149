//! Stochastic convolution `W_A(t) = ∫₀ᵗ S(t−s) dX_s`, the factorization
//! route through `Y_α`, and regularity diagnostics.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netop::OperatorSpec;
use crate::noise1d::{fmt_f64, ScalarLaw, TimeGrid};
use crate::qnoise::VectorNoisePath;
use crate::stats::{fit_line, McSummary};

/// Paths needed by [`ensemble_holder_estimate`].
pub const MIN_ENSEMBLE_PATHS: usize = 1000;
/// Lags needed by the Hölder regressions.
pub const MIN_HOLDER_LAGS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvolutionScheme {
    ExponentialLeftPoint,
    Factorization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionConfig {
    /// Factorization exponent.
    pub alpha: f64,
    /// Spatial regularity order: the output is `(−A)^{γ} W_A`.
    pub gamma_frac: f64,
    pub scheme: ConvolutionScheme,
}

impl Default for ConvolutionConfig {
    fn default() -> Self {
        ConvolutionConfig {
            alpha: 0.25,
            gamma_frac: 0.0,
            scheme: ConvolutionScheme::ExponentialLeftPoint,
        }
    }
}

impl ConvolutionConfig {
    /// Checks `0 ≤ γ < α < Hbound` (the upper bound only when the law has one).
    pub fn validate(&self, hbound: Option<f64>) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma_frac) {
            return Err(Error::Config(format!(
                "gamma_frac must lie in [0,1), got {}",
                self.gamma_frac
            )));
        }
        if self.scheme == ConvolutionScheme::Factorization {
            if !(self.alpha > self.gamma_frac && self.alpha < 1.0) {
                return Err(Error::Config(format!(
                    "factorization needs gamma_frac < alpha < 1, got alpha = {}, gamma_frac = {}",
                    self.alpha, self.gamma_frac
                )));
            }
            if let Some(hb) = hbound {
                if self.alpha >= hb {
                    return Err(Error::Config(format!(
                        "alpha = {} must be below the regularity bound {hb} of the driver",
                        self.alpha
                    )));
                }
            }
        }
        Ok(())
    }

    /// Integrability exponent above which the factorization yields continuity,
    /// `1/(α − γ)`.
    pub fn min_moment_order(&self) -> f64 {
        1.0 / (self.alpha - self.gamma_frac)
    }
}

/// Regularity bound of a driver law: `H` for fBm and Hermite processes,
/// `HK` for bifractional motion. `None` for zero or external noise.
pub fn law_hbound(law: &ScalarLaw) -> Option<f64> {
    law.covariance().map(|k| k.default_bound().hbound)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionPath {
    pub grid: TimeGrid,
    /// `values[i]` is the (possibly smoothed) convolution at `t_i`.
    pub values: Vec<Vec<f64>>,
    pub config: ConvolutionConfig,
    pub y_alpha: Option<Vec<Vec<f64>>>,
    pub hbound: Option<f64>,
    pub seed: u64,
}

impl ConvolutionPath {
    /// `t, coord_0, …` per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = self.values.first().map_or(0, |v| v.len());
        write!(w, "t")?;
        for j in 0..dim {
            write!(w, ",coord_{j}")?;
        }
        writeln!(w)?;
        for (i, row) in self.values.iter().enumerate() {
            write!(w, "{}", fmt_f64(self.grid.point(i)))?;
            for v in row {
                write!(w, ",{}", fmt_f64(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Precomputed `e^{Δt A}` for repeated convolutions on one grid.
#[derive(Debug, Clone)]
pub struct ConvolutionEngine<'a> {
    spec: &'a OperatorSpec,
    grid: TimeGrid,
    config: ConvolutionConfig,
    step: DMatrix<f64>,
}

impl<'a> ConvolutionEngine<'a> {
    pub fn new(spec: &'a OperatorSpec, grid: TimeGrid, config: ConvolutionConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&config.gamma_frac) {
            return Err(Error::Config(format!(
                "gamma_frac must lie in [0,1), got {}",
                config.gamma_frac
            )));
        }
        Ok(ConvolutionEngine {
            spec,
            grid,
            config,
            step: spec.semigroup(grid.dt())?,
        })
    }

    pub fn step_matrix(&self) -> &DMatrix<f64> {
        &self.step
    }

    fn check_noise(&self, noise: &VectorNoisePath) -> Result<()> {
        if noise.grid != self.grid {
            return Err(Error::GridMismatch(format!(
                "noise grid ({} steps on [0,{}]) differs from output grid ({} steps on [0,{}])",
                noise.grid.steps(),
                noise.grid.horizon(),
                self.grid.steps(),
                self.grid.horizon()
            )));
        }
        if noise.dim() != self.spec.dim() {
            return Err(Error::GridMismatch(format!(
                "noise dimension {} differs from state dimension {}",
                noise.dim(),
                self.spec.dim()
            )));
        }
        Ok(())
    }

    /// Increments `ΔX_j` as the columns of an `N × n` matrix.
    fn increments(&self, noise: &VectorNoisePath) -> DMatrix<f64> {
        let n = self.grid.steps();
        let dim = self.spec.dim();
        DMatrix::from_fn(dim, n, |r, j| noise.values[j + 1][r] - noise.values[j][r])
    }

    fn smooth(&self, cols: DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.config.gamma_frac == 0.0 {
            Ok(cols)
        } else {
            self.spec
                .fractional_power_apply_many(self.config.gamma_frac, &cols)
        }
    }

    fn to_rows(&self, cols: &DMatrix<f64>) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; cols.nrows()]];
        for c in cols.column_iter() {
            out.push(c.iter().copied().collect());
        }
        out
    }

    /// `W_{i+1} = e^{ΔtA}(W_i + ΔX_i)`, `W_0 = 0`.
    pub fn convolve(&self, noise: &VectorNoisePath) -> Result<ConvolutionPath> {
        self.check_noise(noise)?;
        let n = self.grid.steps();
        let dim = self.spec.dim();
        let inc = self.increments(noise);
        let mut w = DMatrix::<f64>::zeros(dim, n);
        let mut cur = nalgebra::DVector::<f64>::zeros(dim);
        for j in 0..n {
            cur += inc.column(j);
            cur = &self.step * &cur;
            w.set_column(j, &cur);
        }
        let w = self.smooth(w)?;
        Ok(ConvolutionPath {
            grid: self.grid,
            values: self.to_rows(&w),
            config: self.config,
            y_alpha: None,
            hbound: law_hbound(&noise.law),
            seed: noise.seed,
        })
    }

    /// Factorized convolution.
    ///
    /// `Y_α(t_i) = Σ_{j<i} a_{i−j} E^{i−j} ΔX_j` where `a_k` is the average
    /// of `(t_i − u)^{−α}` over cell `j`. The outer integral is
    /// `(sin απ/π) Σ_{d<i} b_d E^d Y_α(t_{i−d})`, where `b_d` integrates
    /// `(t_i − u)^{α−1}` exactly against the piecewise linear hat of node
    /// `t_{i−d}`; `(−A)^γ` is applied last.
    pub fn factorized_convolve(&self, noise: &VectorNoisePath) -> Result<ConvolutionPath> {
        self.check_noise(noise)?;
        let mut cfg = self.config;
        cfg.scheme = ConvolutionScheme::Factorization;
        let hbound = law_hbound(&noise.law);
        cfg.validate(hbound)?;
        let n = self.grid.steps();
        let dim = self.spec.dim();
        let dt = self.grid.dt();
        let al = cfg.alpha;
        let a = |k: usize| {
            let k = k as f64;
            dt.powf(-al) * (k.powf(1.0 - al) - (k - 1.0).powf(1.0 - al)) / (1.0 - al)
        };
        // product trapezoid for the outer integral: Y is linear on each cell
        // and r = t_i - u runs over [d-1, d] (in steps) on the d-th cell back
        let i0 = |d: f64| (d.powf(al) - (d - 1.0).powf(al)) / al;
        let i1 = |d: f64| (d.powf(al + 1.0) - (d - 1.0).powf(al + 1.0)) / (al + 1.0);
        let left = |d: f64| i1(d) - (d - 1.0) * i0(d);
        let right = |d: f64| d * i0(d) - i1(d);
        // weight on Y(t_{i-d})
        let b = |d: usize| {
            let df = d as f64;
            let w = if d == 0 {
                right(1.0)
            } else {
                left(df) + right(df + 1.0)
            };
            dt.powf(al) * w
        };

        // y column l-1 holds Y(t_l), l = 1..n
        let mut y = DMatrix::<f64>::zeros(dim, n);
        let mut p = self.increments(noise);
        for k in 1..=n {
            let width = n - k + 1;
            p = &self.step * p.columns(0, width);
            let ak = a(k);
            // Y(t_{j+k}) += a_k E^k ΔX_j
            for j in 0..width {
                let mut col = y.column_mut(j + k - 1);
                col.axpy(ak, &p.column(j), 1.0);
            }
        }

        let mut x = DMatrix::<f64>::zeros(dim, n);
        let mut q = y.clone();
        for m in 1..=n {
            let width = n - m + 1;
            if m > 1 {
                q = &self.step * q.columns(0, width);
            }
            let bm = b(m - 1);
            // X(t_i) += b_{m-1} E^{m-1} Y(t_{i-m+1}), i = m..n
            for l in 0..width {
                let mut col = x.column_mut(l + m - 1);
                col.axpy(bm, &q.column(l), 1.0);
            }
        }
        x *= (al * PI).sin() / PI;
        let x = self.smooth(x)?;
        let mut y_rows = vec![vec![0.0; dim]];
        for c in y.column_iter() {
            y_rows.push(c.iter().copied().collect());
        }
        Ok(ConvolutionPath {
            grid: self.grid,
            values: self.to_rows(&x),
            config: cfg,
            y_alpha: Some(y_rows),
            hbound,
            seed: noise.seed,
        })
    }

    pub fn run(&self, noise: &VectorNoisePath) -> Result<ConvolutionPath> {
        match self.config.scheme {
            ConvolutionScheme::ExponentialLeftPoint => self.convolve(noise),
            ConvolutionScheme::Factorization => self.factorized_convolve(noise),
        }
    }
}

pub fn convolve(
    spec: &OperatorSpec,
    noise: &VectorNoisePath,
    config: ConvolutionConfig,
) -> Result<ConvolutionPath> {
    ConvolutionEngine::new(spec, noise.grid, config)?.convolve(noise)
}

pub fn factorized_convolve(
    spec: &OperatorSpec,
    noise: &VectorNoisePath,
    config: ConvolutionConfig,
) -> Result<ConvolutionPath> {
    ConvolutionEngine::new(spec, noise.grid, config)?.factorized_convolve(noise)
}

/// `max_i ‖x_i − y_i‖` in the state norm.
pub fn sup_distance(spec: &OperatorSpec, x: &ConvolutionPath, y: &ConvolutionPath) -> f64 {
    x.values
        .iter()
        .zip(&y.values)
        .map(|(a, b)| {
            let d: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
            spec.norm(&d)
        })
        .fold(0.0, f64::max)
}

/// `max_i ‖x_i‖`.
pub fn sup_norm(spec: &OperatorSpec, x: &ConvolutionPath) -> f64 {
    x.values.iter().map(|r| spec.norm(r)).fold(0.0, f64::max)
}

/// `(sin απ/π) ∫₀ᵗ (t−u)^{α−1} e^{−a(t−u)} du`, the outer factorization
/// operator applied to a unit constant for scalar `A = −a`.
pub fn scalar_outer_constant(a: f64, alpha: f64, t: f64) -> f64 {
    // ∫₀ᵗ r^{α−1} e^{−ar} dr = a^{−α} γ(α, a t)
    let lower = if a == 0.0 {
        t.powf(alpha) / alpha
    } else {
        a.powf(-alpha)
            * statrs::function::gamma::gamma_lr(alpha, a * t)
            * statrs::function::gamma::gamma(alpha)
    };
    (alpha * PI).sin() / PI * lower
}

/// Ensemble `E‖W(t+δ) − W(t)‖²` at each lag (grid steps), averaged over
/// all admissible `t` and all paths.
pub fn mean_square_increments(
    spec: &OperatorSpec,
    paths: &[ConvolutionPath],
    lags: &[usize],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(lags.len());
    for &lag in lags {
        let mut acc = 0.0;
        let mut count = 0usize;
        for p in paths {
            if lag == 0 || lag >= p.values.len() {
                return Err(Error::Statistics(format!("lag {lag} out of range")));
            }
            for i in 0..p.values.len() - lag {
                let d: Vec<f64> = p.values[i + lag]
                    .iter()
                    .zip(&p.values[i])
                    .map(|(a, b)| a - b)
                    .collect();
                acc += spec.inner(&d, &d);
                count += 1;
            }
        }
        out.push(acc / count as f64);
    }
    Ok(out)
}

fn holder_from_moments(dt: f64, lags: &[usize], m: &[f64]) -> Result<f64> {
    if m.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Statistics("degenerate increments".into()));
    }
    let x: Vec<f64> = lags.iter().map(|&l| (l as f64 * dt).ln()).collect();
    let y: Vec<f64> = m.iter().map(|v| v.ln()).collect();
    let fit = fit_line(&x, &y)?;
    if !fit.slope.is_finite() {
        return Err(Error::Statistics("degenerate regression".into()));
    }
    Ok(fit.slope / 2.0)
}

fn check_lags(lags: &[usize]) -> Result<()> {
    if lags.len() < MIN_HOLDER_LAGS {
        return Err(Error::Statistics(format!(
            "need at least {MIN_HOLDER_LAGS} lags, got {}",
            lags.len()
        )));
    }
    Ok(())
}

/// Half the log-log slope of the time-averaged squared increments of a
/// single path.
pub fn holder_estimate(spec: &OperatorSpec, path: &ConvolutionPath, lags: &[usize]) -> Result<f64> {
    check_lags(lags)?;
    let m = mean_square_increments(spec, std::slice::from_ref(path), lags)?;
    holder_from_moments(path.grid.dt(), lags, &m)
}

/// As [`holder_estimate`] with the modulus averaged over an ensemble of
/// at least [`MIN_ENSEMBLE_PATHS`] paths.
pub fn ensemble_holder_estimate(
    spec: &OperatorSpec,
    paths: &[ConvolutionPath],
    lags: &[usize],
) -> Result<f64> {
    check_lags(lags)?;
    if paths.len() < MIN_ENSEMBLE_PATHS {
        return Err(Error::Statistics(format!(
            "need at least {MIN_ENSEMBLE_PATHS} paths, got {}",
            paths.len()
        )));
    }
    let m = mean_square_increments(spec, paths, lags)?;
    holder_from_moments(paths[0].grid.dt(), lags, &m)
}

/// Dyadic lags `1, 2, …, 2^{count−1}`.
pub fn dyadic_lags(count: usize) -> Vec<usize> {
    (0..count).map(|k| 1usize << k).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupMoment {
    pub summary: McSummary,
    /// Estimate from the first half of the samples.
    pub half_estimate: f64,
    /// `|full − half| / full`, zero when both vanish.
    pub relative_change: f64,
    /// `relative_change ≤ 0.1`.
    pub stable: bool,
}

/// `E sup_t ‖W_A(t)‖^p` with standard error and a doubling check.
pub fn sup_moment(spec: &OperatorSpec, paths: &[ConvolutionPath], p: f64) -> Result<SupMoment> {
    if paths.len() < 4 {
        return Err(Error::Statistics("need at least four paths".into()));
    }
    if let Some(hb) = paths[0].hbound {
        if !(p > 1.0 / hb) {
            return Err(Error::Precondition(format!(
                "p = {p} must exceed 1/H = {}",
                1.0 / hb
            )));
        }
    }
    let samples: Vec<f64> = paths.iter().map(|x| sup_norm(spec, x).powf(p)).collect();
    let summary = McSummary::from_samples(&samples);
    let half = McSummary::from_samples(&samples[..samples.len() / 2]).estimate;
    let relative_change = if summary.estimate == 0.0 && half == 0.0 {
        0.0
    } else {
        (summary.estimate - half).abs() / summary.estimate.abs()
    };
    Ok(SupMoment {
        summary,
        half_estimate: half,
        relative_change,
        stable: relative_change <= 0.1 && summary.estimate.is_finite(),
    })
}
