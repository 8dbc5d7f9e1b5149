//! Wiener integrals of deterministic integrands.
//!
//! The inner product `⟨f, h⟩ = ∫∫ f(u) h(v) dμ(u, v)` against the covariance
//! measure `μ` is evaluated on the piecewise-constant projection of `f` and
//! `h` onto a partition. The measure of every rectangle of the partition
//! follows from `R` in closed form, so the weak singularity of the density
//! on the diagonal never enters a quadrature, and the value is exact when
//! both integrands are step functions on the partition.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceKernel;
use crate::error::{Error, Result};
use crate::noise1d::{HermiteSampler, NoisePath, ScalarSampler};
use crate::quad::gauss_legendre;
use crate::stats::mean;

/// `Σ c_i 1_{[t_i, t_{i+1})}` on `0 = t_0 < … < t_n = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    coeffs: Vec<f64>,
}

impl StepFunction {
    pub fn new(breakpoints: Vec<f64>, coeffs: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || coeffs.len() + 1 != breakpoints.len() {
            return Err(Error::Config(format!(
                "step function needs n + 1 breakpoints for n coefficients, got {} and {}",
                breakpoints.len(),
                coeffs.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::Config("step functions start at t = 0".into()));
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if coeffs.iter().chain(&breakpoints).any(|v| !v.is_finite()) {
            return Err(Error::Config("step function data must be finite".into()));
        }
        Ok(StepFunction {
            breakpoints,
            coeffs,
        })
    }

    /// `c 1_{[a, b)}` on `[0, b]`.
    pub fn indicator(a: f64, b: f64, c: f64) -> Result<Self> {
        if a == 0.0 {
            Self::new(vec![0.0, b], vec![c])
        } else {
            Self::new(vec![0.0, a, b], vec![0.0, c])
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 || t >= self.horizon() {
            return 0.0;
        }
        let i = self.breakpoints.partition_point(|&b| b <= t) - 1;
        self.coeffs[i]
    }

    /// Mean value over `[a, b]`.
    fn average(&self, a: f64, b: f64) -> f64 {
        let mut acc = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            let lo = self.breakpoints[i].max(a);
            let hi = self.breakpoints[i + 1].min(b);
            if hi > lo {
                acc += c * (hi - lo);
            }
        }
        acc / (b - a)
    }

    /// `a f + b g` on the union of the breakpoints.
    pub fn linear_combination(a: f64, f: &StepFunction, b: f64, g: &StepFunction) -> Result<Self> {
        let mut pts: Vec<f64> = f
            .breakpoints
            .iter()
            .chain(&g.breakpoints)
            .copied()
            .collect();
        pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        pts.dedup();
        let coeffs = pts
            .windows(2)
            .map(|w| a * f.eval(w[0]) + b * g.eval(w[0]))
            .collect();
        Self::new(pts, coeffs)
    }
}

/// A deterministic integrand on `[0, T]`.
#[derive(Clone)]
pub enum Integrand {
    Step(StepFunction),
    /// A function with declared bound `|f| <= bound` on `[0, horizon]`.
    Function {
        horizon: f64,
        bound: f64,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for Integrand {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Integrand::Step(s) => fm.debug_tuple("Step").field(s).finish(),
            Integrand::Function { horizon, bound, .. } => fm
                .debug_struct("Function")
                .field("horizon", horizon)
                .field("bound", bound)
                .finish_non_exhaustive(),
        }
    }
}

impl Integrand {
    pub fn function<F>(horizon: f64, bound: f64, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Integrand::Function {
            horizon,
            bound,
            f: Arc::new(f),
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            Integrand::Step(s) => s.horizon(),
            Integrand::Function { horizon, .. } => *horizon,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Integrand::Step(s) => s.eval(t),
            Integrand::Function { horizon, f, .. } => {
                if t < 0.0 || t > *horizon {
                    0.0
                } else {
                    f(t)
                }
            }
        }
    }

    fn is_step(&self) -> bool {
        matches!(self, Integrand::Step(_))
    }

    /// Cell averages over a partition.
    fn project(&self, pts: &[f64], rule: &(Vec<f64>, Vec<f64>)) -> Vec<f64> {
        match self {
            Integrand::Step(s) => pts.windows(2).map(|w| s.average(w[0], w[1])).collect(),
            Integrand::Function { .. } => pts
                .windows(2)
                .map(|w| {
                    let (a, b) = (w[0], w[1]);
                    rule.0
                        .iter()
                        .zip(&rule.1)
                        .map(|(x, wt)| wt * self.eval(a + (b - a) * x))
                        .sum()
                })
                .collect(),
        }
    }

    fn step_points(&self) -> &[f64] {
        match self {
            Integrand::Step(s) => s.breakpoints(),
            Integrand::Function { .. } => &[],
        }
    }
}

impl From<StepFunction> for Integrand {
    fn from(s: StepFunction) -> Self {
        Integrand::Step(s)
    }
}

/// Coarsest uniform partition used for function integrands.
const START_CELLS: usize = 32;
/// Finest uniform partition before giving up on convergence.
const MAX_CELLS: usize = 2048;
/// Relative Cauchy tolerance between successive refinements.
const CAUCHY_TOL: f64 = 1e-3;

/// `⟨f, h⟩` for the covariance measure of `kernel`.
pub fn h_inner(f: &Integrand, h: &Integrand, kernel: &CovarianceKernel) -> Result<f64> {
    kernel.validate()?;
    let horizon = f.horizon().max(h.horizon());
    if f.is_step() && h.is_step() {
        let pts = partition(horizon, 0, &[f.step_points(), h.step_points()]);
        return Ok(projected_inner(f, h, kernel, &pts));
    }
    refine(|cells| {
        let pts = partition(horizon, cells, &[f.step_points(), h.step_points()]);
        projected_inner(f, h, kernel, &pts)
    })
}

/// `‖f‖²_{|H|} = ∫∫ |f(u)| |f(v)| |∂²R/∂u∂v| du dv`.
pub fn h_abs_norm_sq(f: &Integrand, kernel: &CovarianceKernel) -> Result<f64> {
    kernel.validate()?;
    let horizon = f.horizon();
    if f.is_step() {
        let pts = partition(horizon, 0, &[f.step_points()]);
        return Ok(projected_abs(f, kernel, &pts));
    }
    refine(|cells| {
        let pts = partition(horizon, cells, &[f.step_points()]);
        projected_abs(f, kernel, &pts)
    })
}

/// Doubles the uniform resolution until two successive values agree.
fn refine<G: FnMut(usize) -> f64>(mut value: G) -> Result<f64> {
    let mut cells = START_CELLS;
    let mut prev = value(cells);
    let mut prev_diff = f64::INFINITY;
    while cells < MAX_CELLS {
        cells *= 2;
        let cur = value(cells);
        if !cur.is_finite() {
            return Err(Error::NotInH(
                "quadrature produced a non-finite value".into(),
            ));
        }
        let diff = (cur - prev).abs();
        let scale = cur.abs().max(prev.abs()).max(f64::MIN_POSITIVE);
        if diff <= CAUCHY_TOL * scale {
            return Ok(cur);
        }
        if diff >= prev_diff {
            return Err(Error::NotInH(format!(
                "successive refinements do not contract ({prev_diff:e} then {diff:e} at {cells} cells)"
            )));
        }
        prev = cur;
        prev_diff = diff;
    }
    Err(Error::NotInH(format!(
        "no Cauchy convergence within {MAX_CELLS} cells"
    )))
}

/// Uniform grid of `cells` cells on `[0, horizon]` merged with extra points.
fn partition(horizon: f64, cells: usize, extra: &[&[f64]]) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..=cells)
        .map(|i| horizon * i as f64 / cells.max(1) as f64)
        .collect();
    if cells == 0 {
        pts = vec![0.0, horizon];
    }
    for e in extra {
        pts.extend(e.iter().copied().filter(|&t| t <= horizon));
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * horizon);
    pts
}

fn cov_table(kernel: &CovarianceKernel, pts: &[f64]) -> Vec<Vec<f64>> {
    pts.iter()
        .map(|&s| pts.iter().map(|&t| kernel.cov_unchecked(s, t)).collect())
        .collect()
}

fn cell_measure(r: &[Vec<f64>], i: usize, j: usize) -> f64 {
    r[i + 1][j + 1] - r[i][j + 1] - r[i + 1][j] + r[i][j]
}

fn projected_inner(f: &Integrand, h: &Integrand, kernel: &CovarianceKernel, pts: &[f64]) -> f64 {
    let rule = gauss_legendre(8);
    let fv = f.project(pts, &rule);
    let hv = h.project(pts, &rule);
    let r = cov_table(kernel, pts);
    let mut acc = 0.0;
    for (i, fi) in fv.iter().enumerate() {
        if *fi == 0.0 {
            continue;
        }
        for (j, hj) in hv.iter().enumerate() {
            acc += fi * hj * cell_measure(&r, i, j);
        }
    }
    acc
}

fn projected_abs(f: &Integrand, kernel: &CovarianceKernel, pts: &[f64]) -> f64 {
    let rule = gauss_legendre(8);
    let fv: Vec<f64> = f.project(pts, &rule).iter().map(|v| v.abs()).collect();
    let r = cov_table(kernel, pts);
    let signed = matches!(kernel, CovarianceKernel::Bifbm { k, .. } if *k < 1.0);
    let mut acc = 0.0;
    for i in 0..fv.len() {
        if fv[i] == 0.0 {
            continue;
        }
        for j in 0..fv.len() {
            if fv[j] == 0.0 {
                continue;
            }
            let mut cell = cell_measure(&r, i, j);
            if signed {
                cell += 2.0 * negative_part(kernel, pts[i], pts[i + 1], pts[j], pts[j + 1], &rule);
            }
            acc += fv[i] * fv[j] * cell;
        }
    }
    acc
}

/// `∫∫_{[a,b]×[c,d]} max(-∂²R, 0)`; zero when the density is positive at the
/// corners and the centre.
fn negative_part(
    k: &CovarianceKernel,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    rule: &(Vec<f64>, Vec<f64>),
) -> f64 {
    let dens = |s: f64, t: f64| {
        if s == t {
            f64::INFINITY
        } else {
            let (x, y) = k.density_parts(s, t);
            x + y
        }
    };
    let probes = [
        (a, c),
        (a, d),
        (b, c),
        (b, d),
        (0.5 * (a + b), 0.5 * (c + d)),
    ];
    if probes
        .iter()
        .all(|&(s, t)| dens(s.max(1e-300), t.max(1e-300)) >= 0.0)
    {
        return 0.0;
    }
    let (x, w) = rule;
    let mut acc = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        let s = a + (b - a) * xi;
        for (yj, wj) in x.iter().zip(w) {
            let t = c + (d - c) * yj;
            acc += wi * wj * (-dens(s, t)).max(0.0);
        }
    }
    acc * (b - a) * (d - c)
}

/// Path index of a breakpoint, snapped to the nearest node within `tol`.
fn snap_index(path: &NoisePath, t: f64, tol: f64) -> Result<usize> {
    let i = path.grid.snap(t);
    let off = (path.grid.point(i) - t).abs();
    if off > tol {
        return Err(Error::GridMismatch(format!(
            "breakpoint {t} lies {off:e} from the nearest path node (tolerance {tol:e})"
        )));
    }
    Ok(i)
}

/// `Σ c_i (X_{t_{i+1}} - X_{t_i})`, breakpoints snapped to the path grid
/// within half a grid step.
pub fn wiener_integral_step(f: &StepFunction, path: &NoisePath) -> Result<f64> {
    wiener_integral_step_with_tolerance(f, path, 0.5 * path.grid.dt())
}

/// As [`wiener_integral_step`] with an explicit snapping tolerance.
pub fn wiener_integral_step_with_tolerance(
    f: &StepFunction,
    path: &NoisePath,
    tol: f64,
) -> Result<f64> {
    let idx: Vec<usize> = f
        .breakpoints()
        .iter()
        .map(|&t| snap_index(path, t, tol))
        .collect::<Result<_>>()?;
    Ok(f.coeffs()
        .iter()
        .zip(idx.windows(2))
        .map(|(c, w)| c * (path.values[w[1]] - path.values[w[0]]))
        .sum())
}

/// `∫ f dX` through the left-point step approximation of `f` on the path grid.
pub fn wiener_integral_fn(f: &Integrand, path: &NoisePath) -> Result<f64> {
    match f {
        Integrand::Step(s) => wiener_integral_step(s, path),
        Integrand::Function { .. } => {
            let g = path.grid;
            Ok(path
                .values
                .windows(2)
                .enumerate()
                .map(|(i, w)| f.eval(g.point(i)) * (w[1] - w[0]))
                .sum())
        }
    }
}

/// `f` sampled at the `u`-nodes of a Hermite sampler, so that the multiple
/// integral of `f(u) Π ∂₁K(u, y_j)` can be formed from the same Wiener
/// increments as the path.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    weights: Vec<f64>,
}

impl TransferOperator {
    pub fn new(f: &Integrand, sampler: &HermiteSampler) -> Result<Self> {
        let order = sampler.order();
        if !(1..=2).contains(&order) {
            return Err(Error::Unsupported(format!(
                "transfer operator is provided for q in {{1, 2}}, got {order}"
            )));
        }
        Ok(TransferOperator {
            weights: sampler.node_times().iter().map(|&t| f.eval(t)).collect(),
        })
    }

    /// Kernel value on the inner cells `cells` (length `q`):
    /// `T^H d ∫ f(Tu) Π_j ∂₁K(u, y_j) du` for `y_j` in cell `cells[j]`,
    /// cell-averaged.
    pub fn kernel_entry(&self, sampler: &HermiteSampler, cells: &[usize]) -> Result<f64> {
        if cells.len() != sampler.order() as usize {
            return Err(Error::Config(format!(
                "kernel of order {} needs {} indices",
                sampler.order(),
                sampler.order()
            )));
        }
        let table = sampler.table();
        let start = cells.iter().copied().max().unwrap_or(0);
        let scale = sampler.normalization() * sampler.grid().horizon().powf(sampler.hurst());
        let mut acc = 0.0;
        for r in start..table.rows() {
            let row = table.row(r);
            let prod: f64 = cells.iter().map(|&k| row[k]).product();
            acc += table.weights[r] * self.weights[r] * prod;
        }
        Ok(acc * scale)
    }

    /// The multiple integral against the given inner increments.
    pub fn integral(&self, sampler: &HermiteSampler, increments: &[f64]) -> Result<f64> {
        if increments.len() != sampler.inner() {
            return Err(Error::GridMismatch(format!(
                "expected {} inner increments, got {}",
                sampler.inner(),
                increments.len()
            )));
        }
        let contrib = sampler.node_contributions(increments);
        Ok(contrib.iter().zip(&self.weights).map(|(c, w)| c * w).sum())
    }
}

/// `transfer_operator(f)` for a Hermite sampler.
pub fn transfer_operator(f: &Integrand, sampler: &HermiteSampler) -> Result<TransferOperator> {
    TransferOperator::new(f, sampler)
}

/// Fourth-moment ratio `E I⁴ / (E I²)²` of a chaos-`m` sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hypercontractivity {
    pub order: u32,
    pub ratio: f64,
    pub stderr: f64,
    pub bound: f64,
    pub n: usize,
    /// `ratio <= bound + 3 stderr`.
    pub holds: bool,
}

/// Minimum sample count for [`hypercontractivity_check`].
pub const HYPER_MIN_SAMPLES: usize = 10_000;

/// Bound `c_m` used for the ratio: the Gaussian fourth moment for `m = 1`,
/// and for `m = 2` the fourth moment ratio of `(Z² - 1)`, which is the
/// largest in the second chaos.
pub fn hypercontractivity_constant(m: u32) -> Result<f64> {
    match m {
        1 => Ok(3.0),
        2 => Ok(15.0),
        _ => Err(Error::Unsupported(format!(
            "chaos order {m} has no recorded constant"
        ))),
    }
}

pub fn hypercontractivity_check(samples: &[f64], m: u32) -> Result<Hypercontractivity> {
    let bound = hypercontractivity_constant(m)?;
    let n = samples.len();
    if n < HYPER_MIN_SAMPLES {
        return Err(Error::Statistics(format!(
            "hypercontractivity check needs at least {HYPER_MIN_SAMPLES} samples, got {n}"
        )));
    }
    let hi: Vec<f64> = samples.iter().map(|x| x.powi(4)).collect();
    let sq: Vec<f64> = samples.iter().map(|x| x * x).collect();
    let a = mean(&hi);
    let b = mean(&sq);
    if !(b > 0.0) || !a.is_finite() {
        return Err(Error::Statistics(
            "second moment vanishes; ratio undefined".into(),
        ));
    }
    let ratio = a / (b * b);
    // delta method on (mean of I^4, mean of I^2)
    let ga = 1.0 / (b * b);
    let gb = -2.0 * a / (b * b * b);
    let nf = n as f64;
    let mut var = 0.0;
    for (x, y) in hi.iter().zip(&sq) {
        let d = ga * (x - a) + gb * (y - b);
        var += d * d;
    }
    let stderr = (var / (nf - 1.0) / nf).sqrt();
    Ok(Hypercontractivity {
        order: m,
        ratio,
        stderr,
        bound,
        n,
        holds: ratio.is_finite() && ratio <= bound + 3.0 * stderr,
    })
}
