//! Mild solutions of `du = (Au + F(u)) dt + dX` through the translated
//! equation `y' = Ay + F(W_A + y)`, `u = y + W_A`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::convolution::{ConvolutionConfig, ConvolutionEngine, ConvolutionPath};
use crate::error::{Error, Result};
use crate::linalg;
use crate::netop::{OperatorSpec, StateVector};
use crate::noise1d::TimeGrid;
use crate::qnoise::VectorNoisePath;

/// Blow-up guard, relative to the initial scale.
pub const BLOWUP_FACTOR: f64 = 1e6;
/// Default tolerance of the scalar resolvent solves.
pub const RESOLVENT_TOL: f64 = 1e-12;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Scalar dissipative nonlinearity `h` with its growth data.
#[derive(Clone)]
pub struct NonlinearitySpec {
    h: ScalarFn,
    dh: Option<ScalarFn>,
    /// Shift already moved into the linear part.
    pub lambda: f64,
    /// `|h(u)| ≤ c (1 + |u|^{2ρ+1})`.
    pub rho: f64,
    pub growth: f64,
    pub name: String,
}

impl fmt::Debug for NonlinearitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearitySpec")
            .field("name", &self.name)
            .field("lambda", &self.lambda)
            .field("rho", &self.rho)
            .field("growth", &self.growth)
            .finish()
    }
}

/// `θ(u) = u(1 − u)(u − ξ)`.
pub fn fitzhugh_theta(xi: f64, u: f64) -> f64 {
    u * (1.0 - u) * (u - xi)
}

/// `λ = (ξ² − ξ + 1)/3`, the largest value of `θ'`.
pub fn fitzhugh_lambda(xi: f64) -> f64 {
    (xi * xi - xi + 1.0) / 3.0
}

impl NonlinearitySpec {
    pub fn new<F>(name: &str, h: F, lambda: f64, rho: f64, growth: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        NonlinearitySpec {
            h: Arc::new(h),
            dh: None,
            lambda,
            rho,
            growth,
            name: name.into(),
        }
    }

    pub fn with_derivative<F>(mut self, dh: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.dh = Some(Arc::new(dh));
        self
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0, 0.0, 0.0, 0.0).with_derivative(|_| 0.0)
    }

    /// `h(u) = −k u`.
    pub fn linear(k: f64) -> Self {
        Self::new("linear", move |u| -k * u, 0.0, 0.0, k.abs()).with_derivative(move |_| -k)
    }

    /// `h(u) = −u³`.
    pub fn cubic() -> Self {
        Self::new("cubic", |u| -u * u * u, 0.0, 1.0, 1.0).with_derivative(|u| -3.0 * u * u)
    }

    /// `h(u) = −λu + θ(u)` with the FitzHugh cubic `θ` and `λ = (ξ²−ξ+1)/3`.
    pub fn fitzhugh(xi: f64) -> Result<Self> {
        if !(xi > 0.0 && xi < 1.0) {
            return Err(Error::Config(format!("xi must lie in (0,1), got {xi}")));
        }
        let lam = fitzhugh_lambda(xi);
        // |θ(u) − λu| ≤ |u|³ + (1+ξ)u² + (ξ+λ)|u| ≤ c (1 + |u|³)
        let growth = 2.0 + 2.0 * xi + lam;
        Ok(Self::new(
            "fitzhugh",
            move |u| fitzhugh_theta(xi, u) - lam * u,
            lam,
            1.0,
            growth,
        )
        .with_derivative(move |u| -3.0 * u * u + 2.0 * (1.0 + xi) * u - xi - lam))
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.h)(u)
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match &self.dh {
            Some(d) => d(u),
            None => {
                let e = 1e-6 * (1.0 + u.abs());
                ((self.h)(u + e) - (self.h)(u - e)) / (2.0 * e)
            }
        }
    }

    /// Samples `(h(u) − h(v))(u − v) ≤ 0` and the growth bound on
    /// `[−range, range]` with a fixed pseudo-random design.
    pub fn check_contract(&self, range: f64, samples: usize) -> Result<()> {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(0x5eed);
        for _ in 0..samples {
            let u: f64 = rng.random_range(-range..range);
            let v: f64 = rng.random_range(-range..range);
            let (hu, hv) = (self.eval(u), self.eval(v));
            let s = (hu - hv) * (u - v);
            if s > 1e-12 * (1.0 + hu.abs() + hv.abs()) * (u - v).abs() {
                return Err(Error::Contract(format!(
                    "{} is not dissipative: (h({u}) - h({v}))({u} - {v}) = {s}",
                    self.name
                )));
            }
            let bound = self.growth * (1.0 + u.abs().powf(2.0 * self.rho + 1.0));
            if hu.abs() > bound * (1.0 + 1e-12) {
                return Err(Error::Contract(format!(
                    "{} exceeds its growth bound at u = {u}: {} > {bound}",
                    self.name,
                    hu.abs()
                )));
            }
        }
        Ok(())
    }
}

/// Solves `y − α h(y) = w`.
///
/// `y ↦ y − α h(y)` is strictly increasing when `h` is dissipative. A
/// bracket is grown from `w`, then Newton steps are taken and replaced by
/// bisection whenever they leave the bracket.
pub fn yosida_resolvent(nl: &NonlinearitySpec, alpha: f64, w: f64) -> Result<f64> {
    yosida_resolvent_tol(nl, alpha, w, RESOLVENT_TOL)
}

pub fn yosida_resolvent_tol(nl: &NonlinearitySpec, alpha: f64, w: f64, tol: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Config(format!(
            "Yosida parameter must be positive, got {alpha}"
        )));
    }
    if !w.is_finite() {
        return Err(Error::Domain(format!(
            "resolvent argument {w} is not finite"
        )));
    }
    let g = |y: f64| y - alpha * nl.eval(y) - w;
    let g0 = g(w);
    if g0 == 0.0 {
        return Ok(w);
    }
    let non_monotone = |a: f64, b: f64| {
        Error::Contract(format!(
            "{}: y - alpha h(y) is not increasing between {a} and {b}",
            nl.name
        ))
    };
    // bracket [lo, hi] with g(lo) < 0 < g(hi)
    let (mut lo, mut hi);
    let mut step = 1.0 + w.abs();
    if g0 < 0.0 {
        lo = w;
        let mut glo = g0;
        loop {
            hi = lo + step;
            let ghi = g(hi);
            if ghi < glo {
                return Err(non_monotone(lo, hi));
            }
            if ghi > 0.0 {
                break;
            }
            lo = hi;
            glo = ghi;
            step *= 2.0;
            if !step.is_finite() {
                return Err(Error::Domain("resolvent bracket diverged".into()));
            }
        }
    } else {
        hi = w;
        let mut ghi = g0;
        loop {
            lo = hi - step;
            let glo = g(lo);
            if glo > ghi {
                return Err(non_monotone(lo, hi));
            }
            if glo < 0.0 {
                break;
            }
            hi = lo;
            ghi = glo;
            step *= 2.0;
            if !step.is_finite() {
                return Err(Error::Domain("resolvent bracket diverged".into()));
            }
        }
    }
    let scale = 1.0 + w.abs();
    let mut y = w.clamp(lo, hi);
    for _ in 0..200 {
        let gy = g(y);
        if gy == 0.0 {
            return Ok(y);
        }
        if gy < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let dg = 1.0 - alpha * nl.derivative(y);
        if dg < -1e-12 {
            return Err(non_monotone(y, y));
        }
        let mut next = if dg > 0.0 { y - gy / dg } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= tol * scale || (hi - lo) <= tol * scale {
            return Ok(next);
        }
        y = next;
    }
    Ok(y)
}

/// `F_α(w) = h(J_α(w))`.
pub fn yosida_approx(nl: &NonlinearitySpec, alpha: f64, w: f64) -> Result<f64> {
    Ok(nl.eval(yosida_resolvent(nl, alpha, w)?))
}

/// Pointwise lift `F(x)_i = mask_i h(x_i)`.
#[derive(Debug, Clone)]
pub struct Nemitsky {
    pub nl: NonlinearitySpec,
    pub mask: Vec<f64>,
}

impl Nemitsky {
    pub fn new(nl: NonlinearitySpec, mask: Vec<f64>) -> Result<Self> {
        if mask.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::Config("lift weights must be nonnegative".into()));
        }
        Ok(Nemitsky { nl, mask })
    }

    /// `h` on every coordinate.
    pub fn full(nl: NonlinearitySpec, dim: usize) -> Self {
        Nemitsky {
            nl,
            mask: vec![1.0; dim],
        }
    }

    /// `F_α` (or `F` when `alpha` is `None`) at `x`.
    pub fn apply(&self, x: &[f64], alpha: Option<f64>) -> Result<Vec<f64>> {
        x.iter()
            .zip(&self.mask)
            .map(|(&xi, &m)| {
                if m == 0.0 {
                    return Ok(0.0);
                }
                let v = match alpha {
                    Some(a) => yosida_approx(&self.nl, a, xi)?,
                    None => self.nl.eval(xi),
                };
                Ok(m * v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scheme {
    /// `(I − ΔtA) y_{k+1} = y_k + Δt F(z_k + y_k)`.
    SemiImplicit,
    /// As `SemiImplicit` with the Yosida approximation `F_α`.
    Yosida { alpha: f64 },
    /// Second-order exponential Runge–Kutta, exact for the linear part.
    ExponentialRk2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub convolution: ConvolutionConfig,
    /// Whether to record the per-step energy inequality (implicit schemes).
    pub energy: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            scheme: Scheme::ExponentialRk2,
            convolution: ConvolutionConfig::default(),
            energy: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if let Scheme::Yosida { alpha } = self.scheme {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::Config(format!(
                    "Yosida parameter must be positive, got {alpha}"
                )));
            }
        }
        Ok(())
    }

    fn alpha(&self) -> Option<f64> {
        match self.scheme {
            Scheme::Yosida { alpha } => Some(alpha),
            _ => None,
        }
    }
}

/// One step of `½‖y_{k+1}‖² ≤ ½‖y_k‖² − ωΔt‖y_{k+1}‖²_V + Δt⟨F(z_k + y_k), y_{k+1}⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyStep {
    pub lhs: f64,
    pub rhs: f64,
}

impl EnergyStep {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 1e-12 * (1.0 + self.rhs.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionBundle {
    pub grid: TimeGrid,
    pub u: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub convolution: ConvolutionPath,
    pub energy: Vec<EnergyStep>,
    /// V-coercivity constant used in the energy inequality.
    pub omega_v: f64,
    pub config: SolverConfig,
    pub seed: u64,
}

impl SolutionBundle {
    pub fn energy_holds(&self) -> bool {
        self.energy.iter().all(|e| e.holds())
    }

    pub fn final_state(&self) -> &[f64] {
        self.u.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// `t, coord_0, …` per line.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let dim = self.u.first().map_or(0, |v| v.len());
        write!(w, "t")?;
        for j in 0..dim {
            write!(w, ",coord_{j}")?;
        }
        writeln!(w)?;
        for (i, row) in self.u.iter().enumerate() {
            write!(w, "{}", crate::noise1d::fmt_f64(self.grid.point(i)))?;
            for v in row {
                write!(w, ",{}", crate::noise1d::fmt_f64(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Time stepper for one operator, lift, grid and scheme; the matrices are
/// built once and shared across runs.
pub struct Solver<'a> {
    spec: &'a OperatorSpec,
    drift: &'a Nemitsky,
    config: SolverConfig,
    grid: TimeGrid,
    conv: ConvolutionEngine<'a>,
    kind: Stepper,
    omega_v: f64,
}

enum Stepper {
    Implicit(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Exponential {
        e: DMatrix<f64>,
        p1: DMatrix<f64>,
        p2: DMatrix<f64>,
    },
}

impl<'a> Solver<'a> {
    pub fn new(
        spec: &'a OperatorSpec,
        drift: &'a Nemitsky,
        grid: TimeGrid,
        config: SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        if drift.mask.len() != spec.dim() {
            return Err(Error::Config(format!(
                "lift has {} coordinates, state has {}",
                drift.mask.len(),
                spec.dim()
            )));
        }
        let dt = grid.dt();
        let n = spec.dim();
        let kind = match config.scheme {
            Scheme::SemiImplicit | Scheme::Yosida { .. } => {
                let m = DMatrix::<f64>::identity(n, n) - spec.matrix() * dt;
                Stepper::Implicit(m.lu())
            }
            Scheme::ExponentialRk2 => {
                let (e, p1, p2) = linalg::exp_phi(spec.matrix(), dt);
                Stepper::Exponential { e, p1, p2 }
            }
        };
        let omega_v = if config.energy && matches!(kind, Stepper::Implicit(_)) {
            spec.coercivity_constant()?
        } else {
            0.0
        };
        Ok(Solver {
            spec,
            drift,
            config,
            grid,
            // the translated equation needs W_A itself, not a smoothed version
            conv: ConvolutionEngine::new(
                spec,
                grid,
                ConvolutionConfig {
                    gamma_frac: 0.0,
                    ..config.convolution
                },
            )?,
            kind,
            omega_v,
        })
    }

    pub fn convolution(&self, noise: &VectorNoisePath) -> Result<ConvolutionPath> {
        self.conv.convolve(noise)
    }

    /// Integrates from `u0` with the convolution of `noise`.
    pub fn solve(&self, noise: &VectorNoisePath, u0: &[f64]) -> Result<SolutionBundle> {
        if u0.len() != self.spec.dim() {
            return Err(Error::State(format!(
                "initial state has length {}, expected {}",
                u0.len(),
                self.spec.dim()
            )));
        }
        let conv = self.convolution(noise)?;
        self.solve_with_convolution(conv, u0)
    }

    pub fn solve_with_convolution(
        &self,
        conv: ConvolutionPath,
        u0: &[f64],
    ) -> Result<SolutionBundle> {
        let n = self.grid.steps();
        let dt = self.grid.dt();
        let alpha = self.config.alpha();
        let sup_z = conv
            .values
            .iter()
            .map(|z| self.spec.norm(z))
            .fold(0.0, f64::max);
        let guard = BLOWUP_FACTOR * (1.0f64).max(self.spec.norm(u0)).max(sup_z);
        let mut y = DVector::from_column_slice(u0);
        let mut ys = Vec::with_capacity(n + 1);
        let mut us = Vec::with_capacity(n + 1);
        ys.push(u0.to_vec());
        us.push(add(u0, &conv.values[0]));
        let mut energy = Vec::new();
        for k in 0..n {
            let zk = &conv.values[k];
            let fk = DVector::from_vec(self.drift.apply(&add(y.as_slice(), zk), alpha)?);
            let next = match &self.kind {
                Stepper::Implicit(lu) => {
                    let rhs = &y + &fk * dt;
                    let next = lu.solve(&rhs).ok_or_else(|| {
                        Error::LinearSolve(format!("implicit step {k} is singular"))
                    })?;
                    if self.config.energy {
                        let yn = next.as_slice();
                        let lhs = 0.5 * self.spec.inner(yn, yn);
                        let rhs = 0.5 * self.spec.inner(y.as_slice(), y.as_slice())
                            - self.omega_v * dt * self.spec.v_norm_sq(yn)
                            + dt * self.spec.inner(fk.as_slice(), yn);
                        energy.push(EnergyStep { lhs, rhs });
                    }
                    next
                }
                Stepper::Exponential { e, p1, p2 } => {
                    let a = e * &y + p1 * &fk;
                    let z1 = &conv.values[k + 1];
                    let fa = DVector::from_vec(self.drift.apply(&add(a.as_slice(), z1), alpha)?);
                    a + p2 * (fa - &fk)
                }
            };
            let norm = self.spec.norm(next.as_slice());
            if !(norm <= guard) {
                return Err(Error::Divergence {
                    step: k + 1,
                    norm,
                    guard,
                });
            }
            y = next;
            ys.push(y.as_slice().to_vec());
            us.push(add(y.as_slice(), &conv.values[k + 1]));
        }
        Ok(SolutionBundle {
            grid: self.grid,
            u: us,
            y: ys,
            seed: conv.seed,
            convolution: conv,
            energy,
            omega_v: self.omega_v,
            config: self.config,
        })
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn solve(
    spec: &OperatorSpec,
    drift: &Nemitsky,
    noise: &VectorNoisePath,
    u0: &[f64],
    config: SolverConfig,
) -> Result<SolutionBundle> {
    Solver::new(spec, drift, noise.grid, config)?.solve(noise, u0)
}

/// [`solve`] for a network state.
pub fn solve_state(
    spec: &OperatorSpec,
    drift: &Nemitsky,
    noise: &VectorNoisePath,
    u0: &StateVector,
    config: SolverConfig,
) -> Result<SolutionBundle> {
    let x = spec.flatten(u0)?;
    solve(spec, drift, noise, &x, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    /// `‖u(t;u0) − u(t;u1)‖² / ‖u0 − u1‖²`.
    pub ratios: Vec<f64>,
    /// `e^{−2ω̂ t}`.
    pub bounds: Vec<f64>,
    pub omega_hat: f64,
    pub tol: f64,
    pub within_bound: bool,
    pub monotone: bool,
}

/// Runs two solutions on the same noise and compares their distance with
/// `e^{−2ω̂t}(1 + tol)`, `ω̂` the dissipativity rate of `A`.
pub fn contraction_check(
    spec: &OperatorSpec,
    drift: &Nemitsky,
    noise: &VectorNoisePath,
    u0: &[f64],
    u1: &[f64],
    config: SolverConfig,
) -> Result<ContractionReport> {
    let solver = Solver::new(spec, drift, noise.grid, config)?;
    let conv = solver.convolution(noise)?;
    let a = solver.solve_with_convolution(conv.clone(), u0)?;
    let b = solver.solve_with_convolution(conv, u1)?;
    let d0 = spec.space().norm_sq(&sub(u0, u1));
    let omega_hat = spec.dissipativity_rate();
    let tol = 0.1;
    let times = noise.grid.points();
    let ratios: Vec<f64> =
        a.u.iter()
            .zip(&b.u)
            .map(|(x, y)| {
                let d = spec.space().norm_sq(&sub(x, y));
                if d0 == 0.0 {
                    0.0
                } else {
                    d / d0
                }
            })
            .collect();
    let bounds: Vec<f64> = times.iter().map(|t| (-2.0 * omega_hat * t).exp()).collect();
    let within_bound = ratios
        .iter()
        .zip(&bounds)
        .all(|(r, b)| *r <= b * (1.0 + tol));
    let monotone = ratios.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    Ok(ContractionReport {
        times,
        ratios,
        bounds,
        omega_hat,
        tol,
        within_bound,
        monotone,
    })
}

/// `sup_t ‖y_α(t) − y_β(t)‖²` for the Yosida scheme on a common noise path.
pub fn yosida_cauchy_check(
    spec: &OperatorSpec,
    drift: &Nemitsky,
    noise: &VectorNoisePath,
    u0: &[f64],
    alpha: f64,
    beta: f64,
    config: SolverConfig,
) -> Result<f64> {
    let runs = yosida_runs(spec, drift, noise, u0, &[alpha, beta], config)?;
    Ok(sup_dist(spec, &runs[0].y, &runs[1].y).powi(2))
}

fn yosida_runs(
    spec: &OperatorSpec,
    drift: &Nemitsky,
    noise: &VectorNoisePath,
    u0: &[f64],
    alphas: &[f64],
    config: SolverConfig,
) -> Result<Vec<SolutionBundle>> {
    for &a in alphas {
        if !(a > 0.0) {
            return Err(Error::Config(format!(
                "Yosida parameter must be positive, got {a}"
            )));
        }
    }
    let mut cfg = config;
    cfg.scheme = Scheme::Yosida { alpha: alphas[0] };
    let conv = Solver::new(spec, drift, noise.grid, cfg)?.convolution(noise)?;
    alphas
        .iter()
        .map(|&a| {
            cfg.scheme = Scheme::Yosida { alpha: a };
            Solver::new(spec, drift, noise.grid, cfg)?.solve_with_convolution(conv.clone(), u0)
        })
        .collect()
}

fn sup_dist(spec: &OperatorSpec, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| spec.norm(&sub(x, y)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YosidaStudy {
    pub alphas: Vec<f64>,
    /// `sup_t ‖y_{α_k} − y_{α_{k+1}}‖` (not squared).
    pub differences: Vec<f64>,
    /// `differences[k] / differences[k+1]`.
    pub ratios: Vec<f64>,
    pub ratio_band: (f64, f64),
    pub ratios_ok: bool,
}

/// Halves `alpha` `halvings + 1` times and reports the successive sup
/// differences. First-order dependence on `α` gives ratios near 2.
pub fn yosida_halving_study(
    spec: &OperatorSpec,
    drift: &Nemitsky,
    noise: &VectorNoisePath,
    u0: &[f64],
    alpha: f64,
    halvings: usize,
    config: SolverConfig,
) -> Result<YosidaStudy> {
    let alphas: Vec<f64> = (0..=halvings + 1)
        .map(|k| alpha / 2f64.powi(k as i32))
        .collect();
    let runs = yosida_runs(spec, drift, noise, u0, &alphas, config)?;
    let differences: Vec<f64> = runs
        .windows(2)
        .map(|w| sup_dist(spec, &w[0].y, &w[1].y))
        .collect();
    let ratios: Vec<f64> = differences.windows(2).map(|w| w[0] / w[1]).collect();
    let band = (1.3, 3.0);
    let ratios_ok = ratios.iter().all(|r| *r >= band.0 && *r <= band.1);
    Ok(YosidaStudy {
        alphas,
        differences,
        ratios,
        ratio_band: band,
        ratios_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBand {
    pub alphas: Vec<f64>,
    /// `sup_t (½‖y_α(t)‖² + ω ∫₀ᵗ ‖y_α‖²_V ds)` per `α`.
    pub values: Vec<f64>,
    /// `max / min` of `values`.
    pub spread: f64,
    pub max_spread: f64,
    pub within_band: bool,
}

/// Maximum allowed `max/min` ratio of the a-priori energy across `α`.
pub const ENERGY_BAND: f64 = 1.5;

pub fn yosida_energy_band(
    spec: &OperatorSpec,
    drift: &Nemitsky,
    noise: &VectorNoisePath,
    u0: &[f64],
    alphas: &[f64],
    config: SolverConfig,
) -> Result<EnergyBand> {
    let omega = spec.coercivity_constant()?;
    let dt = noise.grid.dt();
    let runs = yosida_runs(spec, drift, noise, u0, alphas, config)?;
    let values: Vec<f64> = runs
        .iter()
        .map(|r| {
            let mut integral = 0.0;
            let mut sup: f64 = 0.0;
            for (i, y) in r.y.iter().enumerate() {
                if i > 0 {
                    let prev = &r.y[i - 1];
                    integral += 0.5 * dt * (spec.v_norm_sq(prev) + spec.v_norm_sq(y));
                }
                sup = sup.max(0.5 * spec.inner(y, y) + omega * integral);
            }
            sup
        })
        .collect();
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if min > 0.0 { max / min } else { f64::INFINITY };
    Ok(EnergyBand {
        alphas: alphas.to_vec(),
        values,
        spread,
        max_spread: ENERGY_BAND,
        within_band: spread <= ENERGY_BAND,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_resolvent_closed_form() {
        let nl = NonlinearitySpec::linear(1.0);
        for &w in &[-3.0, 0.5, 10.0] {
            let a = 0.4;
            let j = yosida_resolvent(&nl, a, w).unwrap();
            assert!((j - w / (1.0 + a)).abs() < 1e-12 * (1.0 + w.abs()));
            assert!((yosida_approx(&nl, a, w).unwrap() + w / (1.0 + a)).abs() < 1e-11);
        }
    }

    #[test]
    fn fixed_point_of_h() {
        // h = θ − λu vanishes at u = 0
        let nl = NonlinearitySpec::fitzhugh(0.5).unwrap();
        assert_eq!(yosida_resolvent(&nl, 0.3, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn fitzhugh_is_dissipative() {
        let nl = NonlinearitySpec::fitzhugh(0.5).unwrap();
        nl.check_contract(5.0, 1000).unwrap();
        assert!((nl.lambda - 0.25).abs() < 1e-15);
    }

    #[test]
    fn non_monotone_h_is_rejected() {
        let nl = NonlinearitySpec::new("growing", |u| u * u * u, 0.0, 1.0, 1.0);
        assert!(matches!(
            nl.check_contract(2.0, 200),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            yosida_resolvent(&nl, 1.0, 0.1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn exponential_scheme_is_exact_for_linear_problems() {
        let spec = OperatorSpec::scalar(1.5).unwrap();
        let grid = TimeGrid::new(2.0, 64).unwrap();
        let drift = Nemitsky::full(NonlinearitySpec::zero(), 1);
        let noise = VectorNoisePath::zero(grid, 1);
        let sol = solve(&spec, &drift, &noise, &[2.0], SolverConfig::default()).unwrap();
        let exact = 2.0 * (-3.0f64).exp();
        assert!((sol.final_state()[0] - exact).abs() < 1e-13);
    }

    #[test]
    fn semi_implicit_energy_inequality() {
        let spec = OperatorSpec::scalar(1.0).unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let drift = Nemitsky::full(NonlinearitySpec::cubic(), 1);
        let noise = VectorNoisePath::zero(grid, 1);
        for scheme in [Scheme::SemiImplicit, Scheme::Yosida { alpha: 0.1 }] {
            let cfg = SolverConfig {
                scheme,
                ..Default::default()
            };
            let sol = solve(&spec, &drift, &noise, &[1.0], cfg).unwrap();
            assert_eq!(sol.energy.len(), 100);
            assert!(sol.energy_holds());
        }
    }

    #[test]
    fn divergence_guard() {
        let spec = OperatorSpec::scalar(-50.0).unwrap();
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let drift = Nemitsky::full(NonlinearitySpec::zero(), 1);
        let noise = VectorNoisePath::zero(grid, 1);
        let r = solve(&spec, &drift, &noise, &[1.0], SolverConfig::default());
        assert!(matches!(r, Err(Error::Divergence { .. })));
    }

    #[test]
    fn identical_initial_states_do_not_separate() {
        let spec = OperatorSpec::scalar(1.0).unwrap();
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let drift = Nemitsky::full(NonlinearitySpec::cubic(), 1);
        let noise = VectorNoisePath::zero(grid, 1);
        let r = contraction_check(
            &spec,
            &drift,
            &noise,
            &[0.5],
            &[0.5],
            SolverConfig::default(),
        )
        .unwrap();
        assert!(r.ratios.iter().all(|v| *v == 0.0));
    }
}
