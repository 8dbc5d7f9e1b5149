//! Verification suites: Monte-Carlo and numerical checks of the library
//! against closed forms and quadrature references.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convolution::{
    convolve, dyadic_lags, ensemble_holder_estimate, factorized_convolve, sup_distance, sup_norm,
    ConvolutionConfig, ConvolutionEngine, ConvolutionScheme,
};
use crate::covariance::CovarianceKernel;
use crate::error::{Error, Result};
use crate::netop::{apply_form, assemble, NetworkCoefficients, OperatorSpec, StateVector};
use crate::neuron::{build_neuron, NeuronModel, NeuronParams};
use crate::noise1d::{GaussianSampler, HermiteSampler, ScalarLaw, ScalarSampler, TimeGrid};
use crate::qnoise::{Basis, EigenLaw, QNoiseSampler, QSpec, VectorNoisePath};
use crate::rng::{derive_seed, rng_from_seed};
use crate::solver::{
    contraction_check, solve, yosida_energy_band, yosida_halving_study, Nemitsky, NonlinearitySpec,
    Scheme, SolverConfig,
};
use crate::stats::{normality_test, product_moment, McSummary};
use crate::wiener::{h_inner, wiener_integral_step, Integrand, StepFunction};

/// JSON report schema version.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Covariance,
    Isometry,
    Hermite,
    Trace,
    Convolution,
    Factorization,
    Holder,
    Operator,
    Contraction,
    Yosida,
    Deterministic,
}

impl Suite {
    pub const ALL: [Suite; 11] = [
        Suite::Covariance,
        Suite::Isometry,
        Suite::Hermite,
        Suite::Trace,
        Suite::Convolution,
        Suite::Factorization,
        Suite::Holder,
        Suite::Operator,
        Suite::Contraction,
        Suite::Yosida,
        Suite::Deterministic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Covariance => "covariance",
            Suite::Isometry => "isometry",
            Suite::Hermite => "hermite",
            Suite::Trace => "trace",
            Suite::Convolution => "convolution",
            Suite::Factorization => "factorization",
            Suite::Holder => "holder",
            Suite::Operator => "operator",
            Suite::Contraction => "contraction",
            Suite::Yosida => "yosida",
            Suite::Deterministic => "deterministic",
        }
    }

    /// Acceptance criterion number.
    pub fn criterion(&self) -> u32 {
        Suite::ALL.iter().position(|s| s == self).unwrap() as u32 + 1
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .iter()
            .copied()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub estimate: f64,
    pub reference: f64,
    pub stderr: Option<f64>,
    /// How `estimate` is compared with `reference`.
    pub rule: String,
    pub passed: bool,
}

impl Check {
    /// `|estimate − reference| ≤ k·SE`.
    pub fn within_se(name: impl Into<String>, s: McSummary, reference: f64, k: f64) -> Self {
        Check {
            name: name.into(),
            estimate: s.estimate,
            reference,
            stderr: Some(s.stderr),
            rule: format!("within {k} SE"),
            passed: s.within(reference, k),
        }
    }

    pub fn relative(name: impl Into<String>, estimate: f64, reference: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            estimate,
            reference,
            stderr: None,
            rule: format!("relative error <= {tol:e}"),
            passed: ((estimate - reference) / reference).abs() <= tol,
        }
    }

    pub fn absolute(name: impl Into<String>, estimate: f64, reference: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            estimate,
            reference,
            stderr: None,
            rule: format!("absolute error <= {tol:e}"),
            passed: (estimate - reference).abs() <= tol,
        }
    }

    /// `estimate ≤ reference`.
    pub fn at_most(name: impl Into<String>, estimate: f64, reference: f64) -> Self {
        Check {
            name: name.into(),
            estimate,
            reference,
            stderr: None,
            rule: "estimate <= reference".into(),
            passed: estimate <= reference,
        }
    }

    /// `estimate ≥ reference`.
    pub fn at_least(name: impl Into<String>, estimate: f64, reference: f64) -> Self {
        Check {
            name: name.into(),
            estimate,
            reference,
            stderr: None,
            rule: "estimate >= reference".into(),
            passed: estimate >= reference,
        }
    }

    pub fn in_range(name: impl Into<String>, estimate: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            estimate,
            reference: 0.5 * (lo + hi),
            stderr: None,
            rule: format!("in [{lo}, {hi}]"),
            passed: estimate >= lo && estimate <= hi,
        }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Check {
            name: name.into(),
            estimate: ok as u8 as f64,
            reference: 1.0,
            stderr: None,
            rule: "holds".into(),
            passed: ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub criterion: u32,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>) -> Self {
        SuiteReport {
            suite,
            criterion: suite.criterion(),
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn failing(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Reduced sample sizes for smoke runs.
    pub quick: bool,
    /// Replaces the default Gaussian kernel(s) of the covariance, isometry,
    /// trace, convolution and factorization suites.
    pub kernel: Option<CovarianceKernel>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 20240611,
            quick: false,
            kernel: None,
        }
    }
}

impl VerifyOptions {
    fn size(&self, full: usize, quick: usize) -> usize {
        if self.quick {
            quick
        } else {
            full
        }
    }

    fn suite_seed(&self, suite: Suite) -> u64 {
        derive_seed(self.seed, suite.criterion() as u64)
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Covariance => covariance_suite(opts)?,
        Suite::Isometry => isometry_suite(opts)?,
        Suite::Hermite => hermite_suite(opts)?,
        Suite::Trace => trace_suite(opts)?,
        Suite::Convolution => convolution_suite(opts)?,
        Suite::Factorization => factorization_suite(opts)?,
        Suite::Holder => holder_suite(opts)?,
        Suite::Operator => operator_suite(opts)?,
        Suite::Contraction => contraction_suite(opts)?,
        Suite::Yosida => yosida_suite(opts)?,
        Suite::Deterministic => deterministic_suite(opts)?,
    };
    Ok(SuiteReport::new(suite, checks))
}

/// Checkpoint index pairs on a 64-step grid.
pub const CHECKPOINTS: [(usize, usize); 10] = [
    (8, 8),
    (16, 16),
    (32, 32),
    (64, 64),
    (8, 64),
    (16, 48),
    (24, 40),
    (32, 64),
    (48, 56),
    (4, 60),
];

fn default_kernels(opts: &VerifyOptions) -> Result<Vec<CovarianceKernel>> {
    match opts.kernel {
        Some(k) => Ok(vec![k]),
        None => Ok(vec![
            CovarianceKernel::fbm(0.6)?,
            CovarianceKernel::fbm(0.75)?,
            CovarianceKernel::fbm(0.9)?,
            CovarianceKernel::bifbm(0.8, 0.75)?,
        ]),
    }
}

fn kernel_label(k: &CovarianceKernel) -> String {
    match k {
        CovarianceKernel::Fbm { hurst } => format!("fbm(H={hurst})"),
        CovarianceKernel::Bifbm { hurst, k } => format!("bifbm(H={hurst},K={k})"),
        CovarianceKernel::Hermite { hurst, order } => format!("hermite(H={hurst},q={order})"),
    }
}

fn covariance_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let grid = TimeGrid::new(1.0, 64)?;
    let paths = opts.size(10_000, 2_000);
    let mut checks = Vec::new();
    for (ki, kernel) in default_kernels(opts)?.into_iter().enumerate() {
        let sampler = GaussianSampler::new(kernel, grid)?;
        let ps = sampler.sample_many(
            derive_seed(opts.suite_seed(Suite::Covariance), ki as u64),
            paths,
        );
        for &(i, j) in &CHECKPOINTS {
            let x: Vec<f64> = ps.iter().map(|p| p.values[i]).collect();
            let y: Vec<f64> = ps.iter().map(|p| p.values[j]).collect();
            let s = product_moment(&x, &y);
            let r = kernel.cov(grid.point(i), grid.point(j))?;
            checks.push(Check::within_se(
                format!(
                    "{} R({}, {})",
                    kernel_label(&kernel),
                    grid.point(i),
                    grid.point(j)
                ),
                s,
                r,
                3.0,
            ));
        }
    }
    Ok(checks)
}

/// A random step function on the breakpoints of `grid`.
pub fn random_step_function(grid: &TimeGrid, seed: u64) -> Result<StepFunction> {
    let mut rng = rng_from_seed(seed);
    let n = grid.steps();
    let pieces = rng.random_range(1..=6usize).min(n);
    let mut idx: Vec<usize> = (0..pieces - 1).map(|_| rng.random_range(1..n)).collect();
    idx.push(0);
    idx.push(n);
    idx.sort_unstable();
    idx.dedup();
    let breakpoints: Vec<f64> = idx.iter().map(|&i| grid.point(i)).collect();
    let coeffs: Vec<f64> = (0..breakpoints.len() - 1)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    StepFunction::new(breakpoints, coeffs)
}

fn isometry_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let kernel = match opts.kernel {
        Some(k) => k,
        None => CovarianceKernel::fbm(0.75)?,
    };
    let label = kernel_label(&kernel);
    let grid = TimeGrid::new(1.0, 64)?;
    let paths = opts.size(10_000, 2_000);
    let seed = opts.suite_seed(Suite::Isometry);
    let sampler = GaussianSampler::new(kernel, grid)?;
    let ps = sampler.sample_many(seed, paths);
    let mut checks = Vec::new();
    for f in 0..20 {
        let step = random_step_function(&grid, derive_seed(seed ^ 0xf00d, f))?;
        let samples: Vec<f64> = ps
            .iter()
            .map(|p| wiener_integral_step(&step, p).map(|v| v * v))
            .collect::<Result<_>>()?;
        let norm = h_inner(
            &Integrand::Step(step.clone()),
            &Integrand::Step(step),
            &kernel,
        )?;
        checks.push(Check::within_se(
            format!("{label} E I(f_{f})^2"),
            McSummary::from_samples(&samples),
            norm,
            3.0,
        ));
    }
    for t in [0.25, 0.5, 1.0] {
        let ind = Integrand::Step(StepFunction::indicator(0.0, t, 1.0)?);
        let v = h_inner(&ind, &ind, &kernel)?;
        checks.push(Check::relative(
            format!("{label} |1_[0,{t}]|^2 = R(t,t)"),
            v,
            kernel.cov(t, t)?,
            1e-4,
        ));
    }
    Ok(checks)
}

fn hermite_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let hurst = 0.7;
    let grid = TimeGrid::new(1.0, 64)?;
    let inner = opts.size(2048, 1024);
    let paths = opts.size(20_000, 1_000);
    let sampler = HermiteSampler::new(hurst, 2, grid, inner)?;
    let ps = sampler.sample_many(opts.suite_seed(Suite::Hermite), paths);
    let mut checks = Vec::new();
    for lag in dyadic_lags(6) {
        let mut sq = Vec::with_capacity(paths * (65 - lag));
        for p in &ps {
            for i in 0..=64 - lag {
                let d = p.values[i + lag] - p.values[i];
                sq.push(d * d);
            }
        }
        let m = crate::stats::mean(&sq);
        let delta = lag as f64 * grid.dt();
        checks.push(Check::relative(
            format!("E|X(t+{delta}) - X(t)|^2 = delta^2H"),
            m,
            delta.powf(2.0 * hurst),
            0.05,
        ));
    }
    let fbm = CovarianceKernel::fbm(hurst)?;
    for &(i, j) in &[(16, 16), (32, 64), (64, 64), (16, 48)] {
        let x: Vec<f64> = ps.iter().map(|p| p.values[i]).collect();
        let y: Vec<f64> = ps.iter().map(|p| p.values[j]).collect();
        checks.push(Check::within_se(
            format!("E X({})X({}) = fBm R", grid.point(i), grid.point(j)),
            product_moment(&x, &y),
            fbm.cov(grid.point(i), grid.point(j))?,
            3.0,
        ));
    }
    let last: Vec<f64> = ps.iter().map(|p| p.last()).collect();
    let nt = normality_test(&last)?;
    checks.push(Check {
        name: "Gaussianity of X(1) rejected at 99%".into(),
        estimate: nt.jarque_bera,
        reference: 9.2103,
        stderr: None,
        rule: "Jarque-Bera > chi2_2(0.99)".into(),
        passed: nt.rejected_99,
    });
    Ok(checks)
}

/// `Σ_j j^{−r}` to within `1e-12` relative, by direct summation and the
/// Euler–Maclaurin tail.
pub fn zeta(r: f64) -> f64 {
    let n = 10_000usize;
    let head: f64 = (1..n).map(|j| (j as f64).powf(-r)).sum();
    let nf = n as f64;
    head + nf.powf(1.0 - r) / (r - 1.0) + 0.5 * nf.powf(-r) + r / 12.0 * nf.powf(-r - 1.0)
}

fn trace_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let kernel = match opts.kernel {
        Some(k) => k,
        None => CovarianceKernel::fbm(0.7)?,
    };
    let model = build_neuron(&NeuronParams::default(), 16)?;
    let grid = TimeGrid::new(1.0, 32)?;
    let qspec = QSpec::power(2.0, 16, Basis::Sine)?;
    let law = ScalarLaw::Gaussian(kernel);
    let sampler = QNoiseSampler::new(&law, &qspec, grid, model.spec.space())?;
    let paths = opts.size(10_000, 2_000);
    let seed = opts.suite_seed(Suite::Trace);
    let samples: Vec<VectorNoisePath> = (0..paths)
        .into_par_iter()
        .map(|k| sampler.sample(derive_seed(seed, k as u64)))
        .collect();
    let tr = qspec.trace();
    let mut checks = Vec::new();
    for i in [16usize, 32] {
        let t = grid.point(i);
        let sq: Vec<f64> = samples
            .iter()
            .map(|p| model.spec.space().norm_sq(&p.values[i]))
            .collect();
        checks.push(Check::within_se(
            format!("E|X({t})|^2 = Tr_J(Q) R(t,t)"),
            McSummary::from_samples(&sq),
            tr.partial * kernel.cov(t, t)?,
            3.0,
        ));
    }
    if let EigenLaw::Power { r } = qspec.eigen {
        let tail = zeta(r) - tr.partial;
        checks.push(Check::at_most("trace tail <= bound", tail, tr.tail_bound));
    }
    Ok(checks)
}

fn scalar_noise_sampler(kernel: CovarianceKernel, grid: TimeGrid) -> Result<QNoiseSampler> {
    QNoiseSampler::new(
        &ScalarLaw::Gaussian(kernel),
        &QSpec {
            eigen: EigenLaw::Explicit { values: vec![1.0] },
            truncation: 1,
            basis: Basis::Canonical,
        },
        grid,
        &crate::space::StateSpace::euclidean(1),
    )
}

/// `∫₀ᵀ∫₀ᵀ e^{−a(T−u)} e^{−a(T−v)} dμ(u, v)` from the Wiener inner product.
pub fn scalar_convolution_variance(kernel: &CovarianceKernel, a: f64, horizon: f64) -> Result<f64> {
    let f = Integrand::function(horizon, 1.0, move |u| (-a * (horizon - u)).exp());
    h_inner(&f, &f, kernel)
}

fn convolution_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let a = 1.0;
    let grid = TimeGrid::new(1.0, 512)?;
    let spec = OperatorSpec::scalar(a)?;
    let paths = opts.size(10_000, 2_000);
    let kernel = match opts.kernel {
        Some(k) => k,
        None => CovarianceKernel::fbm(0.7)?,
    };
    let bm = CovarianceKernel::fbm(0.5)?;
    let mut checks = Vec::new();
    for (ki, (k, reference)) in [
        (kernel, scalar_convolution_variance(&kernel, a, 1.0)?),
        (bm, (1.0 - (-2.0 * a).exp()) / (2.0 * a)),
    ]
    .into_iter()
    .enumerate()
    {
        let sampler = scalar_noise_sampler(k, grid)?;
        let engine = ConvolutionEngine::new(&spec, grid, ConvolutionConfig::default())?;
        let seed = derive_seed(opts.suite_seed(Suite::Convolution), ki as u64);
        let sq: Vec<f64> = (0..paths)
            .into_par_iter()
            .map(|p| {
                let x = sampler.sample(derive_seed(seed, p as u64));
                engine
                    .convolve(&x)
                    .map(|w| w.values[grid.steps()][0].powi(2))
            })
            .collect::<Result<_>>()?;
        let what = if ki == 0 {
            "quadrature"
        } else {
            "Ito closed form"
        };
        checks.push(Check::within_se(
            format!("{} Var W_A(1) vs {what}", kernel_label(&k)),
            McSummary::from_samples(&sq),
            reference,
            3.0,
        ));
    }
    Ok(checks)
}

fn factorization_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let kernel = match opts.kernel {
        Some(k) => k,
        None => CovarianceKernel::fbm(0.7)?,
    };
    let model = build_neuron(&NeuronParams::default(), 8)?;
    let n = opts.size(1024, 512);
    let grid = TimeGrid::new(1.0, n)?;
    let qspec = QSpec::power(2.0, 4, Basis::Sine)?;
    let noise = model.noise_assembler(&ScalarLaw::Gaussian(kernel), &qspec, grid)?;
    let cfg = ConvolutionConfig {
        alpha: 0.25_f64.min(0.5 * kernel.default_bound().hbound),
        gamma_frac: 0.0,
        scheme: ConvolutionScheme::Factorization,
    };
    let mut checks = Vec::new();
    for k in 0..opts.size(4, 1) {
        let x = noise.sample(derive_seed(opts.suite_seed(Suite::Factorization), k as u64));
        let d = convolve(&model.spec, &x, cfg)?;
        let f = factorized_convolve(&model.spec, &x, cfg)?;
        checks.push(Check::at_most(
            format!("path {k}: sup|factorized - direct|"),
            sup_distance(&model.spec, &d, &f),
            1e-2 * sup_norm(&model.spec, &d),
        ));
    }
    Ok(checks)
}

fn holder_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let spec = OperatorSpec::scalar(1.0)?;
    let grid = TimeGrid::new(1.0, 256)?;
    let paths = opts.size(1_000, 1_000);
    let drivers: Vec<(String, ScalarLaw, f64)> = vec![
        (
            "fbm(H=0.7)".into(),
            ScalarLaw::Gaussian(CovarianceKernel::fbm(0.7)?),
            0.7,
        ),
        (
            "hermite(H=0.7,q=2)".into(),
            ScalarLaw::Hermite {
                hurst: 0.7,
                order: 2,
                inner: 1024,
            },
            0.7,
        ),
        (
            "bifbm(H=0.8,K=0.75)".into(),
            ScalarLaw::Gaussian(CovarianceKernel::bifbm(0.8, 0.75)?),
            0.6,
        ),
    ];
    let one = QSpec {
        eigen: EigenLaw::Explicit { values: vec![1.0] },
        truncation: 1,
        basis: Basis::Canonical,
    };
    let engine = ConvolutionEngine::new(&spec, grid, ConvolutionConfig::default())?;
    let mut checks = Vec::new();
    for (di, (label, law, target)) in drivers.into_iter().enumerate() {
        let sampler = QNoiseSampler::new(&law, &one, grid, spec.space())?;
        let seed = derive_seed(opts.suite_seed(Suite::Holder), di as u64);
        let ws = (0..paths)
            .into_par_iter()
            .map(|p| engine.convolve(&sampler.sample(derive_seed(seed, p as u64))))
            .collect::<Result<Vec<_>>>()?;
        let h = ensemble_holder_estimate(&spec, &ws, &dyadic_lags(6))?;
        checks.push(Check::absolute(
            format!("{label} Holder exponent"),
            h,
            target,
            0.1,
        ));
    }
    Ok(checks)
}

/// A smooth random constrained state: a few random Fourier modes per field.
pub fn random_state(n_x: usize, seed: u64) -> StateVector {
    let mut rng = rng_from_seed(seed);
    let mut coef = || -> [f64; 4] { std::array::from_fn(|_| rng.random_range(-1.0..1.0)) };
    let (cu, cd, cv) = (coef(), coef(), coef());
    let d = rng.random_range(-1.0..1.0);
    let field = |c: [f64; 4]| {
        move |x: f64| {
            c.iter()
                .enumerate()
                .map(|(k, a)| a * (std::f64::consts::PI * k as f64 * x).cos())
                .sum::<f64>()
        }
    };
    StateVector::constrained(n_x, field(cu), field(cd), d, field(cv))
}

fn operator_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let spec = assemble(&NetworkCoefficients::default(), 64)?;
    let mut checks = vec![Check::at_most(
        "max Re sigma(A)",
        spec.spectral_abscissa(),
        0.0,
    )];
    checks.last_mut().unwrap().passed = spec.spectral_abscissa() < 0.0;
    let n = 64;
    let u1 = StateVector::constrained(n, |_| 1.0, |_| 1.0, 1.0, |_| 0.0);
    let u2 = StateVector::constrained(n, |_| 1.0, |_| 1.0, 1.0, |_| 1.0);
    let asym = apply_form(&spec, &u1, &u2)? - apply_form(&spec, &u2, &u1)?;
    checks.push(Check::absolute("a(u1,u2) - a(u2,u1)", asym, 2.0, 1e-12));
    let omega = spec.coercivity_constant()?;
    checks.push(Check::at_least("coercivity constant", omega, 0.0));
    checks.last_mut().unwrap().passed = omega > 0.0;
    let mut worst = f64::INFINITY;
    for k in 0..200 {
        let s = random_state(n, derive_seed(opts.suite_seed(Suite::Operator), k));
        let a = apply_form(&spec, &s, &s)?;
        let v = spec.v_norm_sq(&s.to_flat()?);
        worst = worst.min(a / v);
    }
    checks.push(Check::at_least(
        "min over 200 states of a(u,u)/|u|_V^2",
        worst,
        omega * (1.0 - 1e-10),
    ));
    Ok(checks)
}

/// Shared setup of the contraction and Yosida suites.
pub struct NeuronSetup {
    pub model: NeuronModel,
    pub noise: VectorNoisePath,
    pub u0: Vec<f64>,
    pub u1: Vec<f64>,
}

pub fn neuron_setup(seed: u64, n_x: usize, steps: usize) -> Result<NeuronSetup> {
    let model = build_neuron(&NeuronParams::default(), n_x)?;
    let grid = TimeGrid::new(2.0, steps)?;
    let law = ScalarLaw::Gaussian(CovarianceKernel::fbm(0.7)?);
    let qspec = QSpec::power(2.0, 8, Basis::Sine)?;
    let noise = model.noise_assembler(&law, &qspec, grid)?.sample(seed);
    let s0 = StateVector::constrained(n_x, |x| 1.5 * (3.0 * x).cos(), |x| x, 1.5, |x| 0.5 * x);
    let u0 = model.spec.flatten(&s0)?;
    let u = model.spec.space().block("u").cloned().expect("u block");
    let mut bump = vec![0.0; u0.len()];
    for b in &mut bump[u.offset..u.offset + u.len] {
        *b = 1.0;
    }
    let scale = model.spec.norm(&bump);
    let u1 = u0.iter().zip(&bump).map(|(a, b)| a - b / scale).collect();
    Ok(NeuronSetup {
        model,
        noise,
        u0,
        u1,
    })
}

fn contraction_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let s = neuron_setup(opts.suite_seed(Suite::Contraction), 16, opts.size(512, 256))?;
    let r = contraction_check(
        &s.model.spec,
        &s.model.drift,
        &s.noise,
        &s.u0,
        &s.u1,
        SolverConfig::default(),
    )?;
    let worst = r
        .ratios
        .iter()
        .zip(&r.bounds)
        .map(|(a, b)| a / b)
        .fold(0.0, f64::max);
    Ok(vec![
        Check::at_most("max_t ratio / e^{-2 omega t}", worst, 1.0 + r.tol),
        Check::flag("ratio nonincreasing", r.monotone),
    ])
}

fn yosida_suite(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let s = neuron_setup(opts.suite_seed(Suite::Yosida), 16, opts.size(512, 256))?;
    let cfg = SolverConfig {
        scheme: Scheme::SemiImplicit,
        ..Default::default()
    };
    let st = yosida_halving_study(&s.model.spec, &s.model.drift, &s.noise, &s.u0, 0.1, 3, cfg)?;
    let mut checks: Vec<Check> = st
        .ratios
        .iter()
        .enumerate()
        .map(|(k, r)| {
            Check::in_range(
                format!("halving {} shrink factor", k + 1),
                *r,
                st.ratio_band.0,
                st.ratio_band.1,
            )
        })
        .collect();
    let eb = yosida_energy_band(
        &s.model.spec,
        &s.model.drift,
        &s.noise,
        &s.u0,
        &[0.1, 0.01, 0.001],
        cfg,
    )?;
    checks.push(Check::at_most(
        "energy max/min across alpha",
        eb.spread,
        eb.max_spread,
    ));
    Ok(checks)
}

/// Classical RK4 for `u' = −a u + h(u)`, returning the values at every
/// `stride`-th of `steps` sub-steps.
pub fn rk4_reference(
    a: f64,
    h: &NonlinearitySpec,
    u0: f64,
    horizon: f64,
    steps: usize,
    stride: usize,
) -> Vec<f64> {
    let f = |u: f64| -a * u + h.eval(u);
    let dt = horizon / steps as f64;
    let mut u = u0;
    let mut out = vec![u0];
    for k in 0..steps {
        let k1 = f(u);
        let k2 = f(u + 0.5 * dt * k1);
        let k3 = f(u + 0.5 * dt * k2);
        let k4 = f(u + dt * k3);
        u += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (k + 1) % stride == 0 {
            out.push(u);
        }
    }
    out
}

fn deterministic_suite(_opts: &VerifyOptions) -> Result<Vec<Check>> {
    let spec = OperatorSpec::scalar(1.0)?;
    let steps = 4096;
    let grid = TimeGrid::new(1.0, steps)?;
    let zero = VectorNoisePath::zero(grid, 1);
    let mut checks = Vec::new();
    for nl in [NonlinearitySpec::fitzhugh(0.5)?, NonlinearitySpec::cubic()] {
        let name = nl.name.clone();
        let reference = rk4_reference(1.0, &nl, 1.0, 1.0, steps * 16, 16);
        let drift = Nemitsky::full(nl, 1);
        let sol = solve(&spec, &drift, &zero, &[1.0], SolverConfig::default())?;
        let err = sol
            .u
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a[0] - b).abs())
            .fold(0.0, f64::max);
        checks.push(Check::at_most(
            format!("{name}: max |u - reference|"),
            err,
            1e-4,
        ));
    }
    Ok(checks)
}
