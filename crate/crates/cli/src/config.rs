//! Layered run configuration.
//!
//! Values are taken from, in decreasing priority: command-line flags, the
//! TOML config file, `LRDSPDE_OUT_DIR` (output directory only), built-in
//! defaults. Keys are flat dotted names such as `noise.family`; TOML
//! tables are equivalent.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use lrdspde::covariance::CovarianceKernel;
use lrdspde::noise1d::ScalarLaw;
use serde::{Deserialize, Serialize};

pub const OUT_DIR_ENV: &str = "LRDSPDE_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "lrdspde-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Fbm,
    Bifbm,
    Hermite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    ScalarTest,
    Neuron,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    Etdrk2,
    SemiImplicit,
    Yosida,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SampleNoise,
    Verify,
    Solve,
}

/// Partially specified configuration (file contents or flag overrides).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Layer {
    pub run: RunLayer,
    pub grid: GridLayer,
    pub noise: NoiseLayer,
    pub model: ModelLayer,
    pub solver: SolverLayer,
    pub verify: VerifyLayer,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunLayer {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridLayer {
    pub n: Option<usize>,
    pub horizon: Option<f64>,
    pub n_x: Option<usize>,
    pub m_inner: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseLayer {
    pub family: Option<Family>,
    pub hurst: Option<f64>,
    pub k: Option<f64>,
    pub order: Option<u32>,
    pub decay: Option<f64>,
    pub truncation: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelLayer {
    pub kind: Option<ModelKind>,
    pub rate: Option<f64>,
    pub xi: Option<f64>,
    pub u0: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverLayer {
    pub scheme: Option<SchemeName>,
    pub alpha: Option<f64>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyLayer {
    pub suite: Option<String>,
    pub quick: Option<bool>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        $( if $hi.$f.is_none() { $hi.$f = $lo.$f.clone(); } )*
    };
}

impl Layer {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Accepts either a hand-written partial config or the resolved
    /// `config.toml` written next to a manifest.
    pub fn from_toml(text: &str) -> Result<Self> {
        match toml::from_str::<Layer>(text) {
            Ok(l) => Ok(l),
            Err(e) => match Resolved::from_toml(text) {
                Ok(r) => Ok(r.to_layer()),
                Err(_) => Err(e.into()),
            },
        }
    }

    /// Fills every unset field of `self` from `lower`.
    pub fn over(mut self, lower: &Layer) -> Layer {
        overlay!(self.run, lower.run, seed, paths, out_dir);
        overlay!(self.grid, lower.grid, n, horizon, n_x, m_inner);
        overlay!(
            self.noise,
            lower.noise,
            family,
            hurst,
            k,
            order,
            decay,
            truncation
        );
        overlay!(self.model, lower.model, kind, rate, xi, u0);
        overlay!(self.solver, lower.solver, scheme, alpha, dt);
        overlay!(self.verify, lower.verify, suite, quick);
        self
    }
}

/// Fully resolved parameters; this is what the manifest echoes and what the
/// config hash covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolved {
    pub command: String,
    pub run: RunParams,
    pub grid: GridParams,
    pub noise: NoiseParams,
    pub model: ModelParams,
    pub solver: SolverParams,
    pub verify: VerifyParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    pub seed: u64,
    pub paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    pub n: usize,
    pub horizon: f64,
    pub n_x: usize,
    pub m_inner: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    /// `false` for `verify` without a family: each suite keeps its own kernels.
    pub override_kernel: bool,
    pub family: Family,
    pub hurst: f64,
    pub k: f64,
    pub order: u32,
    pub decay: f64,
    pub truncation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub rate: f64,
    pub xi: f64,
    pub u0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    pub scheme: SchemeName,
    pub alpha: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyParams {
    pub suite: String,
    pub quick: bool,
}

/// Output directory: flag or file value, then the environment, then the default.
pub fn out_dir(layer: &Layer) -> PathBuf {
    layer
        .run
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn resolve(cmd: Command, l: &Layer) -> Result<Resolved> {
    let (name, seed, paths, n) = match cmd {
        Command::SampleNoise => ("sample-noise", 0, 100, 1024),
        Command::Verify => (
            "verify",
            lrdspde::verify::VerifyOptions::default().seed,
            0,
            0,
        ),
        Command::Solve => ("solve", 0, 16, 512),
    };
    let horizon = l.grid.horizon.unwrap_or(1.0);
    if !(horizon > 0.0 && horizon.is_finite()) {
        bail!("grid.horizon must be positive, got {horizon}");
    }
    let n = match (l.grid.n, l.solver.dt) {
        (Some(n), None) => n,
        (None, None) => n,
        (given, Some(dt)) => {
            if !(dt > 0.0) {
                bail!("solver.dt must be positive, got {dt}");
            }
            let steps = (horizon / dt).round();
            if steps < 1.0 || ((steps * dt - horizon) / horizon).abs() > 1e-9 {
                bail!("solver.dt = {dt} does not divide grid.horizon = {horizon}");
            }
            let steps = steps as usize;
            if given.is_some_and(|g| g != steps) {
                bail!("grid.n and solver.dt disagree");
            }
            steps
        }
    };
    if cmd != Command::Verify && n == 0 {
        bail!("grid.n must be at least 1");
    }
    let paths = l.run.paths.unwrap_or(paths);
    if cmd != Command::Verify && paths == 0 {
        bail!("run.paths must be at least 1");
    }
    let n_x = l.grid.n_x.unwrap_or(16);
    let hurst = l.noise.hurst.unwrap_or(0.7);
    let order = l.noise.order.unwrap_or(2);
    let m_inner = l.grid.m_inner.unwrap_or(2 * n.max(1));
    let r = Resolved {
        command: name.into(),
        run: RunParams {
            seed: l.run.seed.unwrap_or(seed),
            paths,
        },
        grid: GridParams {
            n,
            horizon,
            n_x,
            m_inner,
        },
        noise: NoiseParams {
            override_kernel: cmd != Command::Verify
                || l.noise.family.is_some()
                || l.noise.hurst.is_some(),
            family: l.noise.family.unwrap_or(Family::Fbm),
            hurst,
            k: l.noise.k.unwrap_or(0.75),
            order,
            decay: l.noise.decay.unwrap_or(2.0),
            truncation: l
                .noise
                .truncation
                .unwrap_or(8.min(n_x.saturating_sub(1)).max(1)),
        },
        model: ModelParams {
            kind: l.model.kind.unwrap_or(ModelKind::Neuron),
            rate: l.model.rate.unwrap_or(1.0),
            xi: l.model.xi.unwrap_or(0.5),
            u0: l.model.u0.unwrap_or(1.0),
        },
        solver: SolverParams {
            scheme: l.solver.scheme.unwrap_or(SchemeName::Etdrk2),
            alpha: l.solver.alpha.unwrap_or(0.01),
            dt: if n > 0 { horizon / n as f64 } else { 0.0 },
        },
        verify: VerifyParams {
            suite: l.verify.suite.clone().unwrap_or_else(|| "all".into()),
            quick: l.verify.quick.unwrap_or(false),
        },
    };
    r.validate()?;
    Ok(r)
}

impl Resolved {
    fn validate(&self) -> Result<()> {
        if self.noise.override_kernel {
            self.law()?;
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<CovarianceKernel> {
        let n = &self.noise;
        let k = match n.family {
            Family::Fbm => CovarianceKernel::fbm(n.hurst),
            Family::Bifbm => CovarianceKernel::bifbm(n.hurst, n.k),
            Family::Hermite => CovarianceKernel::hermite(n.hurst, n.order),
        };
        k.with_context(|| format!("invalid noise parameters for family {:?}", n.family))
    }

    pub fn law(&self) -> Result<ScalarLaw> {
        let k = self.kernel()?;
        Ok(match self.noise.family {
            Family::Hermite => ScalarLaw::Hermite {
                hurst: self.noise.hurst,
                order: self.noise.order,
                inner: self.grid.m_inner,
            },
            _ => ScalarLaw::Gaussian(k),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_layer(&self) -> Layer {
        let o = self.noise.override_kernel;
        Layer {
            run: RunLayer {
                seed: Some(self.run.seed),
                paths: Some(self.run.paths),
                out_dir: None,
            },
            grid: GridLayer {
                n: Some(self.grid.n),
                horizon: Some(self.grid.horizon),
                n_x: Some(self.grid.n_x),
                m_inner: Some(self.grid.m_inner),
            },
            noise: NoiseLayer {
                family: o.then_some(self.noise.family),
                hurst: o.then_some(self.noise.hurst),
                k: Some(self.noise.k),
                order: Some(self.noise.order),
                decay: Some(self.noise.decay),
                truncation: Some(self.noise.truncation),
            },
            model: ModelLayer {
                kind: Some(self.model.kind),
                rate: Some(self.model.rate),
                xi: Some(self.model.xi),
                u0: Some(self.model.u0),
            },
            solver: SolverLayer {
                scheme: Some(self.solver.scheme),
                alpha: Some(self.solver.alpha),
                dt: None,
            },
            verify: VerifyLayer {
                suite: Some(self.verify.suite.clone()),
                quick: Some(self.verify.quick),
            },
        }
    }
}
