//! `lrdspde` command-line front end.
//!
//! Exit status: 0 on success, 1 when a verification suite fails, 2 for
//! usage, configuration and runtime errors.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Family, Layer, ModelKind, SchemeName};

#[derive(Parser)]
#[command(
    name = "lrdspde",
    version,
    about = "Stochastic evolution equations driven by long-memory noise"
)]
#[command(
    after_help = "Precedence: flags > --config file > LRDSPDE_OUT_DIR (output dir only) > defaults."
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample scalar noise paths and compare their covariance with the kernel.
    SampleNoise(Common),
    /// Run verification suites and write a pass/fail report.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Suite name, or `all`.
        #[arg(long)]
        suite: Option<String>,
        /// Reduced sample sizes.
        #[arg(long)]
        quick: bool,
    },
    /// Solve the scalar test problem or the neuron model.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        model: Option<ModelKind>,
        #[arg(long, value_enum)]
        scheme: Option<SchemeName>,
        /// Yosida parameter.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// FitzHugh threshold.
        #[arg(long)]
        xi: Option<f64>,
        /// Decay rate `a` of the scalar test operator.
        #[arg(long)]
        rate: Option<f64>,
        /// Initial value of the scalar test problem.
        #[arg(long)]
        u0: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config file with dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, value_enum)]
    family: Option<Family>,
    #[arg(long = "H")]
    hurst: Option<f64>,
    #[arg(long = "K")]
    k: Option<f64>,
    #[arg(long)]
    order: Option<u32>,
    /// Number of time steps.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    n_x: Option<usize>,
    #[arg(long)]
    m_inner: Option<usize>,
    /// Eigenvalue decay exponent of the noise covariance.
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    truncation: Option<usize>,
}

impl Common {
    fn layer(&self) -> anyhow::Result<Layer> {
        let mut l = Layer::default();
        l.run.seed = self.seed;
        l.run.paths = self.paths;
        l.run.out_dir = self.out.clone();
        l.grid.n = self.n;
        l.grid.horizon = self.horizon;
        l.grid.n_x = self.n_x;
        l.grid.m_inner = self.m_inner;
        l.noise.family = self.family;
        l.noise.hurst = self.hurst;
        l.noise.k = self.k;
        l.noise.order = self.order;
        l.noise.decay = self.decay;
        l.noise.truncation = self.truncation;
        let file = match &self.config {
            Some(p) => Layer::from_file(p)?,
            None => Layer::default(),
        };
        Ok(l.over(&file))
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Cmd::SampleNoise(c) => commands::sample_noise(&c.layer()?),
        Cmd::Verify {
            common,
            suite,
            quick,
        } => {
            let mut l = common.layer()?;
            if suite.is_some() {
                l.verify.suite = suite;
            }
            if quick {
                l.verify.quick = Some(true);
            }
            commands::verify(&l)
        }
        Cmd::Solve {
            common,
            model,
            scheme,
            alpha,
            dt,
            xi,
            rate,
            u0,
        } => {
            let mut l = common.layer()?;
            let flags = Layer {
                model: config::ModelLayer {
                    kind: model,
                    rate,
                    xi,
                    u0,
                },
                solver: config::SolverLayer { scheme, alpha, dt },
                ..Default::default()
            };
            l = flags.over(&l);
            commands::solve(&l)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
