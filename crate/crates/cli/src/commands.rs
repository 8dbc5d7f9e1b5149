use std::io::Write;
use std::time::Instant;

use anyhow::{Context, Result};
use lrdspde::netop::{OperatorSpec, StateVector};
use lrdspde::neuron::{build_neuron, run_experiment, ExperimentConfig, NeuronParams};
use lrdspde::noise1d::{fmt_f64, TimeGrid};
use lrdspde::qnoise::{Basis, EigenLaw, QNoiseSampler, QSpec};
use lrdspde::rng::derive_seed;
use lrdspde::solver::{Nemitsky, NonlinearitySpec, Scheme, Solver, SolverConfig};
use lrdspde::space::StateSpace;
use lrdspde::stats::{product_moment, McSummary};
use lrdspde::verify::{run_suite, Suite, SuiteReport, VerifyOptions, CHECKPOINTS};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{out_dir, resolve, Command, Layer, ModelKind, Resolved, SchemeName};
use crate::output::{Output, SCHEMA_VERSION};

#[derive(Serialize)]
struct CheckpointRow {
    s: f64,
    t: f64,
    empirical: f64,
    stderr: f64,
    analytic: f64,
    within_3se: bool,
}

#[derive(Serialize)]
struct NoiseSummary<'a> {
    schema_version: u32,
    law: &'a lrdspde::noise1d::ScalarLaw,
    paths: usize,
    steps: usize,
    horizon: f64,
    checkpoints: Vec<CheckpointRow>,
}

pub fn sample_noise(l: &Layer) -> Result<bool> {
    let cfg = resolve(Command::SampleNoise, l)?;
    let grid = TimeGrid::new(cfg.grid.horizon, cfg.grid.n)?;
    let law = cfg.law()?;
    let kernel = cfg.kernel()?;
    let sampler = law.sampler(grid)?;
    let paths = sampler.sample_many(cfg.run.seed, cfg.run.paths);
    let mut out = Output::create(&out_dir(l))?;
    for (k, p) in paths.iter().enumerate() {
        let mut buf = Vec::new();
        p.write_csv(&mut buf)?;
        out.write(&format!("path_{k:05}.csv"), &buf)?;
    }
    // checkpoints are defined on a 64-step grid and rescaled
    let n = cfg.grid.n;
    let idx = |i: usize| ((i * n) as f64 / 64.0).round() as usize;
    let mut checkpoints = Vec::new();
    for &(i, j) in &CHECKPOINTS {
        let (a, b) = (idx(i), idx(j));
        if a == 0 || b == 0 {
            continue;
        }
        let x: Vec<f64> = paths.iter().map(|p| p.values[a]).collect();
        let y: Vec<f64> = paths.iter().map(|p| p.values[b]).collect();
        let m = product_moment(&x, &y);
        let (s, t) = (grid.point(a), grid.point(b));
        let analytic = kernel.cov(s, t)?;
        checkpoints.push(CheckpointRow {
            s,
            t,
            empirical: m.estimate,
            stderr: m.stderr,
            analytic,
            within_3se: m.within(analytic, 3.0),
        });
    }
    let summary = NoiseSummary {
        schema_version: SCHEMA_VERSION,
        law: &law,
        paths: cfg.run.paths,
        steps: n,
        horizon: cfg.grid.horizon,
        checkpoints,
    };
    out.write_json("summary.json", &summary)?;
    out.finish(&cfg)?;
    println!("wrote {} paths to {}", cfg.run.paths, out_dir(l).display());
    Ok(true)
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    schema_version: u32,
    seed: u64,
    quick: bool,
    passed: bool,
    suites: &'a [SuiteReport],
}

pub fn verify(l: &Layer) -> Result<bool> {
    let cfg = resolve(Command::Verify, l)?;
    let suites: Vec<Suite> = if cfg.verify.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![cfg.verify.suite.parse()?]
    };
    let opts = VerifyOptions {
        seed: cfg.run.seed,
        quick: cfg.verify.quick,
        kernel: if cfg.noise.override_kernel {
            Some(cfg.kernel()?)
        } else {
            None
        },
    };
    let mut reports = Vec::new();
    for s in suites {
        let start = Instant::now();
        let r = run_suite(s, &opts).with_context(|| format!("suite {s}"))?;
        println!(
            "criterion {:>2} {:<14} {} ({:.1} s)",
            r.criterion,
            s.name(),
            if r.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        for c in r.failing() {
            println!(
                "    {}: estimate {} vs {} ({})",
                c.name, c.estimate, c.reference, c.rule
            );
        }
        reports.push(r);
    }
    let passed = reports.iter().all(|r| r.passed);
    let mut out = Output::create(&out_dir(l))?;
    out.write_json(
        "report.json",
        &VerifyReport {
            schema_version: SCHEMA_VERSION,
            seed: cfg.run.seed,
            quick: cfg.verify.quick,
            passed,
            suites: &reports,
        },
    )?;
    out.finish(&cfg)?;
    for r in reports.iter().filter(|r| !r.passed) {
        eprintln!(
            "verification failed: criterion {} ({})",
            r.criterion,
            r.suite.name()
        );
    }
    Ok(passed)
}

fn solver_config(cfg: &Resolved) -> SolverConfig {
    let scheme = match cfg.solver.scheme {
        SchemeName::Etdrk2 => Scheme::ExponentialRk2,
        SchemeName::SemiImplicit => Scheme::SemiImplicit,
        SchemeName::Yosida => Scheme::Yosida {
            alpha: cfg.solver.alpha,
        },
    };
    SolverConfig {
        scheme,
        ..Default::default()
    }
}

#[derive(Serialize)]
struct ScalarReport {
    schema_version: u32,
    terminal_mean: f64,
    terminal_stderr: f64,
    sup_abs: f64,
    energy_holds: bool,
}

#[derive(Serialize)]
struct NeuronReport<'a> {
    schema_version: u32,
    final_energy: f64,
    sup_norm: f64,
    contraction: &'a lrdspde::solver::ContractionReport,
}

pub fn solve(l: &Layer) -> Result<bool> {
    let cfg = resolve(Command::Solve, l)?;
    let grid = TimeGrid::new(cfg.grid.horizon, cfg.grid.n)?;
    let law = cfg.law()?;
    let scfg = solver_config(&cfg);
    let mut out = Output::create(&out_dir(l))?;
    match cfg.model.kind {
        ModelKind::ScalarTest => {
            let spec = OperatorSpec::scalar(cfg.model.rate)?;
            let drift = Nemitsky::full(NonlinearitySpec::fitzhugh(cfg.model.xi)?, 1);
            let one = QSpec {
                eigen: EigenLaw::Explicit { values: vec![1.0] },
                truncation: 1,
                basis: Basis::Canonical,
            };
            let sampler = QNoiseSampler::new(&law, &one, grid, &StateSpace::euclidean(1))?;
            let solver = Solver::new(&spec, &drift, grid, scfg)?;
            let runs: Vec<_> = (0..cfg.run.paths)
                .into_par_iter()
                .map(|k| {
                    solver.solve(
                        &sampler.sample(derive_seed(cfg.run.seed, k as u64)),
                        &[cfg.model.u0],
                    )
                })
                .collect::<std::result::Result<_, _>>()?;
            let mut terminal = Vec::new();
            let mut sup: f64 = 0.0;
            for (k, b) in runs.iter().enumerate() {
                let mut buf = Vec::new();
                b.write_csv(&mut buf)?;
                out.write(&format!("solution_{k:05}.csv"), &buf)?;
                terminal.push(b.final_state()[0]);
                sup = b.u.iter().fold(sup, |m, r| m.max(r[0].abs()));
            }
            let m = McSummary::from_samples(&terminal);
            out.write_json(
                "report.json",
                &ScalarReport {
                    schema_version: SCHEMA_VERSION,
                    terminal_mean: m.estimate,
                    terminal_stderr: m.stderr,
                    sup_abs: sup,
                    energy_holds: runs.iter().all(|b| b.energy_holds()),
                },
            )?;
        }
        ModelKind::Neuron => {
            let params = NeuronParams {
                xi: cfg.model.xi,
                ..Default::default()
            };
            let n_x = cfg.grid.n_x;
            let model = build_neuron(&params, n_x)?;
            let q = QSpec::power(cfg.noise.decay, cfg.noise.truncation, Basis::Sine)?;
            let ecfg = ExperimentConfig {
                n_x,
                horizon: cfg.grid.horizon,
                steps: cfg.grid.n,
                ensemble: cfg.run.paths,
                seed: cfg.run.seed,
                report_points: cfg.grid.n.min(32) + 1,
            };
            let u0 = cfg.model.u0;
            let start = StateVector::constrained(n_x, |_| u0, |_| u0, u0, |_| 0.0);
            let r = run_experiment(&model, scfg, &law, &q, &ecfg, &start)?;
            let mut buf = Vec::new();
            writeln!(buf, "t,q05,q50,q95")?;
            for s in &r.soma {
                writeln!(
                    buf,
                    "{},{},{},{}",
                    fmt_f64(s.t),
                    fmt_f64(s.q05),
                    fmt_f64(s.q50),
                    fmt_f64(s.q95)
                )?;
            }
            out.write("soma_quantiles.csv", &buf)?;
            let mut buf = Vec::new();
            write!(buf, "t")?;
            for k in 0..r.soma_traces.len() {
                write!(buf, ",path_{k:05}")?;
            }
            writeln!(buf)?;
            for i in 0..=cfg.grid.n {
                write!(buf, "{}", fmt_f64(grid.point(i)))?;
                for t in &r.soma_traces {
                    write!(buf, ",{}", fmt_f64(t[i]))?;
                }
                writeln!(buf)?;
            }
            out.write("soma_traces.csv", &buf)?;
            out.write_json(
                "report.json",
                &NeuronReport {
                    schema_version: SCHEMA_VERSION,
                    final_energy: r.final_energy,
                    sup_norm: r.sup_norm,
                    contraction: &r.contraction,
                },
            )?;
        }
    }
    out.finish(&cfg)?;
    println!(
        "solved {} paths, output in {}",
        cfg.run.paths,
        out_dir(l).display()
    );
    Ok(true)
}
