//! FitzHugh–Nagumo axon, passive dendrite and dynamic soma driven by
//! independent trace-class noise on the axon, dendrite and recovery fields.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netop::{assemble, Coefficient, NetworkCoefficients, OperatorSpec, StateVector};
use crate::noise1d::{ScalarLaw, TimeGrid};
use crate::qnoise::{QNoiseSampler, QSpec, VectorNoisePath};
use crate::rng::derive_seed;
use crate::solver::{
    contraction_check, ContractionReport, Nemitsky, NonlinearitySpec, Solver, SolverConfig,
};

/// Noisy blocks in channel order.
pub const CHANNELS: [&str; 3] = ["u", "ud", "v"];

#[derive(Debug, Clone)]
pub struct NeuronParams {
    pub xi: f64,
    pub gamma_soma: f64,
    pub epsilon: f64,
    pub c: Coefficient,
    pub c_d: Coefficient,
    pub p: Coefficient,
    pub p_d: Coefficient,
    pub noise_u: bool,
    pub noise_d: bool,
    pub noise_v: bool,
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            xi: 0.5,
            gamma_soma: 1.0,
            epsilon: 1.0,
            c: 1.0.into(),
            c_d: 1.0.into(),
            p: 1.0.into(),
            p_d: 1.0.into(),
            noise_u: true,
            noise_d: true,
            noise_v: true,
        }
    }
}

impl NeuronParams {
    pub fn lambda(&self) -> f64 {
        crate::solver::fitzhugh_lambda(self.xi)
    }

    pub fn coefficients(&self) -> NetworkCoefficients {
        NetworkCoefficients {
            c: self.c.clone(),
            c_d: self.c_d.clone(),
            p: self.p.clone(),
            p_d: self.p_d.clone(),
            gamma_soma: self.gamma_soma,
            epsilon: self.epsilon,
            lambda: self.lambda(),
        }
    }

    fn channel_enabled(&self, name: &str) -> bool {
        match name {
            "u" => self.noise_u,
            "ud" => self.noise_d,
            _ => self.noise_v,
        }
    }
}

pub struct NeuronModel {
    pub params: NeuronParams,
    pub spec: OperatorSpec,
    pub drift: Nemitsky,
}

/// Assembles the operator (with the shift `λ` moved into the linear part)
/// and the lift of `h = θ − λu` onto the interior axon nodes.
pub fn build_neuron(params: &NeuronParams, n_x: usize) -> Result<NeuronModel> {
    let nl = NonlinearitySpec::fitzhugh(params.xi)?;
    let mut spec = assemble(&params.coefficients(), n_x)?;
    for ch in CHANNELS {
        spec.space_mut().set_noisy(ch, params.channel_enabled(ch))?;
    }
    spec.space_mut().set_noisy("d", false)?;
    let u = spec
        .space()
        .block("u")
        .cloned()
        .ok_or_else(|| Error::Config("operator has no u block".into()))?;
    let mut mask = vec![0.0; spec.dim()];
    for m in &mut mask[u.offset..u.offset + u.len] {
        *m = 1.0;
    }
    let drift = Nemitsky::new(nl, mask)?;
    Ok(NeuronModel {
        params: params.clone(),
        spec,
        drift,
    })
}

/// Independent noise of one law on each enabled channel.
pub struct NoiseAssembler {
    grid: TimeGrid,
    dim: usize,
    channels: Vec<(String, QNoiseSampler)>,
    law: ScalarLaw,
    qspec: QSpec,
}

impl NoiseAssembler {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn channels(&self) -> Vec<&str> {
        self.channels.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Channel `c` (index into the enabled channels) is seeded by
    /// `derive_seed(seed, c)`.
    pub fn sample(&self, seed: u64) -> VectorNoisePath {
        let mut out = VectorNoisePath::zero(self.grid, self.dim);
        out.law = self.law.clone();
        out.qspec = self.qspec.clone();
        out.seed = seed;
        for (c, (_, s)) in self.channels.iter().enumerate() {
            let p = s.sample(derive_seed(seed, c as u64));
            for (row, add) in out.values.iter_mut().zip(&p.values) {
                for (v, a) in row.iter_mut().zip(add) {
                    *v += a;
                }
            }
            out.modes.extend(p.modes);
        }
        out
    }
}

impl NeuronModel {
    pub fn noise_assembler(
        &self,
        law: &ScalarLaw,
        qspec: &QSpec,
        grid: TimeGrid,
    ) -> Result<NoiseAssembler> {
        let mut channels = Vec::new();
        for ch in CHANNELS {
            if !self.params.channel_enabled(ch) {
                continue;
            }
            let mut space = self.spec.space().clone();
            for other in CHANNELS {
                space.set_noisy(other, other == ch)?;
            }
            space.set_noisy("d", false)?;
            channels.push((
                ch.to_string(),
                QNoiseSampler::new(law, qspec, grid, &space)?,
            ));
        }
        Ok(NoiseAssembler {
            grid,
            dim: self.spec.dim(),
            channels,
            law: law.clone(),
            qspec: qspec.clone(),
        })
    }

    pub fn n_x(&self) -> usize {
        self.spec.network().map_or(0, |l| l.n_x)
    }

    /// Index of the soma coordinate in the flat state.
    pub fn soma_index(&self) -> usize {
        2 * self.n_x()
    }

    pub fn rest_state(&self) -> StateVector {
        StateVector::zeros(self.n_x())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_x: usize,
    pub horizon: f64,
    pub steps: usize,
    pub ensemble: usize,
    pub seed: u64,
    /// Number of output times in the report (subsampled from the grid).
    pub report_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomaQuantiles {
    pub t: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub soma: Vec<SomaQuantiles>,
    /// Ensemble mean of `½‖u(T)‖²`.
    pub final_energy: f64,
    /// Largest `‖u(t)‖` over the whole ensemble.
    pub sup_norm: f64,
    pub contraction: ContractionReport,
    /// Soma traces of each path, on the full grid.
    #[serde(skip)]
    pub soma_traces: Vec<Vec<f64>>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Runs an ensemble from `u0` with path `k` seeded by `derive_seed(seed, k)`,
/// plus a contraction check on the first noise path.
pub fn run_experiment(
    model: &NeuronModel,
    solver_cfg: SolverConfig,
    law: &ScalarLaw,
    qspec: &QSpec,
    cfg: &ExperimentConfig,
    u0: &StateVector,
) -> Result<ExperimentReport> {
    if cfg.ensemble == 0 || cfg.report_points < 2 {
        return Err(Error::Config(
            "ensemble and report_points must be positive".into(),
        ));
    }
    let grid = TimeGrid::new(cfg.horizon, cfg.steps)?;
    let noise = model.noise_assembler(law, qspec, grid)?;
    let solver = Solver::new(&model.spec, &model.drift, grid, solver_cfg)?;
    let x0 = model.spec.flatten(u0)?;
    let soma = model.soma_index();
    let runs: Vec<Result<(Vec<f64>, f64, f64)>> = (0..cfg.ensemble)
        .into_par_iter()
        .map(|k| {
            let x = noise.sample(derive_seed(cfg.seed, k as u64));
            let sol = solver.solve(&x, &x0)?;
            let trace: Vec<f64> = sol.u.iter().map(|r| r[soma]).collect();
            let last = sol.final_state();
            let energy = 0.5 * model.spec.inner(last, last);
            let sup = sol.u.iter().map(|r| model.spec.norm(r)).fold(0.0, f64::max);
            Ok((trace, energy, sup))
        })
        .collect();
    let mut traces = Vec::with_capacity(cfg.ensemble);
    let mut energies = Vec::with_capacity(cfg.ensemble);
    let mut sup_norm: f64 = 0.0;
    for r in runs {
        let (t, e, s) = r?;
        traces.push(t);
        energies.push(e);
        sup_norm = sup_norm.max(s);
    }
    let stride = (cfg.steps / (cfg.report_points - 1)).max(1);
    let mut soma_q = Vec::new();
    for i in (0..=cfg.steps).step_by(stride) {
        let mut col: Vec<f64> = traces.iter().map(|t| t[i]).collect();
        col.sort_by(|a, b| a.total_cmp(b));
        soma_q.push(SomaQuantiles {
            t: grid.point(i),
            q05: quantile(&col, 0.05),
            q50: quantile(&col, 0.5),
            q95: quantile(&col, 0.95),
        });
    }
    // unit perturbation, spread over the axon
    let mut x1 = x0.clone();
    let u = model.spec.space().block("u").cloned().expect("u block");
    let mut bump = vec![0.0; x0.len()];
    for b in &mut bump[u.offset..u.offset + u.len] {
        *b = 1.0;
    }
    let scale = model.spec.norm(&bump);
    for (a, b) in x1.iter_mut().zip(&bump) {
        *a += b / scale;
    }
    let contraction = contraction_check(
        &model.spec,
        &model.drift,
        &noise.sample(derive_seed(cfg.seed, 0)),
        &x0,
        &x1,
        solver_cfg,
    )?;
    Ok(ExperimentReport {
        soma: soma_q,
        final_energy: crate::stats::mean(&energies),
        sup_norm,
        contraction,
        soma_traces: traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CovarianceKernel;
    use crate::qnoise::Basis;

    #[test]
    fn default_shift() {
        let p = NeuronParams::default();
        assert!((p.lambda() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn nonlinearity_only_touches_axon() {
        let m = build_neuron(&NeuronParams::default(), 8).unwrap();
        let x: Vec<f64> = (0..m.spec.dim()).map(|i| 0.1 * i as f64 + 0.3).collect();
        let f = m.drift.apply(&x, None).unwrap();
        let s = m.spec.unflatten(&f).unwrap();
        assert!(s.u_d.iter().chain(&s.v).all(|v| *v == 0.0));
        assert_eq!(s.d, 0.0);
        assert!(s.u[1..].iter().all(|v| *v != 0.0));
    }

    #[test]
    fn soma_gets_no_noise() {
        let m = build_neuron(&NeuronParams::default(), 8).unwrap();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let law = ScalarLaw::Gaussian(CovarianceKernel::fbm(0.7).unwrap());
        let q = QSpec::power(2.0, 4, Basis::Sine).unwrap();
        let a = m.noise_assembler(&law, &q, grid).unwrap();
        assert_eq!(a.channels(), vec!["u", "ud", "v"]);
        let x = a.sample(5);
        assert!(x.values.iter().all(|r| r[m.soma_index()] == 0.0));
        assert!(x.values[16].iter().any(|v| *v != 0.0));
    }

    #[test]
    fn disabled_channel_is_silent() {
        let p = NeuronParams {
            noise_v: false,
            ..Default::default()
        };
        let m = build_neuron(&p, 8).unwrap();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let law = ScalarLaw::Gaussian(CovarianceKernel::fbm(0.7).unwrap());
        let q = QSpec::power(2.0, 4, Basis::Sine).unwrap();
        let x = m.noise_assembler(&law, &q, grid).unwrap().sample(1);
        let v = m.spec.space().block("v").unwrap().clone();
        assert!(x
            .values
            .iter()
            .all(|r| r[v.offset..v.offset + v.len].iter().all(|e| *e == 0.0)));
    }

    #[test]
    fn rest_state_is_an_equilibrium() {
        let m = build_neuron(&NeuronParams::default(), 8).unwrap();
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let cfg = ExperimentConfig {
            n_x: 8,
            horizon: 1.0,
            steps: 32,
            ensemble: 2,
            seed: 3,
            report_points: 5,
        };
        let rep = run_experiment(
            &m,
            SolverConfig::default(),
            &ScalarLaw::Zero,
            &QSpec::power(2.0, 2, Basis::Sine).unwrap(),
            &cfg,
            &m.rest_state(),
        )
        .unwrap();
        assert_eq!(grid.steps(), 32);
        assert!(rep.soma.iter().all(|q| q.q05 == 0.0 && q.q95 == 0.0));
        assert_eq!(rep.final_energy, 0.0);
        assert!(rep.contraction.within_bound);
    }
}
