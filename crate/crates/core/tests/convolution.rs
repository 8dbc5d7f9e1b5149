use lrdspde::convolution::{
    convolve, dyadic_lags, factorized_convolve, holder_estimate, law_hbound,
    mean_square_increments, scalar_outer_constant, sup_distance, sup_moment, sup_norm,
    ConvolutionConfig, ConvolutionEngine, ConvolutionPath, ConvolutionScheme,
};
use lrdspde::covariance::CovarianceKernel;
use lrdspde::error::Error;
use lrdspde::netop::{assemble, NetworkCoefficients, OperatorSpec};
use lrdspde::noise1d::{ScalarLaw, TimeGrid};
use lrdspde::qnoise::{Basis, EigenLaw, QNoiseSampler, QSpec, VectorNoisePath};
use lrdspde::space::StateSpace;
use proptest::prelude::*;
use rayon::prelude::*;

const SEED: u64 = 0x5eed_0004;

fn factorized(alpha: f64) -> ConvolutionConfig {
    ConvolutionConfig {
        alpha,
        gamma_frac: 0.0,
        scheme: ConvolutionScheme::Factorization,
    }
}

fn scalar_sampler(law: ScalarLaw, grid: TimeGrid) -> QNoiseSampler {
    let one = QSpec {
        eigen: EigenLaw::Explicit { values: vec![1.0] },
        truncation: 1,
        basis: Basis::Canonical,
    };
    QNoiseSampler::new(&law, &one, grid, &StateSpace::euclidean(1)).unwrap()
}

fn network_noise(grid: TimeGrid, seed: u64) -> (OperatorSpec, VectorNoisePath) {
    let spec = assemble(&NetworkCoefficients::default(), 8).unwrap();
    let law = ScalarLaw::Gaussian(CovarianceKernel::fbm(0.7).unwrap());
    let q = QSpec::power(2.0, 6, Basis::Sine).unwrap();
    let x = QNoiseSampler::new(&law, &q, grid, spec.space())
        .unwrap()
        .sample(seed);
    (spec, x)
}

fn ensemble(
    spec: &OperatorSpec,
    law: ScalarLaw,
    grid: TimeGrid,
    n: usize,
    seed: u64,
) -> Vec<ConvolutionPath> {
    let s = scalar_sampler(law, grid);
    let e = ConvolutionEngine::new(spec, grid, ConvolutionConfig::default()).unwrap();
    (0..n as u64)
        .into_par_iter()
        .map(|k| e.convolve(&s.sample(seed.wrapping_add(k * 7919))).unwrap())
        .collect()
}

#[test]
fn zero_noise_gives_zero_for_both_schemes() {
    let grid = TimeGrid::new(1.0, 32).unwrap();
    let spec = assemble(&NetworkCoefficients::default(), 8).unwrap();
    let x = VectorNoisePath::zero(grid, spec.dim());
    for cfg in [ConvolutionConfig::default(), factorized(0.3)] {
        let w = ConvolutionEngine::new(&spec, grid, cfg)
            .unwrap()
            .run(&x)
            .unwrap();
        assert!(w.values.iter().flatten().all(|v| *v == 0.0));
        assert_eq!(sup_norm(&spec, &w), 0.0);
    }
}

/// For `X(t) = t` and `A = −a`, `W_A(t) = (1 − e^{−at})/a`.
#[test]
fn linear_driver_closed_form() {
    let a = 2.0;
    let spec = OperatorSpec::scalar(a).unwrap();
    let grid = TimeGrid::new(1.0, 1024).unwrap();
    let x = VectorNoisePath::from_values(grid, grid.points().iter().map(|t| vec![*t]).collect())
        .unwrap();
    let d = convolve(&spec, &x, ConvolutionConfig::default()).unwrap();
    let f = factorized_convolve(&spec, &x, factorized(0.4)).unwrap();
    for i in (0..=1024).step_by(64) {
        let t = grid.point(i);
        let exact = (1.0 - (-a * t).exp()) / a;
        assert!((d.values[i][0] - exact).abs() < 2e-3, "direct {t}");
        assert!((f.values[i][0] - exact).abs() < 1e-2, "factorized {t}");
    }
}

/// `(sin απ/π) ∫₀ᵗ r^{α−1} e^{−ar} dr` by quadrature after `r = y^{1/α}`.
#[test]
fn outer_operator_on_constants() {
    for (a, alpha, t) in [(1.0, 0.25, 1.0), (3.0, 0.6, 0.5), (0.5, 0.4, 2.0)] {
        let n = 100_000;
        let ymax = f64::powf(t, alpha);
        let mut acc = 0.0;
        for i in 0..n {
            let y = (i as f64 + 0.5) / n as f64 * ymax;
            let r = y.powf(1.0 / alpha);
            acc += (-a * r).exp() / alpha;
        }
        acc *= ymax / n as f64 * (alpha * std::f64::consts::PI).sin() / std::f64::consts::PI;
        let v = scalar_outer_constant(a, alpha, t);
        assert!((v / acc - 1.0).abs() < 1e-6, "{v} {acc}");
    }
    // a = 0: sin(απ)/(πα) t^α, and the Beta identity gives one at α + (1 − α)
    let alpha: f64 = 0.3;
    let v = scalar_outer_constant(0.0, alpha, 1.0);
    assert!(
        (v - (alpha * std::f64::consts::PI).sin() / (std::f64::consts::PI * alpha)).abs() < 1e-14
    );
}

#[test]
fn factorized_agrees_with_direct_on_network() {
    let grid = TimeGrid::new(1.0, 512).unwrap();
    for seed in 0..2 {
        let (spec, x) = network_noise(grid, SEED + seed);
        let d = convolve(&spec, &x, ConvolutionConfig::default()).unwrap();
        let f = factorized_convolve(&spec, &x, factorized(0.25)).unwrap();
        assert!(sup_distance(&spec, &d, &f) <= 1e-2 * sup_norm(&spec, &d));
        assert!(f.y_alpha.is_some());
    }
}

#[test]
fn exponent_constraints() {
    assert!(factorized(0.8).validate(Some(0.7)).is_err());
    let bad = ConvolutionConfig {
        alpha: 0.2,
        gamma_frac: 0.3,
        scheme: ConvolutionScheme::Factorization,
    };
    assert!(bad.validate(None).is_err());
    assert!(factorized(0.3).validate(Some(0.7)).is_ok());
    assert!((factorized(0.25).min_moment_order() - 4.0).abs() < 1e-15);
    let law = ScalarLaw::Gaussian(CovarianceKernel::bifbm(0.8, 0.75).unwrap());
    assert!((law_hbound(&law).unwrap() - 0.6).abs() < 1e-15);
}

#[test]
fn mean_square_continuity() {
    let spec = OperatorSpec::scalar(1.0).unwrap();
    let grid = TimeGrid::new(1.0, 128).unwrap();
    let ws = ensemble(
        &spec,
        ScalarLaw::Gaussian(CovarianceKernel::fbm(0.7).unwrap()),
        grid,
        400,
        SEED,
    );
    let m = mean_square_increments(&spec, &ws, &dyadic_lags(7)).unwrap();
    assert!(m.windows(2).all(|w| w[0] < w[1]), "{m:?}");
    assert!(m[0] < 0.01 * m[6]);
}

#[test]
fn holder_of_single_fbm_driven_path() {
    let spec = OperatorSpec::scalar(1.0).unwrap();
    let grid = TimeGrid::new(1.0, 1024).unwrap();
    let ws = ensemble(
        &spec,
        ScalarLaw::Gaussian(CovarianceKernel::fbm(0.7).unwrap()),
        grid,
        20,
        SEED + 1,
    );
    let est: Vec<f64> = ws
        .iter()
        .map(|w| holder_estimate(&spec, w, &dyadic_lags(6)).unwrap())
        .collect();
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    assert!((0.6..=0.8).contains(&mean), "{est:?}");
    assert!(matches!(
        holder_estimate(&spec, &ws[0], &[1, 2]),
        Err(Error::Statistics(_))
    ));
}

#[test]
fn sup_moments() {
    let spec = OperatorSpec::scalar(1.0).unwrap();
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let ws = ensemble(
        &spec,
        ScalarLaw::Gaussian(CovarianceKernel::fbm(0.7).unwrap()),
        grid,
        4000,
        SEED + 2,
    );
    let s = sup_moment(&spec, &ws, 2.0).unwrap();
    assert!(s.summary.estimate.is_finite() && s.stable, "{s:?}");
    assert!(matches!(
        sup_moment(&spec, &ws, 1.2),
        Err(Error::Precondition(_))
    ));
    let ros = ScalarLaw::Hermite {
        hurst: 0.7,
        order: 2,
        inner: 128,
    };
    let wr = ensemble(&spec, ros, grid, 1000, SEED + 3);
    let s4 = sup_moment(&spec, &wr, 4.0).unwrap();
    assert!(s4.summary.estimate.is_finite() && s4.summary.estimate > 0.0);
    let zero = ensemble(&spec, ScalarLaw::Zero, grid, 8, 0);
    assert_eq!(sup_moment(&spec, &zero, 4.0).unwrap().summary.estimate, 0.0);
}

#[test]
fn csv_export() {
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let spec = OperatorSpec::scalar(1.0).unwrap();
    let x = VectorNoisePath::from_values(grid, grid.points().iter().map(|t| vec![*t]).collect())
        .unwrap();
    let w = convolve(&spec, &x, ConvolutionConfig::default()).unwrap();
    let mut buf = Vec::new();
    w.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,coord_0");
    assert_eq!(lines.len(), 6);
    assert!(text.ends_with('\n') && !text.contains('\r'));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn adapted_to_the_noise(seed in any::<u64>(), k in 0usize..64, fact in any::<bool>()) {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let (spec, x) = network_noise(grid, seed);
        let cfg = if fact { factorized(0.3) } else { ConvolutionConfig::default() };
        let e = ConvolutionEngine::new(&spec, grid, cfg).unwrap();
        let full = e.run(&x).unwrap();
        let cut = e.run(&x.truncated_after(k)).unwrap();
        for i in 0..=k {
            prop_assert_eq!(&full.values[i], &cut.values[i]);
        }
    }

    #[test]
    fn linear_in_the_noise(s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, fact in any::<bool>()) {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let (spec, x1) = network_noise(grid, s1);
        let (_, x2) = network_noise(grid, s2);
        let cfg = if fact { factorized(0.3) } else { ConvolutionConfig::default() };
        let e = ConvolutionEngine::new(&spec, grid, cfg).unwrap();
        let lhs = e.run(&VectorNoisePath::linear_combination(a, &x1, b, &x2).unwrap()).unwrap();
        let (w1, w2) = (e.run(&x1).unwrap(), e.run(&x2).unwrap());
        let scale = 1.0 + a.abs() * sup_norm(&spec, &w1) + b.abs() * sup_norm(&spec, &w2);
        for i in 0..=64 {
            for j in 0..spec.dim() {
                let rhs = a * w1.values[i][j] + b * w2.values[i][j];
                prop_assert!((lhs.values[i][j] - rhs).abs() <= 1e-11 * scale);
            }
        }
    }
}
