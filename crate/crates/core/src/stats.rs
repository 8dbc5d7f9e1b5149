//! Monte-Carlo summaries and small estimators shared by the diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
}

impl McSummary {
    /// Sample mean and standard error of the mean.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = mean(samples);
        let stderr = if n > 1 {
            (sample_variance(samples) / n as f64).sqrt()
        } else {
            f64::INFINITY
        };
        McSummary {
            estimate: mean,
            stderr,
            n,
        }
    }

    /// `|estimate - reference| <= k * stderr`.
    pub fn within(&self, reference: f64, k: f64) -> bool {
        (self.estimate - reference).abs() <= k * self.stderr
    }

    /// Distance to `reference` in standard errors.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.estimate - reference) / self.stderr
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

/// Estimate of `E[x y]` for centered processes (no mean subtraction).
pub fn product_moment(x: &[f64], y: &[f64]) -> McSummary {
    let prod: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    McSummary::from_samples(&prod)
}

/// Pearson correlation.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Sample skewness and (non-excess) kurtosis.
pub fn skewness_kurtosis(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = mean(x);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2))
}

/// Outcome of a moment-based normality test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityTest {
    pub skewness: f64,
    pub kurtosis: f64,
    pub z_skewness: f64,
    pub z_kurtosis: f64,
    /// Jarque–Bera statistic, asymptotically chi-square with 2 degrees of freedom.
    pub jarque_bera: f64,
    /// Gaussianity rejected at the 99% level.
    pub rejected_99: bool,
}

/// 0.99 quantile of the chi-square law with 2 degrees of freedom.
const CHI2_2DF_99: f64 = 9.210_340_371_976_184;

pub fn normality_test(x: &[f64]) -> Result<NormalityTest> {
    if x.len() < 100 {
        return Err(Error::Statistics(format!(
            "normality test needs at least 100 samples, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let (s, k) = skewness_kurtosis(x);
    let jb = n / 6.0 * (s * s + (k - 3.0) * (k - 3.0) / 4.0);
    Ok(NormalityTest {
        skewness: s,
        kurtosis: k,
        z_skewness: s / (6.0 / n).sqrt(),
        z_kurtosis: (k - 3.0) / (24.0 / n).sqrt(),
        jarque_bera: jb,
        rejected_99: jb > CHI2_2DF_99,
    })
}

/// Ordinary least-squares line fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return Err(Error::Statistics(format!(
            "line fit needs matching inputs with at least 2 points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) || !sxx.is_finite() {
        return Err(Error::Statistics("degenerate abscissae in line fit".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let r = b - intercept - slope * a;
                r * r
            })
            .sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    if !slope.is_finite() {
        return Err(Error::Statistics("non-finite slope".into()));
    }
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr,
    })
}
