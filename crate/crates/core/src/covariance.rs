//! Closed-form covariance kernels of the scalar driving processes.
//!
//! Three families are supported: fractional Brownian motion, bifractional
//! Brownian motion and the Hermite process of order `q`. All of them vanish
//! on the axes, so the covariance is the distribution function of the
//! covariance measure `mu([a,b) x [c,d)) = R(b,d) - R(a,d) - R(b,c) + R(a,c)`,
//! whose density `d^2 R / ds dt` is weakly singular on the diagonal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariance `R(s,t)` of a scalar driving process.
///
/// The fBm family accepts `H = 1/2` (standard Brownian motion) as a
/// reference point for comparisons; every other use requires `H > 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum CovarianceKernel {
    Fbm { hurst: f64 },
    Bifbm { hurst: f64, k: f64 },
    Hermite { hurst: f64, order: u32 },
}

/// Pointwise bound `|d^2R/dsdt| <= c1 |t-s|^(2 hbound - 2) + c2 (st)^beta`.
///
/// `c2 = 0` means there is no `g` term; `beta` is then a placeholder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceBound {
    pub c1: f64,
    pub c2: f64,
    pub hbound: f64,
    pub beta: f64,
}

impl CovarianceBound {
    pub fn evaluate(&self, s: f64, t: f64) -> f64 {
        let singular = self.c1 * (t - s).abs().powf(2.0 * self.hbound - 2.0);
        if self.c2 == 0.0 {
            singular
        } else {
            singular + self.c2 * (s * t).powf(self.beta)
        }
    }
}

impl CovarianceKernel {
    pub fn fbm(hurst: f64) -> Result<Self> {
        let k = CovarianceKernel::Fbm { hurst };
        k.validate()?;
        Ok(k)
    }

    pub fn bifbm(hurst: f64, k: f64) -> Result<Self> {
        let kernel = CovarianceKernel::Bifbm { hurst, k };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn hermite(hurst: f64, order: u32) -> Result<Self> {
        let k = CovarianceKernel::Hermite { hurst, order };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CovarianceKernel::Fbm { hurst } => {
                if !(0.5..1.0).contains(&hurst) {
                    return Err(Error::Config(format!(
                        "fbm requires H in [1/2, 1), got H = {hurst}"
                    )));
                }
            }
            CovarianceKernel::Bifbm { hurst, k } => {
                if !(hurst > 0.0 && hurst < 1.0) {
                    return Err(Error::Config(format!(
                        "bifbm requires H in (0, 1), got H = {hurst}"
                    )));
                }
                if !(k > 0.0 && k <= 1.0) {
                    return Err(Error::Config(format!(
                        "bifbm requires K in (0, 1], got K = {k}"
                    )));
                }
                if !(2.0 * hurst * k > 1.0) {
                    return Err(Error::Config(format!(
                        "bifbm requires 2HK > 1, got 2HK = {}",
                        2.0 * hurst * k
                    )));
                }
            }
            CovarianceKernel::Hermite { hurst, order } => {
                if !(hurst > 0.5 && hurst < 1.0) {
                    return Err(Error::Config(format!(
                        "hermite requires H in (1/2, 1), got H = {hurst}"
                    )));
                }
                if order == 0 {
                    return Err(Error::Config("hermite requires order q >= 1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn hurst(&self) -> f64 {
        match *self {
            CovarianceKernel::Fbm { hurst }
            | CovarianceKernel::Bifbm { hurst, .. }
            | CovarianceKernel::Hermite { hurst, .. } => hurst,
        }
    }

    /// Self-similarity index: `H`, or `HK` for bifbm.
    pub fn self_similarity(&self) -> f64 {
        match *self {
            CovarianceKernel::Bifbm { hurst, k } => hurst * k,
            _ => self.hurst(),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            CovarianceKernel::Fbm { .. } => "fbm",
            CovarianceKernel::Bifbm { .. } => "bifbm",
            CovarianceKernel::Hermite { .. } => "hermite",
        }
    }

    /// `R(s,t)`.
    pub fn cov(&self, s: f64, t: f64) -> Result<f64> {
        self.validate()?;
        check_time(s)?;
        check_time(t)?;
        Ok(self.cov_unchecked(s, t))
    }

    /// `R(s,t)` without parameter validation; callers must hold a validated kernel.
    pub(crate) fn cov_unchecked(&self, s: f64, t: f64) -> f64 {
        if s == 0.0 || t == 0.0 {
            return 0.0;
        }
        match *self {
            CovarianceKernel::Fbm { hurst } | CovarianceKernel::Hermite { hurst, .. } => {
                fbm_cov(hurst, s, t)
            }
            CovarianceKernel::Bifbm { hurst, k } => {
                let h2 = 2.0 * hurst;
                let sum = s.powf(h2) + t.powf(h2);
                (sum.powf(k) - (t - s).abs().powf(h2 * k)) / 2f64.powf(k)
            }
        }
    }

    /// Mixed density `d^2 R / ds dt` off the diagonal.
    pub fn cov_density(&self, s: f64, t: f64) -> Result<f64> {
        self.validate()?;
        check_time(s)?;
        check_time(t)?;
        if s == t {
            return Err(Error::DiagonalSingularity(s));
        }
        let (sing, smooth) = self.density_parts(s, t);
        Ok(sing + smooth)
    }

    /// The density split into its diagonal-singular power-law part and the
    /// remainder `g`, which is smooth away from the axes.
    pub(crate) fn density_parts(&self, s: f64, t: f64) -> (f64, f64) {
        match *self {
            CovarianceKernel::Fbm { hurst } | CovarianceKernel::Hermite { hurst, .. } => {
                let h2 = 2.0 * hurst;
                (hurst * (h2 - 1.0) * (t - s).abs().powf(h2 - 2.0), 0.0)
            }
            CovarianceKernel::Bifbm { hurst, k } => {
                let hk2 = 2.0 * hurst * k;
                let scale = 2f64.powf(-k);
                let sing = scale * hk2 * (hk2 - 1.0) * (t - s).abs().powf(hk2 - 2.0);
                let smooth = if k == 1.0 || s == 0.0 || t == 0.0 {
                    0.0
                } else {
                    let h2 = 2.0 * hurst;
                    4.0 * hurst
                        * hurst
                        * k
                        * (k - 1.0)
                        * scale
                        * (s.powf(h2) + t.powf(h2)).powf(k - 2.0)
                        * (s * t).powf(h2 - 1.0)
                };
                (sing, smooth)
            }
        }
    }

    /// Covariance measure of the rectangle `[a,b) x [c,d)`.
    pub fn rectangle_measure(&self, a: f64, b: f64, c: f64, d: f64) -> f64 {
        self.cov_unchecked(b, d) - self.cov_unchecked(a, d) - self.cov_unchecked(b, c)
            + self.cov_unchecked(a, c)
    }

    /// Bound decomposition with the constants worked out for each family.
    pub fn default_bound(&self) -> CovarianceBound {
        match *self {
            // twice the sharp constant H(2H-1)
            CovarianceKernel::Fbm { hurst } | CovarianceKernel::Hermite { hurst, .. } => {
                CovarianceBound {
                    c1: 2.0 * hurst * (2.0 * hurst - 1.0),
                    c2: 0.0,
                    hbound: hurst,
                    beta: -0.5,
                }
            }
            CovarianceKernel::Bifbm { hurst, k } => {
                let hk = hurst * k;
                // (s^2H + t^2H)^(K-2) <= 2^(K-2) (st)^(H(K-2)) turns the R1 density into c2 (st)^(HK-1)
                CovarianceBound {
                    c1: 2f64.powf(-k) * 2.0 * hk * (2.0 * hk - 1.0),
                    c2: hurst * hurst * k * (1.0 - k),
                    hbound: hk,
                    beta: hk - 1.0,
                }
            }
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    Ok(())
}

pub(crate) fn fbm_cov(hurst: f64, s: f64, t: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (s.powf(h2) + t.powf(h2) - (s - t).abs().powf(h2))
}
