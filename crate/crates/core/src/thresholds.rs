//! Solvency thresholds under a one-factor systematic shock, their ordering,
//! and the per-regime affine wealth representation.
//!
//! The exposure map `C(t) = b e^{rT} + s t` is componentwise nondecreasing,
//! so each bank has a minimal factor level `q*_i` at which it becomes
//! solvent. Between consecutive ordered thresholds the default set is
//! constant and clearing wealths are affine in the endowments, which is
//! what makes closed-form risk measures possible.

use crate::clearing::{affine_matrices, ClearingParams, ClearingSystem};
use crate::error::{Error, Result};
use crate::network::LiabilityNetwork;
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

/// Factor level beyond which a still-insolvent bank is treated as never
/// solvent (`q* = +inf`).
pub const BRACKET_CAP: f64 = (1u64 << 40) as f64;
const BISECT_REL_TOL: f64 = 1e-9;

/// One-factor exposure model: `C(t) = riskless * e^{rate*horizon} + risky * t`
/// with the factor lognormal, `log q ~ N((rate - sigma^2/2) * horizon,
/// sigma^2 * horizon)`.
#[derive(Debug, Clone)]
pub struct ShockModel {
    pub riskless: DVector<f64>,
    pub risky: DVector<f64>,
    pub rate: f64,
    pub sigma: f64,
    pub horizon: f64,
}

impl ShockModel {
    pub fn new(
        riskless: DVector<f64>,
        risky: DVector<f64>,
        rate: f64,
        sigma: f64,
        horizon: f64,
    ) -> Result<Self> {
        if riskless.len() != risky.len() {
            return Err(Error::Dimension(format!(
                "riskless has {} entries, risky has {}",
                riskless.len(),
                risky.len()
            )));
        }
        if risky.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput(
                "risky holdings must be nonnegative".into(),
            ));
        }
        if riskless.iter().any(|&v| v < 0.0) {
            // C(0) must be a valid endowment vector
            return Err(Error::InvalidInput(
                "riskless holdings must be nonnegative".into(),
            ));
        }
        if sigma <= 0.0 || horizon <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "sigma and horizon must be positive, got sigma={} horizon={}",
                sigma, horizon
            )));
        }
        Ok(Self {
            riskless,
            risky,
            rate,
            sigma,
            horizon,
        })
    }

    pub fn n(&self) -> usize {
        self.risky.len()
    }

    /// Growth factor `e^{rate * horizon}` applied to riskless holdings.
    pub fn growth(&self) -> f64 {
        (self.rate * self.horizon).exp()
    }

    /// Endowments at factor level `t`.
    pub fn exposure(&self, t: f64) -> DVector<f64> {
        &self.riskless * self.growth() + &self.risky * t
    }

    /// Lognormal quantile of the factor at probability `p` (`0 -> 0`,
    /// `1 -> +inf`).
    pub fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let mut z = normal.inverse_cdf(p);
        // the rational approximation behind inverse_cdf is only ~1e-9
        // accurate; two Newton steps make cdf(quantile(p)) - p vanish to
        // machine precision, which the regime-mass telescoping needs
        for _ in 0..2 {
            let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            if pdf < 1e-300 {
                break;
            }
            z -= (normal.cdf(z) - p) / pdf;
        }
        let mean = (self.rate - 0.5 * self.sigma * self.sigma) * self.horizon;
        let sd = self.sigma * self.horizon.sqrt();
        (mean + sd * z).exp()
    }

    /// `P(q <= a)` for the lognormal factor.
    pub fn prob_below(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        if a.is_infinite() {
            return 1.0;
        }
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let mean = (self.rate - 0.5 * self.sigma * self.sigma) * self.horizon;
        let sd = self.sigma * self.horizon.sqrt();
        normal.cdf((a.ln() - mean) / sd)
    }

    /// `E[q 1{q <= a}]`, the partial first moment of the factor.
    pub fn partial_mean_below(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        let growth = self.growth();
        if a.is_infinite() {
            return growth;
        }
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let mean_plus = (self.rate + 0.5 * self.sigma * self.sigma) * self.horizon;
        let sd = self.sigma * self.horizon.sqrt();
        growth * normal.cdf((a.ln() - mean_plus) / sd)
    }
}

/// One default regime: for factor levels in `[lower, upper)` the default
/// set is `defaults` and wealths are `delta_mat * C(t) - delta_vec`.
#[derive(Debug, Clone)]
pub struct Regime {
    pub lower: f64,
    pub upper: f64,
    pub defaults: Vec<bool>,
    pub delta_mat: DMatrix<f64>,
    pub delta_vec: DVector<f64>,
}

impl Regime {
    pub fn solvent_count(&self) -> usize {
        self.defaults.iter().filter(|&&z| !z).count()
    }
}

/// Thresholds, their ordering, and the regime matrices for one network.
#[derive(Debug, Clone)]
pub struct ThresholdProfile {
    /// Solvency threshold per bank; `+inf` marks never-solvent banks.
    pub qstar: DVector<f64>,
    /// Bank indices sorted by nonincreasing threshold, ties by index.
    pub order: Vec<usize>,
    /// Regimes `k = 0..=n`; regime 0 is the all-solvent regime above every
    /// threshold, regime k has the k largest-threshold banks defaulting.
    pub regimes: Vec<Regime>,
}

impl ThresholdProfile {
    /// The regime whose half-open interval `[lower, upper)` contains `t`.
    pub fn regime_containing(&self, t: f64) -> &Regime {
        for regime in &self.regimes {
            if t >= regime.lower && t < regime.upper {
                return regime;
            }
        }
        // t below every lower bound can only be t < 0; clamp to the last
        self.regimes.last().expect("profile has n+1 regimes")
    }

    /// Wealths at factor level `t` through the affine representation.
    pub fn wealths_at(&self, shock: &ShockModel, t: f64) -> DVector<f64> {
        let regime = self.regime_containing(t);
        &regime.delta_mat * shock.exposure(t) - &regime.delta_vec
    }
}

/// Minimal solvency factor per bank: `q*_i = inf { t >= 0 : V_i(C(t)) >= 0 }`.
///
/// Found by doubling to bracket each bank's sign change, then per-bank
/// bisection; every clearing solve along the way tightens all banks'
/// brackets. Banks still insolvent at the bracket cap get `+inf`.
pub fn solvency_thresholds(
    network: &LiabilityNetwork,
    shock: &ShockModel,
    params: &ClearingParams,
) -> Result<DVector<f64>> {
    let n = network.n();
    if shock.n() != n {
        return Err(Error::Dimension(format!(
            "shock model covers {} banks, network has {}",
            shock.n(),
            n
        )));
    }
    let system = ClearingSystem::new(network, params);
    // lo[i] = largest factor seen with bank i insolvent;
    // hi[i] = smallest factor seen with bank i solvent
    let mut lo = vec![0.0f64; n];
    let mut hi = vec![f64::INFINITY; n];

    let mut probe = |t: f64, lo: &mut [f64], hi: &mut [f64]| -> Result<()> {
        let wealths = system.solve(&shock.exposure(t))?.wealths;
        for i in 0..n {
            if wealths[i] >= 0.0 {
                if t < hi[i] {
                    hi[i] = t;
                }
            } else if t > lo[i] {
                lo[i] = t;
            }
        }
        Ok(())
    };

    probe(0.0, &mut lo, &mut hi)?;
    let mut t = 1.0;
    while hi.iter().any(|v| v.is_infinite()) && t <= BRACKET_CAP {
        probe(t, &mut lo, &mut hi)?;
        t *= 2.0;
    }

    let mut qstar = DVector::zeros(n);
    for i in 0..n {
        if hi[i].is_infinite() {
            qstar[i] = f64::INFINITY;
            continue;
        }
        if hi[i] == 0.0 {
            qstar[i] = 0.0;
            continue;
        }
        let (mut a, mut b) = (lo[i], hi[i]);
        while b - a > BISECT_REL_TOL * b {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            probe(mid, &mut lo, &mut hi)?;
            if hi[i] < b {
                b = hi[i];
            }
            if lo[i] > a {
                a = lo[i];
            }
        }
        qstar[i] = b;
    }
    Ok(qstar)
}

/// Thresholds plus ordering and regime matrices.
///
/// Regime `k >= 1` defaults exactly the banks whose threshold is at least
/// the k-th greatest one (never-solvent banks default in every regime);
/// regime 0 is default-free with `delta_vec = [(1-mu)I - Pi^T] pbar`.
pub fn threshold_profile(
    network: &LiabilityNetwork,
    shock: &ShockModel,
    params: &ClearingParams,
) -> Result<ThresholdProfile> {
    let qstar = solvency_thresholds(network, shock, params)?;
    profile_from_thresholds(network, params, qstar)
}

/// Builds the ordering and regime matrices for precomputed thresholds.
pub fn profile_from_thresholds(
    network: &LiabilityNetwork,
    params: &ClearingParams,
    qstar: DVector<f64>,
) -> Result<ThresholdProfile> {
    let n = network.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        qstar[b]
            .partial_cmp(&qstar[a])
            .expect("thresholds are never NaN")
            .then(a.cmp(&b))
    });

    let mut regimes = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let defaults: Vec<bool> = if k == 0 {
            vec![false; n]
        } else {
            let cut = qstar[order[k - 1]];
            (0..n).map(|i| qstar[i] >= cut).collect()
        };
        let (delta_mat, delta_vec) = affine_matrices(&defaults, network, params)?;
        let upper = if k == 0 {
            f64::INFINITY
        } else {
            qstar[order[k - 1]]
        };
        let lower = if k == n { 0.0 } else { qstar[order[k]] };
        regimes.push(Regime {
            lower,
            upper,
            defaults,
            delta_mat,
            delta_vec,
        });
    }
    Ok(ThresholdProfile {
        qstar,
        order,
        regimes,
    })
}
