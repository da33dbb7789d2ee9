//! Collateralized Eisenberg-Noe clearing.
//!
//! Payments are the greatest fixed point of the payment map on the lattice
//! `[0, pbar]`: a bank whose endowment plus interbank receipts covers the
//! uncollateralized part of its obligations pays in full; a defaulting bank
//! pays its margin plus recovery-scaled assets. The margin `mu` is the
//! fraction of obligations pre-covered by collateral, paid regardless of
//! default; `alpha_x` and `alpha_l` scale a defaulter's endowment and
//! interbank receipts.

use crate::error::{Error, Result};
use crate::network::{relative_liabilities, LiabilityNetwork};
use nalgebra::{DMatrix, DVector};

/// Absolute sup-norm tolerance on payments for fixed-point convergence.
pub const PAYMENT_TOL: f64 = 1e-10;

/// Margin and recovery rates, all in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearingParams {
    pub mu: f64,
    pub alpha_x: f64,
    pub alpha_l: f64,
}

impl ClearingParams {
    pub fn new(mu: f64, alpha_x: f64, alpha_l: f64) -> Result<Self> {
        for (name, v) in [("mu", mu), ("alpha_x", alpha_x), ("alpha_l", alpha_l)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "{} must lie in [0,1], got {}",
                    name, v
                )));
            }
        }
        Ok(Self { mu, alpha_x, alpha_l })
    }

    /// Uncollateralized clearing with full recovery (the classical setting).
    pub fn eisenberg_noe() -> Self {
        Self {
            mu: 0.0,
            alpha_x: 1.0,
            alpha_l: 1.0,
        }
    }
}

/// Outcome of one clearing run.
#[derive(Debug, Clone)]
pub struct ClearingResult {
    /// Clearing payments, `0 <= p <= pbar`.
    pub payments: DVector<f64>,
    /// Clearing wealths; negative entries are defaulting banks.
    pub wealths: DVector<f64>,
    /// Default indicator, `true` iff wealth is strictly negative.
    pub defaults: Vec<bool>,
    /// Fixed-point iterations used.
    pub iterations: usize,
}

/// Precomputed clearing operator for one `(network, params)` pair.
///
/// Reusable across many endowment vectors, which is what the threshold
/// bisection and Monte Carlo loops need.
#[derive(Debug, Clone)]
pub struct ClearingSystem {
    /// Transposed interbank relative liabilities: `receipts = a * p`.
    a: DMatrix<f64>,
    pbar: DVector<f64>,
    uncollateralized: DVector<f64>, // (1 - mu) * pbar
    margin: DVector<f64>,           // mu * pbar
    params: ClearingParams,
    max_iterations: usize,
}

impl ClearingSystem {
    pub fn new(network: &LiabilityNetwork, params: &ClearingParams) -> Self {
        let rel = relative_liabilities(network);
        let a = rel.interbank_block().transpose();
        let pbar = rel.pbar;
        let uncollateralized = &pbar * (1.0 - params.mu);
        let margin = &pbar * params.mu;
        // 10 * n * ceil(-log10(tol)) iterations; the monotone iteration from
        // pbar converges geometrically for the greatest fixed point.
        let max_iterations = 10 * network.n().max(1) * (-PAYMENT_TOL.log10()).ceil() as usize;
        Self {
            a,
            pbar,
            uncollateralized,
            margin,
            params: *params,
            max_iterations,
        }
    }

    pub fn n(&self) -> usize {
        self.pbar.len()
    }

    pub fn pbar(&self) -> &DVector<f64> {
        &self.pbar
    }

    /// One application of the payment map.
    pub fn psi(&self, payments: &DVector<f64>, endowments: &DVector<f64>) -> DVector<f64> {
        let receipts = &self.a * payments;
        self.psi_with_receipts(&receipts, endowments)
    }

    fn psi_with_receipts(&self, receipts: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let mut out = DVector::zeros(n);
        for i in 0..n {
            out[i] = if x[i] + receipts[i] >= self.uncollateralized[i] {
                self.pbar[i]
            } else {
                self.margin[i] + self.params.alpha_x * x[i] + self.params.alpha_l * receipts[i]
            };
        }
        out
    }

    /// Greatest clearing fixed point by monotone iteration from `pbar`.
    pub fn solve(&self, endowments: &DVector<f64>) -> Result<ClearingResult> {
        let n = self.n();
        if endowments.len() != n {
            return Err(Error::Dimension(format!(
                "endowment vector has {} entries for {} banks",
                endowments.len(),
                n
            )));
        }
        if endowments.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "endowments must be finite and nonnegative".into(),
            ));
        }
        let mut payments = self.pbar.clone();
        let mut iterations = 0;
        loop {
            let next = self.psi(&payments, endowments);
            let change = (&next - &payments).amax();
            payments = next;
            iterations += 1;
            if change < PAYMENT_TOL {
                break;
            }
            if iterations >= self.max_iterations {
                return Err(Error::NonConvergence {
                    what: "clearing payment iteration",
                    iterations,
                    residual: change,
                });
            }
        }
        let receipts = &self.a * &payments;
        let wealths = endowments + &receipts - &self.uncollateralized;
        let defaults = wealths.iter().map(|&v| v < 0.0).collect();
        Ok(ClearingResult {
            payments,
            wealths,
            defaults,
            iterations,
        })
    }
}

/// Clearing payments, wealths, and default set for one endowment vector.
pub fn clearing_payments(
    endowments: &DVector<f64>,
    network: &LiabilityNetwork,
    params: &ClearingParams,
) -> Result<ClearingResult> {
    ClearingSystem::new(network, params).solve(endowments)
}

/// Clearing wealths only.
pub fn wealths(
    endowments: &DVector<f64>,
    network: &LiabilityNetwork,
    params: &ClearingParams,
) -> Result<DVector<f64>> {
    Ok(clearing_payments(endowments, network, params)?.wealths)
}

/// Affine wealth representation for a fixed default set `z`.
///
/// Returns `(delta_mat, delta_vec)` with `V(x) = delta_mat * x - delta_vec`
/// whenever `z` is the equilibrium default set for `x`:
///
/// ```text
/// delta_mat = I + alpha_x A (I - alpha_l diag(z) A)^-1 diag(z)
/// delta_vec = [(1-mu) I - A (I - alpha_l diag(z) A)^-1 (I - (1-mu) diag(z))] pbar
/// ```
///
/// where `A` is the transposed interbank block of the relative liabilities.
/// The solve can be singular when `alpha_l = 1` and a defaulting subnetwork
/// has no societal leakage; callers then fall back to fixed-point clearing.
pub fn affine_matrices(
    defaults: &[bool],
    network: &LiabilityNetwork,
    params: &ClearingParams,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = network.n();
    if defaults.len() != n {
        return Err(Error::Dimension(format!(
            "default indicator has {} entries for {} banks",
            defaults.len(),
            n
        )));
    }
    let rel = relative_liabilities(network);
    let a = rel.interbank_block().transpose();
    let pbar = rel.pbar;

    // m = I - alpha_l diag(z) A
    let mut m = DMatrix::identity(n, n);
    for i in 0..n {
        if defaults[i] {
            for j in 0..n {
                m[(i, j)] -= params.alpha_l * a[(i, j)];
            }
        }
    }
    let lu = m.lu();

    // rhs for delta_mat: diag(z); rhs for delta_vec: (I - (1-mu) diag(z)) pbar
    let mut diag_z = DMatrix::zeros(n, n);
    let mut r = DVector::zeros(n);
    for i in 0..n {
        if defaults[i] {
            diag_z[(i, i)] = 1.0;
            r[i] = params.mu * pbar[i];
        } else {
            r[i] = pbar[i];
        }
    }
    let x_mat = lu.solve(&diag_z).ok_or_else(|| {
        Error::SingularSystem(
            "default block has no societal leakage at alpha_l = 1; fall back to fixed-point clearing"
                .into(),
        )
    })?;
    let w = lu
        .solve(&r)
        .ok_or_else(|| Error::SingularSystem("singular clearing system".into()))?;

    let delta_mat = DMatrix::identity(n, n) + &a * x_mat * params.alpha_x;
    let delta_vec = &pbar * (1.0 - params.mu) - &a * w;
    Ok((delta_mat, delta_vec))
}
