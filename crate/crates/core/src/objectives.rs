//! Objective functions for network compression: total gross notional,
//! relative-liability entropy, and systemic-risk objectives whose stress
//! field may itself depend on the candidate network.

use crate::clearing::ClearingParams;
use crate::error::{Error, Result};
use crate::network::{relative_liabilities, LiabilityNetwork};
use crate::risk::{Aggregation, RiskMeasure};
use crate::thresholds::{threshold_profile, ShockModel};
use nalgebra::DVector;

/// Which columns enter the entropy sum. The relative liabilities are always
/// taken against the full row total (society included); the interbank
/// variant just skips the societal term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyRange {
    /// Sum over interbank columns only (the default).
    Interbank,
    /// Sum over all columns including the societal node.
    WithSociety,
}

/// Relative-liability entropy `-sum_ij pi_ij ln(pi_ij)` with `0 ln 0 = 0`.
///
/// Zero exactly when every obligated bank concentrates its (counted)
/// obligations on a single counterparty.
pub fn entropy(network: &LiabilityNetwork, range: EntropyRange) -> f64 {
    let rel = relative_liabilities(network);
    let n = network.n();
    let first_col = match range {
        EntropyRange::Interbank => 1,
        EntropyRange::WithSociety => 0,
    };
    let mut total = 0.0;
    for i in 0..n {
        for j in first_col..=n {
            let p = rel.pi[(i, j)];
            if p > 0.0 {
                total -= p * p.ln();
            }
        }
    }
    total
}

/// Sum of all obligations, societal column included.
pub fn gross_notional(network: &LiabilityNetwork) -> f64 {
    network.total_notional()
}

/// How the stress scenario reacts to the candidate network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StressField {
    /// The exposures are the same for every candidate.
    Constant,
    /// Collateral freed by compression is reinvested 80/20 into the
    /// riskless and risky holdings: with margin `mu`, a bank whose total
    /// obligations drop below the base network's frees
    /// `mu * (pbar_base - rowsum)` of collateral.
    CollateralReinvestment,
}

/// Complete configuration of a systemic-risk objective.
#[derive(Debug, Clone)]
pub struct RiskObjectiveConfig {
    pub aggregation: Aggregation,
    pub measure: RiskMeasure,
    /// Exposures calibrated to the base network.
    pub shock: ShockModel,
    pub clearing: ClearingParams,
    pub stress: StressField,
    /// Total obligations of the base network, used by the reinvestment rule.
    pub base_obligations: DVector<f64>,
}

impl RiskObjectiveConfig {
    /// The exposure model the candidate network actually faces.
    pub fn stressed_shock(&self, network: &LiabilityNetwork) -> Result<ShockModel> {
        match self.stress {
            StressField::Constant => Ok(self.shock.clone()),
            StressField::CollateralReinvestment => {
                let mu = self.clearing.mu;
                let rows = network.total_obligations();
                if rows.len() != self.base_obligations.len() {
                    return Err(Error::Dimension(
                        "candidate and base bank counts differ".into(),
                    ));
                }
                let mut riskless = self.shock.riskless.clone();
                let mut risky = self.shock.risky.clone();
                for i in 0..rows.len() {
                    let freed = mu * (self.base_obligations[i] - rows[i]);
                    riskless[i] += 0.8 * freed;
                    risky[i] += 0.2 * freed;
                    // projection noise can leave row sums a hair above base
                    if riskless[i] < 0.0 && riskless[i] > -1e-6 {
                        riskless[i] = 0.0;
                    }
                    if risky[i] < 0.0 && risky[i] > -1e-6 {
                        risky[i] = 0.0;
                    }
                }
                ShockModel::new(
                    riskless,
                    risky,
                    self.shock.rate,
                    self.shock.sigma,
                    self.shock.horizon,
                )
            }
        }
    }
}

/// Systemic risk of a candidate network under the configured stress field.
pub fn systemic_risk_objective(
    network: &LiabilityNetwork,
    config: &RiskObjectiveConfig,
) -> Result<f64> {
    let shock = config.stressed_shock(network)?;
    let profile = threshold_profile(network, &shock, &config.clearing)?;
    config
        .measure
        .evaluate_from_profile(&profile, network, &shock, config.aggregation)
}

/// An objective to minimize over a constraint set.
#[derive(Debug, Clone)]
pub enum Objective {
    GrossNotional,
    Entropy(EntropyRange),
    SystemicRisk(Box<RiskObjectiveConfig>),
}

/// Anything evaluable on candidate networks. Implemented by [`Objective`]
/// and by plain closures, which tests and callers can inject.
pub trait ObjectiveFn: Sync {
    fn evaluate(&self, network: &LiabilityNetwork) -> Result<f64>;
}

impl ObjectiveFn for Objective {
    fn evaluate(&self, network: &LiabilityNetwork) -> Result<f64> {
        match self {
            Objective::GrossNotional => Ok(gross_notional(network)),
            Objective::Entropy(range) => Ok(entropy(network, *range)),
            Objective::SystemicRisk(config) => systemic_risk_objective(network, config),
        }
    }
}

impl<F> ObjectiveFn for F
where
    F: Fn(&LiabilityNetwork) -> Result<f64> + Sync,
{
    fn evaluate(&self, network: &LiabilityNetwork) -> Result<f64> {
        self(network)
    }
}
