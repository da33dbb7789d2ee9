//! Clearing, systemic risk, and compression of financial obligation networks.
//!
//! The crate models a system of `n` banks with nominal obligations to each
//! other and to an external "societal" node (column 0 of the liability
//! matrix). On top of the network data model it provides:
//!
//! * collateralized Eisenberg-Noe clearing (greatest fixed point of the
//!   payment map, wealth vectors, default sets) and its piecewise-affine
//!   representation,
//! * solvency thresholds under a one-factor systematic shock together with
//!   the per-regime affine wealth matrices,
//! * systemic risk measures (VaR / expected shortfall of network
//!   aggregates) in closed form under lognormal shocks and by Monte Carlo,
//! * compression constraint sets (bilateral, conservative, rerouting,
//!   nonconservative), feasibility checks, projection-based repair, and
//!   maximal compression via linear programming,
//! * objective functions (gross notional, relative-liability entropy,
//!   systemic-risk objectives) and a seeded genetic optimizer with a
//!   deterministic local-search baseline,
//! * case-study helpers: three-bank closed-form thresholds, EBA-style
//!   balance-sheet calibration, and subset-sum test instances.

pub mod casestudies;
pub mod clearing;
pub mod compression;
mod error;
pub mod network;
pub mod objectives;
pub mod optimizer;
pub mod risk;
pub mod simplex;
pub mod thresholds;

pub use casestudies::{EbaBalanceSheet, SubsetSumInstance};
pub use clearing::{ClearingParams, ClearingResult};
pub use compression::{ConstraintKind, ConstraintSpec, FeasibilityReport, Polytope};
pub use error::{Error, Result};
pub use network::{LiabilityNetwork, NetworkKind, RelativeLiabilities, ThreeBankParams};
pub use objectives::{EntropyRange, Objective, StressField};
pub use optimizer::{GaConfig, GaResult, Genome, StepSchedule};
pub use risk::{Aggregation, RiskMeasure};
pub use simplex::{lp_solve, LinearProgram, LpOutcome};
pub use thresholds::{ShockModel, ThresholdProfile};
