//! Case-study machinery: closed-form three-bank solvency thresholds and the
//! robust-fragility comparison of the four standard topologies, an
//! EBA-style balance-sheet calibration pipeline (seeded sparsity pattern
//! plus iterative proportional fitting), and subset-sum test-instance
//! generators with an exact enumeration oracle.

use crate::clearing::ClearingParams;
use crate::error::{Error, Result};
use crate::network::{LiabilityNetwork, ThreeBankParams};
use crate::thresholds::ShockModel;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Calibration constants used throughout the stress-test study: zero rate,
/// 20% volatility, one-period horizon, 80/20 riskless/risky asset split.
pub const EBA_RATE: f64 = 0.0;
pub const EBA_SIGMA: f64 = 0.2;
pub const EBA_HORIZON: f64 = 1.0;
pub const RISKLESS_SHARE: f64 = 0.8;

/// Closed-form solvency thresholds for the symmetric three-bank family in
/// the uncollateralized setting.
///
/// Banks are ordered by their endowment multipliers; the first bank's
/// threshold is always `y / x_1`, the other two branch on which of banks 2
/// and 3 defaults earlier.
pub fn three_bank_thresholds(
    params: &ThreeBankParams,
    clearing: &ClearingParams,
) -> Result<[f64; 3]> {
    if clearing.mu != 0.0 {
        return Err(Error::InvalidInput(
            "closed-form three-bank thresholds hold only for mu = 0".into(),
        ));
    }
    if params.x[0] <= 0.0 {
        return Err(Error::InvalidInput(
            "endowment multipliers must be positive".into(),
        ));
    }
    let [x1, x2, x3] = params.x;
    let y = params.y;
    let (ax, al) = (clearing.alpha_x, clearing.alpha_l);
    // cycle 1->2->3->1 weight lambda, cycle 1->3->2->1 weight xi
    let (l12, l23, l31) = (params.lambda, params.lambda, params.lambda);
    let (l13, l32, l21) = (params.xi, params.xi, params.xi);
    let p1 = l12 + l13 + y;
    let p2 = l21 + l23 + y;
    let p3 = l31 + l32 + y;
    if p1 == 0.0 {
        // no obligations at all: solvent everywhere
        return Ok([0.0, 0.0, 0.0]);
    }

    let q1 = y / x1;
    // which of banks 2 and 3 hits insolvency at the higher factor level
    let branch_two_first = ((1.0 - al) * (l12 + l13) + y) * (l12 * x3 - l13 * x2)
        + y * (l12 + l13 + y) * (x3 - x2)
        + ax * y * (l13 - l12) * x1
        >= 0.0;

    let (q2, q3);
    if branch_two_first {
        q2 = q1.min(
            ((l12 + y) * (l12 + l13 + y) - al * l12 * (l12 + l13))
                / (ax * l12 * x1 + (l12 + l13 + y) * x2),
        );
        q3 = q2.min(
            (p3 * (p1 * p2 - al * al * l12 * l21)
                - al * (l13 * (al * l32 * l21 + p2 * l31) + l23 * (al * l31 * l12 + p1 * l32)))
                / (ax * (p2 * l13 + al * l12 * l23) * x1
                    + ax * (p1 * l23 + al * l21 * l13) * x2
                    + (p1 * p2 - al * al * l12 * l21) * x3),
        );
    } else {
        q3 = q1.min(
            ((l13 + y) * (l12 + l13 + y) - al * l13 * (l12 + l13))
                / (ax * l13 * x1 + (l12 + l13 + y) * x3),
        );
        q2 = q3.min(
            (p2 * (p1 * p3 - al * al * l13 * l31)
                - al * (l12 * (al * l23 * l31 + p3 * l21) + l32 * (al * l21 * l13 + p1 * l23)))
                / (ax * (p3 * l12 + al * l13 * l32) * x1
                    + (p1 * p3 - al * al * l13 * l31) * x2
                    + ax * (p1 * l32 + al * l31 * l12) * x3),
        );
    }
    Ok([q1, q2, q3])
}

/// Threshold triples for the four standard three-bank topologies at one
/// societal obligation level, with endowment multipliers (1, 2, 3).
#[derive(Debug, Clone, Copy)]
pub struct FragilityRow {
    pub y: f64,
    pub complete: [f64; 3],
    pub ring_123: [f64; 3],
    pub ring_132: [f64; 3],
    pub compressed: [f64; 3],
}

/// Closed-form thresholds of the four topologies across a grid of societal
/// obligation levels.
pub fn robust_fragility_report(
    y_grid: &[f64],
    clearing: &ClearingParams,
) -> Result<Vec<FragilityRow>> {
    if y_grid.is_empty() {
        return Err(Error::InvalidInput("empty y grid".into()));
    }
    let x = [1.0, 2.0, 3.0];
    y_grid
        .iter()
        .map(|&y| {
            let complete = three_bank_thresholds(&ThreeBankParams::new(x, y, 0.5, 0.5)?, clearing)?;
            let ring_123 = three_bank_thresholds(&ThreeBankParams::new(x, y, 1.0, 0.0)?, clearing)?;
            let ring_132 = three_bank_thresholds(&ThreeBankParams::new(x, y, 0.0, 1.0)?, clearing)?;
            let compressed =
                three_bank_thresholds(&ThreeBankParams::new(x, y, 0.0, 0.0)?, clearing)?;
            Ok(FragilityRow {
                y,
                complete,
                ring_123,
                ring_132,
                compressed,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// EBA-style calibration

/// Stylized balance sheet: total assets, capital, and total interbank
/// liabilities, in millions.
#[derive(Debug, Clone)]
pub struct EbaBalanceSheet {
    pub name: String,
    pub assets: f64,
    pub capital: f64,
    pub interbank: f64,
}

impl EbaBalanceSheet {
    fn validate(&self) -> Result<()> {
        if self.capital < 0.0 || self.interbank < 0.0 {
            return Err(Error::Validation(format!(
                "{}: capital and interbank liabilities must be nonnegative",
                self.name
            )));
        }
        if self.assets < self.interbank + self.capital {
            return Err(Error::Validation(format!(
                "{}: total assets {} below interbank {} plus capital {}",
                self.name, self.assets, self.interbank, self.capital
            )));
        }
        Ok(())
    }

    /// Reads sheets from CSV with header `name,assets,capital,interbank`.
    pub fn load_csv(text: &str) -> Result<Vec<Self>> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["name", "assets", "capital", "interbank"] {
            return Err(Error::Parse(format!(
                "expected header name,assets,capital,interbank, got {:?}",
                headers
            )));
        }
        let mut sheets = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            let field = |i: usize| -> Result<f64> {
                record[i]
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad number {:?}: {}", &record[i], e)))
            };
            sheets.push(EbaBalanceSheet {
                name: record[0].to_string(),
                assets: field(1)?,
                capital: field(2)?,
                interbank: field(3)?,
            });
        }
        Ok(sheets)
    }
}

/// Deterministic synthetic sheet table with EBA-like proportions: heavy-
/// tailed asset sizes, interbank liabilities around 10-30% of assets and
/// capital around 4-8%.
pub fn synthetic_sheets(n: usize, seed: u64) -> Vec<EbaBalanceSheet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let scale: f64 = rng.random_range(1.0f64..4.0).exp();
            let assets = 1000.0 * scale;
            let interbank = assets * rng.random_range(0.10..0.30);
            let capital = assets * rng.random_range(0.04..0.08);
            EbaBalanceSheet {
                name: format!("B{:02}", i + 1),
                assets,
                capital,
                interbank,
            }
        })
        .collect()
}

const IPF_REL_TOL: f64 = 1e-8;
const IPF_MAX_ITER: usize = 10_000;
const PATTERN_REDRAWS: usize = 20;

/// Calibrates a full network and shock model from stylized balance sheets.
///
/// Interbank assets are assumed equal to interbank liabilities per bank, so
/// the interbank matrix must hit the same row and column margins. A random
/// sparsity pattern at the target density is drawn from the seed and fitted
/// by iterative proportional fitting, redrawing the pattern if the fit
/// stalls. Societal obligations absorb the balance-sheet remainder and the
/// external assets split 80/20 into riskless and risky holdings after
/// setting aside the margin collateral `mu * pbar`.
pub fn eba_calibrate(
    sheets: &[EbaBalanceSheet],
    mu: f64,
    density: f64,
    seed: u64,
) -> Result<(LiabilityNetwork, ShockModel)> {
    for sheet in sheets {
        sheet.validate()?;
    }
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::InvalidInput(format!(
            "mu must lie in [0,1], got {}",
            mu
        )));
    }
    if !(0.0..=1.0).contains(&density)
        || (density == 0.0 && sheets.iter().any(|s| s.interbank > 0.0))
    {
        return Err(Error::InvalidInput(format!(
            "edge density must lie in (0,1], got {}",
            density
        )));
    }
    let n = sheets.len();
    let margins: Vec<f64> = sheets.iter().map(|s| s.interbank).collect();
    let interbank = fit_interbank_matrix(&margins, density, seed)?;

    let mut matrix = DMatrix::zeros(n, n + 1);
    for i in 0..n {
        matrix[(i, 0)] = sheets[i].assets - sheets[i].interbank - sheets[i].capital;
        for j in 0..n {
            if i != j {
                matrix[(i, j + 1)] = interbank[(i, j)];
            }
        }
    }
    let network = LiabilityNetwork::from_matrix(matrix)?;
    let pbar = network.total_obligations();
    let mut riskless = DVector::zeros(n);
    let mut risky = DVector::zeros(n);
    for i in 0..n {
        let external = sheets[i].assets - sheets[i].interbank - mu * pbar[i];
        if external < 0.0 {
            return Err(Error::InvalidInput(format!(
                "{}: margin mu = {} exceeds external assets (max feasible here is {:.3})",
                sheets[i].name,
                mu,
                (sheets[i].assets - sheets[i].interbank) / pbar[i]
            )));
        }
        riskless[i] = RISKLESS_SHARE * external;
        risky[i] = (1.0 - RISKLESS_SHARE) * external;
        // net worth identity: capital = assets - total obligations
        let worth = sheets[i].assets - pbar[i];
        if (worth - sheets[i].capital).abs() > 1e-6 * sheets[i].assets.max(1.0) {
            return Err(Error::Internal(format!(
                "{}: net worth {} drifted from capital {}",
                sheets[i].name, worth, sheets[i].capital
            )));
        }
    }
    let shock = ShockModel::new(riskless, risky, EBA_RATE, EBA_SIGMA, EBA_HORIZON)?;
    Ok((network, shock))
}

/// Nonnegative matrix with zero diagonal whose row and column sums both
/// equal `margins`, supported on a seeded random pattern.
fn fit_interbank_matrix(margins: &[f64], density: f64, seed: u64) -> Result<DMatrix<f64>> {
    let n = margins.len();
    let active: Vec<usize> = (0..n).filter(|&i| margins[i] > 0.0).collect();
    if active.is_empty() {
        return Ok(DMatrix::zeros(n, n));
    }
    if active.len() == 1 {
        return Err(Error::MarginInfeasible(
            "a single bank cannot hold interbank positions against itself".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_error = 0.0;
    for _ in 0..PATTERN_REDRAWS {
        let pattern = draw_pattern(&active, n, density, &mut rng);
        match ipf(margins, &pattern) {
            Ok(matrix) => return Ok(matrix),
            Err(Error::NonConvergence { residual, .. }) => last_error = residual,
            Err(e) => return Err(e),
        }
    }
    Err(Error::MarginInfeasible(format!(
        "no sparsity pattern supported the margins after {} redraws (last residual {:.3e})",
        PATTERN_REDRAWS, last_error
    )))
}

fn draw_pattern(active: &[usize], n: usize, density: f64, rng: &mut ChaCha8Rng) -> DMatrix<bool> {
    let mut pattern = DMatrix::from_element(n, n, false);
    for &i in active {
        for &j in active {
            if i != j && rng.random_bool(density) {
                pattern[(i, j)] = true;
            }
        }
    }
    // every active bank needs at least one out-edge and one in-edge
    for &i in active {
        if !active.iter().any(|&j| pattern[(i, j)]) {
            let j = loop {
                let pick = active[rng.random_range(0..active.len())];
                if pick != i {
                    break pick;
                }
            };
            pattern[(i, j)] = true;
        }
        if !active.iter().any(|&j| pattern[(j, i)]) {
            let j = loop {
                let pick = active[rng.random_range(0..active.len())];
                if pick != i {
                    break pick;
                }
            };
            pattern[(j, i)] = true;
        }
    }
    pattern
}

/// Iterative proportional fitting of both margins onto a fixed pattern.
fn ipf(margins: &[f64], pattern: &DMatrix<bool>) -> Result<DMatrix<f64>> {
    let n = margins.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if pattern[(i, j)] {
                m[(i, j)] = 1.0;
            }
        }
    }
    let mut residual = f64::INFINITY;
    for _ in 0..IPF_MAX_ITER {
        for i in 0..n {
            let row_sum: f64 = m.row(i).sum();
            if row_sum > 0.0 {
                let factor = margins[i] / row_sum;
                for j in 0..n {
                    m[(i, j)] *= factor;
                }
            } else if margins[i] > 0.0 {
                return Err(Error::NonConvergence {
                    what: "iterative proportional fitting",
                    iterations: 0,
                    residual: margins[i],
                });
            }
        }
        for j in 0..n {
            let col_sum: f64 = m.column(j).sum();
            if col_sum > 0.0 {
                let factor = margins[j] / col_sum;
                for i in 0..n {
                    m[(i, j)] *= factor;
                }
            } else if margins[j] > 0.0 {
                return Err(Error::NonConvergence {
                    what: "iterative proportional fitting",
                    iterations: 0,
                    residual: margins[j],
                });
            }
        }
        residual = (0..n)
            .map(|i| {
                let row_sum: f64 = m.row(i).sum();
                (row_sum - margins[i]).abs() / margins[i].max(1.0)
            })
            .fold(0.0, f64::max);
        if residual < IPF_REL_TOL {
            return Ok(m);
        }
    }
    Err(Error::NonConvergence {
        what: "iterative proportional fitting",
        iterations: IPF_MAX_ITER,
        residual,
    })
}

// ---------------------------------------------------------------------------
// subset-sum reduction instances

/// A subset-sum instance: positive integer values and a target strictly
/// between zero and their total.
#[derive(Debug, Clone)]
pub struct SubsetSumInstance {
    pub values: Vec<u64>,
    pub theta: u64,
}

impl SubsetSumInstance {
    pub fn new(values: Vec<u64>, theta: u64) -> Result<Self> {
        if values.is_empty() || values.iter().any(|&k| k == 0) {
            return Err(Error::InvalidInput(
                "subset-sum values must be positive integers".into(),
            ));
        }
        let total: u64 = values.iter().sum();
        if theta == 0 || theta >= total {
            return Err(Error::InvalidInput(format!(
                "target {} must lie strictly between 0 and the total {}",
                theta, total
            )));
        }
        Ok(Self { values, theta })
    }

    pub fn total(&self) -> u64 {
        self.values.iter().sum()
    }

    /// Target fraction `theta / K` of the total.
    pub fn alpha(&self) -> f64 {
        self.theta as f64 / self.total() as f64
    }
}

/// Which constraint-set reduction to instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetSumModel {
    /// Bipartite network: periphery banks split `k_i` between two cores in
    /// proportion `alpha : 1 - alpha`. Banks: C1, C2, P_1..P_n.
    Rerouting,
    /// Core-periphery network with a feeder core: C0 lends `k_i` to each
    /// periphery bank, which owes `k_i` to both cores; the cores owe
    /// `K - theta` and `theta` back to C0. Banks: C0, C1, C2, P_1..P_n.
    Conservative,
}

/// Builds the reduction network for an instance.
pub fn subset_sum_network(instance: &SubsetSumInstance, model: SubsetSumModel) -> LiabilityNetwork {
    let n = instance.values.len();
    let k = instance.total() as f64;
    let theta = instance.theta as f64;
    match model {
        SubsetSumModel::Rerouting => {
            let alpha = instance.alpha();
            let banks = n + 2;
            let mut m = DMatrix::zeros(banks, banks + 1);
            for (idx, &ki) in instance.values.iter().enumerate() {
                let p = 2 + idx; // 0-based index of P_{idx+1}; cores are 0 and 1
                m[(p, 1)] = alpha * ki as f64;
                m[(p, 2)] = (1.0 - alpha) * ki as f64;
            }
            LiabilityNetwork::from_matrix(m).expect("reduction network is valid")
        }
        SubsetSumModel::Conservative => {
            let banks = n + 3;
            let mut m = DMatrix::zeros(banks, banks + 1);
            for (idx, &ki) in instance.values.iter().enumerate() {
                let p = 3 + idx; // cores are 0 (C0), 1 (C1), 2 (C2)
                m[(0, p + 1)] = ki as f64;
                m[(p, 2)] = ki as f64;
                m[(p, 3)] = ki as f64;
            }
            m[(1, 1)] = k - theta;
            m[(2, 1)] = theta;
            LiabilityNetwork::from_matrix(m).expect("reduction network is valid")
        }
    }
}

const ORACLE_MAX_N: usize = 24;

/// Exact subset-sum decision by pruned enumeration, with a witness (indices
/// into `values`) when one exists. Limited to 24 values.
pub fn subset_sum_oracle(instance: &SubsetSumInstance) -> Result<Option<Vec<usize>>> {
    let n = instance.values.len();
    if n > ORACLE_MAX_N {
        return Err(Error::TooLarge(format!(
            "enumeration oracle handles up to {} values, got {}",
            ORACLE_MAX_N, n
        )));
    }
    // sort descending for better pruning, remember original indices
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| instance.values[b].cmp(&instance.values[a]));
    let values: Vec<u64> = order.iter().map(|&i| instance.values[i]).collect();
    let mut suffix = vec![0u64; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + values[i];
    }
    let mut chosen = Vec::new();
    if search(&values, &suffix, instance.theta, 0, &mut chosen) {
        let mut witness: Vec<usize> = chosen.iter().map(|&pos| order[pos]).collect();
        witness.sort_unstable();
        return Ok(Some(witness));
    }
    Ok(None)
}

fn search(
    values: &[u64],
    suffix: &[u64],
    remaining: u64,
    start: usize,
    chosen: &mut Vec<usize>,
) -> bool {
    if remaining == 0 {
        return true;
    }
    if start >= values.len() || suffix[start] < remaining {
        return false;
    }
    for pos in start..values.len() {
        if values[pos] > remaining {
            continue;
        }
        if suffix[pos] < remaining {
            return false;
        }
        chosen.push(pos);
        if search(values, suffix, remaining - values[pos], pos + 1, chosen) {
            return true;
        }
        chosen.pop();
    }
    false
}
